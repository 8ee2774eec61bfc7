use hyperwass_core::certificates::{dual_value, lower_bound, optimal_radius};
use hyperwass_core::transport::semidiscrete_wp_1d;
use hyperwass_core::{Cube, MeanDensity, ProcessFamily, ProcessSpec};
use proptest::prelude::*;

fn segment_instance(n: usize, intensity: f64, seed: u64) -> (hyperwass_core::PointSet, MeanDensity) {
    let cube = Cube::new(1, n as f64 / intensity).unwrap();
    let spec = ProcessSpec::new(ProcessFamily::BinomialIid { count: Some(n) }, seed);
    (spec.sample_replicate(&cube, 0).unwrap(), MeanDensity::uniform(intensity).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn certificate_is_below_exact_segment_cost(
        n in 1usize..300,
        intensity in 0.25f64..4.0,
        pi in 0usize..4,
        seed in any::<u64>(),
    ) {
        let p = [1.0, 1.5, 2.0, 3.0][pi];
        let (ps, density) = segment_instance(n, intensity, seed);
        let exact = semidiscrete_wp_1d(&ps, &density, p).unwrap();
        let cert = lower_bound(1, p, n as f64, intensity).unwrap();
        prop_assert!(cert.wpp_bound() <= exact * (1.0 + 1e-9), "{} > {exact}", cert.wpp_bound());
    }

    #[test]
    fn dual_value_is_below_exact_w1(n in 1usize..200, intensity in 0.25f64..4.0, seed in any::<u64>()) {
        let (ps, density) = segment_instance(n, intensity, seed);
        let exact = semidiscrete_wp_1d(&ps, &density, 1.0).unwrap();
        let c = optimal_radius(1, intensity);
        for scale in [0.5, 1.0, 2.0] {
            let v = dual_value(&ps, &density, scale * c).unwrap();
            prop_assert!(v.value <= exact * (1.0 + 1e-9) + 1e-12, "{} > {exact}", v.value);
        }
    }

    #[test]
    fn bound_scales_with_density_ceiling(d in 1usize..=4, a in 1.0f64..50.0, n in 1.0f64..1e6) {
        let base = lower_bound(d, 1.0, n, 1.0).unwrap().w1_bound;
        let scaled = lower_bound(d, 1.0, n, a).unwrap().w1_bound;
        let expected = a.powf(-1.0 / d as f64);
        prop_assert!((scaled / base - expected).abs() <= 1e-12 * expected);
    }
}
