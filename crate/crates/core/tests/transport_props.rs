use hyperwass_core::transport::{exact_wp, holder_lift, oracle_wp, rescale_pushforward, DiscreteMeasure, GroundMetric};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EUC: GroundMetric = GroundMetric::Euclidean;

fn cloud(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.gen::<f64>() * scale).collect()).collect()
}

fn weighted(rng: &mut ChaCha8Rng, n: usize, d: usize, total: f64) -> DiscreteMeasure {
    let pts = cloud(rng, n, d, 4.0);
    let raw: Vec<f64> = (0..n).map(|_| 0.1 + rng.gen::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    DiscreteMeasure::new(&pts, raw.iter().map(|m| m * total / s).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solver_matches_oracle(seed in any::<u64>(), n in 1usize..=7, d in 1usize..=3, pi in 0usize..3) {
        let p = [1.0, 2.0, 3.0][pi];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = cloud(&mut rng, n, d, 3.0);
        let b = cloud(&mut rng, n, d, 3.0);
        let o = oracle_wp(&a, &b, p, EUC).unwrap();
        let e = exact_wp(&DiscreteMeasure::unit(&a).unwrap(), &DiscreteMeasure::unit(&b).unwrap(), p, EUC).unwrap();
        prop_assert!((o - e.cost_p).abs() <= 1e-7 * o.max(1e-12));
    }

    #[test]
    fn symmetric_and_marginal_preserving(seed in any::<u64>(), n in 1usize..12, m in 1usize..12, d in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = weighted(&mut rng, n, d, 5.0);
        let nu = weighted(&mut rng, m, d, 5.0);
        let ab = exact_wp(&mu, &nu, 2.0, EUC).unwrap();
        let ba = exact_wp(&nu, &mu, 2.0, EUC).unwrap();
        prop_assert!((ab.cost_p - ba.cost_p).abs() <= 1e-9 * ab.cost_p.max(1.0));
        let (r, c) = ab.marginals(n, m);
        for (got, want) in r.iter().zip(mu.masses()).chain(c.iter().zip(nu.masses())) {
            prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0));
        }
        prop_assert!(ab.entries.iter().all(|e| e.2 >= 0.0));
    }

    #[test]
    fn triangle_inequality(seed in any::<u64>(), d in 1usize..=3, pi in 0usize..2) {
        let p = [1.0, 2.0][pi];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = weighted(&mut rng, 6, d, 3.0);
        let b = weighted(&mut rng, 5, d, 3.0);
        let c = weighted(&mut rng, 7, d, 3.0);
        let ac = exact_wp(&a, &c, p, EUC).unwrap().wp();
        let ab = exact_wp(&a, &b, p, EUC).unwrap().wp();
        let bc = exact_wp(&b, &c, p, EUC).unwrap().wp();
        prop_assert!(ac <= ab + bc + 1e-7);
    }

    #[test]
    fn scaling_identity(seed in any::<u64>(), lambda in 0.1f64..5.0, factor in 0.1f64..10.0, pi in 0usize..3) {
        let p = [1.0, 2.0, 3.0][pi];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = weighted(&mut rng, 6, 2, 2.0);
        let nu = weighted(&mut rng, 6, 2, 2.0);
        let base = exact_wp(&mu, &nu, p, EUC).unwrap().cost_p;
        let scaled = exact_wp(
            &rescale_pushforward(&mu, lambda, factor).unwrap(),
            &rescale_pushforward(&nu, lambda, factor).unwrap(),
            p,
            EUC,
        ).unwrap().cost_p;
        let expect = factor * lambda.powf(p) * base;
        prop_assert!((scaled - expect).abs() <= 1e-9 * expect.max(1e-12));
    }

    #[test]
    fn holder_lift_is_a_lower_bound(seed in any::<u64>(), pi in 0usize..2) {
        let p = [2.0, 3.0][pi];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DiscreteMeasure::unit(&cloud(&mut rng, 5, 2, 3.0)).unwrap();
        let b = DiscreteMeasure::unit(&cloud(&mut rng, 5, 2, 3.0)).unwrap();
        let w1 = exact_wp(&a, &b, 1.0, EUC).unwrap().cost_p;
        let wp = exact_wp(&a, &b, p, EUC).unwrap().wp();
        prop_assert!(holder_lift(w1, 5.0, p).unwrap() <= wp + 1e-9);
    }

    #[test]
    fn wp_increases_with_p_for_probabilities(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = weighted(&mut rng, 6, 2, 1.0);
        let b = weighted(&mut rng, 8, 2, 1.0);
        let w1 = exact_wp(&a, &b, 1.0, EUC).unwrap().wp();
        let w2 = exact_wp(&a, &b, 2.0, EUC).unwrap().wp();
        let w3 = exact_wp(&a, &b, 3.0, EUC).unwrap().wp();
        prop_assert!(w1 <= w2 + 1e-9 && w2 <= w3 + 1e-9);
    }
}

#[test]
fn sorted_matching_on_the_line() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for &(n, p) in &[(300usize, 1.0f64), (400, 2.0), (250, 3.0)] {
        let mut a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 100.0).collect();
        let mut b: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 100.0).collect();
        let mu = DiscreteMeasure::unit(&a.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap();
        let nu = DiscreteMeasure::unit(&b.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let expect: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs().powf(p)).sum();
        let got = exact_wp(&mu, &nu, p, EUC).unwrap().cost_p;
        assert!((got - expect).abs() <= 1e-8 * expect, "n={n} p={p}: {got} vs {expect}");
    }
}

#[test]
fn large_planar_instance_is_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = DiscreteMeasure::unit(&cloud(&mut rng, 1500, 2, 40.0)).unwrap();
    let b = DiscreteMeasure::unit(&cloud(&mut rng, 1500, 2, 40.0)).unwrap();
    let ab = exact_wp(&a, &b, 2.0, EUC).unwrap();
    let ba = exact_wp(&b, &a, 2.0, EUC).unwrap();
    assert!((ab.cost_p - ba.cost_p).abs() <= 1e-8 * ab.cost_p);
    let (r, c) = ab.marginals(1500, 1500);
    assert!(r.iter().chain(&c).all(|v| (v - 1.0).abs() < 1e-9));
}
