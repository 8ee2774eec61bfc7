use hyperwass_core::processes::{parse_points, write_points};
use hyperwass_core::{Cube, DyadicGrid, Perturbation, ProcessFamily, ProcessSpec};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

fn lattice(radius: f64) -> ProcessFamily {
    ProcessFamily::PerturbedLattice {
        perturbation: Perturbation::UniformBox { radius },
    }
}

#[test]
fn poisson_mean_count_over_a_thousand_seeds() {
    let cube = Cube::new(2, 32.0).unwrap();
    let spec = ProcessSpec::new(ProcessFamily::Poisson { intensity: 1.0 }, 2024);
    let total: usize = (0..1000).map(|r| spec.sample_replicate(&cube, r).unwrap().len()).sum();
    let mean = total as f64 / 1000.0;
    assert!((mean - 1024.0).abs() <= 3.0 * 32.0, "{mean}");
    // The sample mean itself has standard error 32/sqrt(1000).
    assert!((mean - 1024.0).abs() <= 5.0 * 32.0 / 1000f64.sqrt(), "{mean}");
}

#[test]
fn poisson_counts_follow_the_poisson_law() {
    let cube = Cube::new(2, 2.0).unwrap();
    let spec = ProcessSpec::new(ProcessFamily::Poisson { intensity: 1.0 }, 5);
    let reps = 10_000;
    let mut hist = [0usize; 10];
    for r in 0..reps {
        let n = spec.sample_replicate(&cube, r).unwrap().len();
        hist[n.min(9)] += 1;
    }
    let law = Poisson::new(4.0).unwrap();
    let mut chi2 = 0.0;
    for (k, &obs) in hist.iter().enumerate() {
        let prob = if k < 9 {
            law.pmf(k as u64)
        } else {
            1.0 - (0..9).map(|j| law.pmf(j)).sum::<f64>()
        };
        let expected = prob * reps as f64;
        chi2 += (obs as f64 - expected).powi(2) / expected;
    }
    let p_value = 1.0 - ChiSquared::new(9.0).unwrap().cdf(chi2);
    assert!(p_value > 0.001, "chi2 {chi2}, p {p_value}");
}

#[test]
fn lattice_counts_deviate_only_near_window_edges() {
    let radius = 0.4;
    let cube = Cube::new(2, 32.0).unwrap();
    let spec = ProcessSpec::new(lattice(radius), 3);
    let grid = DyadicGrid::new(cube.clone()).unwrap();
    for r in 0..5 {
        let ps = spec.sample_replicate(&cube, r).unwrap();
        // Dyadic squares have integer sides, so no point leaves its own unit cell.
        for k in 0..=grid.depth() {
            let s = grid.cell_side(k);
            for (idx, c) in ps.cell_counts(&grid, k).unwrap().iter().enumerate() {
                assert_eq!(*c, s * s, "level {k} cell {idx}");
            }
        }
        // Shifted windows: only cells within `radius` of the edge can contribute errors.
        for &(x0, s) in &[(0.3, 4.0), (5.7, 8.0), (1.1, 16.0), (10.25, 2.5)] {
            let count = ps.count_in_box(&[x0, x0], s) as f64;
            let deviation = (count - s * s).abs();
            assert!(deviation <= 4.0 * (s + 2.0), "window at {x0} side {s}: {count}");
        }
    }
}

#[test]
fn point_files_round_trip() {
    let cube = Cube::new(3, 4.0).unwrap();
    let spec = ProcessSpec::new(ProcessFamily::BinomialIid { count: Some(50) }, 8);
    let ps = spec.sample_replicate(&cube, 0).unwrap();
    let dir = std::env::temp_dir().join(format!("hyperwass-roundtrip-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("points.txt");
    write_points(&path, &ps).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let back = parse_points(&text, "points.txt", &cube).unwrap();
    assert_eq!(back.len(), ps.len());
    for i in 0..ps.len() {
        assert_eq!(back.point(i), ps.point(i));
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn same_seed_same_points(seed in any::<u64>(), replicate in 0u64..100, family in 0usize..3) {
        let cube = Cube::new(2, 8.0).unwrap();
        let fam = match family {
            0 => ProcessFamily::Poisson { intensity: 1.5 },
            1 => ProcessFamily::BinomialIid { count: None },
            _ => lattice(0.3),
        };
        let spec = ProcessSpec::new(fam, seed);
        let a = spec.sample_replicate(&cube, replicate).unwrap();
        let b = spec.sample_replicate(&cube, replicate).unwrap();
        prop_assert_eq!(a.to_vecs(), b.to_vecs());
    }

    #[test]
    fn binomial_count_is_exact(seed in any::<u64>(), count in 0usize..300, d in 1usize..=3) {
        let cube = Cube::from_volume(d, 64.0).unwrap();
        let spec = ProcessSpec::new(ProcessFamily::BinomialIid { count: Some(count) }, seed);
        let ps = spec.sample_replicate(&cube, 0).unwrap();
        prop_assert_eq!(ps.len(), count);
        for i in 0..ps.len() {
            prop_assert!(cube.contains(ps.point(i)));
        }
    }
}
