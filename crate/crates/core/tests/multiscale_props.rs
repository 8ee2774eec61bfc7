use hyperwass_core::moments::{Envelope, MomentEnvelope};
use hyperwass_core::multiscale::{
    analytic_scale_costs, build_ladder, constructive_upper_bound, good_event_diagnostics, theorem_bound,
    InterpolationLadder,
};
use hyperwass_core::transport::{
    exact_wp, semidiscrete_dual_lower, semidiscrete_wp, DiscreteMeasure, GroundMetric, LaguerreOptions,
};
use hyperwass_core::{Cube, MeanDensity, PointSet, ProcessFamily, ProcessSpec};
use proptest::prelude::*;

fn rigid_lattice(side: usize) -> PointSet {
    let cube = Cube::new(2, side as f64).unwrap();
    let pts = (0..side * side)
        .map(|k| vec![(k / side) as f64 + 0.5, (k % side) as f64 + 0.5])
        .collect();
    PointSet::new(cube, pts).unwrap()
}

fn random_instance(n: usize, d: usize, seed: u64) -> (PointSet, MeanDensity) {
    let cube = Cube::from_volume(d, n as f64).unwrap();
    let spec = ProcessSpec::new(ProcessFamily::BinomialIid { count: Some(n) }, seed);
    (spec.sample_replicate(&cube, 0).unwrap(), MeanDensity::uniform(1.0).unwrap())
}

fn quantized(ladder: &InterpolationLadder, k: usize, fine: usize) -> DiscreteMeasure {
    let grid = ladder.grid();
    let mut coords = Vec::new();
    let mut masses = Vec::new();
    for (c, m) in ladder.nu_masses(k, fine).into_iter().enumerate() {
        if m > 0.0 {
            coords.extend(grid.cell_center(fine, c));
            masses.push(m);
        }
    }
    DiscreteMeasure::from_flat(grid.dim(), coords, masses).unwrap()
}

#[test]
fn analytic_aggregate_grows_like_n_log_n_for_constant_envelope() {
    let p = 2.0;
    let env = MomentEnvelope::constant(p, 2, 1.0);
    let mut ratios = Vec::new();
    for j in 2..=8 {
        let ps = rigid_lattice(1 << j);
        let ladder = build_ladder(&ps, &MeanDensity::uniform(1.0).unwrap()).unwrap();
        let bound = analytic_scale_costs(&ladder, &env, p, 1.0, 1.0, 1.0, 0.5).unwrap();
        let n = ps.len() as f64;
        ratios.push(bound.aggregate / (n * (1.0 + n.ln()).powf(p)));
    }
    let hi = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
    assert!(hi / lo <= 64.0, "{ratios:?}");
}

#[test]
fn analytic_aggregate_is_linear_for_decaying_envelope() {
    let p = 2.0;
    let env = MomentEnvelope {
        envelope: Envelope::Power { gamma: 1.0, epsilon: 0.5 },
        ..MomentEnvelope::constant(p, 2, 1.0)
    };
    let mut per_point = Vec::new();
    for j in 2..=8 {
        let ps = rigid_lattice(1 << j);
        let ladder = build_ladder(&ps, &MeanDensity::uniform(1.0).unwrap()).unwrap();
        let bound = analytic_scale_costs(&ladder, &env, p, 1.0, 1.0, 1.0, 0.5).unwrap();
        let n = ps.len() as f64;
        let theorem = theorem_bound(n, p, 1.0, 1.0, &env, 1.0).unwrap();
        assert!(bound.aggregate <= theorem.bound, "N={n}");
        per_point.push(bound.aggregate / n);
    }
    let hi = per_point.iter().cloned().fold(f64::MIN, f64::max);
    let lo = per_point.iter().cloned().fold(f64::MAX, f64::min);
    assert!(hi / lo <= 4.0, "{per_point:?}");
}

#[test]
fn poisson_good_event_failure_rate() {
    // Squares of area 4 fail when they hold fewer than 2 points.
    let cube = Cube::new(2, 64.0).unwrap();
    let spec = ProcessSpec::new(ProcessFamily::Poisson { intensity: 1.0 }, 77);
    let density = MeanDensity::uniform(1.0).unwrap();
    let (mut failures, mut windows) = (0usize, 0usize);
    for r in 0..10 {
        let ps = spec.sample_replicate(&cube, r).unwrap();
        let ladder = build_ladder(&ps, &density).unwrap();
        let levels = good_event_diagnostics(&ladder, 0.5, None).unwrap();
        let level = levels.iter().find(|l| l.area == 4.0).unwrap();
        failures += level.failures;
        windows += level.cells;
    }
    let expected = 5.0 * (-4f64).exp();
    let freq = failures as f64 / windows as f64;
    let se = (expected * (1.0 - expected) / windows as f64).sqrt();
    assert!(windows >= 10_000);
    assert!((freq - expected).abs() <= 3.0 * se, "{freq} vs {expected}");
}

#[test]
fn rigid_lattice_has_no_good_event_failures() {
    let ps = rigid_lattice(32);
    let ladder = build_ladder(&ps, &MeanDensity::uniform(1.0).unwrap()).unwrap();
    for level in good_event_diagnostics(&ladder, 0.9, None).unwrap() {
        assert_eq!(level.failures, 0, "level {}", level.level);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ladder_conserves_mass(n in 1usize..200, d in 1usize..=3, seed in any::<u64>()) {
        let (ps, density) = random_instance(n, d, seed);
        let ladder = build_ladder(&ps, &density).unwrap();
        let fine = ladder.depth();
        for k in 0..=fine {
            let total: f64 = ladder.counts(k).iter().sum();
            prop_assert!((total - n as f64).abs() < 1e-9);
            let nu: f64 = ladder.nu_masses(k, fine).iter().sum();
            prop_assert!((nu - n as f64).abs() < 1e-9 * n as f64);
        }
    }

    #[test]
    fn constructive_total_is_above_certified_lower(
        n in 4usize..64,
        d in 1usize..=2,
        pi in 0usize..2,
        seed in any::<u64>(),
    ) {
        let p = [1.0, 2.0][pi];
        let (ps, density) = random_instance(n, d, seed);
        let ladder = build_ladder(&ps, &density).unwrap();
        let total = constructive_upper_bound(&ladder, p, 2).unwrap().total;
        let mut lower = semidiscrete_wp(&ps, &density, p, ladder.depth() + 1).unwrap().lower;
        if d > 1 {
            lower = lower.max(semidiscrete_dual_lower(&ps, &density, p, LaguerreOptions::default()).unwrap().lower);
        }
        prop_assert!(total >= lower * (1.0 - 1e-9), "{total} < {lower}");
    }

    #[test]
    fn level_costs_dominate_glued_lower_bounds(
        n in 4usize..64,
        d in 1usize..=2,
        pi in 0usize..2,
        seed in any::<u64>(),
    ) {
        let p = [1.0, 2.0][pi];
        let (ps, density) = random_instance(n, d, seed);
        let ladder = build_ladder(&ps, &density).unwrap();
        let bound = constructive_upper_bound(&ladder, p, 2).unwrap();
        let m = ladder.total_mass();
        for level in &bound.levels {
            let k = level.level;
            let fine = k + 3;
            let e = 0.5 * ladder.grid().cell_diameter(fine) * m.powf(1.0 / p);
            let plan = exact_wp(&quantized(&ladder, k, fine), &quantized(&ladder, k + 1, fine), p, GroundMetric::Euclidean).unwrap();
            let lower = (plan.cost_p.powf(1.0 / p) - 2.0 * e).max(0.0).powf(p);
            prop_assert!(level.constructive_cost >= lower * (1.0 - 1e-9), "level {k}: {} < {lower}", level.constructive_cost);
        }
    }
}
