use hyperwass_core::{Cube, DyadicGrid, Metric};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn depth_brackets_the_volume(n in 1u64..=1_000_000, d in 1usize..=3) {
        let grid = DyadicGrid::new(Cube::from_volume(d, n as f64).unwrap()).unwrap();
        let k = grid.depth();
        let cells = 1u128 << (d * k);
        prop_assert!(cells <= n as u128);
        prop_assert!(n as u128 <= cells << d);
        prop_assert!(grid.cell_side(k) >= 1.0);
    }

    #[test]
    fn every_point_has_one_cell_per_level(
        side in 1.0f64..40.0,
        d in 1usize..=3,
        u in proptest::collection::vec(0.0f64..1.0, 3),
    ) {
        let grid = DyadicGrid::new(Cube::new(d, side).unwrap()).unwrap();
        let x: Vec<f64> = u[..d].iter().map(|t| t * side).collect();
        for k in 0..=grid.depth() {
            let idx = grid.cell_of(k, &x).unwrap();
            let owners = grid.cells(k).unwrap().filter(|&c| grid.cell_cube(k, c).contains(&x)).count();
            prop_assert_eq!(owners, 1);
            prop_assert!(grid.cell_cube(k, idx).contains(&x));
            if k > 0 {
                prop_assert_eq!(grid.parent(k, idx), grid.cell_of(k - 1, &x).unwrap());
            }
        }
    }

    #[test]
    fn torus_distance_is_a_metric(
        side in 1.0f64..20.0,
        u in proptest::collection::vec(0.0f64..1.0, 6),
    ) {
        let cube = Cube::new(2, side).unwrap().with_metric(Metric::Torus);
        let pt = |i: usize| vec![u[2 * i] * side, u[2 * i + 1] * side];
        let (x, y, z) = (pt(0), pt(1), pt(2));
        prop_assert!(cube.distance(&x, &z) <= cube.distance(&x, &y) + cube.distance(&y, &z) + 1e-12);
        prop_assert!((cube.distance(&x, &y) - cube.distance(&y, &x)).abs() <= 1e-12);
        let euclid = Cube::new(2, side).unwrap();
        prop_assert!(cube.distance(&x, &y) <= euclid.distance(&x, &y) + 1e-12);
    }
}
