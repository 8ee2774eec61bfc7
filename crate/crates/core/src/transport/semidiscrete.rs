use serde::{Deserialize, Serialize};

use super::simplex::{self, CostSource};
use super::{exact_wp, quantize_density, DiscreteMeasure, GroundMetric, MAX_COMBINED_SUPPORT};
use crate::error::{invalid, Error, Result};
use crate::geometry::{DyadicGrid, Metric};
use crate::processes::{MeanDensity, PointSet};

/// Certified bracket for `W_p^p(μ_N, μ̄_N)` from a quantized solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiDiscreteEstimate {
    pub level: usize,
    /// Exact cost against the quantized mean measure.
    pub quantized_cost: f64,
    /// `W_p` distance between the mean measure and its quantization, bounded.
    pub slack: f64,
    pub lower: f64,
    pub upper: f64,
}

impl SemiDiscreteEstimate {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Bracket `W_p^p` between the points and the mass-matched mean measure by
/// solving against its level-`level` quantization.
pub fn semidiscrete_wp(
    ps: &PointSet,
    density: &MeanDensity,
    p: f64,
    level: usize,
) -> Result<SemiDiscreteEstimate> {
    if ps.is_empty() {
        return Err(invalid("semi-discrete transport needs a non-empty point set"));
    }
    let grid = DyadicGrid::new(ps.cube().clone())?;
    let mass = ps.mass();
    let rescaled = density.scaled(mass / density.total_mass(ps.cube()));
    let target = quantize_density(&rescaled, &grid, level)?;
    let source = DiscreteMeasure::from_point_set(ps);
    let plan = exact_wp(&source, &target, p, GroundMetric::of_cube(ps.cube()))?;
    let slack = 0.5 * grid.cell_diameter(level) * mass.powf(1.0 / p);
    let root = plan.cost_p.powf(1.0 / p);
    let mut lower = (root - slack).max(0.0).powf(p);
    let mut upper = (root + slack).powf(p);
    if ps.cube().metric() == Metric::Euclidean {
        let side = grid.cell_side(level);
        let near = cell_cost(&source, &target, side, p, false)?;
        let far = cell_cost(&source, &target, side, p, true)?;
        lower = lower.max(near);
        upper = upper.min(far);
    }
    Ok(SemiDiscreteEstimate {
        level,
        quantized_cost: plan.cost_p,
        slack,
        lower,
        upper,
    })
}

/// Nearest or farthest point of each quantization cell, seen from each point.
struct CellCosts<'a> {
    points: &'a DiscreteMeasure,
    centers: &'a DiscreteMeasure,
    half: f64,
    p: f64,
    far: bool,
}

impl CostSource for CellCosts<'_> {
    fn rows(&self) -> usize {
        self.points.len()
    }
    fn cols(&self) -> usize {
        self.centers.len()
    }
    fn cost(&self, i: usize, j: usize) -> f64 {
        let sq: f64 = self
            .points
            .point(i)
            .iter()
            .zip(self.centers.point(j))
            .map(|(x, c)| {
                let off = (x - c).abs();
                let t = if self.far { off + self.half } else { (off - self.half).max(0.0) };
                t * t
            })
            .sum();
        sq.powf(0.5 * self.p)
    }
}

/// Exact transport where every cell's mass sits at its nearest (`far = false`)
/// or farthest point from the source: a certified lower or upper bound.
fn cell_cost(points: &DiscreteMeasure, centers: &DiscreteMeasure, side: f64, p: f64, far: bool) -> Result<f64> {
    let combined = points.len() + centers.len();
    if combined > MAX_COMBINED_SUPPORT {
        return Err(Error::CeilingExceeded {
            what: "combined transport support",
            size: combined,
            limit: MAX_COMBINED_SUPPORT,
        });
    }
    let costs = CellCosts {
        points,
        centers,
        half: 0.5 * side,
        p,
        far,
    };
    let scale = points.total_mass() / centers.total_mass();
    let demand: Vec<f64> = centers.masses().iter().map(|m| m * scale).collect();
    let flow = simplex::solve(points.masses(), &demand, &costs)?;
    Ok(flow.iter().map(|&(i, j, f)| f * costs.cost(i, j)).sum())
}

/// `∫_l^r |x - c|^p dx`.
fn abs_power_integral(l: f64, r: f64, c: f64, p: f64) -> f64 {
    let g = |t: f64| t.signum() * t.abs().powf(p + 1.0) / (p + 1.0);
    g(r - c) - g(l - c)
}

/// Exact `W_p^p(μ_N, μ̄_N)` on a segment through the monotone coupling.
pub fn semidiscrete_wp_1d(ps: &PointSet, density: &MeanDensity, p: f64) -> Result<f64> {
    let cube = ps.cube();
    if cube.dim() != 1 || cube.metric() != Metric::Euclidean {
        return Err(invalid("the monotone coupling needs a Euclidean segment"));
    }
    if ps.is_empty() {
        return Err(invalid("semi-discrete transport needs a non-empty point set"));
    }
    let grid = DyadicGrid::new(cube.clone())?;
    let level = density.resolution_level();
    let mass = ps.mass();
    let rescaled = density.scaled(mass / density.total_mass(cube));
    let masses = rescaled.cell_masses(&grid, level)?;
    let width = grid.cell_side(level);
    let pieces: Vec<(f64, f64, f64)> = masses
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let l = cube.origin()[0] + i as f64 * width;
            (l, l + width, m / width)
        })
        .collect();

    let mut xs: Vec<f64> = ps.iter().map(|x| x[0]).collect();
    xs.sort_by(f64::total_cmp);

    let mut cost = 0.0;
    let mut piece = 0;
    let mut pos = pieces[0].0;
    for (k, &x) in xs.iter().enumerate() {
        let last = k + 1 == xs.len();
        let mut need = 1.0;
        while piece < pieces.len() {
            let (_, r, rho) = pieces[piece];
            let avail = rho * (r - pos);
            if !last && avail >= need {
                let end = (pos + need / rho).min(r);
                cost += rho * abs_power_integral(pos, end, x, p);
                pos = end;
                break;
            }
            cost += rho * abs_power_integral(pos, r, x, p);
            need -= avail;
            piece += 1;
            if piece < pieces.len() {
                pos = pieces[piece].0;
            }
        }
    }
    Ok(cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Cube;

    #[test]
    fn centers_against_same_level() {
        let cube = Cube::new(2, 4.0).unwrap();
        let pts: Vec<Vec<f64>> = (0..16)
            .map(|k| vec![(k / 4) as f64 + 0.5, (k % 4) as f64 + 0.5])
            .collect();
        let ps = PointSet::new(cube, pts).unwrap();
        let uni = MeanDensity::uniform(1.0).unwrap();
        let est = semidiscrete_wp(&ps, &uni, 2.0, 2).unwrap();
        assert!(est.quantized_cost < 1e-12);
        assert!((est.upper - est.slack.powi(2)).abs() < 1e-12);
        assert_eq!(est.lower, 0.0);
    }

    #[test]
    fn mean_distance_to_square_center() {
        let cube = Cube::new(2, 1.0).unwrap();
        let ps = PointSet::new(cube, vec![vec![0.5, 0.5]]).unwrap();
        let uni = MeanDensity::uniform(1.0).unwrap();
        let exact = (2f64.sqrt() + (1.0 + 2f64.sqrt()).ln()) / 6.0;
        let est = semidiscrete_wp(&ps, &uni, 1.0, 6).unwrap();
        assert!(est.lower <= exact && exact <= est.upper, "{est:?}");
        assert!((est.quantized_cost - 0.3826).abs() < 1e-3);
    }

    #[test]
    fn width_shrinks_with_level() {
        let cube = Cube::new(2, 4.0).unwrap();
        let ps = PointSet::new(cube, vec![vec![0.3, 1.2], vec![3.1, 2.2], vec![1.7, 0.4]]).unwrap();
        let uni = MeanDensity::uniform(1.0).unwrap();
        let mut prev = f64::INFINITY;
        for level in 0..5 {
            let est = semidiscrete_wp(&ps, &uni, 2.0, level).unwrap();
            assert!(est.slack <= prev);
            prev = est.slack;
        }
    }

    #[test]
    fn segment_single_point() {
        let cube = Cube::new(1, 1.0).unwrap();
        let ps = PointSet::new(cube, vec![vec![0.5]]).unwrap();
        let uni = MeanDensity::uniform(1.0).unwrap();
        // ∫_0^1 |x - 1/2| dx
        assert!((semidiscrete_wp_1d(&ps, &uni, 1.0).unwrap() - 0.25).abs() < 1e-14);
        // ∫_0^1 |x - 1/2|^2 dx
        assert!((semidiscrete_wp_1d(&ps, &uni, 2.0).unwrap() - 1.0 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn segment_lattice_is_local() {
        let cube = Cube::new(1, 8.0).unwrap();
        let ps = PointSet::new(cube, (0..8).map(|i| vec![i as f64 + 0.5]).collect()).unwrap();
        let uni = MeanDensity::uniform(1.0).unwrap();
        assert!((semidiscrete_wp_1d(&ps, &uni, 2.0).unwrap() - 8.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn segment_agrees_with_quantized_bracket() {
        let cube = Cube::new(1, 16.0).unwrap();
        let xs = [0.2, 3.3, 3.4, 7.9, 8.0, 12.5, 15.9];
        let ps = PointSet::new(cube, xs.iter().map(|&x| vec![x]).collect()).unwrap();
        let dens = MeanDensity::checkerboard(1, 2, 0.5, 1.5).unwrap();
        for p in [1.0, 2.0, 3.0] {
            let exact = semidiscrete_wp_1d(&ps, &dens, p).unwrap();
            let est = semidiscrete_wp(&ps, &dens, p, 7).unwrap();
            assert!(est.lower <= exact + 1e-9 && exact <= est.upper + 1e-9, "p={p} {exact} {est:?}");
        }
    }
}
