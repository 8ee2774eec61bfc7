//! Certified lower bounds on semi-discrete `W_p^p` from the dual side.
//!
//! Any weight vector `ψ` gives `Σ ψ_i + ∫ min_i (|x − x_i|^p − ψ_i) dμ̄ ≤ W_p^p`.
//! Weights start from the discrete dual against a quantization and are then
//! improved by ascent; the final integral is bounded from below over
//! adaptive boxes.

use serde::{Deserialize, Serialize};

use super::simplex::{self, CostSource};
use super::{power_of_squared, MAX_COMBINED_SUPPORT};
use crate::error::{invalid, Result};
use crate::geometry::{DyadicGrid, Metric};
use crate::processes::{MeanDensity, PointSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaguerreOptions {
    /// Ascent iterations on the sampled dual.
    pub iterations: usize,
    /// Quadrature nodes per point, roughly; capped by the transport ceiling.
    pub samples_per_point: usize,
    /// Extra dyadic levels below the quadrature level for ambiguous boxes.
    pub refine_levels: usize,
}

impl Default for LaguerreOptions {
    fn default() -> Self {
        Self {
            iterations: 50,
            samples_per_point: 64,
            refine_levels: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaguerreBound {
    /// Certified lower bound on `W_p^p(μ_N, μ̄_N)`.
    pub lower: f64,
    /// Sampled dual value at the final weights, not certified.
    pub sampled: f64,
    pub weights: Vec<f64>,
    pub quadrature_level: usize,
    pub boxes: usize,
}

struct Problem<'a> {
    pts: &'a [f64],
    d: usize,
    n: usize,
    p: f64,
}

impl Problem<'_> {
    fn point(&self, i: usize) -> &[f64] {
        &self.pts[i * self.d..(i + 1) * self.d]
    }

    fn cost(&self, x: &[f64], i: usize) -> f64 {
        let d2: f64 = x.iter().zip(self.point(i)).map(|(a, b)| (a - b) * (a - b)).sum();
        power_of_squared(d2, self.p)
    }

    /// `(value, owner)` of `min_i c(x, x_i) − ψ_i`.
    fn envelope(&self, x: &[f64], psi: &[f64]) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for i in 0..self.n {
            let v = self.cost(x, i) - psi[i];
            if v < best.0 {
                best = (v, i);
            }
        }
        best
    }

    /// Smallest and largest cost from point `i` over the box.
    fn box_range(&self, lo: &[f64], side: f64, i: usize) -> (f64, f64) {
        let (mut near, mut far) = (0.0, 0.0);
        for (l, x) in lo.iter().zip(self.point(i)) {
            let a = (l - x).abs();
            let b = (l + side - x).abs();
            let inside = *x >= *l && *x <= l + side;
            let m = if inside { 0.0 } else { a.min(b) };
            near += m * m;
            far += a.max(b) * a.max(b);
        }
        (power_of_squared(near, self.p), power_of_squared(far, self.p))
    }
}

struct NodeCosts<'a> {
    prob: &'a Problem<'a>,
    nodes: &'a [f64],
}

impl CostSource for NodeCosts<'_> {
    fn rows(&self) -> usize {
        self.prob.n
    }
    fn cols(&self) -> usize {
        self.nodes.len() / self.prob.d
    }
    fn cost(&self, i: usize, j: usize) -> f64 {
        let d = self.prob.d;
        self.prob.cost(&self.nodes[j * d..(j + 1) * d], i)
    }
}

fn sampled_dual(prob: &Problem, nodes: &[f64], weights: &[f64], psi: &[f64], owned: &mut [f64]) -> f64 {
    owned.iter_mut().for_each(|m| *m = 0.0);
    let mut integral = 0.0;
    for (x, w) in nodes.chunks_exact(prob.d).zip(weights) {
        let (v, i) = prob.envelope(x, psi);
        integral += w * v;
        owned[i] += w;
    }
    integral + psi.iter().sum::<f64>()
}

/// Lower bound `W_p^p` between unit-mass points and the mass-matched mean
/// measure through the semi-discrete dual.
pub fn semidiscrete_dual_lower(ps: &PointSet, density: &MeanDensity, p: f64, options: LaguerreOptions) -> Result<LaguerreBound> {
    if ps.is_empty() {
        return Err(invalid("semi-discrete transport needs a non-empty point set"));
    }
    if !(p >= 1.0) {
        return Err(invalid(format!("exponent p must be >= 1, got {p}")));
    }
    if ps.cube().metric() != Metric::Euclidean {
        return Err(invalid("the dual bound is implemented for the Euclidean metric only"));
    }
    let grid = DyadicGrid::new(ps.cube().clone())?;
    let d = grid.dim();
    let n = ps.len();
    let rescaled = density.scaled(ps.mass() / density.total_mass(ps.cube()));
    let base = grid.depth().max(density.resolution_level());
    let target = (n * options.samples_per_point.max(1)) as u64;
    let mut level = base;
    let room = MAX_COMBINED_SUPPORT.saturating_sub(n) as u64;
    while grid.cell_count(level + 1) <= target.min(room) {
        level += 1;
    }

    let pts: Vec<f64> = ps.iter().flatten().copied().collect();
    let prob = Problem { pts: &pts, d, n, p };
    let weights = rescaled.cell_masses(&grid, level)?;
    let mut nodes = Vec::with_capacity(weights.len() * d);
    for idx in 0..weights.len() {
        nodes.extend(grid.cell_center(level, idx));
    }

    let mut psi = if grid.cell_count(level) + n as u64 <= MAX_COMBINED_SUPPORT as u64 {
        let costs = NodeCosts { prob: &prob, nodes: &nodes };
        simplex::solve_with_potentials(&vec![1.0; n], &weights, &costs)?.u
    } else {
        vec![0.0; n]
    };
    let mut owned = vec![0.0; n];
    let mut value = sampled_dual(&prob, &nodes, &weights, &psi, &mut owned);
    let mut step = grid.cell_diameter(level).powf(p);
    let mut trial_owned = vec![0.0; n];
    for _ in 0..options.iterations {
        let trial: Vec<f64> = psi.iter().zip(&owned).map(|(s, m)| s + step * (1.0 - m)).collect();
        let v = sampled_dual(&prob, &nodes, &weights, &trial, &mut trial_owned);
        if v > value {
            psi = trial;
            value = v;
            std::mem::swap(&mut owned, &mut trial_owned);
            step *= 1.5;
        } else {
            step *= 0.5;
        }
    }

    let max_level = level + options.refine_levels;
    let side0 = grid.cell_side(base);
    let mut boxes = 0usize;
    let mut integral = 0.0;
    let all: Vec<usize> = (0..n).collect();
    for idx in grid.cells(base)? {
        let lo = grid.cell_origin(base, idx);
        let rho = rescaled.value_at(&grid, &grid.cell_center(base, idx))?;
        integral += rho
            * lower_integral(
                &prob,
                &psi,
                &lo,
                side0,
                base,
                level + 1,
                max_level,
                &all,
                &mut boxes,
            );
    }
    Ok(LaguerreBound {
        lower: psi.iter().sum::<f64>() + integral,
        sampled: value,
        weights: psi,
        quadrature_level: level,
        boxes,
    })
}

/// Lower bound on `∫_box min_i (c(x, x_i) − ψ_i) dx`.
#[allow(clippy::too_many_arguments)]
fn lower_integral(
    prob: &Problem,
    psi: &[f64],
    lo: &[f64],
    side: f64,
    depth: usize,
    min_depth: usize,
    max_depth: usize,
    candidates: &[usize],
    boxes: &mut usize,
) -> f64 {
    let d = prob.d;
    let vol = side.powi(d as i32);
    let ranges: Vec<(f64, f64)> = candidates
        .iter()
        .map(|&i| {
            let (a, b) = prob.box_range(lo, side, i);
            (a - psi[i], b - psi[i])
        })
        .collect();
    let (best, ceiling) = ranges
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, r)| if r.1 < acc.1 { (k, r.1) } else { acc });
    let keep: Vec<usize> = candidates
        .iter()
        .zip(&ranges)
        .filter(|(_, r)| r.0 <= ceiling)
        .map(|(&i, _)| i)
        .collect();
    let single = keep.len() == 1 && keep[0] == candidates[best];
    if depth >= max_depth || (single && depth >= min_depth) {
        *boxes += 1;
        if single {
            // Convex integrand: the center value bounds the mean from below,
            // and for p = 2 the box variance makes it exact.
            let center: Vec<f64> = lo.iter().map(|l| l + 0.5 * side).collect();
            let spread = if prob.p == 2.0 { d as f64 * side * side / 12.0 } else { 0.0 };
            return vol * (prob.cost(&center, keep[0]) + spread - psi[keep[0]]);
        }
        let floor = ranges.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
        return vol * floor;
    }
    let half = 0.5 * side;
    let mut total = 0.0;
    let mut child = vec![0.0; d];
    for corner in 0..(1usize << d) {
        for (a, c) in child.iter_mut().enumerate() {
            *c = lo[a] + if corner >> a & 1 == 1 { half } else { 0.0 };
        }
        total += lower_integral(prob, psi, &child, half, depth + 1, min_depth, max_depth, &keep, boxes);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Cube;
    use crate::transport::{semidiscrete_wp, semidiscrete_wp_1d};

    #[test]
    fn single_center_point_matches_closed_form() {
        // One point at the center of [0,1]^2 scaled to area 1: W_2^2 = 1/6.
        let cube = Cube::new(2, 1.0).unwrap();
        let ps = PointSet::new(cube, vec![vec![0.5, 0.5]]).unwrap();
        let rho = MeanDensity::uniform(1.0).unwrap();
        let b = semidiscrete_dual_lower(&ps, &rho, 2.0, LaguerreOptions::default()).unwrap();
        assert!(b.lower <= 1.0 / 6.0 + 1e-12);
        assert!(b.lower > 1.0 / 6.0 - 1e-9, "{}", b.lower);
    }

    #[test]
    fn below_the_exact_segment_cost() {
        let cube = Cube::new(1, 16.0).unwrap();
        let xs = [0.3, 1.9, 2.2, 5.0, 5.1, 7.7, 9.0, 9.4, 11.0, 12.5, 12.6, 13.0, 14.8, 15.1, 15.2, 15.9];
        let ps = PointSet::new(cube, xs.iter().map(|x| vec![*x]).collect()).unwrap();
        let rho = MeanDensity::uniform(1.0).unwrap();
        for p in [1.0, 2.0, 3.0] {
            let exact = semidiscrete_wp_1d(&ps, &rho, p).unwrap();
            let b = semidiscrete_dual_lower(&ps, &rho, p, LaguerreOptions::default()).unwrap();
            assert!(b.lower <= exact * (1.0 + 1e-12), "p={p}: {} > {exact}", b.lower);
            assert!(b.lower >= 0.97 * exact, "p={p}: {} vs {exact}", b.lower);
        }
    }

    #[test]
    fn tighter_than_cell_bracket_in_3d() {
        let cube = Cube::new(3, 4.0).unwrap();
        let mut pts = Vec::new();
        let mut s = 12345u64;
        for _ in 0..64 {
            let mut x = Vec::new();
            for _ in 0..3 {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                x.push(4.0 * (s >> 11) as f64 / (1u64 << 53) as f64);
            }
            pts.push(x);
        }
        let ps = PointSet::new(cube, pts).unwrap();
        let rho = MeanDensity::uniform(1.0).unwrap();
        let est = semidiscrete_wp(&ps, &rho, 1.0, 4).unwrap();
        let b = semidiscrete_dual_lower(&ps, &rho, 1.0, LaguerreOptions::default()).unwrap();
        assert!(b.lower <= est.upper);
        assert!(b.lower > est.lower, "{} vs {}", b.lower, est.lower);
    }

    #[test]
    fn torus_is_rejected() {
        let cube = Cube::new(2, 4.0).unwrap().with_metric(Metric::Torus);
        let ps = PointSet::new(cube, vec![vec![1.0, 1.0]]).unwrap();
        let rho = MeanDensity::uniform(1.0).unwrap();
        assert!(semidiscrete_dual_lower(&ps, &rho, 2.0, LaguerreOptions::default()).is_err());
    }
}
