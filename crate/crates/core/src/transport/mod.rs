//! Exact discrete optimal transport, a brute-force verifier, and
//! quantization of densities for semi-discrete estimates.

mod laguerre;
mod semidiscrete;
pub mod simplex;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Cube, DyadicGrid, Metric};
use crate::processes::{MeanDensity, PointSet};

pub use laguerre::{semidiscrete_dual_lower, LaguerreBound, LaguerreOptions};
pub use semidiscrete::{semidiscrete_wp, semidiscrete_wp_1d, SemiDiscreteEstimate};

/// Largest combined support handled by [`exact_wp`].
pub const MAX_COMBINED_SUPPORT: usize = 20_000;
/// Largest `n` accepted by [`oracle_wp`].
pub const MAX_ORACLE_POINTS: usize = 8;
const DENSE_COST_LIMIT: usize = 4_000_000;
const MASS_TOLERANCE: f64 = 1e-9;

/// Ground distance used by the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GroundMetric {
    Euclidean,
    Torus { side: f64 },
}

impl GroundMetric {
    pub fn of_cube(cube: &Cube) -> Self {
        match cube.metric() {
            Metric::Euclidean => GroundMetric::Euclidean,
            Metric::Torus => GroundMetric::Torus { side: cube.side() },
        }
    }

    #[inline]
    pub fn squared_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            GroundMetric::Euclidean => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
            GroundMetric::Torus { side } => x
                .iter()
                .zip(y)
                .map(|(a, b)| {
                    let d = (a - b).abs().rem_euclid(side);
                    let w = d.min(side - d);
                    w * w
                })
                .sum(),
        }
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        self.squared_distance(x, y).sqrt()
    }

    /// `dist(x, y)^p`.
    #[inline]
    pub fn cost(&self, x: &[f64], y: &[f64], p: f64) -> f64 {
        power_of_squared(self.squared_distance(x, y), p)
    }
}

#[inline]
fn power_of_squared(d2: f64, p: f64) -> f64 {
    if p == 2.0 {
        d2
    } else if p == 1.0 {
        d2.sqrt()
    } else if p == 4.0 {
        d2 * d2
    } else {
        d2.powf(p / 2.0)
    }
}

/// Finitely supported measure with positive masses.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    coords: Vec<f64>,
    masses: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: &[Vec<f64>], masses: Vec<f64>) -> Result<Self> {
        let dim = points.first().map_or(1, Vec::len);
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords, masses)
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() != dim * masses.len() {
            return Err(invalid("support and mass lengths disagree"));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(invalid("masses must be positive and finite"));
        }
        Ok(Self { dim, coords, masses })
    }

    /// Unit mass at every point.
    pub fn unit(points: &[Vec<f64>]) -> Result<Self> {
        Self::new(points, vec![1.0; points.len()])
    }

    pub fn from_point_set(ps: &PointSet) -> Self {
        Self {
            dim: ps.dim(),
            coords: ps.iter().flatten().copied().collect(),
            masses: vec![1.0; ps.len()],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        crate::numeric::pairwise_sum(&self.masses)
    }

    fn scaled_masses(&self, factor: f64) -> DiscreteMeasure {
        DiscreteMeasure {
            dim: self.dim,
            coords: self.coords.clone(),
            masses: self.masses.iter().map(|m| m * factor).collect(),
        }
    }
}

/// Sparse coupling between two discrete measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub entries: Vec<(usize, usize, f64)>,
    /// `Σ mass · dist^p`, i.e. `W_p^p` for an optimal plan.
    pub cost_p: f64,
    pub p: f64,
}

impl TransportPlan {
    pub fn wp(&self) -> f64 {
        self.cost_p.powf(1.0 / self.p)
    }

    /// Row and column sums of the plan.
    pub fn marginals(&self, rows: usize, cols: usize) -> (Vec<f64>, Vec<f64>) {
        let mut r = vec![0.0; rows];
        let mut c = vec![0.0; cols];
        for &(i, j, f) in &self.entries {
            r[i] += f;
            c[j] += f;
        }
        (r, c)
    }

    /// CSV with columns `i,j,mass,dist`.
    pub fn write_csv(
        &self,
        path: impl AsRef<Path>,
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        metric: GroundMetric,
    ) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "i,j,mass,dist")?;
        for &(i, j, f) in &self.entries {
            writeln!(out, "{i},{j},{f},{}", metric.distance(mu.point(i), nu.point(j)))?;
        }
        out.flush()?;
        Ok(())
    }
}

struct LazyCosts<'a> {
    mu: &'a DiscreteMeasure,
    nu: &'a DiscreteMeasure,
    metric: GroundMetric,
    p: f64,
}

impl simplex::CostSource for LazyCosts<'_> {
    fn rows(&self) -> usize {
        self.mu.len()
    }
    fn cols(&self) -> usize {
        self.nu.len()
    }
    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        self.metric.cost(self.mu.point(i), self.nu.point(j), self.p)
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(invalid(format!("exponent p must be >= 1, got {p}")));
    }
    Ok(())
}

/// Exact `W_p^p` between equal-mass discrete measures by network simplex.
///
/// Totals that agree to `1e-9` relative are reconciled by rescaling `nu`.
pub fn exact_wp(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
    metric: GroundMetric,
) -> Result<TransportPlan> {
    check_p(p)?;
    if mu.dim() != nu.dim() && !mu.is_empty() && !nu.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    let combined = mu.len() + nu.len();
    if combined > MAX_COMBINED_SUPPORT {
        return Err(Error::CeilingExceeded {
            what: "combined transport support",
            size: combined,
            limit: MAX_COMBINED_SUPPORT,
        });
    }
    let (mass_mu, mass_nu) = (mu.total_mass(), nu.total_mass());
    if (mass_mu - mass_nu).abs() > MASS_TOLERANCE * mass_mu.max(mass_nu).max(1.0) {
        return Err(Error::MassMismatch {
            left: mass_mu,
            right: mass_nu,
        });
    }
    if mu.is_empty() || nu.is_empty() {
        return Ok(TransportPlan {
            entries: Vec::new(),
            cost_p: 0.0,
            p,
        });
    }
    let demand: Vec<f64> = nu.masses.iter().map(|m| m * mass_mu / mass_nu).collect();
    let lazy = LazyCosts { mu, nu, metric, p };
    let entries = if mu.len() * nu.len() <= DENSE_COST_LIMIT {
        let mut values = Vec::with_capacity(mu.len() * nu.len());
        for i in 0..mu.len() {
            for j in 0..nu.len() {
                values.push(simplex::CostSource::cost(&lazy, i, j));
            }
        }
        let dense = simplex::DenseCosts {
            rows: mu.len(),
            cols: nu.len(),
            values,
        };
        simplex::solve(&mu.masses, &demand, &dense)?
    } else {
        simplex::solve(&mu.masses, &demand, &lazy)?
    };
    let cost_p = entries
        .iter()
        .map(|&(i, j, f)| f * metric.cost(mu.point(i), nu.point(j), p))
        .sum();
    Ok(TransportPlan { entries, cost_p, p })
}

/// Brute-force `W_p^p` between two sets of `n ≤ 8` unit-mass points.
pub fn oracle_wp(mu: &[Vec<f64>], nu: &[Vec<f64>], p: f64, metric: GroundMetric) -> Result<f64> {
    check_p(p)?;
    let n = mu.len();
    if nu.len() != n {
        return Err(Error::MassMismatch {
            left: n as f64,
            right: nu.len() as f64,
        });
    }
    if n > MAX_ORACLE_POINTS {
        return Err(Error::CeilingExceeded {
            what: "oracle permutation size",
            size: n,
            limit: MAX_ORACLE_POINTS,
        });
    }
    let cost: Vec<Vec<f64>> = mu
        .iter()
        .map(|x| nu.iter().map(|y| metric.cost(x, y, p)).collect())
        .collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let eval = |perm: &[usize]| perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>();
    let mut best = eval(&perm);
    // Heap's algorithm, iterative form.
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(eval(&perm));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}

/// One atom per level-`level` cell at its center, carrying the exact cell mass.
pub fn quantize_density(density: &MeanDensity, grid: &DyadicGrid, level: usize) -> Result<DiscreteMeasure> {
    let masses = density.cell_masses(grid, level)?;
    let d = grid.dim();
    let mut coords = Vec::with_capacity(masses.len() * d);
    for idx in 0..masses.len() {
        coords.extend(grid.cell_center(level, idx));
    }
    DiscreteMeasure::from_flat(d, coords, masses)
}

/// Push the support through `x ↦ λx` and multiply every mass by `mass_factor`.
pub fn rescale_pushforward(measure: &DiscreteMeasure, lambda: f64, mass_factor: f64) -> Result<DiscreteMeasure> {
    if !(lambda > 0.0 && mass_factor > 0.0) {
        return Err(invalid("scale and mass factor must be positive"));
    }
    let mut out = measure.scaled_masses(mass_factor);
    out.coords.iter_mut().for_each(|x| *x *= lambda);
    Ok(out)
}

/// Lower bound on `W_p` from `W_1` between measures of mass `n`.
pub fn holder_lift(w1: f64, n: f64, p: f64) -> Result<f64> {
    if !(w1 >= 0.0 && n >= 1.0 && p >= 1.0) {
        return Err(invalid("holder_lift needs w1 >= 0, n >= 1, p >= 1"));
    }
    Ok(w1 / n.powf(1.0 - 1.0 / p))
}
