//! Dyadic interpolation between a point configuration and its mean measure,
//! with a pathwise transport certificate and the analytic envelope bound.

mod knothe;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::DyadicGrid;
use crate::moments::MomentEnvelope;
use crate::numeric::pairwise_sum;
use crate::processes::{MeanDensity, PointSet};
use crate::transport::{exact_wp, DiscreteMeasure, GroundMetric};

pub use knothe::knothe_rosenblatt_cost;

/// Default good-event threshold: `G_B = {μ_N(B) ≥ τ E μ_N(B)}`.
pub const DEFAULT_GOOD_EVENT_THRESHOLD: f64 = 0.5;
/// Default number of extra dyadic levels used to quantize each square.
pub const DEFAULT_QUANTIZATION_OFFSET: usize = 2;
const MAX_KNOTHE_CELLS: usize = 1 << 20;
const MAX_QUANTIZED_ATOMS: usize = 4096;

/// Measures `ν_0 .. ν_K` matching the point masses on ever finer squares.
#[derive(Debug, Clone)]
pub struct InterpolationLadder {
    grid: DyadicGrid,
    density: MeanDensity,
    points: PointSet,
    counts: Vec<Vec<f64>>,
    means: Vec<Vec<f64>>,
    expected_mass: f64,
}

/// Bin the points on every level and integrate the mean density per cell.
pub fn build_ladder(ps: &PointSet, density: &MeanDensity) -> Result<InterpolationLadder> {
    if ps.is_empty() {
        return Err(invalid("the interpolation ladder needs a non-empty point set"));
    }
    let grid = DyadicGrid::new(ps.cube().clone())?;
    let depth = grid.depth();
    let mut counts = vec![Vec::new(); depth + 1];
    counts[depth] = ps.cell_counts(&grid, depth)?;
    for k in (0..depth).rev() {
        let mut coarse = vec![0.0; grid.cells(k)?.len()];
        for (idx, c) in counts[k + 1].iter().enumerate() {
            coarse[grid.parent(k + 1, idx)] += c;
        }
        counts[k] = coarse;
    }
    let means = (0..=depth)
        .map(|k| density.cell_masses(&grid, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(InterpolationLadder {
        expected_mass: density.total_mass(ps.cube()),
        grid,
        density: density.clone(),
        points: ps.clone(),
        counts,
        means,
    })
}

impl InterpolationLadder {
    pub fn grid(&self) -> &DyadicGrid {
        &self.grid
    }

    pub fn density(&self) -> &MeanDensity {
        &self.density
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn depth(&self) -> usize {
        self.grid.depth()
    }

    /// `M_N`.
    pub fn total_mass(&self) -> f64 {
        self.points.mass()
    }

    /// `E[M_N]`.
    pub fn expected_mass(&self) -> f64 {
        self.expected_mass
    }

    /// `μ_N(B)` for the cells of level `k`; equal to `ν_k(B)`.
    pub fn counts(&self, k: usize) -> &[f64] {
        &self.counts[k]
    }

    /// `E μ_N(B)` for the cells of level `k`.
    pub fn means(&self, k: usize) -> &[f64] {
        &self.means[k]
    }

    /// Masses of `ν_k` on the level-`fine` cells inside cell `idx` of level
    /// `coarse`, in local row-major order. Needs `coarse, k ≤ fine`.
    pub fn nu_masses_in(&self, k: usize, coarse: usize, idx: usize, fine: usize) -> Vec<f64> {
        let shift = fine - k;
        self.grid
            .descendants(coarse, idx, fine)
            .into_iter()
            .map(|c| {
                let multi: Vec<usize> = self.grid.multi_index(fine, c).iter().map(|i| i >> shift).collect();
                let owner = self.grid.flat_index(k, &multi);
                let ratio = self.counts[k][owner] / self.means[k][owner];
                ratio * self.density.cell_mass(&self.grid, fine, c)
            })
            .collect()
    }

    /// Masses of `ν_k` on every level-`fine` cell.
    pub fn nu_masses(&self, k: usize, fine: usize) -> Vec<f64> {
        self.nu_masses_in(k, 0, 0, fine)
    }
}

/// Per-level constructive costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCost {
    pub level: usize,
    pub cells: usize,
    /// Certified `W_p^p(ν_k, ν_{k+1})` upper bound, summed over squares.
    pub constructive_cost: f64,
    /// Sum of the quantized-transport certificates alone.
    pub quantized_cost: f64,
    /// Sum of the Knothe-Rosenblatt certificates alone.
    pub knothe_cost: f64,
    /// Quantization error added to the quantized certificates.
    pub quantization_slack: f64,
    pub squares_using_knothe: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructiveBound {
    pub p: f64,
    pub quantization_offset: usize,
    pub levels: Vec<LevelCost>,
    /// `Σ_{B ∈ B_K} diam(B)^p μ_N(B)`.
    pub last_mile: f64,
    /// `(Σ_k C_k^{1/p} + last_mile^{1/p})^p ≥ W_p^p(μ_N, μ̄_N)`.
    pub total: f64,
}

#[derive(Debug, Clone, Copy)]
struct SquareCost {
    bound: f64,
    quantized: f64,
    knothe: f64,
    slack: f64,
    used_knothe: bool,
}

fn square_cost(ladder: &InterpolationLadder, k: usize, idx: usize, p: f64, q: usize) -> Result<SquareCost> {
    let grid = &ladder.grid;
    let d = grid.dim();
    let mass = ladder.counts[k][idx];
    if mass == 0.0 {
        return Ok(SquareCost {
            bound: 0.0,
            quantized: 0.0,
            knothe: 0.0,
            slack: 0.0,
            used_knothe: false,
        });
    }

    // Quantized exact transport, lifted back by translating cell to cell.
    let qlevel = k + q;
    let atoms = 1usize << (d * q);
    let (quantized, slack) = if atoms <= MAX_QUANTIZED_ATOMS {
        let src = ladder.nu_masses_in(k, k, idx, qlevel);
        let dst = ladder.nu_masses_in(k + 1, k, idx, qlevel);
        let cells = grid.descendants(k, idx, qlevel);
        let measure = |masses: &[f64]| -> Result<DiscreteMeasure> {
            let mut coords = Vec::new();
            let mut kept = Vec::new();
            for (c, &m) in cells.iter().zip(masses) {
                if m > 0.0 {
                    coords.extend(grid.cell_center(qlevel, *c));
                    kept.push(m);
                }
            }
            DiscreteMeasure::from_flat(d, coords, kept)
        };
        let plan = exact_wp(&measure(&src)?, &measure(&dst)?, p, GroundMetric::Euclidean)?;
        if qlevel >= ladder.density.resolution_level() {
            (plan.cost_p, 0.0)
        } else {
            let e = 0.5 * grid.cell_diameter(qlevel) * mass.powf(1.0 / p);
            let bound = (plan.cost_p.powf(1.0 / p) + 2.0 * e).powf(p);
            (bound, bound - plan.cost_p)
        }
    } else {
        (f64::INFINITY, 0.0)
    };

    // Knothe-Rosenblatt map between the two piecewise-constant densities.
    let fine = (k + 1).max(ladder.density.resolution_level());
    let per_axis = 1usize << (fine - k);
    let knothe = if per_axis.checked_pow(d as u32).is_some_and(|n| n <= MAX_KNOTHE_CELLS) {
        let f: Vec<f64> = ladder.nu_masses_in(k, k, idx, fine).iter().map(|m| m / mass).collect();
        let h: Vec<f64> = ladder.nu_masses_in(k + 1, k, idx, fine).iter().map(|m| m / mass).collect();
        mass * knothe_rosenblatt_cost(&f, &h, d, per_axis, grid.cell_side(fine), p)
    } else {
        f64::INFINITY
    };

    if !quantized.is_finite() && !knothe.is_finite() {
        return Err(Error::CeilingExceeded {
            what: "per-square quantization atoms",
            size: atoms,
            limit: MAX_QUANTIZED_ATOMS,
        });
    }
    let used_knothe = knothe < quantized;
    Ok(SquareCost {
        bound: quantized.min(knothe),
        quantized,
        knothe,
        slack,
        used_knothe,
    })
}

/// Pathwise certificate for `W_p^p(μ_N, μ̄_N)` along the ladder.
///
/// Each square of each level gets the smaller of two valid couplings: exact
/// transport between the `q`-levels-finer quantizations (translated cell to
/// cell) and the Knothe-Rosenblatt map between the two densities.
pub fn constructive_upper_bound(ladder: &InterpolationLadder, p: f64, q: usize) -> Result<ConstructiveBound> {
    if !(p >= 1.0) {
        return Err(invalid(format!("exponent p must be >= 1, got {p}")));
    }
    if q == 0 {
        return Err(invalid("quantization offset must be at least 1"));
    }
    let depth = ladder.depth();
    let mut levels = Vec::with_capacity(depth);
    for k in 0..depth {
        let cells = ladder.counts[k].len();
        let squares: Vec<SquareCost> = (0..cells)
            .into_par_iter()
            .map(|idx| square_cost(ladder, k, idx, p, q))
            .collect::<Result<_>>()?;
        let sum = |f: fn(&SquareCost) -> f64| {
            let v: Vec<f64> = squares.iter().map(f).filter(|x| x.is_finite()).collect();
            pairwise_sum(&v)
        };
        levels.push(LevelCost {
            level: k,
            cells,
            constructive_cost: sum(|s| s.bound),
            quantized_cost: sum(|s| s.quantized),
            knothe_cost: sum(|s| s.knothe),
            quantization_slack: sum(|s| if s.used_knothe { 0.0 } else { s.slack }),
            squares_using_knothe: squares.iter().filter(|s| s.used_knothe).count(),
        });
    }
    let last_mile = ladder.grid.cell_diameter(depth).powf(p) * ladder.total_mass();
    let root_sum: f64 = levels
        .iter()
        .map(|l| l.constructive_cost.powf(1.0 / p))
        .sum::<f64>()
        + last_mile.powf(1.0 / p);
    Ok(ConstructiveBound {
        p,
        quantization_offset: q,
        levels,
        last_mile,
        total: root_sum.powf(p),
    })
}

/// Constants of the analytic per-level estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticConstants {
    pub theta_p: f64,
    pub threshold: f64,
    pub alpha_1: f64,
    pub alpha_2: f64,
}

impl AnalyticConstants {
    pub fn new(p: f64, a: f64, theta_p: f64, threshold: f64) -> Result<Self> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(invalid(format!("lower density bound must lie in (0, 1], got {a}")));
        }
        if !(theta_p >= 0.0) {
            return Err(invalid(format!("theta_p must be >= 0, got {theta_p}")));
        }
        check_threshold(threshold)?;
        let alpha_1 = theta_p
            * (threshold * a).powf(1.0 - p)
            * 2f64.powf(p - 1.0)
            * a.powf(-p)
            * (1.0 + 2f64.powf(p));
        let alpha_2 = threshold * (1.0 - threshold).powf(-p) * a.powf(-p);
        Ok(Self {
            theta_p,
            threshold,
            alpha_1,
            alpha_2,
        })
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(0.1..=0.9).contains(&threshold) {
        return Err(invalid(format!("good-event threshold must lie in [0.1, 0.9], got {threshold}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticBound {
    pub p: f64,
    pub a: f64,
    pub upper_density: f64,
    pub constants: AnalyticConstants,
    /// `A_k` for `k = 0 .. K-1`.
    pub level_costs: Vec<f64>,
    /// `diam(B_K)^p E[M_N]`.
    pub last_mile: f64,
    /// `(Σ_k A_k^{1/p} + last_mile^{1/p})^p`.
    pub aggregate: f64,
}

/// Envelope-driven estimate of `E[W_p^p(ν_k, ν_{k+1})]` per level.
pub fn analytic_scale_costs(
    ladder: &InterpolationLadder,
    envelope: &MomentEnvelope,
    p: f64,
    a: f64,
    upper_density: f64,
    theta_p: f64,
    threshold: f64,
) -> Result<AnalyticBound> {
    if !envelope.envelope.is_monotone() {
        return Err(invalid("analytic costs need a monotone envelope"));
    }
    if !(upper_density >= 1.0) {
        return Err(invalid(format!("upper density bound must be >= 1, got {upper_density}")));
    }
    let constants = AnalyticConstants::new(p, a, theta_p, threshold)?;
    let grid = &ladder.grid;
    let d = grid.dim() as f64;
    let cube = grid.cube();
    let mass_term = constants.alpha_1 * ladder.density.integral_of_power(cube, p)
        + constants.alpha_2 * ladder.expected_mass;
    let level_costs: Vec<f64> = (0..ladder.depth())
        .map(|k| {
            let g = envelope.g(grid.cell_volume(k + 1)).max(envelope.g(grid.cell_volume(k)));
            d.powf(p / 2.0) * g.powf(p) * mass_term
        })
        .collect();
    let last_mile = grid.cell_diameter(ladder.depth()).powf(p) * ladder.expected_mass;
    let aggregate = (level_costs.iter().map(|c| c.powf(1.0 / p)).sum::<f64>() + last_mile.powf(1.0 / p)).powf(p);
    Ok(AnalyticBound {
        p,
        a,
        upper_density,
        constants,
        level_costs,
        last_mile,
        aggregate,
    })
}

/// The closed-form bound `C_p a^{1−2p} A^p N (1 + I)^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremEnvelope {
    pub p: f64,
    pub a: f64,
    pub upper_density: f64,
    pub n: f64,
    pub theta_p: f64,
    /// `∫_1^{max(1,N)} g(y) dy / y`.
    pub integral: f64,
    pub c_p: f64,
    pub bound: f64,
}

pub fn theorem_bound(
    n: f64,
    p: f64,
    a: f64,
    upper_density: f64,
    envelope: &MomentEnvelope,
    theta_p: f64,
) -> Result<TheoremEnvelope> {
    if !(n > 0.0) {
        return Err(invalid(format!("N must be positive, got {n}")));
    }
    if !(a > 0.0 && a <= 1.0 && upper_density >= 1.0 && p >= 1.0 && theta_p >= 0.0) {
        return Err(invalid("theorem bound needs 0 < a <= 1 <= A, p >= 1, theta_p >= 0"));
    }
    let integral = envelope.envelope.log_integral(n.max(1.0));
    let c_p = 2f64.powf(5.0 * p) * (1.0 + theta_p);
    let bound = c_p * a.powf(1.0 - 2.0 * p) * upper_density.powf(p) * n * (1.0 + integral).powf(p);
    Ok(TheoremEnvelope {
        p,
        a,
        upper_density,
        n,
        theta_p,
        integral,
        c_p,
        bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodEventLevel {
    pub level: usize,
    pub cells: usize,
    pub area: f64,
    pub failures: usize,
    pub frequency: f64,
    /// `(1−τ)^{−p} a^{−p} |B|^{−p/d} g(|B|)^p`, when an envelope is supplied.
    pub markov_prediction: Option<f64>,
}

/// Count squares holding less than `τ` times their expected mass.
pub fn good_event_diagnostics(
    ladder: &InterpolationLadder,
    threshold: f64,
    envelope: Option<&MomentEnvelope>,
) -> Result<Vec<GoodEventLevel>> {
    check_threshold(threshold)?;
    let grid = &ladder.grid;
    let d = grid.dim() as f64;
    let a = ladder.density.lower_bound();
    Ok((0..=ladder.depth())
        .map(|k| {
            let failures = ladder.counts[k]
                .iter()
                .zip(&ladder.means[k])
                .filter(|(c, m)| **c < threshold * **m)
                .count();
            let cells = ladder.counts[k].len();
            let area = grid.cell_volume(k);
            let markov_prediction = envelope.map(|env| {
                let p = env.p;
                (1.0 - threshold).powf(-p) * a.powf(-p) * area.powf(-p / d) * env.g(area).powf(p)
            });
            GoodEventLevel {
                level: k,
                cells,
                area,
                failures,
                frequency: failures as f64 / cells as f64,
                markov_prediction,
            }
        })
        .collect())
}

/// Per-level record of the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleLevelRecord {
    pub level: usize,
    pub cells: usize,
    pub constructive_cost: f64,
    pub analytic_cost: Option<f64>,
    pub good_event_failures: usize,
    pub quantization_slack: f64,
    /// Envelope fit failure when the analytic cost falls below the constructive one.
    pub analytic_dominates: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleCostReport {
    pub p: f64,
    pub n: f64,
    pub total_mass: f64,
    pub levels: Vec<ScaleLevelRecord>,
    pub last_mile: f64,
    pub constructive_total: f64,
    pub analytic_last_mile: Option<f64>,
    pub analytic_total: Option<f64>,
    pub theorem: Option<TheoremEnvelope>,
}

impl ScaleCostReport {
    pub fn assemble(
        ladder: &InterpolationLadder,
        constructive: &ConstructiveBound,
        analytic: Option<&AnalyticBound>,
        good_events: &[GoodEventLevel],
        theorem: Option<TheoremEnvelope>,
    ) -> Self {
        let levels = constructive
            .levels
            .iter()
            .map(|l| {
                let analytic_cost = analytic.map(|a| a.level_costs[l.level]);
                ScaleLevelRecord {
                    level: l.level,
                    cells: l.cells,
                    constructive_cost: l.constructive_cost,
                    analytic_cost,
                    good_event_failures: good_events.get(l.level).map_or(0, |g| g.failures),
                    quantization_slack: l.quantization_slack,
                    analytic_dominates: analytic_cost.map(|a| a >= l.constructive_cost),
                }
            })
            .collect();
        Self {
            p: constructive.p,
            n: ladder.grid.cube().volume(),
            total_mass: ladder.total_mass(),
            levels,
            last_mile: constructive.last_mile,
            constructive_total: constructive.total,
            analytic_last_mile: analytic.map(|a| a.last_mile),
            analytic_total: analytic.map(|a| a.aggregate),
            theorem,
        }
    }
}
