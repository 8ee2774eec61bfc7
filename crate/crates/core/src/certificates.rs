//! Deterministic lower bounds for the transport cost between points and an
//! absolutely continuous measure, and the empirical linear-rate sandwich.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{DyadicGrid, Metric};
use crate::moments::MomentEnvelope;
use crate::multiscale::theorem_bound;
use crate::numeric::{fit_line, mean_se};
use crate::processes::{MeanDensity, PointSet};

/// `Γ(d/2 + 1)` for integer `d`.
fn gamma_half_plus_one(d: usize) -> f64 {
    let mut g = if d % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() / 2.0 };
    let mut x = if d % 2 == 0 { 1.0 } else { 1.5 };
    while x < d as f64 / 2.0 + 1.0 - 1e-9 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Surface measure of the unit sphere in `R^d`.
pub fn unit_sphere_area(d: usize) -> f64 {
    d as f64 * std::f64::consts::PI.powf(d as f64 / 2.0) / gamma_half_plus_one(d)
}

/// `∫ (c − |x|)_+ dx` over `R^d`.
pub fn cone_volume(d: usize, c: f64) -> f64 {
    c.powi(d as i32 + 1) * unit_sphere_area(d) / (d * (d + 1)) as f64
}

/// Optimal cone radius `(d / (A |∂B_1|))^{1/d}`.
pub fn optimal_radius(d: usize, upper_density: f64) -> f64 {
    (d as f64 / (upper_density * unit_sphere_area(d))).powf(1.0 / d as f64)
}

/// Lower bound for the cost of spreading `n` unit atoms onto a measure whose
/// density never exceeds `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCert {
    pub d: usize,
    pub p: f64,
    pub n: f64,
    pub upper_density: f64,
    pub sphere_area: f64,
    pub optimal_radius: f64,
    /// Value of the cone dual at the optimal radius, per atom.
    pub dual_per_atom: f64,
    pub w1_bound: f64,
    pub wp_bound: f64,
}

impl LowerBoundCert {
    /// `W_p^p` form of the bound.
    pub fn wpp_bound(&self) -> f64 {
        self.wp_bound.powf(self.p)
    }
}

pub fn lower_bound(d: usize, p: f64, n: f64, upper_density: f64) -> Result<LowerBoundCert> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    if !(n >= 1.0) {
        return Err(invalid(format!("n must be >= 1, got {n}")));
    }
    if !(upper_density > 0.0) {
        return Err(invalid(format!("density upper bound must be positive, got {upper_density}")));
    }
    if !(p >= 1.0) {
        return Err(invalid(format!("exponent p must be >= 1, got {p}")));
    }
    let c = optimal_radius(d, upper_density);
    let per_atom = c * d as f64 / (d + 1) as f64;
    Ok(LowerBoundCert {
        d,
        p,
        n,
        upper_density,
        sphere_area: unit_sphere_area(d),
        optimal_radius: c,
        dual_per_atom: per_atom,
        w1_bound: n * per_atom,
        wp_bound: n.powf(1.0 / p) * per_atom,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualOptions {
    /// Absolute quadrature tolerance; `1e-6 · n · c` when absent.
    pub tolerance: Option<f64>,
    /// Integrate isolated interior cones in closed form.
    pub analytic_cones: bool,
    /// Rough cap on the number of boundary boxes visited.
    pub max_boxes: usize,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            tolerance: None,
            analytic_cones: true,
            max_boxes: 2_000_000,
        }
    }
}

/// Evaluation of the cone dual function `f = max_i (c − |x − x_i|)_+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualValue {
    pub c: f64,
    /// `max(0, c n − ∫_Q f dμ)`, a lower bound on `W_1`.
    pub value: f64,
    pub raw: f64,
    pub integral: f64,
    /// Bound on the quadrature error of `integral`.
    pub error_bound: f64,
    pub tolerance: f64,
    pub tolerance_met: bool,
    pub clamped: bool,
    /// `c n − A n ∫_{R^d} (c − |x|)_+ dx`, the untruncated estimate.
    pub whole_space_value: f64,
    pub analytic_cones: usize,
}

fn box_min_sq(lo: &[f64], side: f64, x: &[f64]) -> f64 {
    lo.iter()
        .zip(x)
        .map(|(l, xi)| {
            let t = (l - xi).max(xi - l - side).max(0.0);
            t * t
        })
        .sum()
}

fn box_max_sq(lo: &[f64], side: f64, x: &[f64]) -> f64 {
    lo.iter()
        .zip(x)
        .map(|(l, xi)| {
            let t = (xi - l).abs().max((l + side - xi).abs());
            t * t
        })
        .sum()
}

const GAUSS2: [(f64, f64); 2] = [(-0.577_350_269_189_625_8, 1.0), (0.577_350_269_189_625_8, 1.0)];
const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Tensor Gauss rule for `∫_box |x − y| dx`.
fn tensor_distance(lo: &[f64], side: f64, y: &[f64], rule: &[(f64, f64)]) -> f64 {
    let d = lo.len();
    let k = rule.len();
    let mut total = 0.0;
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    loop {
        let mut w = 1.0;
        for a in 0..d {
            let (node, weight) = rule[idx[a]];
            x[a] = lo[a] + 0.5 * side * (node + 1.0);
            w *= weight;
        }
        total += w * crate::geometry::euclidean(&x, y);
        let mut a = d;
        loop {
            if a == 0 {
                return total * (0.5 * side).powi(d as i32);
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < k {
                break;
            }
            idx[a] = 0;
        }
    }
}

struct Quadrature<'a> {
    points: &'a PointSet,
    density: &'a MeanDensity,
    grid: DyadicGrid,
    c: f64,
    resolution: usize,
    min_side: f64,
    smooth_tol_per_volume: f64,
    boxes: usize,
}

impl Quadrature<'_> {
    fn cone(&self, j: usize, x: &[f64]) -> f64 {
        (self.c - crate::geometry::euclidean(x, self.points.point(j))).max(0.0)
    }

    fn visit(&mut self, lo: Vec<f64>, side: f64, level: usize, cands: &[usize]) -> (f64, f64) {
        self.boxes += 1;
        let c2 = self.c * self.c;
        let near: Vec<usize> = cands
            .iter()
            .copied()
            .filter(|&j| box_min_sq(&lo, side, self.points.point(j)) < c2)
            .collect();
        if near.is_empty() {
            return (0.0, 0.0);
        }
        let d = lo.len();
        let vol = side.powi(d as i32);
        let half_diag = 0.5 * side * (d as f64).sqrt();
        let center: Vec<f64> = lo.iter().map(|l| l + 0.5 * side).collect();
        let can_split = side > self.min_side;

        if level >= self.resolution {
            let rho = self.density.value_at(&self.grid, &center).unwrap_or(0.0);
            // A single cone dominates the whole box and stays positive on it.
            let owner = near.iter().copied().find(|&i| {
                let far = box_max_sq(&lo, side, self.points.point(i));
                far < c2
                    && box_min_sq(&lo, side, self.points.point(i)) >= 4.0 * half_diag * half_diag
                    && near
                        .iter()
                        .all(|&j| {
                            let other = self.points.point(j);
                            other == self.points.point(i) || box_min_sq(&lo, side, other) > far
                        })
            });
            if let Some(i) = owner {
                let y = self.points.point(i);
                let g3 = tensor_distance(&lo, side, y, &GAUSS3);
                let g2 = tensor_distance(&lo, side, y, &GAUSS2);
                let err = rho * (g3 - g2).abs();
                if err <= self.smooth_tol_per_volume * vol || !can_split {
                    return (rho * (self.c * vol - g3), err);
                }
            } else if !can_split {
                let f = near.iter().map(|&j| self.cone(j, &center)).fold(0.0, f64::max);
                return (rho * f * vol, rho * half_diag * vol);
            }
        }

        let child = 0.5 * side;
        let mut value = 0.0;
        let mut err = 0.0;
        for mask in 0..(1usize << d) {
            let clo: Vec<f64> = (0..d)
                .map(|a| lo[a] + if mask >> (d - 1 - a) & 1 == 1 { child } else { 0.0 })
                .collect();
            let (v, e) = self.visit(clo, child, level + 1, &near);
            value += v;
            err += e;
        }
        (value, err)
    }
}

/// `c n − ∫_Q f dμ` with `f = max_i (c − |x − x_i|)_+` and `μ` the mean measure
/// restricted to the cube; any value is a lower bound on `W_1(μ_n, μ)`.
pub fn dual_value(points: &PointSet, density: &MeanDensity, c: f64) -> Result<DualValue> {
    dual_value_with(points, density, c, DualOptions::default())
}

pub fn dual_value_with(points: &PointSet, density: &MeanDensity, c: f64, options: DualOptions) -> Result<DualValue> {
    if !(c > 0.0) {
        return Err(invalid(format!("cone radius must be positive, got {c}")));
    }
    let cube = points.cube();
    if cube.metric() != Metric::Euclidean {
        return Err(invalid("the cone dual is evaluated on the Euclidean cube only"));
    }
    let d = cube.dim();
    let n = points.len();
    let tolerance = options.tolerance.unwrap_or(1e-6 * n.max(1) as f64 * c);
    let whole_space_value = c * n as f64 - density.max_value() * n as f64 * cone_volume(d, c);
    if n == 0 {
        return Ok(DualValue {
            c,
            value: 0.0,
            raw: 0.0,
            integral: 0.0,
            error_bound: 0.0,
            tolerance,
            tolerance_met: true,
            clamped: false,
            whole_space_value,
            analytic_cones: 0,
        });
    }
    let grid = DyadicGrid::new(cube.clone())?;
    let resolution = density.resolution_level();
    let dcell = grid.cell_side(resolution);

    let mut analytic = vec![false; n];
    if options.analytic_cones {
        for (i, flag) in analytic.iter_mut().enumerate() {
            let x = points.point(i);
            let inside = x.iter().zip(cube.origin()).all(|(xi, o)| {
                let rel = xi - o;
                let cell_lo = (rel / dcell).floor() * dcell;
                rel - c >= cell_lo && rel + c <= cell_lo + dcell
            });
            let isolated = (0..n).all(|j| j == i || crate::geometry::euclidean(x, points.point(j)) >= 2.0 * c);
            *flag = inside && isolated;
        }
    }
    let mut integral = 0.0;
    let mut analytic_count = 0;
    for i in (0..n).filter(|&i| analytic[i]) {
        let rho = density.value_at(&grid, points.point(i))?;
        integral += rho * cone_volume(d, c);
        analytic_count += 1;
    }

    let rest: Vec<usize> = (0..n).filter(|&i| !analytic[i]).collect();
    let mut error_bound = 0.0;
    if !rest.is_empty() {
        let rho_max = density.max_value();
        let surface = (rest.len() as f64) * unit_sphere_area(d) * c.powi(d as i32 - 1).max(1e-300);
        let target = (tolerance / (surface * rho_max * (d as f64).sqrt())).sqrt();
        let budget = if d == 1 {
            0.0
        } else {
            (2.0 * surface / options.max_boxes as f64).powf(1.0 / (d as f64 - 1.0))
        };
        let mut quad = Quadrature {
            points,
            density,
            grid,
            c,
            resolution,
            min_side: target.max(budget),
            smooth_tol_per_volume: 0.5 * tolerance / cube.volume(),
            boxes: 0,
        };
        let (v, e) = quad.visit(cube.origin().to_vec(), cube.side(), 0, &rest);
        integral += v;
        error_bound = e;
    }
    let raw = c * n as f64 - integral;
    Ok(DualValue {
        c,
        value: raw.max(0.0),
        raw,
        integral,
        error_bound,
        tolerance,
        tolerance_met: error_bound <= tolerance,
        clamped: raw < 0.0,
        whole_space_value,
        analytic_cones: analytic_count,
    })
}

/// Replicated cost estimates at one system size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichRun {
    pub n: f64,
    /// Per-replicate `W_p^p` estimates.
    pub costs: Vec<f64>,
    /// Per-replicate constructive upper bounds.
    pub constructive: Vec<f64>,
    /// Per-replicate total point counts `X(C_N)`.
    pub masses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichRow {
    pub n: f64,
    pub replicates: usize,
    pub mean_cost_ratio: f64,
    pub stderr_ratio: f64,
    pub constructive_ratio: f64,
    pub theorem_ratio: f64,
    /// Best `c_δ P̂(A_δ)` over the δ grid.
    pub lower_ratio: f64,
    pub best_delta: f64,
    pub within_window: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub p: f64,
    pub d: usize,
    pub a: f64,
    pub upper_density: f64,
    pub rows: Vec<SandwichRow>,
    /// `c_δ` at `δ = 2(A+1)`; negative, hence uninformative.
    pub literal_delta: f64,
    pub literal_lower_ratio: f64,
    /// Mean cost / N increases across every N and its slope against ln N is
    /// significantly positive.
    pub log_growth: bool,
    pub log_growth_slope: Option<f64>,
}

/// `c_δ = α_d^p (1−δ) (1+δ)^{−p/d} (a/A)^{p/d}`.
pub fn sandwich_constant(d: usize, p: f64, a: f64, upper_density: f64, delta: f64) -> f64 {
    let alpha = optimal_radius(d, 1.0) * d as f64 / (d + 1) as f64;
    let e = p / d as f64;
    alpha.powf(p) * (1.0 - delta) * (1.0 + delta).powf(-e) * (a / upper_density).powf(e)
}

pub fn corollary_sandwich(
    runs: &[SandwichRun],
    d: usize,
    p: f64,
    a: f64,
    upper_density: f64,
    envelope: &MomentEnvelope,
    theta_p: f64,
) -> Result<SandwichReport> {
    if runs.is_empty() {
        return Err(invalid("the sandwich needs at least one system size"));
    }
    let mut rows = Vec::with_capacity(runs.len());
    for run in runs {
        let reps = run.costs.len();
        if reps < 10 {
            return Err(invalid(format!(
                "the sandwich needs at least 10 replicates per size, N = {} has {reps}",
                run.n
            )));
        }
        if run.masses.len() != reps || run.constructive.len() != reps {
            return Err(invalid("costs, constructive bounds and masses must have one entry per replicate"));
        }
        let (mean, se) = mean_se(&run.costs);
        let (upper_mean, _) = mean_se(&run.constructive);
        let theorem = theorem_bound(run.n, p, a, upper_density, envelope, theta_p)?;
        let (lower_ratio, best_delta) = (1..100)
            .map(|k| {
                let delta = k as f64 / 100.0;
                let hits = run.masses.iter().filter(|m| (*m / run.n - 1.0).abs() <= delta).count();
                let prob = hits as f64 / reps as f64;
                (sandwich_constant(d, p, a, upper_density, delta) * prob, delta)
            })
            .fold((0.0, 0.0), |best, cur| if cur.0 > best.0 { cur } else { best });
        let ratio = mean / run.n;
        let constructive_ratio = upper_mean / run.n;
        let note = (run.n < 4.0).then(|| {
            "N below 4: no interpolation level fits; only the crude bound of order A N^{1+p/2} applies".to_string()
        });
        rows.push(SandwichRow {
            n: run.n,
            replicates: reps,
            mean_cost_ratio: ratio,
            stderr_ratio: se / run.n,
            constructive_ratio,
            theorem_ratio: theorem.bound / run.n,
            lower_ratio,
            best_delta,
            within_window: lower_ratio <= ratio && ratio <= constructive_ratio,
            note,
        });
    }
    rows.sort_by(|x, y| x.n.total_cmp(&y.n));

    let increasing = rows.len() >= 3 && rows.windows(2).all(|w| w[1].mean_cost_ratio > w[0].mean_cost_ratio);
    let x: Vec<f64> = rows.iter().map(|r| r.n.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.mean_cost_ratio).collect();
    let w: Vec<f64> = rows.iter().map(|r| 1.0 / r.stderr_ratio.max(1e-12).powi(2)).collect();
    let fit = if rows.len() >= 3 { fit_line(&x, &y, &w) } else { None };
    let log_growth = increasing
        && fit.as_ref().is_some_and(|f| {
            f.slope - crate::numeric::t_quantile_975(f.n.saturating_sub(2).max(1)) * f.slope_se > 0.0
        });
    let literal_delta = 2.0 * (upper_density + 1.0);
    Ok(SandwichReport {
        p,
        d,
        a,
        upper_density,
        rows,
        literal_delta,
        literal_lower_ratio: sandwich_constant(d, p, a, upper_density, literal_delta) / 2.0,
        log_growth,
        log_growth_slope: fit.map(|f| f.slope),
    })
}
