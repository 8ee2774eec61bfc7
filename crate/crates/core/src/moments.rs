//! Number-variance and centered-moment envelopes over square windows,
//! hyperuniformity classification, and Bernstein-type moment bounds.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Cube;
use crate::numeric::{self, fit_line, t_quantile_975};
use crate::processes::{replicate_rng, MeanDensity, PointSet, ProcessSpec};

const WINDOW_STREAM_SALT: u64 = 0x5749_4e44_4f57_5321;
const DEFAULT_WINDOWS: usize = 64;

/// One point of a moment curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSample {
    pub area: f64,
    /// Estimated `E|μ(B) − E μ(B)|^p`.
    pub moment: f64,
    pub stderr: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCurve {
    pub p: f64,
    pub dim: usize,
    pub samples: Vec<MomentSample>,
}

impl MomentCurve {
    pub fn new(p: f64, dim: usize, samples: Vec<MomentSample>) -> Result<Self> {
        if !(p >= 1.0) {
            return Err(invalid(format!("moment order must be >= 1, got {p}")));
        }
        if samples.windows(2).any(|w| w[1].area <= w[0].area) {
            return Err(invalid("moment curve areas must be strictly increasing"));
        }
        Ok(Self { p, dim, samples })
    }

    /// Exponent of `|B|` in the boundary-order normalization, `(d−1)/d`.
    pub fn boundary_exponent(&self) -> f64 {
        (self.dim as f64 - 1.0) / self.dim as f64
    }

    /// `(E|·|^p)^{1/p} / |B|^{(d−1)/d}` per sample.
    pub fn normalized(&self) -> Vec<(f64, f64)> {
        let e = self.boundary_exponent();
        self.samples
            .iter()
            .map(|s| (s.area, s.moment.max(0.0).powf(1.0 / self.p) / s.area.powf(e)))
            .collect()
    }

    /// CSV with columns `area,moment,stderr,replicates`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "area,moment,stderr,replicates")?;
        for s in &self.samples {
            writeln!(out, "{},{},{},{}", s.area, s.moment, s.stderr, s.replicates)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Jittered anchors, one per stratum of the admissible region.
    #[default]
    Stratified,
    /// Anchors on integer offsets from the cube origin.
    Aligned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowOptions {
    pub windows_per_replicate: usize,
    pub placement: Placement,
}

impl Default for WindowOptions {
    fn default() -> Self {
        Self {
            windows_per_replicate: DEFAULT_WINDOWS,
            placement: Placement::Stratified,
        }
    }
}

/// Points sorted along the first axis for fast box counts.
struct SortedPoints {
    dim: usize,
    coords: Vec<f64>,
}

impl SortedPoints {
    fn new(ps: &PointSet) -> Self {
        let mut pts: Vec<&[f64]> = ps.iter().collect();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
        Self {
            dim: ps.dim(),
            coords: pts.into_iter().flatten().copied().collect(),
        }
    }

    fn count(&self, lo: &[f64], side: f64) -> usize {
        let d = self.dim;
        let n = self.coords.len() / d;
        let first = |x: f64| {
            let (mut a, mut b) = (0, n);
            while a < b {
                let mid = (a + b) / 2;
                if self.coords[mid * d] < x {
                    a = mid + 1;
                } else {
                    b = mid;
                }
            }
            a
        };
        let (start, end) = (first(lo[0]), first(lo[0] + side));
        (start..end)
            .filter(|&i| {
                let p = &self.coords[i * d..(i + 1) * d];
                (1..d).all(|a| p[a] >= lo[a] && p[a] < lo[a] + side)
            })
            .count()
    }
}

/// Lower corners of `count` windows of side `side` inside `[lo, lo+room]^d`.
fn place_windows<R: Rng>(
    rng: &mut R,
    dim: usize,
    lo: &[f64],
    room: f64,
    count: usize,
    placement: Placement,
) -> Vec<Vec<f64>> {
    match placement {
        Placement::Stratified => {
            let k = ((count as f64).powf(1.0 / dim as f64).ceil() as usize).max(1);
            let stratum = room / k as f64;
            (0..count)
                .map(|w| {
                    let mut cell = w % k.pow(dim as u32);
                    let mut corner = vec![0.0; dim];
                    for a in (0..dim).rev() {
                        let i = cell % k;
                        cell /= k;
                        corner[a] = lo[a] + (i as f64 + rng.gen::<f64>()) * stratum;
                    }
                    corner
                })
                .collect()
        }
        Placement::Aligned => {
            let slots = room.floor() as u64 + 1;
            (0..count)
                .map(|_| {
                    (0..dim)
                        .map(|a| lo[a] + rng.gen_range(0..slots) as f64)
                        .collect()
                })
                .collect()
        }
    }
}

/// Monte Carlo curve of `E|μ(B) − E μ(B)|^p` over square windows with the
/// default window options.
pub fn estimate_moment_curve(
    spec: &ProcessSpec,
    cube: &Cube,
    p: f64,
    areas: &[f64],
    replicates: usize,
) -> Result<MomentCurve> {
    estimate_moment_curve_with(spec, cube, p, areas, replicates, WindowOptions::default())
}

pub fn estimate_moment_curve_with(
    spec: &ProcessSpec,
    cube: &Cube,
    p: f64,
    areas: &[f64],
    replicates: usize,
    options: WindowOptions,
) -> Result<MomentCurve> {
    let density = spec.mean_density(cube)?;
    estimate_from_sampler(
        |r| spec.sample_replicate(cube, r),
        &density,
        spec.seed,
        spec.boundary_margin(cube),
        cube,
        p,
        areas,
        replicates,
        options,
    )
}

/// Moment curve from an arbitrary replicate sampler and a known mean density.
#[allow(clippy::too_many_arguments)]
pub fn estimate_from_sampler<F>(
    sampler: F,
    density: &MeanDensity,
    seed: u64,
    margin: f64,
    cube: &Cube,
    p: f64,
    areas: &[f64],
    replicates: usize,
    options: WindowOptions,
) -> Result<MomentCurve>
where
    F: Fn(u64) -> Result<PointSet> + Sync,
{
    if replicates < 2 {
        return Err(invalid("moment curves need at least 2 replicates"));
    }
    if options.windows_per_replicate == 0 {
        return Err(invalid("need at least one window per replicate"));
    }
    let d = cube.dim();
    let mut sides = Vec::with_capacity(areas.len());
    for &area in areas {
        if !(area >= 1.0) {
            return Err(invalid(format!("window areas must be >= 1, got {area}")));
        }
        let side = area.powf(1.0 / d as f64);
        if side > cube.side() - 2.0 * margin + 1e-12 {
            return Err(invalid(format!(
                "window area {area} does not fit inside the cube (side {}, boundary margin {margin})",
                cube.side()
            )));
        }
        sides.push(side);
    }
    let lo: Vec<f64> = cube.origin().iter().map(|o| o + margin).collect();

    let per_replicate: Vec<Result<Vec<f64>>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let ps = sampler(r)?;
            let sorted = SortedPoints::new(&ps);
            let mut rng = replicate_rng(seed ^ WINDOW_STREAM_SALT, r);
            let mut means = Vec::with_capacity(sides.len());
            for &side in &sides {
                let room = (cube.side() - 2.0 * margin - side).max(0.0);
                let corners = place_windows(&mut rng, d, &lo, room, options.windows_per_replicate, options.placement);
                let moments: Vec<f64> = corners
                    .iter()
                    .map(|c| {
                        let expected = density.box_mass(cube, c, side);
                        (sorted.count(c, side) as f64 - expected).abs().powf(p)
                    })
                    .collect();
                means.push(numeric::pairwise_sum(&moments) / moments.len() as f64);
            }
            Ok(means)
        })
        .collect();

    let mut table = Vec::with_capacity(replicates);
    for r in per_replicate {
        table.push(r?);
    }
    let samples = areas
        .iter()
        .enumerate()
        .map(|(k, &area)| {
            let column: Vec<f64> = table.iter().map(|row| row[k]).collect();
            let (moment, stderr) = numeric::mean_se(&column);
            MomentSample {
                area,
                moment,
                stderr,
                replicates,
            }
        })
        .collect();
    MomentCurve::new(p, d, samples)
}

/// Functional shape of the envelope `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeForm {
    Constant,
    Power,
    LogPower,
    Tabulated,
}

impl std::str::FromStr for EnvelopeForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(EnvelopeForm::Constant),
            "power" => Ok(EnvelopeForm::Power),
            "log_power" => Ok(EnvelopeForm::LogPower),
            "tabulated" => Ok(EnvelopeForm::Tabulated),
            other => Err(invalid(format!("unknown envelope form `{other}`"))),
        }
    }
}

/// A fitted envelope `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Envelope {
    Constant { gamma: f64 },
    /// `g(y) = γ y^{−ε/2}`.
    Power { gamma: f64, epsilon: f64 },
    /// `g(y) = γ / (1 + ln y)^r`.
    LogPower { gamma: f64, r: f64 },
    /// Non-increasing step function: `values[i]` on `[areas[i], areas[i+1])`.
    Tabulated { areas: Vec<f64>, values: Vec<f64> },
}

impl Envelope {
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            Envelope::Constant { gamma } => *gamma,
            Envelope::Power { gamma, epsilon } => gamma * y.powf(-epsilon / 2.0),
            Envelope::LogPower { gamma, r } => gamma / (1.0 + y.max(1.0).ln()).powf(*r),
            Envelope::Tabulated { areas, values } => {
                let k = areas.partition_point(|&a| a <= y);
                values[k.saturating_sub(1)]
            }
        }
    }

    /// `∫_1^{max(1, upper)} g(y) dy / y`.
    pub fn log_integral(&self, upper: f64) -> f64 {
        if upper <= 1.0 {
            return 0.0;
        }
        let l = upper.ln();
        match self {
            Envelope::Constant { gamma } => gamma * l,
            Envelope::Power { gamma, epsilon } => {
                2.0 * gamma / epsilon * (1.0 - upper.powf(-epsilon / 2.0))
            }
            Envelope::LogPower { gamma, r } => {
                if (r - 1.0).abs() < 1e-12 {
                    gamma * (1.0 + l).ln()
                } else {
                    gamma * ((1.0 + l).powf(1.0 - r) - 1.0) / (1.0 - r)
                }
            }
            Envelope::Tabulated { areas, values } => {
                let mut total = 0.0;
                let mut start = 1.0f64;
                for k in 0..values.len() {
                    let end = areas.get(k + 1).copied().unwrap_or(f64::INFINITY).min(upper);
                    if end > start {
                        total += values[k] * (end / start).ln();
                        start = end;
                    }
                }
                total
            }
        }
    }

    /// Whether `g` is non-increasing on `[lo, hi]`.
    pub fn is_monotone(&self) -> bool {
        match self {
            Envelope::Constant { gamma } => *gamma > 0.0,
            Envelope::Power { gamma, epsilon } => *gamma > 0.0 && *epsilon >= 0.0,
            Envelope::LogPower { gamma, r } => *gamma > 0.0 && *r >= 0.0,
            Envelope::Tabulated { values, .. } => values.windows(2).all(|w| w[1] <= w[0]),
        }
    }
}

/// Fitted envelope with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEnvelope {
    pub p: f64,
    pub dim: usize,
    pub envelope: Envelope,
    pub area_min: f64,
    pub area_max: f64,
    pub flags: Vec<String>,
}

impl MomentEnvelope {
    pub fn constant(p: f64, dim: usize, gamma: f64) -> Self {
        Self {
            p,
            dim,
            envelope: Envelope::Constant { gamma },
            area_min: 1.0,
            area_max: f64::INFINITY,
            flags: Vec::new(),
        }
    }

    pub fn g(&self, y: f64) -> f64 {
        self.envelope.eval(y)
    }

    /// The moment bound `|B|^{p(d−1)/d} g(|B|)^p`.
    pub fn moment_bound(&self, area: f64) -> f64 {
        let e = (self.dim as f64 - 1.0) / self.dim as f64;
        area.powf(self.p * e) * self.g(area).powf(self.p)
    }
}

const DEGENERATE_GAMMA: f64 = f64::EPSILON;

/// Least-squares fit of `g` in log coordinates, inflated to dominate every sample.
pub fn fit_envelope(curve: &MomentCurve, form: EnvelopeForm) -> Result<MomentEnvelope> {
    if curve.samples.len() < 4 {
        return Err(invalid("envelope fits need at least 4 curve points"));
    }
    let data = curve.normalized();
    let area_min = data[0].0;
    let area_max = data[data.len() - 1].0;
    let mut flags = Vec::new();
    let base = |envelope, flags| MomentEnvelope {
        p: curve.p,
        dim: curve.dim,
        envelope,
        area_min,
        area_max,
        flags,
    };

    let positive: Vec<(f64, f64)> = data.iter().copied().filter(|&(_, h)| h > 0.0).collect();
    if positive.is_empty() {
        flags.push("degenerate: every sampled moment is zero".to_string());
        return Ok(base(Envelope::Constant { gamma: DEGENERATE_GAMMA }, flags));
    }
    if positive.len() < data.len() {
        flags.push(format!(
            "{} zero-moment samples excluded from the regression",
            data.len() - positive.len()
        ));
    }

    let log_h: Vec<f64> = positive.iter().map(|(_, h)| h.ln()).collect();
    let ones = vec![1.0; positive.len()];
    let inflate = |envelope: Envelope| -> Envelope {
        let ratio = data
            .iter()
            .map(|&(y, h)| h / envelope.eval(y))
            .fold(0.0f64, f64::max);
        let factor = ratio.max(f64::MIN_POSITIVE);
        match envelope {
            Envelope::Constant { gamma } => Envelope::Constant { gamma: gamma * factor },
            Envelope::Power { gamma, epsilon } => Envelope::Power {
                gamma: gamma * factor,
                epsilon,
            },
            Envelope::LogPower { gamma, r } => Envelope::LogPower {
                gamma: gamma * factor,
                r,
            },
            t @ Envelope::Tabulated { .. } => t,
        }
    };
    let constant_fit = || {
        let mean = log_h.iter().sum::<f64>() / log_h.len() as f64;
        inflate(Envelope::Constant { gamma: mean.exp() })
    };

    let envelope = match form {
        EnvelopeForm::Constant => constant_fit(),
        EnvelopeForm::Power => {
            let x: Vec<f64> = positive.iter().map(|(y, _)| y.ln()).collect();
            match fit_line(&x, &log_h, &ones) {
                None => {
                    flags.push("power fit undetermined; using constant form".into());
                    constant_fit()
                }
                Some(fit) => {
                    let mut epsilon = -2.0 * fit.slope;
                    if epsilon <= 0.01 {
                        flags.push(format!(
                            "fitted decay exponent {epsilon:.4} is not positive; degraded to constant form"
                        ));
                        constant_fit()
                    } else {
                        if epsilon >= 1.0 {
                            flags.push(format!("fitted decay exponent {epsilon:.4} clamped to 0.99"));
                            epsilon = 0.99;
                        }
                        inflate(Envelope::Power {
                            gamma: fit.intercept.exp(),
                            epsilon,
                        })
                    }
                }
            }
        }
        EnvelopeForm::LogPower => {
            let x: Vec<f64> = positive.iter().map(|(y, _)| (1.0 + y.ln()).ln()).collect();
            match fit_line(&x, &log_h, &ones) {
                Some(fit) if -fit.slope > 0.0 => inflate(Envelope::LogPower {
                    gamma: fit.intercept.exp(),
                    r: -fit.slope,
                }),
                _ => {
                    flags.push("log-power exponent not positive; degraded to constant form".into());
                    constant_fit()
                }
            }
        }
        EnvelopeForm::Tabulated => {
            let mut values: Vec<f64> = data.iter().map(|&(_, h)| h).collect();
            for k in (0..values.len().saturating_sub(1)).rev() {
                values[k] = values[k].max(values[k + 1]);
            }
            if values[0] <= 0.0 {
                values.iter_mut().for_each(|v| *v = DEGENERATE_GAMMA);
            } else {
                let floor = values.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
                values.iter_mut().for_each(|v| *v = v.max(floor));
            }
            Envelope::Tabulated {
                areas: data.iter().map(|&(y, _)| y).collect(),
                values,
            }
        }
    };
    Ok(base(envelope, flags))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperuniformityClass {
    TypeI,
    TypeII,
    TypeIII,
    NotHyperuniform,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperuniformityReport {
    /// Slope of `ln Var` against `ln |B|`; absent when every variance is zero.
    pub slope: Option<f64>,
    pub slope_ci: Option<(f64, f64)>,
    pub class: HyperuniformityClass,
    /// AIC gain of the boundary-order-times-log model over the pure boundary-order model.
    pub log_factor_aic_gain: Option<f64>,
    pub type_i_threshold: f64,
    pub type_iii_threshold: f64,
    pub notes: Vec<String>,
}

const NOT_HYPERUNIFORM_SLOPE: f64 = 0.95;
const TYPE_I_MARGIN: f64 = 0.05;
const AIC_GAIN: f64 = 2.0;

/// Classify by the log-log variance slope; square windows only.
pub fn classify_hyperuniformity(curve: &MomentCurve) -> Result<HyperuniformityReport> {
    if (curve.p - 2.0).abs() > 1e-12 {
        return Err(invalid("classification needs a p = 2 (variance) curve"));
    }
    let n = curve.samples.len();
    if n < 3 {
        return Err(invalid("classification needs at least 3 window areas"));
    }
    let (first, last) = (curve.samples[0].area, curve.samples[n - 1].area);
    if last / first < 100.0 {
        return Err(invalid(format!(
            "window areas span {:.2} decades; at least 2 are required",
            (last / first).log10()
        )));
    }
    let boundary = curve.boundary_exponent();
    let t1 = boundary + TYPE_I_MARGIN;
    let t2 = NOT_HYPERUNIFORM_SLOPE;
    let mut notes = vec!["square windows; classes defined with disks may differ".to_string()];
    let report = |slope, ci, class, gain, notes| HyperuniformityReport {
        slope,
        slope_ci: ci,
        class,
        log_factor_aic_gain: gain,
        type_i_threshold: t1,
        type_iii_threshold: t2,
        notes,
    };

    let pts: Vec<(f64, f64)> = curve
        .samples
        .iter()
        .filter(|s| s.moment > 0.0)
        .map(|s| (s.area.ln(), s.moment.ln()))
        .collect();
    if pts.is_empty() {
        notes.push("variance is identically zero".into());
        return Ok(report(None, None, HyperuniformityClass::TypeI, None, notes));
    }
    if pts.len() < 3 {
        notes.push("too few windows with non-zero variance for a slope".into());
        return Ok(report(None, None, HyperuniformityClass::Inconclusive, None, notes));
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let fit = fit_line(&x, &y, &vec![1.0; x.len()]).ok_or_else(|| invalid("degenerate window areas"))?;
    let half = t_quantile_975(x.len() - 2) * fit.slope_se;
    let ci = (fit.slope - half, fit.slope + half);
    let straddles = |t: f64| ci.0 < t && t < ci.1;

    // One-parameter fits of ln Var = c + boundary·ln|B| (+ ln ln side).
    let with_side: Vec<(f64, f64)> = pts
        .iter()
        .copied()
        .filter(|(la, _)| la / curve.dim as f64 >= 2f64.ln())
        .collect();
    let gain = if with_side.len() >= 3 {
        let rss = |shift: &dyn Fn(f64) -> f64| {
            let resid: Vec<f64> = with_side.iter().map(|&(la, lv)| lv - boundary * la - shift(la)).collect();
            let c = resid.iter().sum::<f64>() / resid.len() as f64;
            resid.iter().map(|r| (r - c).powi(2)).sum::<f64>().max(1e-300)
        };
        let plain = rss(&|_| 0.0);
        let logged = rss(&|la: f64| (la / curve.dim as f64).ln());
        Some(with_side.len() as f64 * (plain / logged).ln())
    } else {
        None
    };

    let class = if fit.slope >= t2 {
        if straddles(t2) {
            HyperuniformityClass::Inconclusive
        } else {
            HyperuniformityClass::NotHyperuniform
        }
    } else if straddles(t2) {
        HyperuniformityClass::Inconclusive
    } else if gain.is_some_and(|g| g > AIC_GAIN) && fit.slope > boundary {
        notes.push("logarithmic correction to boundary-order variance detected (heuristic AIC test)".into());
        HyperuniformityClass::TypeII
    } else if straddles(t1) {
        HyperuniformityClass::Inconclusive
    } else if fit.slope <= t1 {
        HyperuniformityClass::TypeI
    } else {
        HyperuniformityClass::TypeIII
    };
    Ok(report(Some(fit.slope), Some(ci), class, gain, notes))
}

/// `Γ(p/2 + 1)` and `Γ(p + 1)(4/3)^p`, evaluated by quadrature.
fn bernstein_integrals(p: f64) -> (f64, f64) {
    let gaussian = numeric::integrate_to_infinity(|u| p * u.powf(p - 1.0) * (-u * u).exp(), 0.0, 1e-10);
    let exponential = numeric::integrate_to_infinity(|t| p * t.powf(p - 1.0) * (-0.75 * t).exp(), 0.0, 1e-10);
    (gaussian, exponential)
}

/// `γ_p = 2^{p+1} · max(∫ p u^{p−1} e^{−u²} du, ∫ p t^{p−1} e^{−3t/4} dt)`.
pub fn bernstein_constant(p: f64) -> f64 {
    let (a, b) = bernstein_integrals(p);
    2f64.powf(p + 1.0) * a.max(b)
}

/// `γ_p (variance^{p/2} + 1)`.
pub fn bernstein_moment_bound(variance: f64, p: f64) -> f64 {
    bernstein_constant(p) * (variance.max(0.0).powf(p / 2.0) + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    pub raw: f64,
    pub capped: f64,
}

/// `2 exp(−t² / (2 variance + t/3))`, and the same capped at 1.
pub fn bernstein_tail(variance: f64, t: f64) -> TailBound {
    let raw = 2.0 * (-t * t / (2.0 * variance + t / 3.0)).exp();
    TailBound {
        raw,
        capped: raw.min(1.0),
    }
}

/// `∫_0^∞ p t^{p−1} min(1, tail(t)) dt`, the moment bound implied by the tail.
pub fn bernstein_tail_moment(variance: f64, p: f64) -> f64 {
    numeric::integrate_to_infinity(
        |t| {
            if t <= 0.0 {
                0.0
            } else {
                p * t.powf(p - 1.0) * bernstein_tail(variance, t).capped
            }
        },
        0.0,
        1e-10,
    )
}

/// Empirical `E|X − EX|^p` for `X ~ Binomial(n, q)`, a sum of independent Bernoullis.
pub fn bernoulli_centered_moment(n: u64, q: f64, p: f64, replicates: usize, seed: u64) -> Result<f64> {
    let law = Binomial::new(n, q).map_err(|e| invalid(format!("bad Bernoulli parameters: {e}")))?;
    let mean = n as f64 * q;
    let chunk = 4096usize;
    let chunks = replicates.div_ceil(chunk);
    let partial: Vec<f64> = (0..chunks as u64)
        .into_par_iter()
        .map(|c| {
            let mut rng = replicate_rng(seed, c);
            let take = chunk.min(replicates - c as usize * chunk);
            let vals: Vec<f64> = (0..take)
                .map(|_| (law.sample(&mut rng) as f64 - mean).abs().powf(p))
                .collect();
            numeric::pairwise_sum(&vals)
        })
        .collect();
    Ok(numeric::pairwise_sum(&partial) / replicates as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::{Perturbation, ProcessFamily};

    fn synthetic(p: f64, dim: usize, f: impl Fn(f64) -> f64) -> MomentCurve {
        let samples = [1.0, 4.0, 16.0, 64.0, 256.0, 1024.0]
            .iter()
            .map(|&a| MomentSample {
                area: a,
                moment: f(a),
                stderr: 0.0,
                replicates: 10,
            })
            .collect();
        MomentCurve::new(p, dim, samples).unwrap()
    }

    #[test]
    fn constant_form_is_recovered() {
        let curve = synthetic(3.0, 2, |a| a.powf(1.5) * 0.5f64.powi(3));
        let env = fit_envelope(&curve, EnvelopeForm::Constant).unwrap();
        match env.envelope {
            Envelope::Constant { gamma } => assert!((gamma - 0.5).abs() < 1e-12),
            ref e => panic!("{e:?}"),
        }
    }

    #[test]
    fn power_form_is_recovered() {
        let curve = synthetic(2.0, 2, |a| a * (a.powf(-0.25)).powi(2));
        let env = fit_envelope(&curve, EnvelopeForm::Power).unwrap();
        match env.envelope {
            Envelope::Power { gamma, epsilon } => {
                assert!((epsilon - 0.5).abs() < 0.05);
                assert!((gamma - 1.0).abs() < 1e-9);
            }
            ref e => panic!("{e:?}"),
        }
    }

    #[test]
    fn power_form_degrades_for_flat_data() {
        let curve = synthetic(2.0, 2, |a| a);
        let env = fit_envelope(&curve, EnvelopeForm::Power).unwrap();
        assert!(matches!(env.envelope, Envelope::Constant { .. }));
        assert!(!env.flags.is_empty());
    }

    #[test]
    fn zero_curve_is_flagged() {
        let curve = synthetic(2.0, 2, |_| 0.0);
        let env = fit_envelope(&curve, EnvelopeForm::Power).unwrap();
        assert_eq!(env.envelope, Envelope::Constant { gamma: f64::EPSILON });
        assert!(env.flags[0].contains("degenerate"));
    }

    #[test]
    fn tabulated_is_a_monotone_envelope() {
        let curve = synthetic(2.0, 2, |a| a * (1.0 + (a.ln() * 3.0).sin().abs()));
        let env = fit_envelope(&curve, EnvelopeForm::Tabulated).unwrap();
        assert!(env.envelope.is_monotone());
        for s in &curve.samples {
            assert!(s.moment <= env.moment_bound(s.area) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn log_integral_closed_forms() {
        let c = Envelope::Constant { gamma: 2.0 };
        assert!((c.log_integral(100.0) - 2.0 * 100f64.ln()).abs() < 1e-12);
        assert_eq!(c.log_integral(0.5), 0.0);
        let pw = Envelope::Power { gamma: 1.0, epsilon: 0.5 };
        let quad = numeric::integrate(|y| pw.eval(y) / y, 1.0, 1000.0, 1e-12);
        assert!((pw.log_integral(1000.0) - quad).abs() < 1e-9);
        for r in [0.5, 1.0, 2.0] {
            let lp = Envelope::LogPower { gamma: 1.5, r };
            let quad = numeric::integrate(|y| lp.eval(y) / y, 1.0, 5000.0, 1e-12);
            assert!((lp.log_integral(5000.0) - quad).abs() < 1e-8, "r={r}");
        }
        let tab = Envelope::Tabulated {
            areas: vec![1.0, 10.0],
            values: vec![2.0, 1.0],
        };
        let expect = 2.0 * 10f64.ln() + 100f64.ln() - 10f64.ln();
        assert!((tab.log_integral(100.0) - expect).abs() < 1e-12);
    }

    #[test]
    fn tail_values() {
        let t = bernstein_tail(1.0, 1.0);
        assert!((t.raw - 2.0 * (-3.0f64 / 7.0).exp()).abs() < 1e-15);
        assert!((t.raw - 1.302_878).abs() < 1e-6);
        assert_eq!(t.capped, 1.0);
        let t = bernstein_tail(0.0, 3.0);
        assert!((t.raw - 2.0 * (-9.0f64).exp()).abs() < 1e-18);
        assert!((t.raw - 2.4682e-4).abs() < 1e-8);
        assert_eq!(bernstein_tail(5.0, 1e-9).capped, 1.0);
    }

    #[test]
    fn bernstein_bound_dominates_variance() {
        for v in [0.0, 0.3, 1.0, 10.0, 1000.0] {
            assert!(bernstein_moment_bound(v, 2.0) >= v);
        }
        assert_eq!(bernstein_moment_bound(0.0, 1.0), bernstein_constant(1.0));
    }

    #[test]
    fn poisson_variance_matches_area() {
        let cube = Cube::new(2, 32.0).unwrap();
        let spec = ProcessSpec::new(ProcessFamily::Poisson { intensity: 1.0 }, 17);
        let curve = estimate_moment_curve(&spec, &cube, 2.0, &[64.0], 40).unwrap();
        let s = curve.samples[0];
        assert!((s.moment - 64.0).abs() <= 5.0 * s.stderr, "{s:?}");
    }

    #[test]
    fn rigid_lattice_has_no_fluctuation() {
        let cube = Cube::new(2, 16.0).unwrap();
        let spec = ProcessSpec::new(
            ProcessFamily::PerturbedLattice {
                perturbation: Perturbation::UniformBox { radius: 0.0 },
            },
            1,
        );
        let opts = WindowOptions {
            windows_per_replicate: 16,
            placement: Placement::Aligned,
        };
        let curve = estimate_moment_curve_with(&spec, &cube, 2.0, &[1.0, 4.0, 16.0, 64.0], 3, opts).unwrap();
        assert!(curve.samples.iter().all(|s| s.moment == 0.0));
        let big = estimate_moment_curve_with(&spec, &cube, 2.0, &[1.0, 16.0, 144.0], 2, opts).unwrap();
        let report = classify_hyperuniformity(&big).unwrap();
        assert_eq!(report.class, HyperuniformityClass::TypeI);
    }

    #[test]
    fn curve_preconditions() {
        let cube = Cube::new(2, 8.0).unwrap();
        let spec = ProcessSpec::new(ProcessFamily::Poisson { intensity: 1.0 }, 1);
        assert!(estimate_moment_curve(&spec, &cube, 2.0, &[4.0], 1).is_err());
        assert!(estimate_moment_curve(&spec, &cube, 2.0, &[100.0], 4).is_err());
    }
}
