//! Replicated scaling studies.

use std::path::Path;

use hyperwass_core::certificates::{corollary_sandwich, SandwichReport, SandwichRun};
use hyperwass_core::moments::{
    classify_hyperuniformity, estimate_moment_curve_with, fit_envelope, EnvelopeForm, HyperuniformityReport,
    MomentCurve, MomentEnvelope, WindowOptions,
};
use hyperwass_core::multiscale::{
    analytic_scale_costs, build_ladder, constructive_upper_bound, good_event_diagnostics, theorem_bound,
};
use hyperwass_core::numeric::mean_se;
use hyperwass_core::transport::{semidiscrete_wp, semidiscrete_wp_1d, MAX_COMBINED_SUPPORT};
use hyperwass_core::{Cube, Error, Metric, ProcessSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::fit::{fit_log_correction, fit_slope, LogCorrection, ScalingPoint, SlopeFit};
use crate::CliError;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: f64,
    pub replicates: usize,
    pub skipped: usize,
    /// Mean midpoint of the certified `W_p^p` bracket.
    pub mean_cost: Option<f64>,
    pub stderr: Option<f64>,
    pub cost_lower: Option<f64>,
    pub cost_upper: Option<f64>,
    pub constructive_mean: f64,
    pub constructive_stderr: f64,
    pub analytic_bound: Option<f64>,
    pub theorem_bound: Option<f64>,
    pub good_event_failures: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub p: f64,
    pub rows: Vec<ScalingRow>,
    /// Fit of the mean constructive bound.
    pub slope_fit: Option<SlopeFit>,
    /// Fit of the mean bracket midpoint, where available.
    pub estimate_slope_fit: Option<SlopeFit>,
    pub log_correction: Option<LogCorrection>,
    pub envelope: Option<MomentEnvelope>,
    pub sandwich: Option<SandwichReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsSummary {
    pub cube_side: f64,
    pub curves: Vec<MomentCurve>,
    pub classification: Option<HyperuniformityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub version: u32,
    pub process: String,
    pub dimension: usize,
    pub metric: String,
    pub seed: u64,
    pub replicates: usize,
    pub quantization_offset: usize,
    pub theta_p: f64,
    pub good_event_threshold: f64,
    pub moments: Option<MomentsSummary>,
    pub series: Vec<Series>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
struct Replicate {
    constructive: f64,
    bracket: Option<(f64, f64)>,
    mass: f64,
    failures: usize,
}

fn cube_for(cfg: &ExperimentConfig, n: f64) -> Result<Cube, CliError> {
    Ok(Cube::from_volume(cfg.experiment.dimension, n)?.with_metric(cfg.metric()))
}

fn bracket(cfg: &ExperimentConfig, ps: &hyperwass_core::PointSet, density: &hyperwass_core::MeanDensity, p: f64)
    -> Result<Option<(f64, f64)>, Error>
{
    let e = &cfg.experiment;
    if ps.len() > e.semidiscrete_max_points || ps.is_empty() {
        return Ok(None);
    }
    let cube = ps.cube();
    if cube.dim() == 1 && cube.metric() == Metric::Euclidean {
        let exact = semidiscrete_wp_1d(ps, density, p)?;
        return Ok(Some((exact, exact)));
    }
    let grid = hyperwass_core::DyadicGrid::new(cube.clone())?;
    let mut level = grid.depth().max(density.resolution_level()) + e.semidiscrete_level_offset;
    while level > 0 && ps.len() + (1usize << (cube.dim() * level)) > MAX_COMBINED_SUPPORT {
        level -= 1;
    }
    let est = semidiscrete_wp(ps, density, p, level)?;
    Ok(Some((est.lower, est.upper)))
}

fn run_replicate(
    cfg: &ExperimentConfig,
    spec: &ProcessSpec,
    cube: &Cube,
    p: f64,
    r: u64,
) -> Result<Option<Replicate>, CliError> {
    let density = spec.mean_density(cube)?;
    let ps = spec.sample_replicate(cube, r)?;
    if ps.is_empty() {
        log::warn!("N = {}: replicate {r} drew no points, skipped", cube.volume());
        return Ok(None);
    }
    let ladder = build_ladder(&ps, &density)?;
    let constructive = match constructive_upper_bound(&ladder, p, cfg.experiment.quantization_offset) {
        Ok(b) => b.total,
        Err(e @ Error::CeilingExceeded { .. }) => {
            log::warn!("N = {}: replicate {r} skipped: {e}", cube.volume());
            return Ok(None);
        }
        Err(e) => return Err(e.into()),
    };
    let bracket = match bracket(cfg, &ps, &density, p) {
        Ok(b) => b,
        Err(e @ Error::CeilingExceeded { .. }) => {
            log::warn!("N = {}: replicate {r} has no bracket: {e}", cube.volume());
            None
        }
        Err(e) => return Err(e.into()),
    };
    let failures = good_event_diagnostics(&ladder, cfg.experiment.good_event_threshold, None)?
        .iter()
        .map(|l| l.failures)
        .sum();
    Ok(Some(Replicate {
        constructive,
        bracket,
        mass: ps.mass(),
        failures,
    }))
}

fn moments_summary(cfg: &ExperimentConfig, spec: &ProcessSpec) -> Result<Option<(MomentsSummary, EnvelopeForm)>, CliError> {
    let Some(m) = &cfg.moments else {
        return Ok(None);
    };
    let d = cfg.experiment.dimension;
    let n_max = cfg.experiment.n.last().copied().unwrap_or(1.0);
    let a_max = m.areas.last().copied().unwrap_or(1.0);
    let side = n_max.powf(1.0 / d as f64).max(4.0 * a_max.powf(1.0 / d as f64)).ceil();
    let cube = Cube::new(d, side)?.with_metric(cfg.metric());
    let options = WindowOptions {
        windows_per_replicate: m.windows,
        ..WindowOptions::default()
    };
    let mut orders: Vec<f64> = cfg.experiment.p.clone();
    if !orders.contains(&2.0) {
        orders.push(2.0);
    }
    let mut curves = Vec::new();
    for p in orders {
        curves.push(estimate_moment_curve_with(spec, &cube, p, &m.areas, m.replicates, options)?);
    }
    let classification = curves
        .iter()
        .find(|c| c.p == 2.0)
        .and_then(|c| match classify_hyperuniformity(c) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("classification skipped: {e}");
                None
            }
        });
    let form: EnvelopeForm = m.envelope.parse().map_err(CliError::from)?;
    Ok(Some((
        MomentsSummary {
            cube_side: side,
            curves,
            classification,
        },
        form,
    )))
}

fn soft<T>(res: Result<T, CliError>, p: f64, what: &str) -> Option<T> {
    match res {
        Ok(v) => Some(v),
        Err(err) => {
            log::warn!("p = {p}: {what} skipped: {err}");
            None
        }
    }
}

fn positive(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Run every `(p, N)` cell of the configured study.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ScalingReport, CliError> {
    let spec = cfg.process_spec()?;
    let e = &cfg.experiment;
    let mut notes = vec![
        "Moment windows are axis-aligned cubes; hyperuniformity classes are usually stated for balls.".to_string(),
        "Constructive bounds are pathwise and do not depend on theta_p; analytic and theorem columns do.".to_string(),
    ];
    let moments = moments_summary(cfg, &spec)?;
    let mut series = Vec::new();
    for &p in &e.p {
        let envelope = match &moments {
            Some((summary, form)) => summary
                .curves
                .iter()
                .find(|c| c.p == p)
                .map(|c| fit_envelope(c, *form))
                .transpose()?,
            None => None,
        };
        let mut rows = Vec::new();
        let mut runs = Vec::new();
        for &n in &e.n {
            let cube = cube_for(cfg, n)?;
            let results: Vec<Option<Replicate>> = (0..e.replicates as u64)
                .into_par_iter()
                .map(|r| run_replicate(cfg, &spec, &cube, p, r))
                .collect::<Result<_, _>>()?;
            let reps: Vec<Replicate> = results.into_iter().flatten().collect();
            let skipped = e.replicates - reps.len();
            if reps.is_empty() {
                log::warn!("N = {n}: every replicate was skipped");
                continue;
            }
            let constructive: Vec<f64> = reps.iter().map(|r| r.constructive).collect();
            let (constructive_mean, constructive_stderr) = mean_se(&constructive);
            let brackets: Vec<(f64, f64)> = reps.iter().filter_map(|r| r.bracket).collect();
            let (mean_cost, stderr, cost_lower, cost_upper) = if brackets.len() == reps.len() {
                let mids: Vec<f64> = brackets.iter().map(|(l, u)| 0.5 * (l + u)).collect();
                let (m, s) = mean_se(&mids);
                let lo = brackets.iter().map(|b| b.0).sum::<f64>() / brackets.len() as f64;
                let hi = brackets.iter().map(|b| b.1).sum::<f64>() / brackets.len() as f64;
                runs.push(SandwichRun {
                    n,
                    costs: mids,
                    constructive: constructive.clone(),
                    masses: reps.iter().map(|r| r.mass).collect(),
                });
                (Some(m), positive(s), Some(lo), Some(hi))
            } else {
                (None, None, None, None)
            };
            let density = spec.mean_density(&cube)?;
            let (analytic_bound, theorem) = match &envelope {
                Some(env) => {
                    let a = density.lower_bound();
                    let upper = density.upper_bound();
                    let ps = spec.sample_replicate(&cube, 0)?;
                    let analytic = if ps.is_empty() {
                        None
                    } else {
                        let ladder = build_ladder(&ps, &density)?;
                        match analytic_scale_costs(&ladder, env, p, a, upper, e.theta_p, e.good_event_threshold) {
                            Ok(b) => Some(b.aggregate),
                            Err(err) => {
                                log::warn!("analytic costs skipped: {err}");
                                None
                            }
                        }
                    };
                    (analytic, Some(theorem_bound(n, p, a, upper, env, e.theta_p)?.bound))
                }
                None => (None, None),
            };
            rows.push(ScalingRow {
                n,
                replicates: reps.len(),
                skipped,
                mean_cost,
                stderr,
                cost_lower,
                cost_upper,
                constructive_mean,
                constructive_stderr: if constructive_stderr.is_finite() { constructive_stderr } else { 0.0 },
                analytic_bound,
                theorem_bound: theorem,
                good_event_failures: reps.iter().map(|r| r.failures as f64).sum::<f64>() / reps.len() as f64,
            });
        }
        let table: Vec<ScalingPoint> = rows
            .iter()
            .map(|r| ScalingPoint {
                n: r.n,
                cost: r.constructive_mean,
                stderr: r.constructive_stderr,
            })
            .collect();
        let estimates: Vec<ScalingPoint> = rows
            .iter()
            .filter_map(|r| {
                Some(ScalingPoint {
                    n: r.n,
                    cost: r.mean_cost?,
                    stderr: r.stderr.unwrap_or(0.0),
                })
            })
            .collect();
        let slope_fit = soft(fit_slope(&table), p, "slope fit");
        let estimate_slope_fit = if estimates.len() >= 3 { soft(fit_slope(&estimates), p, "estimate fit") } else { None };
        let log_correction = soft(fit_log_correction(&table, p), p, "log-correction fit");
        let sandwich = match (&envelope, runs.is_empty()) {
            (Some(env), false) => {
                let density = spec.mean_density(&cube_for(cfg, e.n[0])?)?;
                soft(
                    corollary_sandwich(
                        &runs,
                        e.dimension,
                        p,
                        density.lower_bound(),
                        density.upper_bound(),
                        env,
                        e.theta_p,
                    )
                    .map_err(CliError::from),
                    p,
                    "sandwich",
                )
            }
            _ => None,
        };
        series.push(Series {
            p,
            rows,
            slope_fit,
            estimate_slope_fit,
            log_correction,
            envelope,
            sandwich,
        });
    }
    if e.n.iter().any(|&n| n < 4.0) {
        notes.push("Sizes below 4 have no interpolation level; only the crude bound applies there.".to_string());
    }
    Ok(ScalingReport {
        version: REPORT_VERSION,
        process: spec.label(),
        dimension: e.dimension,
        metric: format!("{:?}", cfg.metric()).to_lowercase(),
        seed: e.seed,
        replicates: e.replicates,
        quantization_offset: e.quantization_offset,
        theta_p: e.theta_p,
        good_event_threshold: e.good_event_threshold,
        moments: moments.map(|(m, _)| m),
        series,
        notes,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn results_csv(report: &ScalingReport) -> String {
    let mut out = String::from(
        "p,n,replicates,skipped,mean_cost,stderr,cost_lower,cost_upper,constructive_mean,constructive_stderr,analytic_bound,theorem_bound,good_event_failures\n",
    );
    for s in &report.series {
        for r in &s.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                s.p,
                r.n,
                r.replicates,
                r.skipped,
                opt(r.mean_cost),
                opt(r.stderr),
                opt(r.cost_lower),
                opt(r.cost_upper),
                r.constructive_mean,
                r.constructive_stderr,
                opt(r.analytic_bound),
                opt(r.theorem_bound),
                r.good_event_failures
            ));
        }
    }
    out
}

/// Write `results.csv`, `report.json` and, if asked, `scaling.svg`.
pub fn write_artifacts(report: &ScalingReport, dir: &Path, plot: bool) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), results_csv(report))?;
    let json = serde_json::to_string_pretty(report).map_err(|e| CliError::Numeric(e.to_string()))?;
    std::fs::write(dir.join("report.json"), json + "\n")?;
    if plot {
        std::fs::write(dir.join("scaling.svg"), crate::plot::scaling_svg(report))?;
    }
    Ok(())
}
