use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use hyperwass_core::certificates::{dual_value, lower_bound};
use hyperwass_core::moments::{classify_hyperuniformity, estimate_moment_curve_with, fit_envelope, WindowOptions};
use hyperwass_core::multiscale::{
    analytic_scale_costs, build_ladder, constructive_upper_bound, good_event_diagnostics, theorem_bound,
    ScaleCostReport,
};
use hyperwass_core::processes::{ingest_points, write_points};
use hyperwass_core::transport::{
    semidiscrete_dual_lower, semidiscrete_wp, semidiscrete_wp_1d, LaguerreOptions, MAX_COMBINED_SUPPORT,
};
use hyperwass_core::{Cube, DyadicGrid, MeanDensity, Metric, PointSet};
use serde_json::json;

use crate::config::{ExperimentConfig, MetricName};
use crate::experiment::{run_experiment, write_artifacts, ScalingReport};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "hyperwass", version, about = "Wasserstein scaling experiments for point processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub dimension: Option<usize>,
    #[arg(long, global = true)]
    pub p: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub metric: Option<MetricName>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw one configuration and write it as a point file.
    Sample {
        /// Cube volume; defaults to the first configured size.
        #[arg(long)]
        n: Option<f64>,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
    /// Estimate centered-moment curves, fit the envelope and classify.
    Moments,
    /// Certified bracket for the cost between one sample and its mean measure.
    Wasserstein {
        #[arg(long)]
        n: Option<f64>,
        /// Use a point file instead of sampling.
        #[arg(long)]
        points: Option<PathBuf>,
        /// Quantization level; the finest level within the support ceiling by default.
        #[arg(long)]
        level: Option<usize>,
    },
    /// Per-level constructive and analytic costs along the dyadic ladder.
    Multiscale {
        #[arg(long)]
        n: Option<f64>,
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Deterministic lower bound, and the cone dual on a sample when given points.
    Lowerbound {
        #[arg(long)]
        n: Option<f64>,
        /// Upper bound on the mean density.
        #[arg(long, default_value_t = 1.0)]
        upper_density: f64,
        #[arg(long)]
        points: Option<PathBuf>,
        /// Cone radius for the dual; the optimal radius by default.
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Replicated scaling study: results.csv, report.json, scaling.svg.
    Scaling,
    /// Summarize an existing report.json.
    Report {
        /// Report file; `<out>/report.json` by default.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(d) = cli.dimension {
        cfg.experiment.dimension = d;
    }
    if let Some(p) = cli.p {
        cfg.experiment.p = vec![p];
    }
    if let Some(m) = cli.metric {
        cfg.experiment.metric = m;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.map(|c| c.output.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numeric(e.to_string()))?;
    std::fs::write(dir.join(name), text + "\n")?;
    log::info!("wrote {}", dir.join(name).display());
    Ok(())
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Numeric(e.to_string()))
}

/// One configuration: from `--points` or sampled at volume `n`.
fn points_for(cfg: &ExperimentConfig, n: Option<f64>, points: Option<&Path>, replicate: u64)
    -> Result<(PointSet, MeanDensity), CliError>
{
    let n = n.unwrap_or(cfg.experiment.n[0]);
    let cube = Cube::from_volume(cfg.experiment.dimension, n)?.with_metric(cfg.metric());
    let spec = cfg.process_spec()?;
    match points {
        Some(path) => {
            let ps = ingest_points(path, &cube)?;
            let density = MeanDensity::uniform(ps.len() as f64 / cube.volume())?;
            Ok((ps, density))
        }
        None => Ok((spec.sample_replicate(&cube, replicate)?, spec.mean_density(&cube)?)),
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Sample { n, replicate } => {
            let cfg = load_config(cli)?;
            let (ps, _) = points_for(&cfg, *n, None, *replicate)?;
            let dir = out_dir(cli, Some(&cfg));
            std::fs::create_dir_all(&dir)?;
            write_points(dir.join("points.txt"), &ps)?;
            println!("{} points written to {}", ps.len(), dir.join("points.txt").display());
        }
        Command::Moments => {
            let cfg = load_config(cli)?;
            let m = cfg
                .moments
                .as_ref()
                .ok_or_else(|| CliError::Config("moments: section required for this command".into()))?;
            let spec = cfg.process_spec()?;
            let d = cfg.experiment.dimension;
            let n = *cfg.experiment.n.last().unwrap_or(&1.0);
            let a_max = *m.areas.last().unwrap_or(&1.0);
            let side = n.powf(1.0 / d as f64).max(4.0 * a_max.powf(1.0 / d as f64)).ceil();
            let cube = Cube::new(d, side)?.with_metric(cfg.metric());
            let options = WindowOptions {
                windows_per_replicate: m.windows,
                ..WindowOptions::default()
            };
            let dir = out_dir(cli, Some(&cfg));
            std::fs::create_dir_all(&dir)?;
            let mut records = Vec::new();
            for &p in &cfg.experiment.p {
                let curve = estimate_moment_curve_with(&spec, &cube, p, &m.areas, m.replicates, options)?;
                curve.write_csv(dir.join(format!("moments_p{p}.csv")))?;
                let envelope = fit_envelope(&curve, m.envelope.parse().map_err(CliError::from)?)?;
                let class = if p == 2.0 {
                    match classify_hyperuniformity(&curve) {
                        Ok(r) => Some(r),
                        Err(e) => {
                            log::warn!("classification skipped: {e}");
                            None
                        }
                    }
                } else {
                    None
                };
                if let Some(c) = &class {
                    println!("p = {p}: class {:?}, slope {:?}", c.class, c.slope);
                }
                records.push(json!({ "p": p, "curve": to_value(&curve)?, "envelope": to_value(&envelope)?, "classification": to_value(&class)? }));
            }
            write_json(&dir, "moments.json", &json!({ "process": spec.label(), "cube_side": side, "orders": records }))?;
        }
        Command::Wasserstein { n, points, level } => {
            let cfg = load_config(cli)?;
            let (ps, density) = points_for(&cfg, *n, points.as_deref(), 0)?;
            let dir = out_dir(cli, Some(&cfg));
            let mut results = Vec::new();
            for &p in &cfg.experiment.p {
                let cube = ps.cube();
                if cube.dim() == 1 && cube.metric() == Metric::Euclidean && level.is_none() {
                    let exact = semidiscrete_wp_1d(&ps, &density, p)?;
                    println!("p = {p}: W_p^p = {exact}");
                    results.push(json!({ "p": p, "exact": exact }));
                    continue;
                }
                let grid = DyadicGrid::new(cube.clone())?;
                let lvl = level.unwrap_or_else(|| {
                    let mut l = grid.depth().max(density.resolution_level()) + 2;
                    while l > 0 && ps.len() + (1usize << (cube.dim() * l)) > MAX_COMBINED_SUPPORT {
                        l -= 1;
                    }
                    l
                });
                let est = semidiscrete_wp(&ps, &density, p, lvl)?;
                let dual = if cube.metric() == Metric::Euclidean {
                    Some(semidiscrete_dual_lower(&ps, &density, p, LaguerreOptions::default())?)
                } else {
                    None
                };
                let lower = dual.as_ref().map_or(est.lower, |b| b.lower.max(est.lower));
                println!("p = {p}: {lower} <= W_p^p <= {} (level {lvl})", est.upper);
                results.push(json!({
                    "p": p,
                    "lower": lower,
                    "upper": est.upper,
                    "bracket": to_value(&est)?,
                    "dual_lower": dual.map(|b| b.lower),
                }));
            }
            write_json(&dir, "wasserstein.json", &json!({ "points": ps.len(), "results": results }))?;
        }
        Command::Multiscale { n, points } => {
            let cfg = load_config(cli)?;
            let (ps, density) = points_for(&cfg, *n, points.as_deref(), 0)?;
            let ladder = build_ladder(&ps, &density)?;
            let e = &cfg.experiment;
            let envelope = match &cfg.moments {
                Some(m) => {
                    let spec = cfg.process_spec()?;
                    let d = e.dimension;
                    let a_max = *m.areas.last().unwrap_or(&1.0);
                    let side = ps.cube().side().max(4.0 * a_max.powf(1.0 / d as f64)).ceil();
                    let cube = Cube::new(d, side)?.with_metric(cfg.metric());
                    let options = WindowOptions {
                        windows_per_replicate: m.windows,
                        ..WindowOptions::default()
                    };
                    Some((spec, cube, options, m.clone()))
                }
                None => None,
            };
            let mut reports = Vec::new();
            for &p in &e.p {
                let constructive = constructive_upper_bound(&ladder, p, e.quantization_offset)?;
                let (analytic, theorem, env) = match &envelope {
                    Some((spec, cube, options, m)) => {
                        let curve = estimate_moment_curve_with(spec, cube, p, &m.areas, m.replicates, *options)?;
                        let env = fit_envelope(&curve, m.envelope.parse().map_err(CliError::from)?)?;
                        let a = density.lower_bound();
                        let upper = density.upper_bound();
                        let analytic =
                            analytic_scale_costs(&ladder, &env, p, a, upper, e.theta_p, e.good_event_threshold)?;
                        let theorem = theorem_bound(ps.cube().volume(), p, a, upper, &env, e.theta_p)?;
                        (Some(analytic), Some(theorem), Some(env))
                    }
                    None => (None, None, None),
                };
                let good = good_event_diagnostics(&ladder, e.good_event_threshold, env.as_ref())?;
                let report = ScaleCostReport::assemble(&ladder, &constructive, analytic.as_ref(), &good, theorem);
                println!("p = {p}: constructive total {}", report.constructive_total);
                reports.push(json!({ "report": to_value(&report)?, "good_events": to_value(&good)? }));
            }
            write_json(&out_dir(cli, Some(&cfg)), "multiscale.json", &json!({ "points": ps.len(), "orders": reports }))?;
        }
        Command::Lowerbound {
            n,
            upper_density,
            points,
            radius,
        } => {
            let cfg = cli.config.as_ref().map(|_| load_config(cli)).transpose()?;
            let d = cli.dimension.or(cfg.as_ref().map(|c| c.experiment.dimension)).unwrap_or(2);
            let p = cli.p.or(cfg.as_ref().map(|c| c.experiment.p[0])).unwrap_or(1.0);
            let mut record = serde_json::Map::new();
            let dual = match points {
                Some(path) => {
                    let volume = n.ok_or_else(|| CliError::Config("--n is required with --points".into()))?;
                    let cube = Cube::from_volume(d, volume)?;
                    let ps = ingest_points(path, &cube)?;
                    let density = MeanDensity::uniform(ps.len() as f64 / volume)?;
                    let cert = lower_bound(d, p, ps.len().max(1) as f64, density.max_value())?;
                    let c = radius.unwrap_or(cert.optimal_radius);
                    Some((cert, dual_value(&ps, &density, c)?))
                }
                None => None,
            };
            let cert = match &dual {
                Some((cert, _)) => *cert,
                None => lower_bound(d, p, n.unwrap_or(1.0), *upper_density)?,
            };
            println!("W_p >= {} (W_1 >= {}, radius {})", cert.wp_bound, cert.w1_bound, cert.optimal_radius);
            record.insert("certificate".into(), to_value(&cert)?);
            if let Some((_, v)) = &dual {
                println!("cone dual at radius {}: {}", v.c, v.value);
                record.insert("dual".into(), to_value(v)?);
            }
            write_json(&out_dir(cli, cfg.as_ref()), "lowerbound.json", &serde_json::Value::Object(record))?;
        }
        Command::Scaling => {
            let cfg = load_config(cli)?;
            let report = run_experiment(&cfg)?;
            write_artifacts(&report, &cfg.output.dir, cfg.output.plot)?;
            print!("{}", summary(&report));
        }
        Command::Report { input } => {
            let path = input.clone().unwrap_or_else(|| out_dir(cli, None).join("report.json"));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let report: ScalingReport = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: not a scaling report: {e}", path.display())))?;
            print!("{}", summary(&report));
        }
    }
    Ok(())
}

/// Plain-text table of a scaling report.
pub fn summary(report: &ScalingReport) -> String {
    let mut out = format!("{} in dimension {}, seed {}\n", report.process, report.dimension, report.seed);
    for s in &report.series {
        out.push_str(&format!("p = {}\n{:>10} {:>5} {:>14} {:>14}\n", s.p, "N", "reps", "constructive/N", "estimate/N"));
        for r in &s.rows {
            let est = r.mean_cost.map(|c| format!("{:.4}", c / r.n)).unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{:>10} {:>5} {:>14.4} {:>14}\n",
                r.n,
                r.replicates,
                r.constructive_mean / r.n,
                est
            ));
        }
        if let Some(f) = &s.slope_fit {
            out.push_str(&format!(
                "slope {:.4} [{:.4}, {:.4}] over {} sizes\n",
                f.slope, f.slope_ci.0, f.slope_ci.1, f.points
            ));
        }
        if let Some(lc) = &s.log_correction {
            out.push_str(&format!(
                "log-corrected model {} (weighted rss {:.3e} vs {:.3e})\n",
                if lc.log_corrected_better { "preferred" } else { "not preferred" },
                lc.rss_log_corrected,
                lc.rss_linear
            ));
        }
    }
    out
}
