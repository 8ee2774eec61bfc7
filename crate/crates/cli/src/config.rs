//! Experiment configuration.
//!
//! The file is TOML with four sections. Every key is optional unless noted;
//! unknown keys are rejected.
//!
//! ```toml
//! [process]
//! family = "perturbed_lattice"   # poisson | binomial_iid | perturbed_lattice | external_file
//! perturbation = "uniform_box"   # uniform_box | gaussian_truncated (lattice only)
//! radius = 0.4                   # lattice only
//! sigma = 0.2                    # gaussian_truncated only
//! intensity = 1.0                # poisson only, default 1
//! count = 100                    # binomial_iid only, default N
//! path = "points.txt"            # external_file only
//!
//! [experiment]
//! dimension = 2
//! n = [64, 256, 1024]            # required, ascending
//! p = [2.0]
//! replicates = 10
//! seed = 1
//! metric = "euclidean"           # euclidean | torus
//! quantization_offset = 2
//! theta_p = 1.0
//! good_event_threshold = 0.5
//! semidiscrete_max_points = 1024 # 0 disables the bracket column
//! semidiscrete_level_offset = 1
//!
//! [moments]
//! areas = [4.0, 16.0, 64.0]
//! windows = 64
//! replicates = 20
//! envelope = "power"             # constant | power | log_power | tabulated
//!
//! [output]
//! dir = "out"
//! plot = true
//! ```

use std::path::{Path, PathBuf};

use hyperwass_core::moments::EnvelopeForm;
use hyperwass_core::{Metric, Perturbation, ProcessFamily, ProcessSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Poisson,
    BinomialIid,
    PerturbedLattice,
    ExternalFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationName {
    UniformBox,
    GaussianTruncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    #[default]
    Euclidean,
    Torus,
}

impl From<MetricName> for Metric {
    fn from(m: MetricName) -> Self {
        match m {
            MetricName::Euclidean => Metric::Euclidean,
            MetricName::Torus => Metric::Torus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSection {
    pub family: FamilyName,
    pub perturbation: Option<PerturbationName>,
    pub radius: Option<f64>,
    pub sigma: Option<f64>,
    pub intensity: Option<f64>,
    pub count: Option<usize>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    pub n: Vec<f64>,
    #[serde(default = "default_p")]
    pub p: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub metric: MetricName,
    #[serde(default = "default_offset")]
    pub quantization_offset: usize,
    #[serde(default = "default_theta")]
    pub theta_p: f64,
    #[serde(default = "default_threshold")]
    pub good_event_threshold: f64,
    #[serde(default = "default_sd_points")]
    pub semidiscrete_max_points: usize,
    #[serde(default = "default_sd_offset")]
    pub semidiscrete_level_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsSection {
    pub areas: Vec<f64>,
    #[serde(default = "default_windows")]
    pub windows: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_envelope")]
    pub envelope: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_plot")]
    pub plot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            plot: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub process: ProcessSection,
    pub experiment: ExperimentSection,
    pub moments: Option<MomentsSection>,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_dimension() -> usize {
    2
}
fn default_p() -> Vec<f64> {
    vec![2.0]
}
fn default_replicates() -> usize {
    10
}
fn default_offset() -> usize {
    2
}
fn default_theta() -> f64 {
    1.0
}
fn default_threshold() -> f64 {
    0.5
}
fn default_sd_points() -> usize {
    1024
}
fn default_sd_offset() -> usize {
    1
}
fn default_windows() -> usize {
    64
}
fn default_envelope() -> String {
    "power".into()
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_plot() -> bool {
    true
}

fn field(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().to_string();
            let place = inner
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                    format!(" (line {line})")
                })
                .unwrap_or_default();
            if path == "." || path.is_empty() {
                CliError::Config(format!("{msg}{place}"))
            } else {
                CliError::Config(format!("{path}: {msg}{place}"))
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let e = &self.experiment;
        if !(1..=3).contains(&e.dimension) {
            return Err(field("experiment.dimension", format!("must be 1, 2 or 3, got {}", e.dimension)));
        }
        if e.n.len() < 3 {
            return Err(field("experiment.n", "needs at least 3 values for a slope fit"));
        }
        if e.n.iter().any(|n| !(n.is_finite() && *n >= 1.0)) {
            return Err(field("experiment.n", "every N must be a finite number >= 1"));
        }
        if e.n.windows(2).any(|w| w[1] <= w[0]) {
            return Err(field("experiment.n", "must be strictly ascending"));
        }
        if e.p.is_empty() || e.p.iter().any(|p| !(p.is_finite() && *p >= 1.0)) {
            return Err(field("experiment.p", "needs at least one exponent, each >= 1"));
        }
        if e.replicates < 10 {
            return Err(field(
                "experiment.replicates",
                format!("scaling runs need at least 10 replicates, got {}", e.replicates),
            ));
        }
        if e.quantization_offset == 0 {
            return Err(field("experiment.quantization_offset", "must be at least 1"));
        }
        if !(e.theta_p >= 0.0) {
            return Err(field("experiment.theta_p", "must be >= 0"));
        }
        if !(0.1..=0.9).contains(&e.good_event_threshold) {
            return Err(field("experiment.good_event_threshold", "must lie in [0.1, 0.9]"));
        }
        if let Some(m) = &self.moments {
            if m.areas.is_empty() || m.areas.windows(2).any(|w| w[1] <= w[0]) || m.areas[0] <= 0.0 {
                return Err(field("moments.areas", "must be positive and strictly ascending"));
            }
            if m.windows == 0 {
                return Err(field("moments.windows", "must be positive"));
            }
            if m.replicates < 2 {
                return Err(field("moments.replicates", "needs at least 2 replicates for standard errors"));
            }
            m.envelope
                .parse::<EnvelopeForm>()
                .map_err(|err| field("moments.envelope", err))?;
        }
        if self.process.family == FamilyName::PerturbedLattice {
            let d = e.dimension as f64;
            if let Some(n) = e.n.iter().find(|n| {
                let side = n.powf(1.0 / d);
                (side - side.round()).abs() > 1e-9 * side
            }) {
                return Err(field(
                    "experiment.n",
                    format!("lattice sizes must be perfect {}-th powers, got {n}", e.dimension),
                ));
            }
        }
        self.process_spec()?;
        Ok(())
    }

    pub fn metric(&self) -> Metric {
        self.experiment.metric.into()
    }

    /// Core process description; the seed comes from the experiment section.
    pub fn process_spec(&self) -> Result<ProcessSpec, CliError> {
        let p = &self.process;
        let family = match p.family {
            FamilyName::Poisson => ProcessFamily::Poisson {
                intensity: p.intensity.unwrap_or(1.0),
            },
            FamilyName::BinomialIid => ProcessFamily::BinomialIid { count: p.count },
            FamilyName::PerturbedLattice => {
                let radius = p
                    .radius
                    .ok_or_else(|| field("process.radius", "required for perturbed_lattice"))?;
                let perturbation = match p.perturbation.unwrap_or(PerturbationName::UniformBox) {
                    PerturbationName::UniformBox => Perturbation::UniformBox { radius },
                    PerturbationName::GaussianTruncated => Perturbation::GaussianTruncated {
                        sigma: p
                            .sigma
                            .ok_or_else(|| field("process.sigma", "required for gaussian_truncated"))?,
                        radius,
                    },
                };
                ProcessFamily::PerturbedLattice { perturbation }
            }
            FamilyName::ExternalFile => ProcessFamily::ExternalFile {
                path: p
                    .path
                    .as_ref()
                    .ok_or_else(|| field("process.path", "required for external_file"))?
                    .display()
                    .to_string(),
            },
        };
        let spec = ProcessSpec::new(family, self.experiment.seed);
        spec.validate().map_err(|e| field("process", e))?;
        Ok(spec)
    }
}
