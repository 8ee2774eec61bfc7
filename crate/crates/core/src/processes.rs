//! Point-process realizations on a cube and their mean measures.
//!
//! Samplers are deterministic in `(seed, replicate)`: every replicate draws
//! from its own ChaCha stream, so replicates can be generated in any order or
//! in parallel without changing a single bit of output.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Cube, DyadicGrid, Metric};

/// Independent random stream for one replicate.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// A finite configuration of unit-mass points inside a half-open cube.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    cube: Cube,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(cube: Cube, points: Vec<Vec<f64>>) -> Result<Self> {
        let d = cube.dim();
        let mut coords = Vec::with_capacity(points.len() * d);
        for p in &points {
            if p.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: p.len(),
                });
            }
            if !cube.contains(p) {
                return Err(Error::OutOfDomain { coords: p.clone() });
            }
            coords.extend_from_slice(p);
        }
        Ok(Self { cube, coords })
    }

    pub fn empty(cube: Cube) -> Self {
        Self {
            cube,
            coords: Vec::new(),
        }
    }

    pub fn cube(&self) -> &Cube {
        &self.cube
    }

    pub fn dim(&self) -> usize {
        self.cube.dim()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Total mass `M_N`.
    pub fn mass(&self) -> f64 {
        self.len() as f64
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim())
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.iter().map(|p| p.to_vec()).collect()
    }

    /// Number of points in the half-open box `[lo, lo + side)^d`.
    pub fn count_in_box(&self, lo: &[f64], side: f64) -> usize {
        self.iter()
            .filter(|p| p.iter().zip(lo).all(|(&x, &l)| x >= l && x < l + side))
            .count()
    }

    /// Point counts of every cell at `level` of `grid`.
    pub fn cell_counts(&self, grid: &DyadicGrid, level: usize) -> Result<Vec<f64>> {
        let cells = grid.cells(level)?;
        let mut counts = vec![0.0; cells.len()];
        for p in self.iter() {
            counts[grid.cell_of(level, p)?] += 1.0;
        }
        Ok(counts)
    }

    /// The points lying in `sub`, carried by `sub` as their new cube.
    pub fn restrict(&self, sub: &Cube) -> Result<PointSet> {
        if sub.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: sub.dim(),
            });
        }
        if !self.cube.contains_cube(sub) {
            return Err(invalid("restriction cube is not contained in the point set's cube"));
        }
        let coords = self
            .iter()
            .filter(|p| sub.contains(p))
            .flatten()
            .copied()
            .collect();
        Ok(PointSet {
            cube: sub.clone().with_metric(self.cube.metric()),
            coords,
        })
    }
}

/// Mean measure `E[μ_N]` as a density with respect to Lebesgue measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanDensity {
    Uniform {
        intensity: f64,
    },
    /// Constant on each cell of dyadic level `level` of the host cube.
    PiecewiseConstant {
        dim: usize,
        level: usize,
        values: Vec<f64>,
    },
}

impl MeanDensity {
    pub fn uniform(intensity: f64) -> Result<Self> {
        if !(intensity.is_finite() && intensity > 0.0) {
            return Err(invalid(format!("intensity must be positive, got {intensity}")));
        }
        Ok(MeanDensity::Uniform { intensity })
    }

    pub fn piecewise(dim: usize, level: usize, values: Vec<f64>) -> Result<Self> {
        let expected = 1usize
            .checked_shl((dim * level) as u32)
            .ok_or_else(|| invalid("piecewise density level too deep"))?;
        if values.len() != expected {
            return Err(invalid(format!(
                "piecewise density needs {expected} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("piecewise density values must be positive"));
        }
        Ok(MeanDensity::PiecewiseConstant { dim, level, values })
    }

    /// Two-valued checkerboard at `level`.
    pub fn checkerboard(dim: usize, level: usize, low: f64, high: f64) -> Result<Self> {
        let m = 1usize << level;
        let count = m.pow(dim as u32);
        let values = (0..count)
            .map(|mut idx| {
                let mut parity = 0;
                for _ in 0..dim {
                    parity += idx % m;
                    idx /= m;
                }
                if parity % 2 == 0 {
                    low
                } else {
                    high
                }
            })
            .collect();
        Self::piecewise(dim, level, values)
    }

    fn values_range(&self) -> (f64, f64) {
        match self {
            MeanDensity::Uniform { intensity } => (*intensity, *intensity),
            MeanDensity::PiecewiseConstant { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))),
        }
    }

    /// Lower density bound `a ∈ (0, 1]`.
    pub fn lower_bound(&self) -> f64 {
        self.values_range().0.min(1.0)
    }

    /// Upper density bound `A ≥ 1`.
    pub fn upper_bound(&self) -> f64 {
        self.values_range().1.max(1.0)
    }

    pub fn max_value(&self) -> f64 {
        self.values_range().1
    }

    /// Finest dyadic level on whose cells the density is constant.
    pub fn resolution_level(&self) -> usize {
        match self {
            MeanDensity::Uniform { .. } => 0,
            MeanDensity::PiecewiseConstant { level, .. } => *level,
        }
    }

    fn check_grid(&self, grid: &DyadicGrid) -> Result<()> {
        if let MeanDensity::PiecewiseConstant { dim, .. } = self {
            if *dim != grid.dim() {
                return Err(Error::DimensionMismatch {
                    expected: grid.dim(),
                    found: *dim,
                });
            }
        }
        Ok(())
    }

    /// Exact mass of a dyadic cell.
    pub fn cell_mass(&self, grid: &DyadicGrid, level: usize, idx: usize) -> f64 {
        match self {
            MeanDensity::Uniform { intensity } => intensity * grid.cell_volume(level),
            MeanDensity::PiecewiseConstant {
                level: own, values, ..
            } => {
                if level >= *own {
                    let shift = level - own;
                    let multi: Vec<usize> = grid
                        .multi_index(level, idx)
                        .iter()
                        .map(|i| i >> shift)
                        .collect();
                    values[grid.flat_index(*own, &multi)] * grid.cell_volume(level)
                } else {
                    grid.descendants(level, idx, *own)
                        .iter()
                        .map(|&c| values[c])
                        .sum::<f64>()
                        * grid.cell_volume(*own)
                }
            }
        }
    }

    /// Masses of every cell at `level`.
    pub fn cell_masses(&self, grid: &DyadicGrid, level: usize) -> Result<Vec<f64>> {
        self.check_grid(grid)?;
        Ok(grid
            .cells(level)?
            .map(|idx| self.cell_mass(grid, level, idx))
            .collect())
    }

    pub fn total_mass(&self, cube: &Cube) -> f64 {
        match self {
            MeanDensity::Uniform { intensity } => intensity * cube.volume(),
            MeanDensity::PiecewiseConstant { dim, level, values } => {
                values.iter().sum::<f64>() * cube.volume() / 2f64.powi((dim * level) as i32)
            }
        }
    }

    /// `∫ ρ(x)^p dx` over the cube.
    pub fn integral_of_power(&self, cube: &Cube, p: f64) -> f64 {
        match self {
            MeanDensity::Uniform { intensity } => intensity.powf(p) * cube.volume(),
            MeanDensity::PiecewiseConstant { dim, level, values } => {
                values.iter().map(|v| v.powf(p)).sum::<f64>() * cube.volume()
                    / 2f64.powi((dim * level) as i32)
            }
        }
    }

    /// Exact mass of the box `[lo, lo + side)^d` inside `cube`.
    pub fn box_mass(&self, cube: &Cube, lo: &[f64], side: f64) -> f64 {
        match self {
            MeanDensity::Uniform { intensity } => intensity * side.powi(lo.len() as i32),
            MeanDensity::PiecewiseConstant { level, values, .. } => {
                let m = 1usize << level;
                let cs = cube.side() / m as f64;
                let origin = cube.origin();
                let mut total = 0.0;
                for (idx, v) in values.iter().enumerate() {
                    let mut vol = *v;
                    let mut rest = idx;
                    for a in (0..lo.len()).rev() {
                        let i = rest % m;
                        rest /= m;
                        let c0 = origin[a] + i as f64 * cs;
                        let overlap = (c0 + cs).min(lo[a] + side) - c0.max(lo[a]);
                        if overlap <= 0.0 {
                            vol = 0.0;
                            break;
                        }
                        vol *= overlap;
                    }
                    total += vol;
                }
                total
            }
        }
    }

    /// Density value at a point of the cube.
    pub fn value_at(&self, grid: &DyadicGrid, x: &[f64]) -> Result<f64> {
        match self {
            MeanDensity::Uniform { intensity } => Ok(*intensity),
            MeanDensity::PiecewiseConstant { level, values, .. } => {
                self.check_grid(grid)?;
                Ok(values[grid.cell_of(*level, x)?])
            }
        }
    }

    pub fn scaled(&self, factor: f64) -> MeanDensity {
        match self {
            MeanDensity::Uniform { intensity } => MeanDensity::Uniform {
                intensity: intensity * factor,
            },
            MeanDensity::PiecewiseConstant { dim, level, values } => MeanDensity::PiecewiseConstant {
                dim: *dim,
                level: *level,
                values: values.iter().map(|v| v * factor).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    /// Each coordinate uniform on `[-radius, radius]`.
    UniformBox { radius: f64 },
    /// Isotropic Gaussian conditioned on `|X| ≤ radius`.
    GaussianTruncated { sigma: f64, radius: f64 },
}

impl Perturbation {
    pub fn radius(&self) -> f64 {
        match *self {
            Perturbation::UniformBox { radius } | Perturbation::GaussianTruncated { radius, .. } => {
                radius
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let r = self.radius();
        if !(r.is_finite() && r >= 0.0) {
            return Err(invalid(format!("perturbation radius must be >= 0, got {r}")));
        }
        if let Perturbation::GaussianTruncated { sigma, .. } = *self {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(invalid(format!("gaussian sigma must be positive, got {sigma}")));
            }
        }
        Ok(())
    }

    fn draw(&self, dim: usize, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match *self {
            Perturbation::UniformBox { radius } => {
                for x in out.iter_mut().take(dim) {
                    *x = if radius > 0.0 {
                        rng.gen_range(-radius..=radius)
                    } else {
                        0.0
                    };
                }
            }
            Perturbation::GaussianTruncated { sigma, radius } => {
                if radius == 0.0 {
                    out.iter_mut().for_each(|x| *x = 0.0);
                    return;
                }
                let normal = Normal::new(0.0, sigma).expect("validated sigma");
                loop {
                    let mut norm2 = 0.0;
                    for x in out.iter_mut().take(dim) {
                        *x = normal.sample(rng);
                        norm2 += *x * *x;
                    }
                    if norm2 <= radius * radius {
                        break;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProcessFamily {
    Poisson {
        intensity: f64,
    },
    /// `count` i.i.d. uniform points; defaults to the cube volume rounded.
    BinomialIid {
        count: Option<usize>,
    },
    /// One point `z + 1/2 + X_z` per unit lattice cell.
    PerturbedLattice {
        perturbation: Perturbation,
    },
    ExternalFile {
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub family: ProcessFamily,
    pub seed: u64,
}

const POISSON_BLOCK_TARGET: f64 = 4096.0;
const LATTICE_RESAMPLE_LIMIT: usize = 10_000;

impl ProcessSpec {
    pub fn new(family: ProcessFamily, seed: u64) -> Self {
        Self { family, seed }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.family {
            ProcessFamily::Poisson { intensity } => {
                if !(intensity.is_finite() && *intensity > 0.0) {
                    return Err(invalid(format!("intensity must be positive, got {intensity}")));
                }
            }
            ProcessFamily::PerturbedLattice { perturbation } => perturbation.validate()?,
            ProcessFamily::BinomialIid { .. } | ProcessFamily::ExternalFile { .. } => {}
        }
        Ok(())
    }

    /// Short stable label used in reports.
    pub fn label(&self) -> String {
        match &self.family {
            ProcessFamily::Poisson { intensity } => format!("poisson(intensity={intensity})"),
            ProcessFamily::BinomialIid { count } => match count {
                Some(n) => format!("binomial_iid(n={n})"),
                None => "binomial_iid".to_string(),
            },
            ProcessFamily::PerturbedLattice { perturbation } => match perturbation {
                Perturbation::UniformBox { radius } => format!("perturbed_lattice(uniform_box R={radius})"),
                Perturbation::GaussianTruncated { sigma, radius } => {
                    format!("perturbed_lattice(gaussian_truncated sigma={sigma} R={radius})")
                }
            },
            ProcessFamily::ExternalFile { path } => format!("external_file({path})"),
        }
    }

    /// The analytic mean density of the process on `cube`.
    pub fn mean_density(&self, cube: &Cube) -> Result<MeanDensity> {
        match &self.family {
            ProcessFamily::Poisson { intensity } => MeanDensity::uniform(*intensity),
            ProcessFamily::BinomialIid { count } => {
                let n = count.unwrap_or_else(|| default_count(cube));
                MeanDensity::uniform((n as f64 / cube.volume()).max(f64::MIN_POSITIVE))
            }
            ProcessFamily::PerturbedLattice { .. } => MeanDensity::uniform(1.0),
            ProcessFamily::ExternalFile { .. } => Err(invalid(
                "external point files carry no mean density; supply one explicitly",
            )),
        }
    }

    /// Distance from the cube boundary beyond which window means are exact.
    pub fn boundary_margin(&self, cube: &Cube) -> f64 {
        match &self.family {
            ProcessFamily::PerturbedLattice { perturbation } if cube.metric() == Metric::Euclidean => {
                perturbation.radius()
            }
            _ => 0.0,
        }
    }

    pub fn sample(&self, cube: &Cube) -> Result<PointSet> {
        self.sample_replicate(cube, 0)
    }

    pub fn sample_replicate(&self, cube: &Cube, replicate: u64) -> Result<PointSet> {
        self.validate()?;
        let mut rng = replicate_rng(self.seed, replicate);
        match &self.family {
            ProcessFamily::Poisson { intensity } => Ok(sample_poisson(cube, *intensity, &mut rng)),
            ProcessFamily::BinomialIid { count } => {
                let n = count.unwrap_or_else(|| default_count(cube));
                Ok(sample_binomial(cube, n, &mut rng))
            }
            ProcessFamily::PerturbedLattice { perturbation } => {
                sample_lattice(cube, perturbation, &mut rng)
            }
            ProcessFamily::ExternalFile { path } => Err(invalid(format!(
                "external_file process `{path}` cannot be sampled; use ingest_points"
            ))),
        }
    }
}

fn default_count(cube: &Cube) -> usize {
    cube.volume().round() as usize
}

/// Uniform draw in `[lo, lo + len)` that never returns the open end.
fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, len: f64) -> f64 {
    let x = lo + rng.gen::<f64>() * len;
    if x >= lo + len {
        lo
    } else {
        x
    }
}

fn sample_binomial(cube: &Cube, n: usize, rng: &mut ChaCha8Rng) -> PointSet {
    let d = cube.dim();
    let mut coords = Vec::with_capacity(n * d);
    for _ in 0..n {
        for a in 0..d {
            coords.push(uniform_in(rng, cube.origin()[a], cube.side()));
        }
    }
    PointSet {
        cube: cube.clone(),
        coords,
    }
}

fn sample_poisson(cube: &Cube, intensity: f64, rng: &mut ChaCha8Rng) -> PointSet {
    let d = cube.dim();
    let expected = intensity * cube.volume();
    let per_axis = ((expected / POISSON_BLOCK_TARGET).powf(1.0 / d as f64).ceil() as usize).max(1);
    let block_side = cube.side() / per_axis as f64;
    let block_mean = expected / (per_axis as f64).powi(d as i32);
    let blocks = per_axis.pow(d as u32);
    let mut coords = Vec::with_capacity((expected * 1.1) as usize * d + 16);
    let mut multi = vec![0usize; d];
    for _ in 0..blocks {
        let count = if block_mean > 0.0 {
            Poisson::new(block_mean).map(|p| p.sample(rng) as usize).unwrap_or(0)
        } else {
            0
        };
        for _ in 0..count {
            for a in 0..d {
                let lo = cube.origin()[a] + multi[a] as f64 * block_side;
                let len = if multi[a] + 1 == per_axis {
                    cube.origin()[a] + cube.side() - lo
                } else {
                    block_side
                };
                coords.push(uniform_in(rng, lo, len));
            }
        }
        for a in (0..d).rev() {
            multi[a] += 1;
            if multi[a] < per_axis {
                break;
            }
            multi[a] = 0;
        }
    }
    PointSet {
        cube: cube.clone(),
        coords,
    }
}

fn sample_lattice(cube: &Cube, perturbation: &Perturbation, rng: &mut ChaCha8Rng) -> Result<PointSet> {
    let d = cube.dim();
    let side = cube.side();
    let sites_per_axis = side.round();
    if (side - sites_per_axis).abs() > 1e-9 * side.max(1.0) || sites_per_axis < 1.0 {
        return Err(invalid(format!(
            "perturbed lattice needs an integer cube side, got {side}"
        )));
    }
    let m = sites_per_axis as usize;
    let total = m.pow(d as u32);
    let mut coords = Vec::with_capacity(total * d);
    let mut multi = vec![0usize; d];
    let mut shift = vec![0.0; d];
    let mut candidate = vec![0.0; d];
    for _ in 0..total {
        let mut attempts = 0;
        loop {
            perturbation.draw(d, rng, &mut shift);
            for a in 0..d {
                candidate[a] = cube.origin()[a] + multi[a] as f64 + 0.5 + shift[a];
            }
            match cube.metric() {
                Metric::Torus => {
                    cube.wrap(&mut candidate);
                    break;
                }
                Metric::Euclidean => {
                    if cube.contains(&candidate) {
                        break;
                    }
                }
            }
            attempts += 1;
            if attempts >= LATTICE_RESAMPLE_LIMIT {
                return Err(Error::Numeric(
                    "perturbation keeps leaving the cube; radius too large for this window".into(),
                ));
            }
        }
        coords.extend_from_slice(&candidate);
        for a in (0..d).rev() {
            multi[a] += 1;
            if multi[a] < m {
                break;
            }
            multi[a] = 0;
        }
    }
    Ok(PointSet {
        cube: cube.clone(),
        coords,
    })
}

/// Read a point file: one point per line, `d` comma-separated decimals, with
/// an optional `# d=<d> side=<side> origin=<o1,...>` header.
pub fn ingest_points(path: impl AsRef<Path>, cube: &Cube) -> Result<PointSet> {
    let path = path.as_ref();
    let label = path.display().to_string();
    let text = fs::read_to_string(path)?;
    parse_points(&text, &label, cube)
}

pub fn parse_points(text: &str, label: &str, cube: &Cube) -> Result<PointSet> {
    let d = cube.dim();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: label.to_string(),
        line,
        message,
    };
    let mut coords = Vec::new();
    let mut index = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if lineno == 1 {
                check_header(comment, cube).map_err(|m| parse_err(lineno, m))?;
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d {
            return Err(parse_err(
                lineno,
                format!("dimension mismatch: expected {d} fields, found {}", fields.len()),
            ));
        }
        let start = coords.len();
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(lineno, format!("cannot parse `{f}` as a number")))?;
            coords.push(v);
        }
        if !cube.contains(&coords[start..]) {
            return Err(parse_err(
                lineno,
                format!("point {index} {:?} lies outside the half-open cube", &coords[start..]),
            ));
        }
        index += 1;
    }
    Ok(PointSet {
        cube: cube.clone(),
        coords,
    })
}

fn check_header(header: &str, cube: &Cube) -> std::result::Result<(), String> {
    for token in header.split_whitespace() {
        let Some((key, value)) = token.split_once('=') else {
            continue;
        };
        match key {
            "d" => {
                let d: usize = value.parse().map_err(|_| format!("bad header dimension `{value}`"))?;
                if d != cube.dim() {
                    return Err(format!(
                        "dimension mismatch: header declares d={d}, cube has d={}",
                        cube.dim()
                    ));
                }
            }
            "side" => {
                let s: f64 = value.parse().map_err(|_| format!("bad header side `{value}`"))?;
                if (s - cube.side()).abs() > 1e-9 * cube.side() {
                    return Err(format!("header side {s} differs from cube side {}", cube.side()));
                }
            }
            "origin" => {
                let o: Vec<f64> = value
                    .split(',')
                    .map(|v| v.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| format!("bad header origin `{value}`"))?;
                if o.len() != cube.dim()
                    || o.iter().zip(cube.origin()).any(|(a, b)| (a - b).abs() > 1e-9 * cube.side())
                {
                    return Err(format!("header origin {o:?} differs from cube origin"));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Write a point file in the format read by [`ingest_points`].
pub fn write_points(path: impl AsRef<Path>, ps: &PointSet) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    let origin: Vec<String> = ps.cube().origin().iter().map(|o| format!("{o}")).collect();
    writeln!(
        out,
        "# d={} side={} origin={}",
        ps.dim(),
        ps.cube().side(),
        origin.join(",")
    )?;
    for p in ps.iter() {
        let row: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}
