//! Cubes, dyadic partitions and the two metrics (Euclidean cube, flat torus).
//!
//! Cells are half-open boxes `[a, b)`; a point on the closed top face of the
//! cube belongs to no cell and is rejected.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest supported dimension. Keeps `2^(d k)` cell counts addressable.
pub const MAX_DIMENSION: usize = 8;

/// Levels with more cells than this are never materialized as lists.
pub const MAX_MATERIALIZED_CELLS: u64 = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Torus,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "torus" => Ok(Metric::Torus),
            other => Err(invalid(format!("unknown metric `{other}`"))),
        }
    }
}

/// An axis-aligned cube `[origin, origin + side)^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    dim: usize,
    side: f64,
    origin: Vec<f64>,
    metric: Metric,
}

impl Cube {
    /// Cube anchored at the origin.
    pub fn new(dim: usize, side: f64) -> Result<Self> {
        Self::with_origin(vec![0.0; dim], side)
    }

    pub fn with_origin(origin: Vec<f64>, side: f64) -> Result<Self> {
        let dim = origin.len();
        if dim == 0 || dim > MAX_DIMENSION {
            return Err(invalid(format!(
                "dimension {dim} outside 1..={MAX_DIMENSION}"
            )));
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(invalid(format!("cube side must be positive, got {side}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(invalid("cube origin must be finite"));
        }
        Ok(Self {
            dim,
            side,
            origin,
            metric: Metric::Euclidean,
        })
    }

    /// The cube `[0, N^{1/d})^d` of volume `N`.
    ///
    /// The side is snapped to the nearest integer when `N^{1/d}` is within
    /// `1e-12` relative of one, so perfect powers give exact dyadic grids.
    pub fn from_volume(dim: usize, volume: f64) -> Result<Self> {
        Self::new(dim, side_for_volume(dim, volume)?)
    }

    /// The centered cube `[-N^{1/d}/2, N^{1/d}/2)^d`.
    pub fn centered(dim: usize, volume: f64) -> Result<Self> {
        let side = side_for_volume(dim, volume)?;
        Self::with_origin(vec![-side / 2.0; dim], side)
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    pub fn diameter(&self) -> f64 {
        self.side * (self.dim as f64).sqrt()
    }

    pub fn center(&self) -> Vec<f64> {
        self.origin.iter().map(|o| o + self.side / 2.0).collect()
    }

    /// Half-open membership test.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim
            && x
                .iter()
                .zip(&self.origin)
                .all(|(&xi, &oi)| xi >= oi && xi < oi + self.side)
    }

    /// True when `other` lies inside `self` (closed containment of boxes).
    pub fn contains_cube(&self, other: &Cube) -> bool {
        other.dim == self.dim
            && other.origin.iter().zip(&self.origin).all(|(&a, &o)| {
                a >= o - 1e-12 * self.side && a + other.side <= o + self.side * (1.0 + 1e-12)
            })
    }

    /// Distance under the cube's metric.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.metric {
            Metric::Euclidean => euclidean(x, y),
            Metric::Torus => x
                .iter()
                .zip(y)
                .map(|(a, b)| {
                    let d = (a - b).abs().rem_euclid(self.side);
                    let w = d.min(self.side - d);
                    w * w
                })
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Wrap a coordinate vector into the half-open cube (torus identification).
    pub fn wrap(&self, x: &mut [f64]) {
        for (xi, &oi) in x.iter_mut().zip(&self.origin) {
            let mut r = (*xi - oi).rem_euclid(self.side);
            if r >= self.side {
                r = 0.0;
            }
            *xi = oi + r;
        }
    }
}

fn side_for_volume(dim: usize, volume: f64) -> Result<f64> {
    if dim == 0 || dim > MAX_DIMENSION {
        return Err(invalid(format!(
            "dimension {dim} outside 1..={MAX_DIMENSION}"
        )));
    }
    if !(volume.is_finite() && volume > 0.0) {
        return Err(invalid(format!("volume must be positive, got {volume}")));
    }
    let side = volume.powf(1.0 / dim as f64);
    let rounded = side.round();
    if rounded >= 1.0 && (side - rounded).abs() <= 1e-12 * side {
        Ok(rounded)
    } else {
        Ok(side)
    }
}

pub fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Dyadic partitions `B_0 .. B_K` of a cube.
///
/// Only level descriptors are stored; cells are addressed by row-major index
/// (axis 0 most significant) and resolved through index arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicGrid {
    cube: Cube,
    depth: usize,
}

impl DyadicGrid {
    /// Build the grid with `K = floor(log2(side))`, the deepest level whose
    /// cells still have side at least 1.
    pub fn new(cube: Cube) -> Result<Self> {
        let side = cube.side();
        if side < 1.0 {
            return Err(Error::DegenerateGrid { side });
        }
        let mut depth = 0usize;
        while 2f64.powi(depth as i32 + 1) <= side {
            depth += 1;
        }
        Ok(Self { cube, depth })
    }

    pub fn cube(&self) -> &Cube {
        &self.cube
    }

    pub fn dim(&self) -> usize {
        self.cube.dim()
    }

    /// Deepest level `K`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn cells_per_axis(&self, level: usize) -> usize {
        1usize << level
    }

    pub fn cell_count(&self, level: usize) -> u64 {
        1u64.checked_shl((self.dim() * level) as u32).unwrap_or(u64::MAX)
    }

    pub fn cell_side(&self, level: usize) -> f64 {
        self.cube.side() / 2f64.powi(level as i32)
    }

    pub fn cell_volume(&self, level: usize) -> f64 {
        self.cell_side(level).powi(self.dim() as i32)
    }

    pub fn cell_diameter(&self, level: usize) -> f64 {
        self.cell_side(level) * (self.dim() as f64).sqrt()
    }

    /// Index of the level-`level` cell holding `x`.
    pub fn cell_of(&self, level: usize, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        if !self.cube.contains(x) {
            return Err(Error::OutOfDomain { coords: x.to_vec() });
        }
        let m = self.cells_per_axis(level);
        let cs = self.cell_side(level);
        let origin = self.cube.origin();
        let mut idx = 0usize;
        for (a, &xa) in x.iter().enumerate() {
            let i = (((xa - origin[a]) / cs).floor() as usize).min(m - 1);
            idx = idx * m + i;
        }
        Ok(idx)
    }

    pub fn multi_index(&self, level: usize, mut idx: usize) -> Vec<usize> {
        let m = self.cells_per_axis(level);
        let mut out = vec![0; self.dim()];
        for slot in out.iter_mut().rev() {
            *slot = idx % m;
            idx /= m;
        }
        out
    }

    pub fn flat_index(&self, level: usize, multi: &[usize]) -> usize {
        let m = self.cells_per_axis(level);
        multi.iter().fold(0, |acc, &i| acc * m + i)
    }

    pub fn parent(&self, level: usize, idx: usize) -> usize {
        assert!(level > 0, "level 0 has no parent");
        let multi: Vec<usize> = self.multi_index(level, idx).iter().map(|i| i >> 1).collect();
        self.flat_index(level - 1, &multi)
    }

    /// The `2^d` children of a cell, in row-major order of their offsets.
    pub fn children(&self, level: usize, idx: usize) -> Vec<usize> {
        let base = self.multi_index(level, idx);
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                let multi: Vec<usize> = base
                    .iter()
                    .enumerate()
                    .map(|(a, &i)| 2 * i + ((mask >> (d - 1 - a)) & 1))
                    .collect();
                self.flat_index(level + 1, &multi)
            })
            .collect()
    }

    pub fn cell_origin(&self, level: usize, idx: usize) -> Vec<f64> {
        let cs = self.cell_side(level);
        self.multi_index(level, idx)
            .iter()
            .zip(self.cube.origin())
            .map(|(&i, &o)| o + i as f64 * cs)
            .collect()
    }

    pub fn cell_center(&self, level: usize, idx: usize) -> Vec<f64> {
        let half = self.cell_side(level) / 2.0;
        self.cell_origin(level, idx)
            .into_iter()
            .map(|o| o + half)
            .collect()
    }

    /// The cell as a standalone cube (Euclidean metric).
    pub fn cell_cube(&self, level: usize, idx: usize) -> Cube {
        Cube::with_origin(self.cell_origin(level, idx), self.cell_side(level))
            .expect("cell of a valid cube is a valid cube")
    }

    /// Indices of all cells at `level`, refusing levels above the memory guard.
    pub fn cells(&self, level: usize) -> Result<std::ops::Range<usize>> {
        let count = self.cell_count(level);
        if count > MAX_MATERIALIZED_CELLS {
            return Err(Error::CeilingExceeded {
                what: "dyadic cells at one level",
                size: count.min(usize::MAX as u64) as usize,
                limit: MAX_MATERIALIZED_CELLS as usize,
            });
        }
        Ok(0..count as usize)
    }

    /// Indices at `fine` level of all descendants of cell `idx` at `coarse`.
    pub fn descendants(&self, coarse: usize, idx: usize, fine: usize) -> Vec<usize> {
        assert!(fine >= coarse);
        let shift = fine - coarse;
        let span = 1usize << shift;
        let base: Vec<usize> = self
            .multi_index(coarse, idx)
            .iter()
            .map(|&i| i << shift)
            .collect();
        let d = self.dim();
        let total = span.pow(d as u32);
        let mut out = Vec::with_capacity(total);
        let mut offset = vec![0usize; d];
        for _ in 0..total {
            let multi: Vec<usize> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
            out.push(self.flat_index(fine, &multi));
            for a in (0..d).rev() {
                offset[a] += 1;
                if offset[a] < span {
                    break;
                }
                offset[a] = 0;
            }
        }
        out
    }
}
