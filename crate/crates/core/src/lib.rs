//! Hyperuniformity diagnostics and multiscale Wasserstein bounds for point
//! processes on cubes.

pub mod certificates;
pub mod error;
pub mod geometry;
pub mod moments;
pub mod multiscale;
pub mod numeric;
pub mod processes;
pub mod transport;

pub use error::{Error, Result};
pub use geometry::{Cube, DyadicGrid, Metric};
pub use processes::{MeanDensity, Perturbation, PointSet, ProcessFamily, ProcessSpec};
