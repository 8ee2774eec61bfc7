//! Log-log slope fits and the logarithmic-correction comparison.

use hyperwass_core::numeric::{fit_line, t_quantile_975};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One `(N, mean cost, standard error)` entry of a scaling table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingPoint {
    pub n: f64,
    pub cost: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_ci: (f64, f64),
    pub points: usize,
    pub excluded: usize,
}

/// Relative error floor so that exact (zero-variance) costs keep finite weights.
const MIN_LOG_SE: f64 = 1e-9;

fn log_weights(rows: &[ScalingPoint]) -> Vec<f64> {
    rows.iter()
        .map(|r| {
            let se = if r.stderr.is_finite() { r.stderr / r.cost } else { 0.0 };
            1.0 / se.max(MIN_LOG_SE).powi(2)
        })
        .collect()
}

fn usable(table: &[ScalingPoint]) -> (Vec<ScalingPoint>, usize) {
    let rows: Vec<ScalingPoint> = table.iter().copied().filter(|r| r.cost > 0.0 && r.n > 0.0).collect();
    let excluded = table.len() - rows.len();
    if excluded > 0 {
        log::warn!("slope fit: excluded {excluded} row(s) with non-positive cost");
    }
    (rows, excluded)
}

/// Weighted least squares of `ln cost` on `ln N` with weights `1/se²` of the
/// log cost, and a 95% interval for the slope.
pub fn fit_slope(table: &[ScalingPoint]) -> Result<SlopeFit, CliError> {
    let (rows, excluded) = usable(table);
    if rows.len() < 3 {
        return Err(CliError::Numeric(format!(
            "a slope fit needs at least 3 rows with positive cost, got {}",
            rows.len()
        )));
    }
    let x: Vec<f64> = rows.iter().map(|r| r.n.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.cost.ln()).collect();
    let fit = fit_line(&x, &y, &log_weights(&rows))
        .ok_or_else(|| CliError::Numeric("slope fit needs at least two distinct N".into()))?;
    let half = t_quantile_975(rows.len() - 2) * fit.slope_se;
    Ok(SlopeFit {
        slope: fit.slope,
        intercept: fit.intercept,
        slope_ci: (fit.slope - half, fit.slope + half),
        points: rows.len(),
        excluded,
    })
}

/// Comparison of `cost ≈ c N` against `cost ≈ c N (ln N)^{p/2}`, each with a
/// single fitted constant, plus the free fit `ln(cost/N) = α + β ln ln N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogCorrection {
    pub log_exponent: f64,
    pub rss_linear: f64,
    pub rss_log_corrected: f64,
    pub log_corrected_better: bool,
    pub beta: Option<f64>,
    pub beta_ci: Option<(f64, f64)>,
}

fn constant_fit_rss(y: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    let mean = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    y.iter().zip(w).map(|(a, b)| b * (a - mean).powi(2)).sum()
}

pub fn fit_log_correction(table: &[ScalingPoint], p: f64) -> Result<LogCorrection, CliError> {
    let (rows, _) = usable(table);
    let rows: Vec<ScalingPoint> = rows.into_iter().filter(|r| r.n > 1.0).collect();
    if rows.len() < 3 {
        return Err(CliError::Numeric(format!(
            "a log-correction fit needs at least 3 rows with N > 1, got {}",
            rows.len()
        )));
    }
    let w = log_weights(&rows);
    let ratio: Vec<f64> = rows.iter().map(|r| (r.cost / r.n).ln()).collect();
    let lnln: Vec<f64> = rows.iter().map(|r| r.n.ln().ln()).collect();
    let corrected: Vec<f64> = ratio.iter().zip(&lnln).map(|(y, l)| y - 0.5 * p * l).collect();
    let rss_linear = constant_fit_rss(&ratio, &w);
    let rss_log_corrected = constant_fit_rss(&corrected, &w);
    let free = fit_line(&lnln, &ratio, &w);
    Ok(LogCorrection {
        log_exponent: 0.5 * p,
        rss_linear,
        rss_log_corrected,
        log_corrected_better: rss_log_corrected < rss_linear,
        beta: free.map(|f| f.slope),
        beta_ci: free.map(|f| {
            let half = t_quantile_975(rows.len() - 2) * f.slope_se;
            (f.slope - half, f.slope + half)
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact(costs: impl Fn(f64) -> f64, ns: &[f64]) -> Vec<ScalingPoint> {
        ns.iter()
            .map(|&n| ScalingPoint {
                n,
                cost: costs(n),
                stderr: 0.01 * costs(n),
            })
            .collect()
    }

    #[test]
    fn linear_costs_give_unit_slope() {
        let rows = exact(|n| 7.0 * n, &[16.0, 64.0, 256.0, 1024.0]);
        let fit = fit_slope(&rows).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-9);
        assert!((fit.intercept - 7f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn n_log_n_slope() {
        let ns: Vec<f64> = (3..=8).map(|k| 4f64.powi(k)).collect();
        let fit = fit_slope(&exact(|n| n * n.ln(), &ns)).unwrap();
        assert!(fit.slope > 1.05 && fit.slope < 1.25, "{fit:?}");
    }

    #[test]
    fn two_rows_rejected() {
        assert!(fit_slope(&exact(|n| n, &[4.0, 16.0])).is_err());
    }

    #[test]
    fn non_positive_costs_excluded() {
        let mut rows = exact(|n| 3.0 * n, &[4.0, 16.0, 64.0, 256.0]);
        rows[1].cost = 0.0;
        let fit = fit_slope(&rows).unwrap();
        assert_eq!(fit.excluded, 1);
        assert_eq!(fit.points, 3);
    }

    #[test]
    fn log_corrected_model_recognized() {
        let ns: Vec<f64> = (3..=7).map(|k| 4f64.powi(k)).collect();
        let lc = fit_log_correction(&exact(|n| 2.0 * n * n.ln(), &ns), 2.0).unwrap();
        assert!(lc.log_corrected_better);
        assert!(lc.rss_log_corrected < 1e-12);
        assert!((lc.beta.unwrap() - 1.0).abs() < 1e-9);
        let flat = fit_log_correction(&exact(|n| 2.0 * n, &ns), 2.0).unwrap();
        assert!(!flat.log_corrected_better);
    }
}
