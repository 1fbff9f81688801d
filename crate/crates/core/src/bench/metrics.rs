//! R², RMSE, MAE and the RMSE/MAE dispersion ratio.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    PerFunction,
    Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub r2: f64,
    pub rmse: f64,
    pub mae: f64,
    /// `None` when MAE is zero.
    pub rmse_mae_ratio: Option<f64>,
    pub n_points: usize,
    pub scope: Scope,
}

/// Standard definitions; SS_tot uses the mean of `truth`.
pub fn compute_metrics(pred: &[f64], truth: &[f64]) -> Result<MetricsReport> {
    if pred.len() != truth.len() {
        return Err(Error::Metric(format!(
            "{} predictions for {} truth values",
            pred.len(),
            truth.len()
        )));
    }
    let n = truth.len();
    if n < 2 {
        return Err(Error::Metric(format!("need at least 2 points, got {n}")));
    }
    let nf = n as f64;
    let mean = truth.iter().sum::<f64>() / nf;
    let (mut ss_res, mut ss_tot, mut abs) = (0.0, 0.0, 0.0);
    for (&p, &t) in pred.iter().zip(truth) {
        let r = t - p;
        ss_res += r * r;
        ss_tot += (t - mean) * (t - mean);
        abs += r.abs();
    }
    if ss_tot == 0.0 {
        return Err(Error::Metric("truth is constant, R² is undefined".into()));
    }
    let rmse = (ss_res / nf).sqrt();
    let mae = abs / nf;
    Ok(MetricsReport {
        r2: 1.0 - ss_res / ss_tot,
        rmse,
        mae,
        rmse_mae_ratio: (mae > 0.0).then(|| rmse / mae),
        n_points: n,
        scope: Scope::PerFunction,
    })
}

/// Mean and sample standard deviation (n - 1); the deviation is zero for a
/// single value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
