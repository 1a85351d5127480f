//! Regression error metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths(y: &[f64], y_hat: &[f64], min: usize) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::Shape(format!(
            "{} targets but {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    if y.len() < min {
        return Err(Error::Metric(format!("need at least {min} values, got {}", y.len())));
    }
    Ok(())
}

/// Coefficient of determination, `1 - RSS / TSS`.
pub fn r2(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat, 2)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if tss == 0.0 {
        return Err(Error::Metric("R2 undefined: targets have zero variance".into()));
    }
    let rss: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - rss / tss)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat, 1)?;
    let mse = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat, 1)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Mean absolute percentage error, in percent.
pub fn mape(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat, 1)?;
    if let Some(i) = y.iter().position(|&v| v == 0.0) {
        return Err(Error::Metric(format!("MAPE undefined: target {i} is zero")));
    }
    Ok(y.iter().zip(y_hat).map(|(a, b)| ((a - b) / a).abs()).sum::<f64>() / y.len() as f64 * 100.0)
}

/// `(1 - sum |y - y_hat| / sum |y|) * 100`
pub fn accuracy_pct(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat, 1)?;
    let denom: f64 = y.iter().map(|v| v.abs()).sum();
    if denom == 0.0 {
        return Err(Error::Metric("accuracy undefined: all targets are zero".into()));
    }
    let err: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum();
    Ok((1.0 - err / denom) * 100.0)
}

/// The five reported metrics for one set of predictions.
///
/// `mape` is stored as a fraction (percent / 100).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub r2: f64,
    pub rmse: f64,
    pub mae: f64,
    pub mape: f64,
    pub accuracy_pct: f64,
}

impl MetricSet {
    pub fn compute(y: &[f64], y_hat: &[f64]) -> Result<Self> {
        Ok(Self {
            r2: r2(y, y_hat)?,
            rmse: rmse(y, y_hat)?,
            mae: mae(y, y_hat)?,
            mape: mape(y, y_hat)? / 100.0,
            accuracy_pct: accuracy_pct(y, y_hat)?,
        })
    }

    /// Metrics for min-max scaled targets.
    ///
    /// The scaled training targets always contain an exact zero (the fold
    /// minimum), where the percentage error is undefined. R2, RMSE and MAE
    /// therefore come from the scaled values while MAPE and accuracy come
    /// from the same predictions in kilograms.
    pub fn compute_scaled(y_scaled: &[f64], y_hat_scaled: &[f64], y_kg: &[f64], y_hat_kg: &[f64]) -> Result<Self> {
        Ok(Self {
            r2: r2(y_scaled, y_hat_scaled)?,
            rmse: rmse(y_scaled, y_hat_scaled)?,
            mae: mae(y_scaled, y_hat_scaled)?,
            mape: mape(y_kg, y_hat_kg)? / 100.0,
            accuracy_pct: accuracy_pct(y_kg, y_hat_kg)?,
        })
    }

    pub fn mean(sets: &[MetricSet]) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::Metric("cannot average zero metric sets".into()));
        }
        let n = sets.len() as f64;
        let avg = |f: fn(&MetricSet) -> f64| sets.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            r2: avg(|m| m.r2),
            rmse: avg(|m| m.rmse),
            mae: avg(|m| m.mae),
            mape: avg(|m| m.mape),
            accuracy_pct: avg(|m| m.accuracy_pct),
        })
    }

    /// Values in table row order: R2, RMSE, MAE, MAPE, Accuracy%.
    pub fn values(&self) -> [f64; 5] {
        [self.r2, self.rmse, self.mae, self.mape, self.accuracy_pct]
    }
}

/// Row labels of the metric tables, in order.
pub const METRIC_LABELS: [&str; 5] = ["R2", "RMSE", "MAE", "MAPE", "Accuracy%"];
