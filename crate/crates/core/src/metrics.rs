//! Forecast accuracy metrics and the per-run report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check_same_shape(y: &Tensor, yhat: &Tensor, op: &'static str) -> Result<()> {
    if y.shape != yhat.shape {
        return Err(Error::Dimension {
            op,
            lhs: y.shape.clone(),
            rhs: yhat.shape.clone(),
        });
    }
    Ok(())
}

pub fn mse(y: &Tensor, yhat: &Tensor) -> Result<f64> {
    check_same_shape(y, yhat, "mse")?;
    let n = y.numel() as f64;
    Ok(y.data
        .iter()
        .zip(&yhat.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

pub fn mae(y: &Tensor, yhat: &Tensor) -> Result<f64> {
    check_same_shape(y, yhat, "mae")?;
    let n = y.numel() as f64;
    Ok(y.data
        .iter()
        .zip(&yhat.data)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n)
}

/// Symmetric MAPE in percent: (200/n) Σ |ŷ−y| / (|y|+|ŷ|), 0/0 terms are 0.
pub fn smape(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::Dimension {
            op: "smape",
            lhs: vec![y.len()],
            rhs: vec![yhat.len()],
        });
    }
    if y.is_empty() {
        return Err(Error::Metric("smape of empty series".to_string()));
    }
    let mut acc = 0.0;
    for (a, b) in y.iter().zip(yhat) {
        let denom = a.abs() + b.abs();
        if denom > 0.0 {
            acc += (b - a).abs() / denom;
        }
    }
    Ok(200.0 * acc / y.len() as f64)
}

/// Mean absolute scaled error: forecast MAE over the seasonal-naive
/// in-sample MAE at period `m`.
pub fn mase(y: &[f64], yhat: &[f64], insample: &[f64], m: usize) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::Dimension {
            op: "mase",
            lhs: vec![y.len()],
            rhs: vec![yhat.len()],
        });
    }
    if m == 0 || insample.len() <= m {
        return Err(Error::Metric(format!(
            "mase requires insample length > seasonal period (len {} vs m {m})",
            insample.len()
        )));
    }
    let denom: f64 = insample[m..]
        .iter()
        .zip(&insample[..insample.len() - m])
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / (insample.len() - m) as f64;
    if denom == 0.0 {
        return Err(Error::Metric(
            "mase: zero seasonal-naive denominator (constant in-sample series)".to_string(),
        ));
    }
    let num: f64 =
        y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64;
    Ok(num / denom)
}

/// Overall weighted average relative to a baseline's SMAPE and MASE.
pub fn owa(smape: f64, mase: f64, baseline_smape: f64, baseline_mase: f64) -> Result<f64> {
    if baseline_smape <= 0.0 || baseline_mase <= 0.0 {
        return Err(Error::Metric(
            "owa requires strictly positive baseline metrics".to_string(),
        ));
    }
    Ok(0.5 * (smape / baseline_smape + mase / baseline_mase))
}

/// Metrics at one evaluation horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub horizon: usize,
    pub mse: f64,
    pub mae: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smape: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mase: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub owa: Option<f64>,
}

/// Per-run evaluation report: per-horizon rows plus their mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run_id: String,
    pub horizons: Vec<HorizonMetrics>,
    pub avg_mse: f64,
    pub avg_mae: f64,
    /// true when metrics are computed on the normalized scale.
    pub normalized_scale: bool,
    pub runtime_seconds: f64,
    pub warnings: Vec<String>,
    /// Resolved configuration echo, sufficient to reproduce the run.
    pub config_echo: serde_json::Value,
}

impl MetricsReport {
    pub fn from_horizons(
        run_id: String,
        horizons: Vec<HorizonMetrics>,
        normalized_scale: bool,
        runtime_seconds: f64,
        warnings: Vec<String>,
        config_echo: serde_json::Value,
    ) -> MetricsReport {
        let n = horizons.len().max(1) as f64;
        let avg_mse = horizons.iter().map(|h| h.mse).sum::<f64>() / n;
        let avg_mae = horizons.iter().map(|h| h.mae).sum::<f64>() / n;
        MetricsReport {
            run_id,
            horizons,
            avg_mse,
            avg_mae,
            normalized_scale,
            runtime_seconds,
            warnings,
            config_echo,
        }
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("run {}\n", self.run_id));
        out.push_str(&format!(
            "scale: {}\n",
            if self.normalized_scale { "normalized" } else { "original" }
        ));
        out.push_str(&format!(
            "{:>8} {:>12} {:>12} {:>10} {:>10} {:>10}\n",
            "horizon", "mse", "mae", "smape", "mase", "owa"
        ));
        let opt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.4}"),
            None => "-".to_string(),
        };
        for h in &self.horizons {
            out.push_str(&format!(
                "{:>8} {:>12.6} {:>12.6} {:>10} {:>10} {:>10}\n",
                h.horizon,
                h.mse,
                h.mae,
                opt(h.smape),
                opt(h.mase),
                opt(h.owa)
            ));
        }
        out.push_str(&format!(
            "{:>8} {:>12.6} {:>12.6}\n",
            "avg", self.avg_mse, self.avg_mae
        ));
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}
