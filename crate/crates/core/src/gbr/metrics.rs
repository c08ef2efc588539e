use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsTriple {
    /// 1 − var(y − ŷ)/var(y). `None` when var(y) = 0 and the residuals are
    /// not all zero.
    pub explained_variance: Option<f64>,
    pub mae: f64,
    pub mse: f64,
}

/// Population variance by Welford's update.
fn variance(values: impl Iterator<Item = f64>) -> f64 {
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for v in values {
        n += 1.0;
        let delta = v - mean;
        mean += delta / n;
        m2 += delta * (v - mean);
    }
    if n > 0.0 {
        m2 / n
    } else {
        0.0
    }
}

pub fn metrics(y_true: &[f64], y_pred: &[f64]) -> Result<MetricsTriple> {
    if y_true.len() != y_pred.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} targets, {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::InvalidInput("metrics need at least one value".into()));
    }
    let n = y_true.len() as f64;
    let resid = || y_true.iter().zip(y_pred).map(|(t, p)| t - p);
    let mse = resid().map(|r| r * r).sum::<f64>() / n;
    let mae = resid().map(f64::abs).sum::<f64>() / n;
    let var_y = variance(y_true.iter().copied());
    let explained_variance = if var_y > 0.0 {
        Some(1.0 - variance(resid()) / var_y)
    } else if resid().all(|r| r == 0.0) {
        Some(1.0)
    } else {
        None
    };
    Ok(MetricsTriple {
        explained_variance,
        mae,
        mse,
    })
}
