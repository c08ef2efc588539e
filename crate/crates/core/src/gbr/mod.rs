//! Gradient boosting regression with tree base learners, linear baselines,
//! and the comparison metrics.

mod boost;
mod compare;
mod linear;
mod loss;
mod metrics;
mod tree;

pub use boost::{fit_gbr, GbrConfig, GbrModel, Stage};
pub use compare::{compare_models, ComparisonTable, ModelSpec, SplitConfig};
pub use linear::{fit_baseline, LinearKind, LinearModel};
pub use loss::LossFunction;
pub use metrics::{metrics, MetricsTriple};
pub use tree::{Node, RegressionTree};

use crate::error::{Error, Result};

/// Row-major design matrix with targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<Vec<f64>>,
    targets: Vec<f64>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, targets: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        let d = feature_names.len();
        if rows.is_empty() || d == 0 {
            return Err(Error::InvalidInput("dataset needs at least one row and one feature".into()));
        }
        if rows.len() != targets.len() {
            return Err(Error::InvalidInput(format!(
                "{} rows but {} targets",
                rows.len(),
                targets.len()
            )));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        if !rows.iter().flatten().chain(&targets).all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Dataset {
            rows,
            targets,
            feature_names,
        })
    }

    /// Single-feature dataset named `x`.
    pub fn from_column(x: &[f64], y: &[f64]) -> Result<Self> {
        Dataset::new(x.iter().map(|&v| vec![v]).collect(), y.to_vec(), vec!["x".into()])
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }
}

pub(crate) fn check_rows(rows: &[Vec<f64>], d: usize) -> Result<()> {
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    Ok(())
}
