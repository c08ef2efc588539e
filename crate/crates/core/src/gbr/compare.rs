use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{fit_baseline, fit_gbr, metrics, Dataset, GbrConfig, LinearKind, MetricsTriple};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    /// Share of rows held out, rounded to at least one row and leaving at
    /// least two for training.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.25,
            seed: 0,
        }
    }
}

impl SplitConfig {
    /// (train, test) row indices.
    pub fn split(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        if n < 4 {
            return Err(Error::InvalidInput(format!(
                "need at least 4 rows to split, got {n}"
            )));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidInput(format!(
                "test fraction {} not in (0, 1)",
                self.test_fraction
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let n_test = ((n as f64 * self.test_fraction).round() as usize).clamp(1, n - 2);
        let test = idx.split_off(n - n_test);
        Ok((idx, test))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    Gbr(GbrConfig),
    Linear(LinearKind),
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            ModelSpec::Gbr(_) => "gbr".to_string(),
            ModelSpec::Linear(k) => k.to_string(),
        }
    }

    /// GBR plus the four linear baselines.
    pub fn default_suite(gbr: GbrConfig) -> Vec<ModelSpec> {
        vec![
            ModelSpec::Gbr(gbr),
            ModelSpec::Linear(LinearKind::Ols),
            ModelSpec::Linear(LinearKind::Ridge { lambda: 1.0 }),
            ModelSpec::Linear(LinearKind::Lasso { lambda: 1.0 }),
            ModelSpec::Linear(LinearKind::ElasticNet {
                lambda: 1.0,
                alpha: 0.5,
            }),
        ]
    }
}

/// Held-out metrics per model, in request order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<(String, MetricsTriple)>,
    pub n_train: usize,
    pub n_test: usize,
}

impl ComparisonTable {
    pub fn get(&self, name: &str) -> Option<&MetricsTriple> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# covtrace comparison v1 n_train={} n_test={}", self.n_train, self.n_test)?;
        writeln!(out, "model,explained_variance,mae,mse")?;
        for (name, m) in &self.rows {
            let ev = m
                .explained_variance
                .map_or_else(|| "undefined".to_string(), |v| v.to_string());
            writeln!(out, "\"{name}\",{ev},{},{}", m.mae, m.mse)?;
        }
        Ok(())
    }
}

pub fn compare_models(data: &Dataset, split: &SplitConfig, models: &[ModelSpec]) -> Result<ComparisonTable> {
    let (train_idx, test_idx) = split.split(data.len())?;
    let train = data.subset(&train_idx);
    let test = data.subset(&test_idx);
    let mut rows = Vec::with_capacity(models.len());
    for spec in models {
        let pred = match spec {
            ModelSpec::Gbr(cfg) => fit_gbr(&train, cfg)?.predict(test.rows())?,
            ModelSpec::Linear(kind) => fit_baseline(&train, *kind)?.predict(test.rows())?,
        };
        rows.push((spec.name(), metrics(test.targets(), &pred)?));
    }
    Ok(ComparisonTable {
        rows,
        n_train: train.len(),
        n_test: test.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let s = SplitConfig { test_fraction: 0.3, seed: 4 };
        let (a, b) = s.split(10).unwrap();
        assert_eq!(s.split(10).unwrap(), (a.clone(), b.clone()));
        assert_eq!(b.len(), 3);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(s.split(3).is_err());
        assert_eq!(SplitConfig { test_fraction: 0.01, seed: 0 }.split(4).unwrap().1.len(), 1);
        assert_eq!(SplitConfig { test_fraction: 0.99, seed: 0 }.split(4).unwrap().1.len(), 2);
    }

    #[test]
    fn linear_data_favors_ols() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 2.0).collect();
        let d = Dataset::from_column(&x, &y).unwrap();
        let t = compare_models(&d, &SplitConfig::default(), &ModelSpec::default_suite(GbrConfig::default())).unwrap();
        assert_eq!(t.rows.len(), 5);
        let ols = t.get("ols").unwrap().mse;
        assert!(ols < 1e-18);
        assert!(ols <= t.get("gbr").unwrap().mse);
    }

    #[test]
    fn step_data_favors_gbr() {
        let x: Vec<f64> = (0..60).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| if *v < 30.0 { 10.0 } else { 50.0 }).collect();
        let d = Dataset::from_column(&x, &y).unwrap();
        let gbr = GbrConfig { stages: 50, max_depth: 1, shrinkage: 0.5, ..Default::default() };
        let t = compare_models(
            &d,
            &SplitConfig { test_fraction: 0.25, seed: 1 },
            &[ModelSpec::Gbr(gbr), ModelSpec::Linear(LinearKind::Ols)],
        )
        .unwrap();
        assert!(t.get("gbr").unwrap().mse < t.get("ols").unwrap().mse);
    }

    #[test]
    fn single_model_single_row_csv() {
        let x: Vec<f64> = (0..8).map(f64::from).collect();
        let d = Dataset::from_column(&x, &x).unwrap();
        let t = compare_models(&d, &SplitConfig::default(), &[ModelSpec::Linear(LinearKind::Ols)]).unwrap();
        assert_eq!(t.rows.len(), 1);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().starts_with("\"ols\","));
    }
}
