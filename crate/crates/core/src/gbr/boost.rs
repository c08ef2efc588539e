use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use super::loss::median;
use super::tree::{Node, RegressionTree};
use super::{check_rows, Dataset, LossFunction};
use crate::error::{Error, Result};

const MAGIC: &str = "covtrace-gbr v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbrConfig {
    pub stages: usize,
    pub max_depth: usize,
    /// Shrinkage ν in (0, 1].
    pub shrinkage: f64,
    pub loss: LossFunction,
    /// Recorded for provenance; fitting uses no randomness.
    pub seed: u64,
}

impl Default for GbrConfig {
    fn default() -> Self {
        GbrConfig {
            stages: 100,
            max_depth: 3,
            shrinkage: 0.1,
            loss: LossFunction::Squared,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub tree: RegressionTree,
    /// Line-search multiplier γₘ.
    pub multiplier: f64,
}

/// f(x) = f0 + Σₘ ν·γₘ·hₘ(x).
#[derive(Debug, Clone, PartialEq)]
pub struct GbrModel {
    pub f0: f64,
    pub shrinkage: f64,
    pub loss: LossFunction,
    pub n_features: usize,
    pub stages: Vec<Stage>,
    /// Mean training loss after the initial constant and after each stage.
    /// Not persisted.
    pub training_loss: Vec<f64>,
}

pub fn fit_gbr(data: &Dataset, config: &GbrConfig) -> Result<GbrModel> {
    if config.stages == 0 {
        return Err(Error::InvalidInput("stage count M must be at least 1".into()));
    }
    if config.max_depth == 0 {
        return Err(Error::InvalidInput("tree depth must be at least 1".into()));
    }
    if !(config.shrinkage > 0.0 && config.shrinkage <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "shrinkage {} not in (0, 1]",
            config.shrinkage
        )));
    }
    let rows = data.rows();
    let y = data.targets();
    let n = y.len() as f64;
    let loss = config.loss;

    let f0 = loss.best_constant(y);
    let mut f = vec![f0; y.len()];
    let mut model = GbrModel {
        f0,
        shrinkage: config.shrinkage,
        loss,
        n_features: data.n_features(),
        stages: Vec::with_capacity(config.stages),
        training_loss: vec![loss.total(y, &f) / n],
    };

    for _ in 0..config.stages {
        let residuals: Vec<f64> = y
            .iter()
            .zip(&f)
            .map(|(&yi, &fi)| loss.negative_gradient(yi, fi))
            .collect();
        let mut tree = RegressionTree::fit(rows, &residuals, config.max_depth);
        let multiplier = match loss {
            LossFunction::Squared => {
                let h: Vec<f64> = rows.iter().map(|r| tree.predict(r)).collect();
                squared_line_search(y, &f, &h)
            }
            LossFunction::Absolute => {
                // per-leaf median of the current residuals y − F
                let mut by_leaf: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
                for (i, r) in rows.iter().enumerate() {
                    by_leaf.entry(tree.leaf_index(r)).or_default().push(y[i] - f[i]);
                }
                for (leaf, vals) in by_leaf {
                    tree.set_leaf_value(leaf, median(&vals));
                }
                1.0
            }
        };
        let step = config.shrinkage * multiplier;
        for (fi, r) in f.iter_mut().zip(rows) {
            *fi += step * tree.predict(r);
        }
        let stage_loss = loss.total(y, &f) / n;
        if loss == LossFunction::Squared {
            let prev = *model.training_loss.last().expect("initial loss recorded");
            debug_assert!(
                stage_loss <= prev + 1e-12 * prev.abs().max(1e-300),
                "training loss rose from {prev} to {stage_loss}"
            );
        }
        model.training_loss.push(stage_loss);
        model.stages.push(Stage { tree, multiplier });
    }
    Ok(model)
}

/// argmin over γ of Σ ½(yᵢ − fᵢ − γhᵢ)²; zero for an all-zero learner.
fn squared_line_search(y: &[f64], f: &[f64], h: &[f64]) -> f64 {
    let num: f64 = y.iter().zip(f).zip(h).map(|((&yi, &fi), &hi)| (yi - fi) * hi).sum();
    let den: f64 = h.iter().map(|v| v * v).sum();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

impl GbrModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.stages.iter().fold(self.f0, |acc, s| {
            acc + self.shrinkage * s.multiplier * s.tree.predict(row)
        })
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_rows(rows, self.n_features)?;
        Ok(rows.iter().map(|r| self.predict_row(r)).collect())
    }

    /// Textual dump; [`GbrModel::read`] restores it exactly.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "loss {}", self.loss)?;
        writeln!(out, "shrinkage {}", self.shrinkage)?;
        writeln!(out, "f0 {}", self.f0)?;
        writeln!(out, "features {}", self.n_features)?;
        writeln!(out, "stages {}", self.stages.len())?;
        for s in &self.stages {
            writeln!(out, "stage {} {}", s.multiplier, s.tree.nodes().len())?;
            for n in s.tree.nodes() {
                match *n {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(out, "split {feature} {threshold} {left} {right}")?,
                    Node::Leaf { value } => writeln!(out, "leaf {value}")?,
                }
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let bad = |m: String| Error::format("gbr model file", m);
        let mut lines = BufReader::new(reader).lines();
        let mut next = || -> Result<Vec<String>> {
            let line = lines
                .next()
                .ok_or_else(|| bad("truncated".into()))?
                .map_err(|e| bad(e.to_string()))?;
            Ok(line.split(' ').map(str::to_string).collect())
        };
        fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
            s.parse()
                .map_err(|_| Error::format("gbr model file", format!("bad number {s:?}")))
        }
        let keyed = |parts: Vec<String>, key: &str| -> Result<String> {
            match parts.as_slice() {
                [k, v] if k == key => Ok(v.clone()),
                _ => Err(bad(format!("expected `{key} <value>`, got {:?}", parts.join(" ")))),
            }
        };
        if next()?.join(" ") != MAGIC {
            return Err(bad("unsupported header".into()));
        }
        let loss: LossFunction = keyed(next()?, "loss")?.parse()?;
        let shrinkage = num(&keyed(next()?, "shrinkage")?)?;
        let f0 = num(&keyed(next()?, "f0")?)?;
        let n_features = num(&keyed(next()?, "features")?)?;
        let n_stages: usize = num(&keyed(next()?, "stages")?)?;
        let mut stages = Vec::with_capacity(n_stages);
        for _ in 0..n_stages {
            let head = next()?;
            let [tag, mult, count] = head.as_slice() else {
                return Err(bad(format!("bad stage line {:?}", head.join(" "))));
            };
            if tag != "stage" {
                return Err(bad(format!("expected stage, got {tag:?}")));
            }
            let count: usize = num(count)?;
            let mut nodes = Vec::with_capacity(count);
            for _ in 0..count {
                let parts = next()?;
                let node = match parts.as_slice() {
                    [t, v] if t == "leaf" => Node::Leaf { value: num(v)? },
                    [t, f, th, l, r] if t == "split" => {
                        let feature: usize = num(f)?;
                        if feature >= n_features {
                            return Err(bad(format!("split on feature {feature} of {n_features}")));
                        }
                        Node::Split {
                            feature,
                            threshold: num(th)?,
                            left: num(l)?,
                            right: num(r)?,
                        }
                    }
                    _ => return Err(bad(format!("bad node line {:?}", parts.join(" ")))),
                };
                nodes.push(node);
            }
            let tree = RegressionTree::from_nodes(nodes)
                .ok_or_else(|| bad("inconsistent tree node indices".into()))?;
            stages.push(Stage {
                tree,
                multiplier: num(mult)?,
            });
        }
        Ok(GbrModel {
            f0,
            shrinkage,
            loss,
            n_features,
            stages,
            training_loss: Vec::new(),
        })
    }
}
