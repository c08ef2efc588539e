//! Multinomial logistic regression over bag-of-token features.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{normalize, LeafScores, Scorer};
use crate::case_model::{CaseReport, SubCategory, LEAF_COUNT};
use crate::error::{Error, Result};

const MAGIC: &str = "covtrace-linear-text-model v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// L2 penalty on the token weights.
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1.0,
            epochs: 1000,
            seed: 7,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearTextModel {
    vocabulary: BTreeMap<String, usize>,
    /// Row per vocabulary entry, column per leaf.
    weights: Vec<LeafScores>,
    bias: LeafScores,
    config: TrainConfig,
    /// Regularized mean cross-entropy before training and after each epoch.
    /// Not persisted.
    pub loss_history: Vec<f64>,
}

/// Narrative tokens plus marker tokens for the structured fields.
fn features_tokens(report: &CaseReport) -> Vec<String> {
    let mut t = normalize(&report.narrative);
    t.push(format!("__travel_{}", report.travel_history.as_str()));
    for c in &report.contacts {
        let rel = serde_json::to_value(c.relationship).unwrap_or_default();
        t.push(format!("__contact_{}", rel.as_str().unwrap_or_default()));
        if let Some(l) = c.location_kind {
            t.push(format!("__contact_at_{l}"));
        }
    }
    t.sort();
    t.dedup();
    t
}

type SparseRow = Vec<(usize, f64)>;

/// Unit-norm binary presence vector over the known vocabulary.
fn featurize(vocab: &BTreeMap<String, usize>, report: &CaseReport) -> SparseRow {
    let mut idx: Vec<usize> = features_tokens(report)
        .iter()
        .filter_map(|t| vocab.get(t).copied())
        .collect();
    idx.sort_unstable();
    idx.dedup();
    let v = if idx.is_empty() { 0.0 } else { 1.0 / (idx.len() as f64).sqrt() };
    idx.into_iter().map(|i| (i, v)).collect()
}

fn softmax(logits: &LeafScores) -> LeafScores {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.map(|z| (z - max).exp());
    let sum: f64 = exp.iter().sum();
    exp.map(|e| e / sum)
}

impl LinearTextModel {
    fn logits(&self, row: &SparseRow) -> LeafScores {
        let mut z = self.bias;
        for &(i, v) in row {
            for (zk, wk) in z.iter_mut().zip(&self.weights[i]) {
                *zk += v * wk;
            }
        }
        z
    }

    pub fn vocabulary_len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn config(&self) -> TrainConfig {
        self.config
    }

    fn loss(&self, rows: &[SparseRow], targets: &[usize]) -> f64 {
        let ce: f64 = rows
            .iter()
            .zip(targets)
            .map(|(row, &y)| {
                let z = self.logits(row);
                let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                lse - z[y]
            })
            .sum();
        let reg: f64 = self.weights.iter().flatten().map(|w| w * w).sum();
        ce / rows.len() as f64 + 0.5 * self.config.l2 * reg
    }

    /// Writes the textual dump; [`LinearTextModel::read`] restores it exactly.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let row = |v: &LeafScores| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "learning_rate {}", self.config.learning_rate)?;
        writeln!(out, "epochs {}", self.config.epochs)?;
        writeln!(out, "seed {}", self.config.seed)?;
        writeln!(out, "l2 {}", self.config.l2)?;
        let leaves: Vec<&str> = SubCategory::ALL.iter().map(|l| l.as_str()).collect();
        writeln!(out, "leaves {}", leaves.join(" "))?;
        writeln!(out, "bias {}", row(&self.bias))?;
        writeln!(out, "vocabulary {}", self.vocabulary.len())?;
        for (token, &i) in &self.vocabulary {
            writeln!(out, "{token} {}", row(&self.weights[i]))?;
        }
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let bad = |m: String| Error::format("linear model file", m);
        let mut lines = BufReader::new(reader).lines();
        let mut next = |expect: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("truncated before {expect}")))?
                .map_err(|e| bad(e.to_string()))?;
            Ok(line)
        };
        if next("header")? != MAGIC {
            return Err(bad("unsupported header".into()));
        }
        fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .ok_or_else(|| Error::format("linear model file", format!("expected {key}")))
        }
        fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
            s.parse()
                .map_err(|_| Error::format("linear model file", format!("bad number {s:?}")))
        }
        fn floats(s: &str) -> Result<LeafScores> {
            let v: Vec<f64> = s.split(' ').map(num).collect::<Result<_>>()?;
            v.try_into()
                .map_err(|_| Error::format("linear model file", "expected one value per leaf"))
        }
        let config = TrainConfig {
            learning_rate: num(field(&next("learning_rate")?, "learning_rate")?)?,
            epochs: num(field(&next("epochs")?, "epochs")?)?,
            seed: num(field(&next("seed")?, "seed")?)?,
            l2: num(field(&next("l2")?, "l2")?)?,
        };
        let leaves = next("leaves")?;
        let expected: Vec<&str> = SubCategory::ALL.iter().map(|l| l.as_str()).collect();
        if field(&leaves, "leaves")? != expected.join(" ") {
            return Err(bad("leaf order differs from this build's taxonomy".into()));
        }
        let bias = floats(field(&next("bias")?, "bias")?)?;
        let n: usize = num(field(&next("vocabulary")?, "vocabulary")?)?;
        let mut vocabulary = BTreeMap::new();
        let mut weights = Vec::with_capacity(n);
        for _ in 0..n {
            let line = next("vocabulary entry")?;
            let (token, rest) = line
                .split_once(' ')
                .ok_or_else(|| bad(format!("bad vocabulary line {line:?}")))?;
            vocabulary.insert(token.to_string(), weights.len());
            weights.push(floats(rest)?);
        }
        Ok(LinearTextModel {
            vocabulary,
            weights,
            bias,
            config,
            loss_history: Vec::new(),
        })
    }
}

impl Scorer for LinearTextModel {
    /// Softmax class probabilities.
    fn scores(&self, report: &CaseReport) -> LeafScores {
        softmax(&self.logits(&featurize(&self.vocabulary, report)))
    }
}

/// Fits the model by full-batch gradient descent on the L2-regularized
/// softmax cross-entropy. Feature rows have unit norm, so any learning rate up
/// to 1 keeps the loss non-increasing.
pub fn train_linear<'a>(
    corpus: impl IntoIterator<Item = (&'a CaseReport, SubCategory)>,
    config: TrainConfig,
) -> Result<LinearTextModel> {
    let corpus: Vec<(&CaseReport, SubCategory)> = corpus.into_iter().collect();
    if corpus.is_empty() {
        return Err(Error::InvalidInput("training corpus is empty".into()));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) || config.l2 < 0.0 {
        return Err(Error::InvalidInput(format!("invalid training config {config:?}")));
    }

    let mut vocabulary = BTreeMap::new();
    for (r, _) in &corpus {
        for t in features_tokens(r) {
            vocabulary.entry(t).or_insert(0);
        }
    }
    for (i, slot) in vocabulary.values_mut().enumerate() {
        *slot = i;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let weights = (0..vocabulary.len())
        .map(|_| std::array::from_fn(|_| rng.gen_range(-0.01..0.01)))
        .collect();
    let rows: Vec<SparseRow> = corpus.iter().map(|(r, _)| featurize(&vocabulary, r)).collect();
    let targets: Vec<usize> = corpus.iter().map(|(_, l)| l.index()).collect();

    let mut model = LinearTextModel {
        vocabulary,
        weights,
        bias: [0.0; LEAF_COUNT],
        config,
        loss_history: Vec::with_capacity(config.epochs + 1),
    };
    model.loss_history.push(model.loss(&rows, &targets));

    let n = rows.len() as f64;
    for _ in 0..config.epochs {
        let mut grad_w = vec![[0.0; LEAF_COUNT]; model.weights.len()];
        let mut grad_b = [0.0; LEAF_COUNT];
        for (row, &y) in rows.iter().zip(&targets) {
            let mut p = softmax(&model.logits(row));
            p[y] -= 1.0;
            for k in 0..LEAF_COUNT {
                grad_b[k] += p[k] / n;
            }
            for &(i, v) in row {
                for k in 0..LEAF_COUNT {
                    grad_w[i][k] += v * p[k] / n;
                }
            }
        }
        for (w, g) in model.weights.iter_mut().zip(&grad_w) {
            for k in 0..LEAF_COUNT {
                w[k] -= config.learning_rate * (g[k] + config.l2 * w[k]);
            }
        }
        for k in 0..LEAF_COUNT {
            model.bias[k] -= config.learning_rate * grad_b[k];
        }
        model.loss_history.push(model.loss(&rows, &targets));
    }
    Ok(model)
}

/// As [`train_linear`], with leaves given by name.
pub fn train_linear_named<'a>(
    corpus: impl IntoIterator<Item = (&'a CaseReport, &'a str)>,
    config: TrainConfig,
) -> Result<LinearTextModel> {
    let parsed: Vec<(&CaseReport, SubCategory)> = corpus
        .into_iter()
        .map(|(r, name)| Ok((r, name.parse::<SubCategory>()?)))
        .collect::<Result<_>>()?;
    train_linear(parsed, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_model::TravelHistory;
    use crate::classify::{classify_case, evaluate};

    fn doc(id: usize, text: &str) -> CaseReport {
        let mut r = CaseReport::new(id.to_string(), "2020-01-25".parse().unwrap(), "p", "c");
        r.narrative = text.to_string();
        r.travel_history = TravelHistory::None;
        r
    }

    #[test]
    fn separable_classes_fit_perfectly() {
        let texts = [
            ("alpha beta gamma", SubCategory::Train),
            ("beta gamma", SubCategory::Train),
            ("alpha gamma", SubCategory::Train),
            ("delta epsilon zeta", SubCategory::Hotel),
            ("epsilon zeta", SubCategory::Hotel),
            ("delta zeta", SubCategory::Hotel),
        ];
        let docs: Vec<_> = texts.iter().enumerate().map(|(i, (t, _))| doc(i, t)).collect();
        let labeled: Vec<_> = docs.iter().zip(texts.iter().map(|t| t.1)).collect();
        let m = train_linear(labeled.clone(), TrainConfig::default()).unwrap();
        assert_eq!(evaluate(&m, labeled).accuracy, 1.0);
        for w in m.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss rose: {w:?}");
        }
    }

    #[test]
    fn single_example_memorized() {
        let d = doc(0, "took the coach to the city");
        let m = train_linear([(&d, SubCategory::Bus)], TrainConfig::default()).unwrap();
        assert_eq!(classify_case(&d, &m).subcategory(), SubCategory::Bus);
    }

    #[test]
    fn errors() {
        assert!(train_linear(std::iter::empty(), TrainConfig::default()).is_err());
        let d = doc(0, "x");
        assert!(matches!(
            train_linear_named([(&d, "spaceship")], TrainConfig::default()),
            Err(Error::UnknownLeaf(_))
        ));
    }

    #[test]
    fn fixed_seed_is_bit_reproducible() {
        let docs: Vec<_> = (0..20).map(|i| doc(i, if i % 2 == 0 { "bus ride" } else { "hotel stay" })).collect();
        let leaf = |i: usize| if i % 2 == 0 { SubCategory::Bus } else { SubCategory::Hotel };
        let train = || {
            train_linear(docs.iter().enumerate().map(|(i, d)| (d, leaf(i))), TrainConfig::default()).unwrap()
        };
        let (a, b) = (train(), train());
        assert_eq!(a, b);
        let other = train_linear(
            docs.iter().enumerate().map(|(i, d)| (d, leaf(i))),
            TrainConfig { seed: 99, ..Default::default() },
        )
        .unwrap();
        assert_ne!(a.weights, other.weights);
    }

    #[test]
    fn dump_round_trip_is_exact() {
        let docs: Vec<_> = (0..6).map(|i| doc(i, ["red bus", "blue train", "green hotel"][i % 3])).collect();
        let leaves = [SubCategory::Bus, SubCategory::Train, SubCategory::Hotel];
        let m = train_linear(
            docs.iter().enumerate().map(|(i, d)| (d, leaves[i % 3])),
            TrainConfig { epochs: 17, ..Default::default() },
        )
        .unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let mut back = LinearTextModel::read(&buf[..]).unwrap();
        back.loss_history = m.loss_history.clone();
        assert_eq!(back, m);
        for d in &docs {
            assert_eq!(back.scores(d), m.scores(d));
        }
        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        assert_eq!(again, buf);
        assert!(LinearTextModel::read(&b"not a model\n"[..]).is_err());
    }
}
