//! Infection-source classification.
//!
//! A [`Scorer`] maps a case report to one non-negative evidence score per
//! taxonomy leaf. [`classify_case`] normalizes the scores to unit mass, picks
//! the highest-scoring leaf (ties resolved by [`SubCategory::PRIORITY`]) and
//! abstains to `unknown` when the winning share is below the threshold.

mod linear;
mod rules;

pub use linear::{train_linear, train_linear_named, LinearTextModel, TrainConfig};
pub use rules::{Rule, RuleSet};

use std::collections::BTreeMap;
use std::io::Write;

use crate::case_model::{CaseReport, InfectionLabel, SubCategory, LEAF_COUNT};

/// Default abstention threshold on the normalized winning score.
pub const DEFAULT_THRESHOLD: f64 = 0.2;

pub type LeafScores = [f64; LEAF_COUNT];

pub trait Scorer {
    /// Non-negative evidence per leaf, indexed by [`SubCategory::index`].
    fn scores(&self, report: &CaseReport) -> LeafScores;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn scores(&self, report: &CaseReport) -> LeafScores {
        (**self).scores(report)
    }
}

/// Lowercases, replaces every non-alphanumeric character with a space and
/// splits on whitespace.
pub fn normalize(text: &str) -> Vec<String> {
    text.chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Winning leaf under the tie-break order, or `None` when every score is zero.
pub fn argmax_leaf(scores: &LeafScores) -> Option<SubCategory> {
    SubCategory::PRIORITY
        .into_iter()
        .filter(|l| scores[l.index()] > 0.0)
        .fold(None, |best: Option<SubCategory>, l| match best {
            Some(b) if scores[b.index()] >= scores[l.index()] => Some(b),
            _ => Some(l),
        })
}

pub fn classify_case(report: &CaseReport, scorer: &impl Scorer) -> InfectionLabel {
    classify_with_threshold(report, scorer, DEFAULT_THRESHOLD)
}

pub fn classify_with_threshold(
    report: &CaseReport,
    scorer: &impl Scorer,
    threshold: f64,
) -> InfectionLabel {
    let scores = scorer.scores(report);
    label_from_scores(&scores, threshold)
}

pub fn label_from_scores(scores: &LeafScores, threshold: f64) -> InfectionLabel {
    let clean: LeafScores = scores.map(|s| if s.is_finite() && s > 0.0 { s } else { 0.0 });
    let mass: f64 = clean.iter().sum();
    let Some(leaf) = argmax_leaf(&clean) else {
        return InfectionLabel::unknown();
    };
    let share = clean[leaf.index()] / mass;
    // shares within rounding of the threshold meet it, so rescaling the
    // scores cannot flip the decision
    if share < threshold * (1.0 - 1e-12) {
        return InfectionLabel::unknown();
    }
    InfectionLabel::new(leaf, share)
}

/// Labels keyed by case id.
pub type LabelMap = BTreeMap<String, InfectionLabel>;

/// Labels every report with the default threshold.
pub fn classify_all<'a>(
    reports: impl IntoIterator<Item = &'a CaseReport>,
    scorer: &impl Scorer,
) -> LabelMap {
    reports
        .into_iter()
        .map(|r| (r.id.clone(), classify_case(r, scorer)))
        .collect()
}

/// Labels CSV: `id,category,subcategory,score`, ordered by id.
pub fn write_labels<W: Write>(labels: &LabelMap, mut out: W) -> std::io::Result<()> {
    writeln!(out, "# covtrace labels v1")?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["id", "category", "subcategory", "score"])?;
    for (id, l) in labels {
        w.write_record([
            id.as_str(),
            l.category().as_str(),
            l.subcategory().as_str(),
            &format!("{:.6}", l.score()),
        ])?;
    }
    w.flush()
}

/// Accuracy, per-leaf precision/recall and the confusion matrix
/// (`confusion[true][predicted]`).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `None` when the leaf was never predicted.
    pub precision: [Option<f64>; LEAF_COUNT],
    /// `None` when the leaf never occurs in the labeled set.
    pub recall: [Option<f64>; LEAF_COUNT],
    pub confusion: [[u64; LEAF_COUNT]; LEAF_COUNT],
    pub total: u64,
}

pub fn evaluate<'a>(
    scorer: &impl Scorer,
    labeled: impl IntoIterator<Item = (&'a CaseReport, SubCategory)>,
) -> EvalReport {
    evaluate_predictions(
        labeled
            .into_iter()
            .map(|(r, truth)| (truth, classify_case(r, scorer).subcategory())),
    )
}

pub fn evaluate_predictions(
    pairs: impl IntoIterator<Item = (SubCategory, SubCategory)>,
) -> EvalReport {
    let mut confusion = [[0u64; LEAF_COUNT]; LEAF_COUNT];
    for (truth, pred) in pairs {
        confusion[truth.index()][pred.index()] += 1;
    }
    let total: u64 = confusion.iter().flatten().sum();
    let trace: u64 = (0..LEAF_COUNT).map(|i| confusion[i][i]).sum();
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let precision = std::array::from_fn(|j| {
        ratio(confusion[j][j], (0..LEAF_COUNT).map(|i| confusion[i][j]).sum())
    });
    let recall = std::array::from_fn(|i| ratio(confusion[i][i], confusion[i].iter().sum()));
    EvalReport {
        accuracy: ratio(trace, total).unwrap_or(0.0),
        precision,
        recall,
        confusion,
        total,
    }
}
