//! Case reports, the two-level infection taxonomy, and per-case derived
//! quantities.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Earliest date any case-report field may carry.
pub const EARLIEST_DATE: NaiveDate = match NaiveDate::from_ymd_opt(2019, 12, 1) {
    Some(d) => d,
    None => panic!("invalid constant date"),
};

/// Upper bound on a plausible age in years.
pub const MAX_AGE: u32 = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TravelHistory {
    Wuhan,
    HubeiOther,
    OtherCity,
    None,
    #[default]
    Unknown,
}

impl TravelHistory {
    pub fn as_str(self) -> &'static str {
        match self {
            TravelHistory::Wuhan => "wuhan",
            TravelHistory::HubeiOther => "hubei_other",
            TravelHistory::OtherCity => "other_city",
            TravelHistory::None => "none",
            TravelHistory::Unknown => "unknown",
        }
    }

    pub fn is_hubei(self) -> bool {
        matches!(self, TravelHistory::Wuhan | TravelHistory::HubeiOther)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Relationship {
    Relative,
    Coworker,
    Friend,
    Stranger,
    #[default]
    Unknown,
}

/// Top level of the infection-source taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    HubeiTravel,
    PublicTransit,
    Social,
    Relative,
    Unknown,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::HubeiTravel,
        Category::PublicTransit,
        Category::Social,
        Category::Relative,
        Category::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::HubeiTravel => "hubei_travel",
            Category::PublicTransit => "public_transit",
            Category::Social => "social",
            Category::Relative => "relative",
            Category::Unknown => "unknown",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Leaves whose parent is this category, in table order.
    pub fn leaves(self) -> impl Iterator<Item = SubCategory> {
        SubCategory::ALL.into_iter().filter(move |l| l.parent() == self)
    }

    /// Community transmission: anything that is neither Hubei travel nor unknown.
    pub fn is_local(self) -> bool {
        !matches!(self, Category::HubeiTravel | Category::Unknown)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Leaf of the infection-source taxonomy.
///
/// Declaration order is the published table's row order and doubles as the
/// column index of every per-leaf vector in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubCategory {
    Restaurant,
    Supermarket,
    Hospital,
    Hotel,
    ShoppingMall,
    Residential,
    NursingHome,
    PrivateVehicle,
    Train,
    Airport,
    Bus,
    Relative,
    Hubei,
    Unknown,
}

/// Number of taxonomy leaves.
pub const LEAF_COUNT: usize = 14;

impl SubCategory {
    pub const ALL: [SubCategory; LEAF_COUNT] = [
        SubCategory::Restaurant,
        SubCategory::Supermarket,
        SubCategory::Hospital,
        SubCategory::Hotel,
        SubCategory::ShoppingMall,
        SubCategory::Residential,
        SubCategory::NursingHome,
        SubCategory::PrivateVehicle,
        SubCategory::Train,
        SubCategory::Airport,
        SubCategory::Bus,
        SubCategory::Relative,
        SubCategory::Hubei,
        SubCategory::Unknown,
    ];

    /// Tie-break order for equal scores, highest priority first.
    pub const PRIORITY: [SubCategory; LEAF_COUNT] = [
        SubCategory::Hubei,
        SubCategory::Relative,
        SubCategory::PrivateVehicle,
        SubCategory::Train,
        SubCategory::Airport,
        SubCategory::Bus,
        SubCategory::Restaurant,
        SubCategory::Hospital,
        SubCategory::Supermarket,
        SubCategory::Hotel,
        SubCategory::ShoppingMall,
        SubCategory::Residential,
        SubCategory::NursingHome,
        SubCategory::Unknown,
    ];

    pub fn parent(self) -> Category {
        use SubCategory::*;
        match self {
            Hubei => Category::HubeiTravel,
            PrivateVehicle | Train | Airport | Bus => Category::PublicTransit,
            Restaurant | Supermarket | Hospital | Hotel | ShoppingMall | Residential
            | NursingHome => Category::Social,
            Relative => Category::Relative,
            Unknown => Category::Unknown,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<SubCategory> {
        SubCategory::ALL.get(i).copied()
    }

    /// Position in [`SubCategory::PRIORITY`]; lower wins ties.
    pub fn priority_rank(self) -> usize {
        SubCategory::PRIORITY
            .iter()
            .position(|&l| l == self)
            .expect("every leaf is ranked")
    }

    pub fn as_str(self) -> &'static str {
        use SubCategory::*;
        match self {
            Restaurant => "restaurant",
            Supermarket => "supermarket",
            Hospital => "hospital",
            Hotel => "hotel",
            ShoppingMall => "shopping_mall",
            Residential => "residential",
            NursingHome => "nursing_home",
            PrivateVehicle => "private_vehicle",
            Train => "train",
            Airport => "airport",
            Bus => "bus",
            Relative => "relative",
            Hubei => "hubei",
            Unknown => "unknown",
        }
    }
}

impl fmt::Display for SubCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown taxonomy leaf {0:?}")]
pub struct UnknownLeaf(pub String);

impl FromStr for SubCategory {
    type Err = UnknownLeaf;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SubCategory::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| UnknownLeaf(s.to_string()))
    }
}

/// A classified infection source. Only constructible through
/// [`InfectionLabel::new`], which derives the category from the leaf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfectionLabel {
    category: Category,
    subcategory: SubCategory,
    score: f64,
}

impl InfectionLabel {
    /// Builds a label for `leaf`; `score` is clamped into `[0, 1]`.
    pub fn new(leaf: SubCategory, score: f64) -> Self {
        let score = if score.is_nan() { 0.0 } else { score.clamp(0.0, 1.0) };
        InfectionLabel {
            category: leaf.parent(),
            subcategory: leaf,
            score,
        }
    }

    pub fn unknown() -> Self {
        InfectionLabel::new(SubCategory::Unknown, 0.0)
    }

    pub fn category(&self) -> Category {
        self.category
    }

    pub fn subcategory(&self) -> SubCategory {
        self.subcategory
    }

    pub fn score(&self) -> f64 {
        self.score
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ContactRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_case_id: Option<String>,
    #[serde(default)]
    pub relationship: Relationship,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location_kind: Option<SubCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_date: Option<NaiveDate>,
}

/// One confirmed case as stored in the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseReport {
    pub id: String,
    pub report_date: NaiveDate,
    pub province: String,
    pub city: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<u32>,
    #[serde(default)]
    pub gender: Gender,
    #[serde(default)]
    pub travel_history: TravelHistory,
    #[serde(default)]
    pub narrative: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symptom_onset_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hospital_admission_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confirmation_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure_date: Option<NaiveDate>,
    #[serde(default, deserialize_with = "null_as_default")]
    pub contacts: Vec<ContactRecord>,
    #[serde(default, deserialize_with = "null_as_default")]
    pub chronic_conditions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transmissions_initiated: Option<u32>,
}

fn null_as_default<'de, D, T>(de: D) -> Result<T, D::Error>
where
    D: serde::Deserializer<'de>,
    T: Deserialize<'de> + Default,
{
    Ok(Option::<T>::deserialize(de)?.unwrap_or_default())
}

impl CaseReport {
    /// A report with only the required fields set.
    pub fn new(id: impl Into<String>, report_date: NaiveDate, province: &str, city: &str) -> Self {
        CaseReport {
            id: id.into(),
            report_date,
            province: province.to_string(),
            city: city.to_string(),
            age: None,
            gender: Gender::Unknown,
            travel_history: TravelHistory::Unknown,
            narrative: String::new(),
            symptom_onset_date: None,
            hospital_admission_date: None,
            confirmation_date: None,
            exposure_date: None,
            contacts: Vec::new(),
            chronic_conditions: Vec::new(),
            transmissions_initiated: None,
        }
    }

    /// Every date carried by the report, labelled with its field name.
    fn dated_fields(&self) -> Vec<(&'static str, NaiveDate)> {
        let mut out = vec![("report_date", self.report_date)];
        let optional = [
            ("symptom_onset_date", self.symptom_onset_date),
            ("hospital_admission_date", self.hospital_admission_date),
            ("confirmation_date", self.confirmation_date),
            ("exposure_date", self.exposure_date),
        ];
        out.extend(optional.into_iter().filter_map(|(f, d)| d.map(|d| (f, d))));
        for c in &self.contacts {
            if let Some(d) = c.contact_date {
                out.push(("contacts", d));
            }
        }
        out
    }

    /// Returns a copy with every date moved by `days`.
    pub fn shifted(&self, days: i64) -> CaseReport {
        let shift = |d: NaiveDate| d + chrono::Duration::days(days);
        let mut r = self.clone();
        r.report_date = shift(r.report_date);
        r.symptom_onset_date = r.symptom_onset_date.map(shift);
        r.hospital_admission_date = r.hospital_admission_date.map(shift);
        r.confirmation_date = r.confirmation_date.map(shift);
        r.exposure_date = r.exposure_date.map(shift);
        for c in &mut r.contacts {
            c.contact_date = c.contact_date.map(shift);
        }
        r
    }
}

/// One broken invariant on a report.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Checks a report against the per-record invariants.
///
/// Violations are sorted by field name, then rule text. `corpus_end`, when
/// given, is the latest admissible date. Id uniqueness is a corpus-level
/// property enforced at ingest.
pub fn validate_report(report: &CaseReport, corpus_end: Option<NaiveDate>) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field: &'static str, rule: String| out.push(Violation { field, rule });

    if report.id.trim().is_empty() {
        push("id", "id nonempty".to_string());
    }
    if let Some(age) = report.age {
        if age > MAX_AGE {
            push("age", format!("age range: {age} not in [0, {MAX_AGE}]"));
        }
    }
    for (field, date) in report.dated_fields() {
        if date < EARLIEST_DATE {
            push(field, format!("date range: {date} before {EARLIEST_DATE}"));
        }
        if let Some(end) = corpus_end {
            if date > end {
                push(field, format!("date range: {date} after corpus end {end}"));
            }
        }
    }

    let chain = [
        ("exposure", "exposure_date", report.exposure_date),
        ("onset", "symptom_onset_date", report.symptom_onset_date),
        ("admission", "hospital_admission_date", report.hospital_admission_date),
        ("confirmation", "confirmation_date", report.confirmation_date),
    ];
    for i in 0..chain.len() {
        for j in i + 1..chain.len() {
            let (early_name, _, early) = chain[i];
            let (late_name, late_field, late) = chain[j];
            if let (Some(a), Some(b)) = (early, late) {
                if a > b {
                    push(late_field, format!("date order: {early_name} <= {late_name}"));
                }
            }
        }
    }

    for c in &report.contacts {
        if c.contact_case_id.as_deref() == Some(report.id.as_str()) {
            push("contacts", "contact_case_id differs from own id".to_string());
        }
    }

    out.sort();
    out
}

fn day_gap(from: Option<NaiveDate>, to: Option<NaiveDate>) -> Option<i64> {
    let gap = (to? - from?).num_days();
    (gap >= 0).then_some(gap)
}

/// Days from exposure to symptom onset. Absent when either date is missing or
/// the gap is negative; a negative gap is reported by [`validate_report`].
pub fn incubation_period(report: &CaseReport) -> Option<i64> {
    day_gap(report.exposure_date, report.symptom_onset_date)
}

/// Days from symptom onset to hospital admission, with the same absence rules
/// as [`incubation_period`].
pub fn admission_delay(report: &CaseReport) -> Option<i64> {
    day_gap(report.symptom_onset_date, report.hospital_admission_date)
}

/// Inclusive "admitted within `days`" test.
pub fn admitted_within(report: &CaseReport, days: i64) -> Option<bool> {
    admission_delay(report).map(|d| d <= days)
}
