use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::{normalize, LeafScores, Scorer};
use crate::case_model::{CaseReport, Relationship, SubCategory, TravelHistory, LEAF_COUNT};
use crate::error::{Error, Result};

/// One weighted pattern. Narrative patterns are token phrases matched against
/// the normalized narrative; structured patterns have the form `field=value`
/// with field one of `travel_history`, `contact_relationship` or
/// `contact_location`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub pattern: String,
    pub leaf: SubCategory,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Matcher {
    Phrase(Vec<String>),
    Travel(TravelHistory),
    ContactRelationship(Relationship),
    ContactLocation(SubCategory),
}

impl Matcher {
    fn parse(pattern: &str) -> Result<Matcher> {
        let bad = |msg: &str| Error::format("rule pattern", format!("{pattern:?}: {msg}"));
        if let Some((field, value)) = pattern.split_once('=') {
            let value = value.trim().to_lowercase();
            let quoted = serde_json::Value::String(value);
            return match field.trim().to_lowercase().as_str() {
                "travel_history" => serde_json::from_value(quoted)
                    .map(Matcher::Travel)
                    .map_err(|e| bad(&e.to_string())),
                "contact_relationship" => serde_json::from_value(quoted)
                    .map(Matcher::ContactRelationship)
                    .map_err(|e| bad(&e.to_string())),
                "contact_location" => serde_json::from_value(quoted)
                    .map(Matcher::ContactLocation)
                    .map_err(|e| bad(&e.to_string())),
                other => Err(bad(&format!("unknown structured field {other:?}"))),
            };
        }
        let tokens = normalize(pattern);
        if tokens.is_empty() {
            return Err(bad("empty phrase"));
        }
        Ok(Matcher::Phrase(tokens))
    }

    fn canonical(&self) -> String {
        let enc = |v: serde_json::Value| v.as_str().unwrap_or_default().to_string();
        match self {
            Matcher::Phrase(t) => t.join(" "),
            Matcher::Travel(t) => format!("travel_history={}", t.as_str()),
            Matcher::ContactRelationship(r) => format!(
                "contact_relationship={}",
                enc(serde_json::to_value(r).unwrap_or_default())
            ),
            Matcher::ContactLocation(l) => format!("contact_location={l}"),
        }
    }

    fn matches(&self, report: &CaseReport, tokens: &[String]) -> bool {
        match self {
            Matcher::Phrase(p) => tokens.windows(p.len()).any(|w| w == p.as_slice()),
            Matcher::Travel(t) => report.travel_history == *t,
            Matcher::ContactRelationship(r) => report.contacts.iter().any(|c| c.relationship == *r),
            Matcher::ContactLocation(l) => {
                report.contacts.iter().any(|c| c.location_kind == Some(*l))
            }
        }
    }
}

/// Ordered keyword rules. A leaf's score is the summed weight of its rules
/// that match, each rule counted at most once per report.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    rules: Vec<(Rule, Matcher)>,
}

// (pattern, leaf, weight). Structured Hubei-travel rules outweigh the sum of
// every other leaf's rules so travel history decides the label.
const DEFAULT_RULES: &[(&str, SubCategory, f64)] = {
    use SubCategory::*;
    &[
        ("travel_history=wuhan", Hubei, 100.0),
        ("travel_history=hubei_other", Hubei, 100.0),
        ("wuhan", Hubei, 2.0),
        ("hubei", Hubei, 2.0),
        ("contact_relationship=relative", Relative, 2.0),
        ("relative", Relative, 2.0),
        ("family member", Relative, 2.0),
        ("family gathering", Relative, 1.0),
        ("wife", Relative, 1.5),
        ("husband", Relative, 1.5),
        ("mother", Relative, 1.5),
        ("father", Relative, 1.5),
        ("daughter", Relative, 1.5),
        ("son", Relative, 1.5),
        ("private car", PrivateVehicle, 2.0),
        ("private vehicle", PrivateVehicle, 2.0),
        ("shared car", PrivateVehicle, 2.0),
        ("carpool", PrivateVehicle, 2.0),
        ("train", Train, 2.0),
        ("high speed rail", Train, 2.0),
        ("railway station", Train, 2.0),
        ("airport", Airport, 2.0),
        ("flight", Airport, 2.0),
        ("bus", Bus, 2.0),
        ("coach station", Bus, 2.0),
        ("restaurant", Restaurant, 2.0),
        ("dined", Restaurant, 1.5),
        ("dinner party", Restaurant, 1.5),
        ("supermarket", Supermarket, 2.0),
        ("grocery", Supermarket, 1.5),
        ("nosocomial", Hospital, 2.0),
        ("medical staff", Hospital, 2.0),
        ("hospital ward", Hospital, 2.0),
        ("hotel", Hotel, 2.0),
        ("shopping mall", ShoppingMall, 2.0),
        ("mall", ShoppingMall, 1.5),
        ("residential compound", Residential, 2.0),
        ("same building", Residential, 2.0),
        ("neighbor", Residential, 1.5),
        ("neighbour", Residential, 1.5),
        ("nursing home", NursingHome, 2.0),
        ("care home", NursingHome, 2.0),
        ("under investigation", Unknown, 2.0),
        ("source unknown", Unknown, 2.0),
        ("unknown source", Unknown, 2.0),
    ]
};

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet::new(DEFAULT_RULES.iter().map(|&(p, leaf, weight)| Rule {
            pattern: p.to_string(),
            leaf,
            weight,
        }))
        .expect("default rule table is valid")
    }
}

impl RuleSet {
    /// Validates and case-normalizes each rule's pattern.
    pub fn new(rules: impl IntoIterator<Item = Rule>) -> Result<Self> {
        let mut out = Vec::new();
        for mut rule in rules {
            if !(rule.weight.is_finite() && rule.weight > 0.0) {
                return Err(Error::format(
                    "rule",
                    format!("weight {} for {:?} must be positive", rule.weight, rule.pattern),
                ));
            }
            let m = Matcher::parse(&rule.pattern)?;
            rule.pattern = m.canonical();
            out.push((rule, m));
        }
        Ok(RuleSet { rules: out })
    }

    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter().map(|(r, _)| r)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Reads line-delimited `{pattern, leaf, weight}` records.
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::format("rule file", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rule: Rule = serde_json::from_str(&line)
                .map_err(|e| Error::format("rule file", format!("line {}: {e}", i + 1)))?;
            rules.push(rule);
        }
        RuleSet::new(rules)
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for rule in self.rules() {
            serde_json::to_writer(&mut out, rule)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Returns a copy with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        RuleSet::new(self.rules().map(|r| Rule {
            weight: r.weight * factor,
            ..r.clone()
        }))
    }
}

impl Scorer for RuleSet {
    fn scores(&self, report: &CaseReport) -> LeafScores {
        let tokens = normalize(&report.narrative);
        let mut scores = [0.0; LEAF_COUNT];
        for (rule, m) in &self.rules {
            if m.matches(report, &tokens) {
                scores[rule.leaf.index()] += rule.weight;
            }
        }
        scores
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_model::{Category, ContactRecord};
    use crate::classify::{classify_case, DEFAULT_THRESHOLD};
    use proptest::prelude::*;

    fn report(narrative: &str) -> CaseReport {
        let mut r = CaseReport::new("x", "2020-01-25".parse().unwrap(), "p", "c");
        r.narrative = narrative.to_string();
        r.travel_history = TravelHistory::None;
        r
    }

    fn label(r: &CaseReport) -> (Category, SubCategory) {
        let l = classify_case(r, &RuleSet::default());
        (l.category(), l.subcategory())
    }

    #[test]
    fn wuhan_travel_is_hubei() {
        let mut r = report("");
        r.travel_history = TravelHistory::Wuhan;
        assert_eq!(label(&r), (Category::HubeiTravel, SubCategory::Hubei));
    }

    #[test]
    fn restaurant_phrase() {
        let r = report("Had a meal at a restaurant with an infected person.");
        assert_eq!(label(&r), (Category::Social, SubCategory::Restaurant));
    }

    #[test]
    fn relative_restaurant_tie_goes_to_relative() {
        let r = report("Met a relative at a restaurant.");
        let s = RuleSet::default().scores(&r);
        // enumerate matched rules: relative(2.0) vs restaurant(2.0)
        assert_eq!(s[SubCategory::Relative.index()], 2.0);
        assert_eq!(s[SubCategory::Restaurant.index()], 2.0);
        assert_eq!(s.iter().sum::<f64>(), 4.0);
        let l = classify_case(&r, &RuleSet::default());
        assert_eq!(l.subcategory(), SubCategory::Relative);
        assert_eq!(l.category(), Category::Relative);
        assert_eq!(l.score(), 0.5);
    }

    #[test]
    fn empty_evidence_is_unknown() {
        let mut r = report("");
        r.travel_history = TravelHistory::Unknown;
        let l = classify_case(&r, &RuleSet::default());
        assert_eq!(l.subcategory(), SubCategory::Unknown);
        assert_eq!(l.score(), 0.0);
    }

    #[test]
    fn structured_contact_rules() {
        let mut r = report("close contact");
        r.contacts.push(ContactRecord {
            relationship: Relationship::Relative,
            ..Default::default()
        });
        assert_eq!(label(&r).1, SubCategory::Relative);
    }

    #[test]
    fn phrase_requires_contiguous_tokens() {
        assert_eq!(label(&report("the shopping mall")).1, SubCategory::ShoppingMall);
        assert_eq!(label(&report("shopping at the grocery")).1, SubCategory::Supermarket);
        assert_eq!(label(&report("a nursing staff at home")).1, SubCategory::Unknown);
    }

    #[test]
    fn default_weights_guarantee_hubei_precedence() {
        let rules = RuleSet::default();
        let hubei_min = rules
            .rules()
            .filter(|r| r.pattern.starts_with("travel_history=") && r.leaf == SubCategory::Hubei)
            .map(|r| r.weight)
            .fold(f64::INFINITY, f64::min);
        let others: f64 = rules
            .rules()
            .filter(|r| r.leaf != SubCategory::Hubei)
            .map(|r| r.weight)
            .sum();
        // beats any single leaf and keeps its share above the threshold
        assert!(hubei_min > others);
        assert!(hubei_min / (hubei_min + others + 4.0) >= DEFAULT_THRESHOLD);
    }

    #[test]
    fn rule_file_round_trip() {
        let mut buf = Vec::new();
        RuleSet::default().write(&mut buf).unwrap();
        assert_eq!(RuleSet::read(&buf[..]).unwrap(), RuleSet::default());
        let bad = br#"{"pattern":"x","leaf":"nowhere","weight":1}"#;
        assert!(RuleSet::read(&bad[..]).is_err());
        let neg = br#"{"pattern":"x","leaf":"bus","weight":-1}"#;
        assert!(RuleSet::read(&neg[..]).is_err());
        let field = br#"{"pattern":"blood_type=a","leaf":"bus","weight":1}"#;
        assert!(RuleSet::read(&field[..]).is_err());
    }

    #[test]
    fn patterns_are_case_normalized() {
        let r = RuleSet::new([Rule {
            pattern: "High-Speed  RAIL".into(),
            leaf: SubCategory::Train,
            weight: 1.0,
        }])
        .unwrap();
        assert_eq!(r.rules().next().unwrap().pattern, "high speed rail");
    }

    fn phrase_pool() -> Vec<String> {
        RuleSet::default()
            .rules()
            .filter(|r| !r.pattern.contains('='))
            .map(|r| r.pattern.clone())
            .collect()
    }

    proptest! {
        #[test]
        fn hubei_travel_dominates_any_narrative(
            picks in proptest::collection::vec(any::<prop::sample::Index>(), 0..60),
            hubei_other in any::<bool>(),
            with_relative_contact in any::<bool>(),
        ) {
            let pool = phrase_pool();
            let narrative = picks.iter().map(|i| i.get(&pool).as_str()).collect::<Vec<_>>().join(" ");
            let mut r = report(&narrative);
            r.travel_history = if hubei_other { TravelHistory::HubeiOther } else { TravelHistory::Wuhan };
            if with_relative_contact {
                r.contacts.push(ContactRecord { relationship: Relationship::Relative, ..Default::default() });
            }
            prop_assert_eq!(label(&r), (Category::HubeiTravel, SubCategory::Hubei));
        }

        #[test]
        fn scaling_rules_keeps_label(
            picks in proptest::collection::vec(any::<prop::sample::Index>(), 0..6),
            exp in -10i32..10,
        ) {
            // power-of-two factors keep summed weights exact, so ties survive
            let factor = 2f64.powi(exp);
            let pool = phrase_pool();
            let narrative = picks.iter().map(|i| i.get(&pool).as_str()).collect::<Vec<_>>().join(" ");
            let r = report(&narrative);
            let base = classify_case(&r, &RuleSet::default());
            let scaled = classify_case(&r, &RuleSet::default().scaled(factor).unwrap());
            prop_assert_eq!(base.subcategory(), scaled.subcategory());
            prop_assert_eq!(base.category(), base.subcategory().parent());
        }
    }
}
