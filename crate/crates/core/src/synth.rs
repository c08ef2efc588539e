//! Deterministic synthetic corpora with a ground-truth ledger.
//!
//! Each case draws a true leaf from the configured mix, a city, a report date
//! from its category's peaked profile and an onset-to-admission delay. Its
//! narrative embeds default-rule phrases for an evidence leaf, which equals
//! the true leaf unless the case is corrupted at the noise rate.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::case_model::{
    CaseReport, Category, ContactRecord, Gender, Relationship, SubCategory, TravelHistory, LEAF_COUNT,
};
use crate::dynamics::WUHAN;
use crate::error::{Error, Result};
use crate::gbr::Dataset;
use crate::ingest::write_corpus;

const CATEGORY_COUNT: usize = Category::ALL.len();

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

/// A city cases can be reported in.
#[derive(Debug, Clone, PartialEq)]
pub struct CitySpec {
    pub province: String,
    pub city: String,
    pub lat: f64,
    pub lon: f64,
    /// Probability that a case is reported here.
    pub weight: f64,
    /// Share of the Wuhan outflow arriving here.
    pub outflow: f64,
}

/// `size` cases of `leaf` linked into a path of contacts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainShape {
    pub leaf: SubCategory,
    pub size: usize,
}

/// Onset-to-admission delay: with probability `within_five` uniform on
/// 0..=5 days, otherwise uniform on 6..=`max_delay`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayConfig {
    pub within_five: f64,
    pub max_delay: i64,
    /// Share of cases with no admission date.
    pub missing_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub cases: usize,
    /// Probability per leaf, indexed by [`SubCategory::index`].
    pub leaf_mix: [f64; LEAF_COUNT],
    pub cities: Vec<CitySpec>,
    pub start: NaiveDate,
    /// Inclusive.
    pub end: NaiveDate,
    /// Planted peak date per category, indexed by [`Category::index`].
    pub peaks: [NaiveDate; CATEGORY_COUNT],
    /// Share of a category's cases placed exactly on its peak date; the rest
    /// follow exp(−|d − peak| / spread_days) over the span.
    pub peak_mass: f64,
    pub spread_days: f64,
    /// Label-noise rate in [0, 0.5).
    pub noise: f64,
    pub delays: DelayConfig,
    pub chains: Vec<ChainShape>,
}

/// Week-5 column of the published weekly table, in leaf order (percent).
pub const TABLE1_WEEK5: [f64; LEAF_COUNT] = [
    11.67, 0.09, 3.75, 0.24, 0.09, 0.15, 0.09, 13.68, 2.19, 1.68, 2.36, 27.39, 34.13, 2.48,
];

fn default_cities() -> Vec<CitySpec> {
    // (province, city, lat, lon, outflow share)
    const CITIES: &[(&str, &str, f64, f64, f64)] = &[
        ("Henan", "Xinyang", 32.1285, 114.0913, 0.040),
        ("Hunan", "Changsha", 28.2282, 112.9388, 0.035),
        ("Henan", "Zhengzhou", 34.7466, 113.6253, 0.030),
        ("Chongqing", "Chongqing", 29.5630, 106.5516, 0.030),
        ("Beijing", "Beijing", 39.9042, 116.4074, 0.025),
        ("Shanghai", "Shanghai", 31.2304, 121.4737, 0.025),
        ("Guangdong", "Guangzhou", 23.1291, 113.2644, 0.025),
        ("Guangdong", "Shenzhen", 22.5431, 114.0579, 0.025),
        ("Anhui", "Hefei", 31.8206, 117.2272, 0.020),
        ("Jiangxi", "Nanchang", 28.6820, 115.8579, 0.020),
        ("Sichuan", "Chengdu", 30.5728, 104.0668, 0.015),
        ("Zhejiang", "Hangzhou", 30.2741, 120.1551, 0.015),
        ("Zhejiang", "Wenzhou", 27.9939, 120.6994, 0.015),
        ("Shandong", "Jinan", 36.6512, 117.1201, 0.010),
    ];
    let total: f64 = CITIES.iter().map(|c| c.4).sum();
    CITIES
        .iter()
        .map(|&(province, city, lat, lon, outflow)| CitySpec {
            province: province.into(),
            city: city.into(),
            lat,
            lon,
            weight: outflow / total,
            outflow,
        })
        .collect()
}

impl ScenarioConfig {
    /// Seed 42, 5000 cases, the published week-5 mix, 79% of delays at most
    /// five days, no label noise.
    pub fn golden() -> Self {
        let mass: f64 = TABLE1_WEEK5.iter().sum();
        use SubCategory::*;
        ScenarioConfig {
            seed: 42,
            cases: 5000,
            leaf_mix: TABLE1_WEEK5.map(|p| p / mass),
            cities: default_cities(),
            start: date(2020, 1, 18),
            end: date(2020, 2, 21),
            peaks: [
                date(2020, 1, 28),
                date(2020, 2, 3),
                date(2020, 2, 8),
                date(2020, 2, 8),
                date(2020, 2, 10),
            ],
            peak_mass: 0.2,
            spread_days: 4.0,
            noise: 0.0,
            delays: DelayConfig {
                within_five: 0.79,
                max_delay: 14,
                missing_rate: 0.02,
            },
            chains: [(Relative, 3, 8), (Restaurant, 4, 3), (PrivateVehicle, 3, 2), (Bus, 3, 2)]
                .iter()
                .flat_map(|&(leaf, size, n)| std::iter::repeat(ChainShape { leaf, size }).take(n))
                .collect(),
        }
    }

    /// Golden settings for another seed, size and noise rate, with the chain
    /// plan scaled down in proportion to the case count.
    pub fn golden_sized(seed: u64, cases: usize, noise: f64) -> Self {
        let golden = ScenarioConfig::golden();
        let mut per_shape: Vec<(ChainShape, usize)> = Vec::new();
        for c in &golden.chains {
            match per_shape.iter_mut().find(|(s, _)| s == c) {
                Some((_, n)) => *n += 1,
                None => per_shape.push((*c, 1)),
            }
        }
        let chains = per_shape
            .into_iter()
            .flat_map(|(shape, n)| std::iter::repeat(shape).take(n * cases / golden.cases))
            .collect();
        ScenarioConfig {
            seed,
            cases,
            noise,
            chains,
            ..golden
        }
    }

    /// Golden settings with every case on `leaf` and no chains.
    pub fn single_leaf(seed: u64, cases: usize, leaf: SubCategory) -> Self {
        let mut leaf_mix = [0.0; LEAF_COUNT];
        leaf_mix[leaf.index()] = 1.0;
        ScenarioConfig {
            seed,
            cases,
            leaf_mix,
            chains: Vec::new(),
            ..ScenarioConfig::golden()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("scenario: {m}")));
        let is_mix = |v: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = v.collect();
            v.iter().all(|p| p.is_finite() && *p >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() < 1e-6
        };
        if self.cases == 0 {
            return bad("case count must be positive".into());
        }
        if !is_mix(&mut self.leaf_mix.iter().copied()) {
            return bad("leaf mix must be non-negative and sum to 1".into());
        }
        if self.cities.is_empty() || !is_mix(&mut self.cities.iter().map(|c| c.weight)) {
            return bad("city weights must be non-negative and sum to 1".into());
        }
        if self.cities.iter().any(|c| !(0.0..=1.0).contains(&c.outflow))
            || self.cities.iter().map(|c| c.outflow).sum::<f64>() > 1.0 + 1e-9
        {
            return bad("outflow shares must lie in [0, 1] and sum to at most 1".into());
        }
        if self.start > self.end {
            return bad("date span is empty".into());
        }
        if let Some(p) = self.peaks.iter().find(|p| **p < self.start || **p > self.end) {
            return bad(format!("peak {p} outside the date span"));
        }
        if !(0.0..=1.0).contains(&self.peak_mass) || !(self.spread_days > 0.0) {
            return bad("peak mass must lie in [0, 1] and spread must be positive".into());
        }
        if !(0.0..0.5).contains(&self.noise) {
            return bad(format!("noise rate {} not in [0, 0.5)", self.noise));
        }
        let d = self.delays;
        if !(0.0..=1.0).contains(&d.within_five) || d.max_delay < 6 || !(0.0..1.0).contains(&d.missing_rate) {
            return bad("delay parameters out of range".into());
        }
        for c in &self.chains {
            if c.size < 2 {
                return bad("chains need at least two cases".into());
            }
            if self.leaf_mix[c.leaf.index()] <= 0.0 {
                return Err(Error::InfeasibleScenario(format!(
                    "chain requested on {} which has zero probability",
                    c.leaf
                )));
            }
        }
        Ok(())
    }
}

/// Ground truth for one generated case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerEntry {
    pub id: String,
    pub true_leaf: SubCategory,
    /// Leaf the narrative and structured fields point to.
    pub evidence_leaf: SubCategory,
    pub corrupted: bool,
    pub province: String,
    pub city: String,
    pub report_date: NaiveDate,
    pub admission_delay: Option<i64>,
    pub chain: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthLedger {
    /// One entry per generated case, in id order.
    pub entries: Vec<LedgerEntry>,
    /// Planted chains as member ids in contact order.
    pub chains: Vec<Vec<String>>,
    pub peaks: [NaiveDate; CATEGORY_COUNT],
}

impl GroundTruthLedger {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Counts by evidence leaf of cases reported before `until` (exclusive).
    pub fn evidence_counts_before(&self, until: NaiveDate) -> [u64; LEAF_COUNT] {
        let mut c = [0; LEAF_COUNT];
        for e in self.entries.iter().filter(|e| e.report_date < until) {
            c[e.evidence_leaf.index()] += 1;
        }
        c
    }

    /// Counts by evidence category per province.
    pub fn province_counts(&self) -> BTreeMap<String, [u64; CATEGORY_COUNT]> {
        let mut out: BTreeMap<String, [u64; CATEGORY_COUNT]> = BTreeMap::new();
        for e in &self.entries {
            out.entry(e.province.clone()).or_default()[e.evidence_leaf.parent().index()] += 1;
        }
        out
    }

    /// Planted share of defined delays that are at most `days`.
    pub fn fraction_within(&self, days: i64) -> Option<f64> {
        let defined: Vec<i64> = self.entries.iter().filter_map(|e| e.admission_delay).collect();
        let within = defined.iter().filter(|d| **d <= days).count();
        (!defined.is_empty()).then(|| within as f64 / defined.len() as f64)
    }

    /// `id,true_leaf,evidence_leaf,corrupted,province,city,report_date,admission_delay,chain`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# covtrace ledger v1")?;
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record([
            "id",
            "true_leaf",
            "evidence_leaf",
            "corrupted",
            "province",
            "city",
            "report_date",
            "admission_delay",
            "chain",
        ])?;
        for e in &self.entries {
            w.write_record([
                e.id.clone(),
                e.true_leaf.to_string(),
                e.evidence_leaf.to_string(),
                e.corrupted.to_string(),
                e.province.clone(),
                e.city.clone(),
                e.report_date.to_string(),
                e.admission_delay.map(|d| d.to_string()).unwrap_or_default(),
                e.chain.map(|c| c.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    /// In id order.
    pub reports: Vec<CaseReport>,
    pub ledger: GroundTruthLedger,
}

/// Paths written by [`Scenario::write_to_dir`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioFiles {
    pub corpus: PathBuf,
    pub ledger: PathBuf,
    pub coordinates: PathBuf,
    pub outflow: PathBuf,
}

impl Scenario {
    /// `city,lat,lon` for Wuhan and every configured city.
    pub fn write_coordinates<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "city,lat,lon")?;
        writeln!(out, "Wuhan,{},{}", WUHAN.0, WUHAN.1)?;
        for c in &self.config.cities {
            writeln!(out, "{},{},{}", c.city, c.lat, c.lon)?;
        }
        Ok(())
    }

    /// `city,outflow_fraction` for every configured city.
    pub fn write_outflow<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "city,outflow_fraction")?;
        for c in &self.config.cities {
            writeln!(out, "{},{}", c.city, c.outflow)?;
        }
        Ok(())
    }

    /// Writes `corpus.jsonl`, `ledger.csv`, `coords.csv` and `outflow.csv`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<ScenarioFiles> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = ScenarioFiles {
            corpus: dir.join("corpus.jsonl"),
            ledger: dir.join("ledger.csv"),
            coordinates: dir.join("coords.csv"),
            outflow: dir.join("outflow.csv"),
        };
        let write = |path: &Path, f: &dyn Fn(&mut BufWriter<File>) -> std::io::Result<()>| {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
        };
        write(&files.corpus, &|w| write_corpus(&self.reports, w))?;
        write(&files.ledger, &|w| self.ledger.write_csv(w))?;
        write(&files.coordinates, &|w| self.write_coordinates(w))?;
        write(&files.outflow, &|w| self.write_outflow(w))?;
        Ok(files)
    }
}

// Narrative sentences per leaf. Each mentions only default-rule phrases of
// its own leaf.
fn templates(leaf: SubCategory) -> &'static [&'static str] {
    use SubCategory::*;
    match leaf {
        Restaurant => &[
            "Dined at a restaurant with a confirmed case.",
            "Attended a dinner party at a local restaurant.",
        ],
        Supermarket => &[
            "Worked at a supermarket where a confirmed case shopped.",
            "Bought grocery items at a crowded supermarket.",
        ],
        Hospital => &[
            "Infected while working as medical staff.",
            "Nosocomial infection in a hospital ward.",
        ],
        Hotel => &[
            "Stayed at a hotel with a confirmed case.",
            "Worked at the front desk of a hotel.",
        ],
        ShoppingMall => &[
            "Visited a shopping mall with a confirmed case.",
            "Worked at a mall counter.",
        ],
        Residential => &[
            "Lives in the same building as a confirmed case.",
            "Met a neighbor in a residential compound.",
        ],
        NursingHome => &[
            "Lives in a nursing home with an outbreak.",
            "Worked at a care home.",
        ],
        PrivateVehicle => &[
            "Shared a private car with a confirmed case.",
            "Travelled by carpool with a confirmed case.",
        ],
        Train => &[
            "Took a train with a confirmed case.",
            "Travelled on high speed rail with a confirmed case.",
            "Worked at a railway station.",
        ],
        Airport => &[
            "Took a flight with a confirmed case.",
            "Worked at an airport security checkpoint.",
        ],
        Bus => &[
            "Took a bus with a confirmed case.",
            "Waited at a coach station with a confirmed case.",
        ],
        Relative => &[
            "Infected by a relative living together.",
            "Attended a family gathering with a confirmed case.",
            "Close contact with his wife who tested positive.",
            "Infected by a family member.",
        ],
        Hubei => &[
            "Returned from Wuhan before onset.",
            "Travelled to Hubei for business.",
        ],
        Unknown => &[
            "Source of infection under investigation.",
            "No clear exposure; source unknown.",
        ],
    }
}

const FILLER: &[&str] = &[
    "Developed fever and dry cough.",
    "Tested positive after screening.",
    "Currently in stable condition.",
    "Isolated at a designated facility.",
];

fn chain_relationship(leaf: SubCategory) -> Relationship {
    match leaf.parent() {
        Category::Relative => Relationship::Relative,
        Category::Social => Relationship::Friend,
        Category::PublicTransit => Relationship::Stranger,
        _ => Relationship::Coworker,
    }
}

fn travel_for(evidence: SubCategory, rng: &mut ChaCha8Rng) -> TravelHistory {
    if evidence == SubCategory::Hubei {
        if rng.gen_bool(0.8) {
            TravelHistory::Wuhan
        } else {
            TravelHistory::HubeiOther
        }
    } else {
        *[TravelHistory::None, TravelHistory::OtherCity, TravelHistory::Unknown]
            .choose(rng)
            .expect("nonempty")
    }
}

pub fn generate(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let leaf_dist = WeightedIndex::new(config.leaf_mix).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let city_dist = WeightedIndex::new(config.cities.iter().map(|c| c.weight))
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let span: Vec<NaiveDate> = config
        .start
        .iter_days()
        .take_while(|d| *d <= config.end)
        .collect();
    let date_dists: Vec<WeightedIndex<f64>> = config
        .peaks
        .iter()
        .map(|peak| {
            let w = span
                .iter()
                .map(|d| (-((*d - *peak).num_days().abs() as f64) / config.spread_days).exp());
            WeightedIndex::new(w).expect("positive profile weights")
        })
        .collect();
    let width = config.cases.to_string().len().max(5);

    let mut reports = Vec::with_capacity(config.cases);
    let mut entries = Vec::with_capacity(config.cases);
    for i in 0..config.cases {
        let leaf = SubCategory::from_index(leaf_dist.sample(&mut rng)).expect("leaf index");
        let city = &config.cities[city_dist.sample(&mut rng)];
        let category = leaf.parent().index();
        let report_date = if rng.gen_bool(config.peak_mass) {
            config.peaks[category]
        } else {
            span[date_dists[category].sample(&mut rng)]
        };
        let corrupted = rng.gen_bool(config.noise);
        let evidence = if corrupted {
            let others: Vec<SubCategory> = SubCategory::ALL.into_iter().filter(|l| *l != leaf).collect();
            *others.choose(&mut rng).expect("nonempty")
        } else {
            leaf
        };

        let admission = report_date - Duration::days(rng.gen_range(0..=2));
        let delay = if rng.gen_bool(config.delays.within_five) {
            rng.gen_range(0..=5)
        } else {
            rng.gen_range(6..=config.delays.max_delay)
        };
        let onset = admission - Duration::days(delay);
        let exposure = onset - Duration::days(rng.gen_range(2..=10));
        let admitted = !rng.gen_bool(config.delays.missing_rate);

        let id = format!("case-{:0width$}", i + 1);
        let mut r = CaseReport::new(id.clone(), report_date, &city.province, &city.city);
        r.age = Some(rng.gen_range(1..=90));
        r.gender = if rng.gen_bool(0.5) { Gender::Male } else { Gender::Female };
        r.travel_history = travel_for(evidence, &mut rng);
        let lead = templates(evidence).choose(&mut rng).expect("templates");
        let tail = FILLER.choose(&mut rng).expect("filler");
        r.narrative = format!("{lead} {tail}");
        r.exposure_date = Some(exposure);
        r.symptom_onset_date = Some(onset);
        r.hospital_admission_date = admitted.then_some(admission);
        r.confirmation_date = Some(report_date);

        entries.push(LedgerEntry {
            id,
            true_leaf: leaf,
            evidence_leaf: evidence,
            corrupted,
            province: city.province.clone(),
            city: city.city.clone(),
            report_date,
            admission_delay: admitted.then_some(delay),
            chain: None,
        });
        reports.push(r);
    }

    let chains = plant_chains(config, &mut reports, &mut entries)?;
    Ok(Scenario {
        config: config.clone(),
        reports,
        ledger: GroundTruthLedger {
            entries,
            chains,
            peaks: config.peaks,
        },
    })
}

/// Links uncorrupted, unchained cases of each requested leaf into paths,
/// earliest report first.
fn plant_chains(
    config: &ScenarioConfig,
    reports: &mut [CaseReport],
    entries: &mut [LedgerEntry],
) -> Result<Vec<Vec<String>>> {
    let mut chains = Vec::with_capacity(config.chains.len());
    for (k, shape) in config.chains.iter().enumerate() {
        let mut members: Vec<usize> = (0..entries.len())
            .filter(|&i| {
                let e = &entries[i];
                e.true_leaf == shape.leaf && !e.corrupted && e.chain.is_none()
            })
            .take(shape.size)
            .collect();
        if members.len() < shape.size {
            return Err(Error::InfeasibleScenario(format!(
                "chain {k} needs {} {} cases, only {} available",
                shape.size,
                shape.leaf,
                members.len()
            )));
        }
        members.sort_by_key(|&i| (entries[i].report_date, i));
        for pair in members.windows(2) {
            let (src, dst) = (pair[0], pair[1]);
            let contact = ContactRecord {
                contact_case_id: Some(entries[src].id.clone()),
                relationship: chain_relationship(shape.leaf),
                location_kind: Some(shape.leaf),
                contact_date: reports[dst].exposure_date,
            };
            reports[dst].contacts.push(contact);
        }
        for &i in &members {
            entries[i].chain = Some(k);
        }
        chains.push(members.iter().map(|&i| entries[i].id.clone()).collect());
    }
    Ok(chains)
}

/// Geo-style regression data whose target is a step in distance: about 400
/// cases within 1000 km of the source and 100 beyond, plus uniform noise.
/// Features are `distance_km` and an uninformative `outflow_fraction`.
pub fn step_geo_dataset(seed: u64, rows: usize) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(rows);
    let mut y = Vec::with_capacity(rows);
    for _ in 0..rows {
        let distance: f64 = rng.gen_range(0.0..2000.0);
        let outflow: f64 = rng.gen_range(0.0..0.05);
        let level = if distance < 1000.0 { 400.0 } else { 100.0 };
        x.push(vec![distance, outflow]);
        y.push(level + rng.gen_range(-20.0..20.0));
    }
    Dataset::new(x, y, vec!["distance_km".into(), "outflow_fraction".into()])
}
