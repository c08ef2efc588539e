//! Temporal and spatial aggregation of labeled cases: cumulative weekly
//! percentage tables, daily series per category, per-province counts,
//! admission-delay statistics and the distance/outflow regression dataset.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate};

use crate::case_model::{admission_delay, Category, SubCategory, LEAF_COUNT};
use crate::classify::LabelMap;
use crate::error::{Error, Result};
use crate::gbr::Dataset;
use crate::ingest::TrajectoryDatabase;

/// First day of the first weekly window unless configured otherwise.
pub const DEFAULT_ANCHOR: NaiveDate = match NaiveDate::from_ymd_opt(2020, 1, 18) {
    Some(d) => d,
    None => panic!("invalid constant date"),
};

/// Mean Earth radius (WGS-84), km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Wuhan, used when the coordinates file has no row for it.
pub const WUHAN: (f64, f64) = (30.5928, 114.3055);

const CATEGORY_COUNT: usize = Category::ALL.len();

fn label_of(labels: &LabelMap, id: &str) -> Result<SubCategory> {
    labels
        .get(id)
        .map(|l| l.subcategory())
        .ok_or_else(|| Error::InvalidInput(format!("report {id:?} has no label")))
}

/// Cumulative counts for the window `[anchor, anchor + 7·week_index)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeeklySnapshot {
    pub week_index: usize,
    pub window_start: NaiveDate,
    /// Exclusive.
    pub window_end: NaiveDate,
    pub counts: [u64; LEAF_COUNT],
    pub total: u64,
}

impl WeeklySnapshot {
    /// Unrounded percentage of the cumulative total; `None` for an empty
    /// window.
    pub fn percentage(&self, leaf: SubCategory) -> Option<f64> {
        (self.total > 0).then(|| self.counts[leaf.index()] as f64 * 100.0 / self.total as f64)
    }

    pub fn percentages(&self) -> Option<[f64; LEAF_COUNT]> {
        (self.total > 0).then(|| std::array::from_fn(|i| self.counts[i] as f64 * 100.0 / self.total as f64))
    }

    /// Percentage in hundredths of a point, rounded half-up.
    pub fn display_basis_points(&self, leaf: SubCategory) -> Option<u64> {
        (self.total > 0).then(|| {
            let c = u128::from(self.counts[leaf.index()]);
            let t = u128::from(self.total);
            ((c * 20_000 + t) / (2 * t)) as u64
        })
    }

    /// Two-decimal display string, e.g. `34.13`.
    pub fn display(&self, leaf: SubCategory) -> Option<String> {
        self.display_basis_points(leaf).map(|bp| format!("{}.{:02}", bp / 100, bp % 100))
    }

    pub fn category_count(&self, category: Category) -> u64 {
        category.leaves().map(|l| self.counts[l.index()]).sum()
    }
}

/// Weekly snapshots plus the reports dated before the anchor, which are
/// folded into week 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeeklyTable {
    pub anchor: NaiveDate,
    pub snapshots: Vec<WeeklySnapshot>,
    pub before_anchor: Vec<String>,
}

/// Cumulative weekly snapshots. `weeks` defaults to the fewest weeks covering
/// the latest report date (none for an empty corpus). Reports dated after the
/// last window are left out.
pub fn weekly_snapshots(
    db: &TrajectoryDatabase,
    labels: &LabelMap,
    anchor: NaiveDate,
    weeks: Option<usize>,
) -> Result<WeeklyTable> {
    let weeks = weeks.unwrap_or_else(|| match db.last_report_date() {
        None => 0,
        Some(last) if last < anchor => 1,
        Some(last) => ((last - anchor).num_days() as usize) / 7 + 1,
    });
    // new cases per week, then running sums
    let mut fresh = vec![[0u64; LEAF_COUNT]; weeks];
    let mut before_anchor = Vec::new();
    for r in db.reports() {
        let leaf = label_of(labels, &r.id)?;
        let offset = (r.report_date - anchor).num_days();
        let week = if offset < 0 {
            before_anchor.push(r.id.clone());
            0
        } else {
            (offset / 7) as usize
        };
        if let Some(slot) = fresh.get_mut(week) {
            slot[leaf.index()] += 1;
        }
    }
    let mut running = [0u64; LEAF_COUNT];
    let snapshots = fresh
        .iter()
        .enumerate()
        .map(|(w, add)| {
            for (acc, a) in running.iter_mut().zip(add) {
                *acc += a;
            }
            WeeklySnapshot {
                week_index: w + 1,
                window_start: anchor,
                window_end: anchor + Duration::days(7 * (w as i64 + 1)),
                counts: running,
                total: running.iter().sum(),
            }
        })
        .collect();
    Ok(WeeklyTable {
        anchor,
        snapshots,
        before_anchor,
    })
}

/// Percentage of the snapshot attributed to community transmission, i.e.
/// any source other than Hubei travel or unknown. Zero for an empty window.
pub fn local_transmission_share(snapshot: &WeeklySnapshot) -> f64 {
    if snapshot.total == 0 {
        return 0.0;
    }
    let local: u64 = SubCategory::ALL
        .into_iter()
        .filter(|l| l.parent().is_local())
        .map(|l| snapshot.counts[l.index()])
        .sum();
    local as f64 * 100.0 / snapshot.total as f64
}

impl WeeklyTable {
    /// `category,leaf,week_1..week_n` with two-decimal percentages, then a
    /// final `all,cases` row of cumulative totals.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# covtrace table1 v1 anchor={}", self.anchor)?;
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header = vec!["category".to_string(), "leaf".to_string()];
        header.extend(self.snapshots.iter().map(|s| format!("week_{}", s.week_index)));
        w.write_record(&header)?;
        for leaf in SubCategory::ALL {
            let mut row = vec![leaf.parent().to_string(), leaf.to_string()];
            row.extend(self.snapshots.iter().map(|s| s.display(leaf).unwrap_or_default()));
            w.write_record(&row)?;
        }
        let mut totals = vec!["all".to_string(), "cases".to_string()];
        totals.extend(self.snapshots.iter().map(|s| s.total.to_string()));
        w.write_record(&totals)?;
        w.flush()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DailyPoint {
    pub date: NaiveDate,
    pub new_cases: u64,
    pub cumulative_cases: u64,
}

/// Per-category daily counts over every date from the earliest to the latest
/// report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailySeries {
    /// Indexed by [`Category::index`].
    pub series: [Vec<DailyPoint>; CATEGORY_COUNT],
}

impl DailySeries {
    pub fn category(&self, c: Category) -> &[DailyPoint] {
        &self.series[c.index()]
    }

    /// Earliest date with the most new cases; `None` when the category has none.
    pub fn peak_date(&self, c: Category) -> Option<NaiveDate> {
        self.category(c)
            .iter()
            .filter(|p| p.new_cases > 0)
            .fold(None, |best: Option<&DailyPoint>, p| match best {
                Some(b) if b.new_cases >= p.new_cases => Some(b),
                _ => Some(p),
            })
            .map(|p| p.date)
    }

    /// Long format: `date,category,new_cases,cumulative_cases`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# covtrace daily v1")?;
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["date", "category", "new_cases", "cumulative_cases"])?;
        let days = self.series[0].len();
        for d in 0..days {
            for c in Category::ALL {
                let p = self.series[c.index()][d];
                w.write_record([
                    p.date.to_string(),
                    c.to_string(),
                    p.new_cases.to_string(),
                    p.cumulative_cases.to_string(),
                ])?;
            }
        }
        w.flush()
    }
}

pub fn daily_series(db: &TrajectoryDatabase, labels: &LabelMap) -> Result<DailySeries> {
    let mut by_day: BTreeMap<NaiveDate, [u64; CATEGORY_COUNT]> = BTreeMap::new();
    for r in db.reports() {
        let c = label_of(labels, &r.id)?.parent();
        by_day.entry(r.report_date).or_default()[c.index()] += 1;
    }
    let mut series: [Vec<DailyPoint>; CATEGORY_COUNT] = Default::default();
    let (Some(&first), Some(&last)) = (by_day.keys().next(), by_day.keys().next_back()) else {
        return Ok(DailySeries { series });
    };
    let mut running = [0u64; CATEGORY_COUNT];
    for date in first.iter_days().take_while(|d| *d <= last) {
        let fresh = by_day.get(&date).copied().unwrap_or_default();
        for c in 0..CATEGORY_COUNT {
            running[c] += fresh[c];
            series[c].push(DailyPoint {
                date,
                new_cases: fresh[c],
                cumulative_cases: running[c],
            });
        }
    }
    Ok(DailySeries { series })
}

/// Case counts per category by province and by (province, city).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpatialTable {
    pub provinces: BTreeMap<String, [u64; CATEGORY_COUNT]>,
    pub cities: BTreeMap<(String, String), [u64; CATEGORY_COUNT]>,
}

impl SpatialTable {
    pub fn total(&self) -> u64 {
        self.provinces.values().flatten().sum()
    }

    /// `level,province,city,<categories…>,total`; province rows (empty city)
    /// precede city rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# covtrace spatial v1")?;
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header = vec!["level", "province", "city"];
        header.extend(Category::ALL.map(Category::as_str));
        header.push("total");
        w.write_record(&header)?;
        let row = |level: &str, p: &str, c: &str, counts: &[u64; CATEGORY_COUNT]| {
            let mut r = vec![level.to_string(), p.to_string(), c.to_string()];
            r.extend(counts.iter().map(u64::to_string));
            r.push(counts.iter().sum::<u64>().to_string());
            r
        };
        for (p, counts) in &self.provinces {
            w.write_record(row("province", p, "", counts))?;
        }
        for ((p, c), counts) in &self.cities {
            w.write_record(row("city", p, c, counts))?;
        }
        w.flush()
    }
}

pub fn spatial_table(db: &TrajectoryDatabase, labels: &LabelMap) -> Result<SpatialTable> {
    let mut t = SpatialTable::default();
    for r in db.reports() {
        let c = label_of(labels, &r.id)?.parent().index();
        t.provinces.entry(r.province.clone()).or_default()[c] += 1;
        t.cities
            .entry((r.province.clone(), r.city.clone()))
            .or_default()[c] += 1;
    }
    Ok(t)
}

/// Onset-to-admission delays in days.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DelayStats {
    pub histogram: BTreeMap<i64, u64>,
    pub defined: u64,
    /// Reports lacking onset or admission date.
    pub missing: u64,
    /// Reports whose admission precedes onset.
    pub negative: u64,
}

impl DelayStats {
    /// Share of defined delays that are at most `days`; `None` when no delay
    /// is defined.
    pub fn fraction_within(&self, days: i64) -> Option<f64> {
        let within: u64 = self.histogram.range(..=days).map(|(_, n)| n).sum();
        (self.defined > 0).then(|| within as f64 / self.defined as f64)
    }

    /// `delay_days,cases,cumulative_fraction` for every day from 0 to the
    /// longest delay.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# covtrace delays v1 defined={} missing={} negative={}",
            self.defined, self.missing, self.negative
        )?;
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["delay_days", "cases", "cumulative_fraction"])?;
        let max = self.histogram.keys().next_back().copied().unwrap_or(-1);
        let mut running = 0;
        for d in 0..=max {
            let n = self.histogram.get(&d).copied().unwrap_or(0);
            running += n;
            w.write_record([
                d.to_string(),
                n.to_string(),
                format!("{:.6}", running as f64 / self.defined as f64),
            ])?;
        }
        w.flush()
    }
}

pub fn admission_delay_stats(db: &TrajectoryDatabase) -> DelayStats {
    let mut s = DelayStats::default();
    for r in db.reports() {
        match (r.symptom_onset_date, r.hospital_admission_date) {
            (Some(_), Some(_)) => match admission_delay(r) {
                Some(d) => {
                    *s.histogram.entry(d).or_default() += 1;
                    s.defined += 1;
                }
                None => s.negative += 1,
            },
            _ => s.missing += 1,
        }
    }
    s
}

/// Great-circle distance in km between two (lat, lon) points in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2)
        + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    let h = h.clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_KM * h.sqrt().atan2((1.0 - h).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoRow {
    pub city: String,
    pub distance_km: f64,
    pub outflow_fraction: f64,
    pub reported_cases: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoRegressionDataset {
    pub wuhan: (f64, f64),
    /// One row per corpus city, ordered by name.
    pub rows: Vec<GeoRow>,
    /// Corpus cities absent from the outflow file (given outflow 0).
    pub missing_outflow: Vec<String>,
}

/// Pearson correlation; `None` when either side has zero variance or fewer
/// than two points.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

impl GeoRegressionDataset {
    fn column(&self, f: impl Fn(&GeoRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    /// Correlation of reported cases with distance from Wuhan.
    pub fn distance_correlation(&self) -> Option<f64> {
        pearson(&self.column(|r| r.distance_km), &self.column(|r| r.reported_cases as f64))
    }

    /// Correlation of reported cases with outflow fraction.
    pub fn outflow_correlation(&self) -> Option<f64> {
        pearson(&self.column(|r| r.outflow_fraction), &self.column(|r| r.reported_cases as f64))
    }

    /// Features `distance_km`, `outflow_fraction`; target reported cases.
    pub fn to_dataset(&self) -> Result<Dataset> {
        Dataset::new(
            self.rows
                .iter()
                .map(|r| vec![r.distance_km, r.outflow_fraction])
                .collect(),
            self.column(|r| r.reported_cases as f64),
            vec!["distance_km".into(), "outflow_fraction".into()],
        )
    }

    /// `city,distance_km,outflow_fraction,reported_cases`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# covtrace geo_dataset v1 wuhan={},{}",
            self.wuhan.0, self.wuhan.1
        )?;
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["city", "distance_km", "outflow_fraction", "reported_cases"])?;
        for r in &self.rows {
            w.write_record([
                r.city.clone(),
                format!("{:.4}", r.distance_km),
                r.outflow_fraction.to_string(),
                r.reported_cases.to_string(),
            ])?;
        }
        w.flush()
    }
}

fn read_table<R: Read>(reader: R, what: &str, columns: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::format(what, e))?
        .iter()
        .map(str::to_lowercase)
        .collect();
    if header != columns {
        return Err(Error::format(
            what,
            format!("header {:?}, expected {:?}", header.join(","), columns.join(",")),
        ));
    }
    rdr.records()
        .map(|r| {
            r.map(|r| r.iter().map(str::to_string).collect())
                .map_err(|e| Error::format(what, e))
        })
        .collect()
}

fn parse_number(what: &str, city: &str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::format(what, format!("{city}: bad number {s:?}")))
}

/// Reads a `city,lat,lon` coordinates table.
pub fn read_coordinates<R: Read>(reader: R) -> Result<BTreeMap<String, (f64, f64)>> {
    const WHAT: &str = "coordinates file";
    let mut out = BTreeMap::new();
    for row in read_table(reader, WHAT, &["city", "lat", "lon"])? {
        let lat = parse_number(WHAT, &row[0], &row[1])?;
        let lon = parse_number(WHAT, &row[0], &row[2])?;
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::format(WHAT, format!("{}: ({lat}, {lon}) out of range", row[0])));
        }
        if out.insert(row[0].clone(), (lat, lon)).is_some() {
            return Err(Error::format(WHAT, format!("duplicate city {:?}", row[0])));
        }
    }
    Ok(out)
}

/// Reads a `city,outflow_fraction` table; fractions lie in [0, 1] and sum to
/// at most 1.
pub fn read_outflow<R: Read>(reader: R) -> Result<BTreeMap<String, f64>> {
    const WHAT: &str = "outflow file";
    let mut out = BTreeMap::new();
    for row in read_table(reader, WHAT, &["city", "outflow_fraction"])? {
        let v = parse_number(WHAT, &row[0], &row[1])?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::format(WHAT, format!("{}: fraction {v} not in [0, 1]", row[0])));
        }
        if out.insert(row[0].clone(), v).is_some() {
            return Err(Error::format(WHAT, format!("duplicate city {:?}", row[0])));
        }
    }
    let sum: f64 = out.values().sum();
    if sum > 1.0 + 1e-9 {
        return Err(Error::format(WHAT, format!("fractions sum to {sum} > 1")));
    }
    Ok(out)
}

/// One row per corpus city. Every city must have coordinates; Wuhan's come
/// from the table when present, else [`WUHAN`].
pub fn build_geo_dataset(
    db: &TrajectoryDatabase,
    coordinates: &BTreeMap<String, (f64, f64)>,
    outflow: &BTreeMap<String, f64>,
) -> Result<GeoRegressionDataset> {
    let wuhan = coordinates.get("Wuhan").copied().unwrap_or(WUHAN);
    let mut cases: BTreeMap<&str, u64> = BTreeMap::new();
    for r in db.reports() {
        *cases.entry(r.city.as_str()).or_default() += 1;
    }
    let unresolved: Vec<String> = cases
        .keys()
        .filter(|c| !coordinates.contains_key(**c) && **c != "Wuhan")
        .map(|c| c.to_string())
        .collect();
    if !unresolved.is_empty() {
        return Err(Error::UnresolvedCities(unresolved));
    }
    let mut missing_outflow = Vec::new();
    let rows = cases
        .into_iter()
        .map(|(city, n)| {
            let at = coordinates.get(city).copied().unwrap_or(wuhan);
            let outflow_fraction = outflow.get(city).copied().unwrap_or_else(|| {
                missing_outflow.push(city.to_string());
                0.0
            });
            GeoRow {
                city: city.to_string(),
                distance_km: haversine_km(wuhan, at),
                outflow_fraction,
                reported_cases: n,
            }
        })
        .collect();
    Ok(GeoRegressionDataset {
        wuhan,
        rows,
        missing_outflow,
    })
}

/// As [`build_geo_dataset`], reading both tables from disk.
pub fn build_geo_dataset_from_files(
    db: &TrajectoryDatabase,
    coordinates: impl AsRef<Path>,
    outflow: impl AsRef<Path>,
) -> Result<GeoRegressionDataset> {
    let open = |p: &Path| std::fs::File::open(p).map_err(|e| Error::io(p, e));
    let coords = read_coordinates(open(coordinates.as_ref())?)?;
    let flow = read_outflow(open(outflow.as_ref())?)?;
    build_geo_dataset(db, &coords, &flow)
}
