//! Line-delimited corpus ingest, the in-memory trajectory database, and
//! transmission-chain extraction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use chrono::NaiveDate;
use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::case_model::{CaseReport, Relationship, SubCategory};
use crate::error::{Error, Result};

/// Directed infector to infectee link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmissionEdge {
    pub infector_id: String,
    pub infectee_id: String,
    #[serde(default)]
    pub relationship: Relationship,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location_kind: Option<SubCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_date: Option<NaiveDate>,
}

impl TransmissionEdge {
    pub fn new(infector: &str, infectee: &str) -> Self {
        TransmissionEdge {
            infector_id: infector.to_string(),
            infectee_id: infectee.to_string(),
            relationship: Relationship::Unknown,
            location_kind: None,
            contact_date: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    /// 1-based line number in the source file.
    pub line: usize,
    pub reason: String,
}

/// Outcome of reading one line-delimited file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseSummary {
    /// Non-blank lines seen.
    pub lines_read: usize,
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone)]
pub struct CorpusMeta {
    pub source: PathBuf,
    pub record_count: usize,
    pub ingested_at: SystemTime,
}

/// Id-keyed store of case reports plus explicit transmission edges.
#[derive(Debug, Clone)]
pub struct TrajectoryDatabase {
    reports: BTreeMap<String, CaseReport>,
    edges: Vec<TransmissionEdge>,
    pub corpus_meta: CorpusMeta,
}

impl PartialEq for TrajectoryDatabase {
    fn eq(&self, other: &Self) -> bool {
        self.reports == other.reports && self.edges == other.edges
    }
}

impl TrajectoryDatabase {
    pub fn empty(source: impl Into<PathBuf>) -> Self {
        TrajectoryDatabase {
            reports: BTreeMap::new(),
            edges: Vec::new(),
            corpus_meta: CorpusMeta {
                source: source.into(),
                record_count: 0,
                ingested_at: SystemTime::now(),
            },
        }
    }

    /// Builds a database from in-memory reports, first id wins.
    pub fn from_reports(reports: impl IntoIterator<Item = CaseReport>) -> (Self, ParseSummary) {
        let mut db = TrajectoryDatabase::empty("<memory>");
        let mut summary = ParseSummary::default();
        for (i, r) in reports.into_iter().enumerate() {
            summary.lines_read += 1;
            match db.insert(r) {
                Ok(()) => summary.accepted += 1,
                Err(reason) => summary.rejected.push(Rejection { line: i + 1, reason }),
            }
        }
        (db, summary)
    }

    fn insert(&mut self, report: CaseReport) -> std::result::Result<(), String> {
        if report.id.trim().is_empty() {
            return Err("empty id".to_string());
        }
        if self.reports.contains_key(&report.id) {
            return Err(format!("duplicate id {:?}", report.id));
        }
        self.reports.insert(report.id.clone(), report);
        self.corpus_meta.record_count = self.reports.len();
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CaseReport> {
        self.reports.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.reports.contains_key(id)
    }

    /// Reports in ascending id order.
    pub fn reports(&self) -> impl Iterator<Item = &CaseReport> {
        self.reports.values()
    }

    /// Explicit (sidecar) edges that passed validation.
    pub fn edges(&self) -> &[TransmissionEdge] {
        &self.edges
    }

    /// Latest date of report in the corpus.
    pub fn last_report_date(&self) -> Option<NaiveDate> {
        self.reports.values().map(|r| r.report_date).max()
    }

    /// Adds explicit edges, rejecting self-loops, unresolved endpoints and
    /// same-day reversals of an already accepted edge. Rejections carry the
    /// edge's 1-based position in `edges`.
    pub fn attach_edges(&mut self, edges: Vec<TransmissionEdge>) -> Vec<Rejection> {
        let mut rejected = Vec::new();
        for (i, e) in edges.into_iter().enumerate() {
            match edge_problem(&self.reports, &self.edges, &e) {
                Some(reason) => rejected.push(Rejection { line: i + 1, reason }),
                None => self.edges.push(e),
            }
        }
        rejected
    }

    /// The transmission graph: explicit edges followed by edges implied by
    /// contact records that name a tracked case (contact as infector). Each
    /// ordered pair appears once.
    pub fn transmission_graph(&self) -> TransmissionGraph {
        let mut seen = BTreeSet::new();
        let mut edges = Vec::new();
        let mut dangling_contacts = 0;
        for e in &self.edges {
            if seen.insert((e.infector_id.clone(), e.infectee_id.clone())) {
                edges.push(e.clone());
            }
        }
        for r in self.reports.values() {
            for c in &r.contacts {
                let Some(src) = c.contact_case_id.as_deref() else {
                    continue;
                };
                if !self.reports.contains_key(src) {
                    dangling_contacts += 1;
                    continue;
                }
                let e = TransmissionEdge {
                    infector_id: src.to_string(),
                    infectee_id: r.id.clone(),
                    relationship: c.relationship,
                    location_kind: c.location_kind,
                    contact_date: c.contact_date,
                };
                if edge_problem(&self.reports, &edges, &e).is_some() {
                    continue;
                }
                if seen.insert((e.infector_id.clone(), e.infectee_id.clone())) {
                    edges.push(e);
                }
            }
        }
        TransmissionGraph {
            edges,
            dangling_contacts,
        }
    }
}

fn edge_problem(
    reports: &BTreeMap<String, CaseReport>,
    accepted: &[TransmissionEdge],
    e: &TransmissionEdge,
) -> Option<String> {
    if e.infector_id == e.infectee_id {
        return Some(format!("self-loop on {:?}", e.infector_id));
    }
    for id in [&e.infector_id, &e.infectee_id] {
        if !reports.contains_key(id) {
            return Some(format!("unresolved case id {id:?}"));
        }
    }
    let reversed = accepted.iter().any(|a| {
        a.infector_id == e.infectee_id
            && a.infectee_id == e.infector_id
            && a.contact_date == e.contact_date
    });
    if reversed {
        return Some(format!(
            "2-cycle between {:?} and {:?} on the same contact date",
            e.infector_id, e.infectee_id
        ));
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionGraph {
    pub edges: Vec<TransmissionEdge>,
    /// Contact records whose case id does not resolve.
    pub dangling_contacts: usize,
}

impl TransmissionGraph {
    pub fn out_degrees(&self) -> HashMap<&str, usize> {
        let mut deg = HashMap::new();
        for e in &self.edges {
            *deg.entry(e.infector_id.as_str()).or_default() += 1;
        }
        deg
    }
}

fn read_lines<R: Read>(
    reader: R,
    source: &Path,
    mut accept: impl FnMut(usize, &str) -> std::result::Result<(), String>,
) -> Result<ParseSummary> {
    let mut summary = ParseSummary::default();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        summary.lines_read += 1;
        match accept(i + 1, &line) {
            Ok(()) => summary.accepted += 1,
            Err(reason) => summary.rejected.push(Rejection { line: i + 1, reason }),
        }
    }
    Ok(summary)
}

/// Reads a line-delimited corpus. Malformed or duplicate lines are recorded in
/// the summary and skipped.
pub fn parse_corpus_reader<R: Read>(
    reader: R,
    source: impl Into<PathBuf>,
) -> Result<(TrajectoryDatabase, ParseSummary)> {
    let source = source.into();
    let mut db = TrajectoryDatabase::empty(&source);
    let summary = read_lines(reader, &source, |_, line| {
        let report: CaseReport = serde_json::from_str(line).map_err(|e| e.to_string())?;
        db.insert(report)
    })?;
    db.corpus_meta.ingested_at = SystemTime::now();
    Ok((db, summary))
}

pub fn parse_corpus(path: impl AsRef<Path>) -> Result<(TrajectoryDatabase, ParseSummary)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus_reader(file, path)
}

/// Reads an edge sidecar file. Only syntax is checked here; resolution happens
/// in [`TrajectoryDatabase::attach_edges`].
pub fn parse_edges_reader<R: Read>(
    reader: R,
    source: impl Into<PathBuf>,
) -> Result<(Vec<TransmissionEdge>, ParseSummary)> {
    let source = source.into();
    let mut edges = Vec::new();
    let summary = read_lines(reader, &source, |_, line| {
        edges.push(serde_json::from_str(line).map_err(|e| e.to_string())?);
        Ok(())
    })?;
    Ok((edges, summary))
}

pub fn parse_edges(path: impl AsRef<Path>) -> Result<(Vec<TransmissionEdge>, ParseSummary)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_edges_reader(file, path)
}

/// Writes reports one JSON object per line, in id order.
pub fn write_corpus<'a, W: Write>(
    reports: impl IntoIterator<Item = &'a CaseReport>,
    mut out: W,
) -> std::io::Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_edges<W: Write>(edges: &[TransmissionEdge], mut out: W) -> std::io::Result<()> {
    for e in edges {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// One weakly connected component of the transmission graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// Sorted ascending.
    pub members: Vec<String>,
    pub edges: Vec<TransmissionEdge>,
    /// Members with no incoming edge, sorted ascending. When every member
    /// has an incoming edge, the smallest member id.
    pub roots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainSet {
    /// Ordered by smallest member id.
    pub chains: Vec<Chain>,
    pub dangling_contacts: usize,
}

/// Splits the transmission graph into weakly connected components.
pub fn build_chains(db: &TrajectoryDatabase) -> ChainSet {
    let graph = db.transmission_graph();
    let ids: Vec<&str> = graph
        .edges
        .iter()
        .flat_map(|e| [e.infector_id.as_str(), e.infectee_id.as_str()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();

    let mut uf = UnionFind::<usize>::new(ids.len());
    for e in &graph.edges {
        uf.union(index[e.infector_id.as_str()], index[e.infectee_id.as_str()]);
    }

    // ids are sorted, so the first member seen fixes each component's position
    let mut slot_of_root: HashMap<usize, usize> = HashMap::new();
    let mut chains: Vec<Chain> = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let root = uf.find(i);
        let slot = *slot_of_root.entry(root).or_insert_with(|| {
            chains.push(Chain {
                members: Vec::new(),
                edges: Vec::new(),
                roots: Vec::new(),
            });
            chains.len() - 1
        });
        chains[slot].members.push(id.to_string());
    }
    let mut has_in_edge = BTreeSet::new();
    for e in &graph.edges {
        let slot = slot_of_root[&uf.find(index[e.infector_id.as_str()])];
        chains[slot].edges.push(e.clone());
        has_in_edge.insert(e.infectee_id.as_str());
    }
    for chain in &mut chains {
        chain.roots = chain
            .members
            .iter()
            .filter(|m| !has_in_edge.contains(m.as_str()))
            .cloned()
            .collect();
        // a fully cyclic component has no in-degree-0 member
        if chain.roots.is_empty() {
            chain.roots.push(chain.members[0].clone());
        }
    }
    ChainSet {
        chains,
        dangling_contacts: graph.dangling_contacts,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransmissionCount {
    /// Out-degree in the transmission graph.
    pub count: usize,
    /// Value stored on the report, if any.
    pub stored: Option<u32>,
    pub warning: Option<String>,
}

/// Number of onward transmissions recorded for `case_id`.
pub fn transmissions_initiated(db: &TrajectoryDatabase, case_id: &str) -> Result<TransmissionCount> {
    let report = db
        .get(case_id)
        .ok_or_else(|| Error::UnknownCase(case_id.to_string()))?;
    let graph = db.transmission_graph();
    let count = graph
        .edges
        .iter()
        .filter(|e| e.infector_id == case_id)
        .count();
    let warning = match report.transmissions_initiated {
        Some(s) if s as usize != count => Some(format!(
            "case {case_id:?}: stored transmissions_initiated {s} differs from graph out-degree {count}"
        )),
        _ => None,
    };
    Ok(TransmissionCount {
        count,
        stored: report.transmissions_initiated,
        warning,
    })
}
