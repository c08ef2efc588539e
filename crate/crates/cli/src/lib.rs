//! The `covtrace` batch pipeline. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code: 0 on success, 1 on a data
//! error, 2 on a usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use thiserror::Error;

use covtrace_core::case_model::{validate_report, SubCategory};
use covtrace_core::classify::{
    classify_all, train_linear, write_labels, LabelMap, LinearTextModel, RuleSet, TrainConfig,
};
use covtrace_core::dynamics::{
    admission_delay_stats, build_geo_dataset_from_files, daily_series, spatial_table, weekly_snapshots,
    DEFAULT_ANCHOR,
};
use covtrace_core::gbr::{compare_models, GbrConfig, LossFunction, ModelSpec, SplitConfig};
use covtrace_core::ingest::{build_chains, parse_corpus, parse_edges, TrajectoryDatabase};
use covtrace_core::synth::{generate, ScenarioConfig};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] covtrace_core::Error),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "covtrace", version, about = "Case-report transmission analytics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate a corpus; write rejections.csv
    Ingest(IngestArgs),
    /// Label every case; write labels.csv
    Classify(ClassifyArgs),
    /// Write table1.csv, daily.csv, spatial.csv and delays.csv
    Dynamics(DynamicsArgs),
    /// Write geo_dataset.csv and comparison.csv
    Regress(RegressArgs),
    /// Generate a synthetic scenario
    Synth(SynthArgs),
    /// Run ingest, classify, dynamics and (given --coords and --outflow)
    /// regress in one pass
    Report(ReportArgs),
    /// Fit a linear text scorer from labeled cases
    Train(TrainArgs),
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Line-delimited JSON case reports
    #[arg(long)]
    input: PathBuf,
    /// Line-delimited JSON transmission edges
    #[arg(long)]
    edges: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScorerKind {
    Rules,
    Linear,
}

#[derive(Debug, Args)]
struct ScorerArgs {
    #[arg(long, value_enum, default_value_t = ScorerKind::Rules)]
    scorer: ScorerKind,
    /// Line-delimited JSON rules replacing the default table
    #[arg(long)]
    rules_file: Option<PathBuf>,
    /// Linear model dump, required with --scorer linear
    #[arg(long, required_if_eq("scorer", "linear"))]
    model_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnchorArgs {
    /// First day of week 1 (YYYY-MM-DD)
    #[arg(long, default_value_t = DEFAULT_ANCHOR)]
    anchor: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossArg {
    Squared,
    Absolute,
}

#[derive(Debug, Args)]
struct GeoArgs {
    /// city,lat,lon
    #[arg(long)]
    coords: Option<PathBuf>,
    /// city,outflow_fraction
    #[arg(long)]
    outflow: Option<PathBuf>,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    gbr_stages: u64,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    gbr_depth: u64,
    #[arg(long, default_value_t = 0.1)]
    gbr_shrinkage: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Squared)]
    loss: LossArg,
    /// Seed for the train/test split
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    scorer: ScorerArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct DynamicsArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    anchor: AnchorArgs,
    #[command(flatten)]
    scorer: ScorerArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct RegressArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    geo: GeoArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    anchor: AnchorArgs,
    #[command(flatten)]
    scorer: ScorerArgs,
    #[command(flatten)]
    geo: GeoArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 5000, value_parser = clap::value_parser!(u64).range(1..))]
    cases: u64,
    /// Label-noise rate in [0, 0.5)
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// CSV with an `id` column and a `true_leaf` or `subcategory` column
    #[arg(long)]
    labels: PathBuf,
    /// Destination of the model dump
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = TrainConfig::default().seed)]
    seed: u64,
}

/// Runs the pipeline for `argv` (program name first) and returns the exit
/// code. Diagnostics go to stderr, summaries to stdout.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `covtrace --help` for usage");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Ingest(a) => {
            let db = load(&a.corpus, &a.output.output_dir)?;
            write_ingest(&db, &a.output.output_dir)
        }
        Command::Classify(a) => {
            let db = load(&a.corpus, &a.output.output_dir)?;
            let labels = label(&db, &a.scorer)?;
            write_out(&a.output.output_dir, "labels.csv", |w| write_labels(&labels, w))
        }
        Command::Dynamics(a) => {
            let db = load(&a.corpus, &a.output.output_dir)?;
            let labels = label(&db, &a.scorer)?;
            write_dynamics(&db, &labels, a.anchor.anchor, &a.output.output_dir)
        }
        Command::Regress(a) => {
            let db = load(&a.corpus, &a.output.output_dir)?;
            let (coords, outflow) = geo_paths(&a.geo)?
                .ok_or_else(|| CliError::Usage("regress needs --coords and --outflow".into()))?;
            write_regress(&db, &a.geo, coords, outflow, &a.output.output_dir)
        }
        Command::Report(a) => {
            let dir = &a.output.output_dir;
            let db = load(&a.corpus, dir)?;
            write_ingest(&db, dir)?;
            let labels = label(&db, &a.scorer)?;
            write_out(dir, "labels.csv", |w| write_labels(&labels, w))?;
            write_dynamics(&db, &labels, a.anchor.anchor, dir)?;
            match geo_paths(&a.geo)? {
                Some((coords, outflow)) => write_regress(&db, &a.geo, coords, outflow, dir),
                None => {
                    info!("no --coords/--outflow given; skipping regression");
                    Ok(())
                }
            }
        }
        Command::Synth(a) => synth(&a),
        Command::Train(a) => train(&a),
    }
}

fn write_out(
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> CliResult<()> {
    let path = dir.join(name);
    let wrap = |source| CliError::Write {
        path: path.clone(),
        source,
    };
    let mut w = BufWriter::new(File::create(&path).map_err(wrap)?);
    f(&mut w).and_then(|_| w.flush()).map_err(wrap)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

/// Rejected lines and edges, kept for rejections.csv.
struct Loaded {
    db: TrajectoryDatabase,
    rejections: Vec<(String, usize, String)>,
    lines_read: usize,
}

fn load(args: &CorpusArgs, out: &Path) -> CliResult<Loaded> {
    ensure_dir(out)?;
    let (mut db, summary) = parse_corpus(&args.input)?;
    let source = args.input.display().to_string();
    let mut rejections: Vec<(String, usize, String)> = summary
        .rejected
        .iter()
        .map(|r| (source.clone(), r.line, r.reason.clone()))
        .collect();
    if let Some(path) = &args.edges {
        let (edges, edge_summary) = parse_edges(path)?;
        let edge_source = path.display().to_string();
        rejections.extend(
            edge_summary
                .rejected
                .iter()
                .map(|r| (edge_source.clone(), r.line, r.reason.clone())),
        );
        rejections.extend(
            db.attach_edges(edges)
                .into_iter()
                .map(|r| (edge_source.clone(), r.line, r.reason)),
        );
    }
    for (src, line, reason) in &rejections {
        warn!("{src}:{line}: {reason}");
    }
    Ok(Loaded {
        db,
        rejections,
        lines_read: summary.lines_read,
    })
}

impl std::ops::Deref for Loaded {
    type Target = TrajectoryDatabase;

    fn deref(&self) -> &TrajectoryDatabase {
        &self.db
    }
}

fn write_ingest(loaded: &Loaded, dir: &Path) -> CliResult<()> {
    let db = &loaded.db;
    let end = db.last_report_date();
    let violations: Vec<(String, String)> = db
        .reports()
        .flat_map(|r| {
            validate_report(r, end)
                .into_iter()
                .map(move |v| (r.id.clone(), v.to_string()))
        })
        .collect();
    let chains = build_chains(db);
    println!(
        "{} lines read, {} accepted, {} rejected, {} validation issues, {} edges, {} chains, {} dangling contacts",
        loaded.lines_read,
        db.len(),
        loaded.rejections.len(),
        violations.len(),
        db.transmission_graph().edges.len(),
        chains.chains.len(),
        chains.dangling_contacts
    );
    write_out(dir, "rejections.csv", |w| {
        writeln!(w, "# covtrace rejections v1")?;
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["source", "line", "id", "reason"])?;
        for (src, line, reason) in &loaded.rejections {
            c.write_record([src.as_str(), &line.to_string(), "", reason])?;
        }
        for (id, v) in &violations {
            c.write_record(["validation", "", id, v])?;
        }
        c.flush()
    })
}

fn label(db: &TrajectoryDatabase, args: &ScorerArgs) -> CliResult<LabelMap> {
    let open = |p: &Path| File::open(p).map_err(|e| covtrace_core::Error::Io { path: p.to_path_buf(), source: e });
    match args.scorer {
        ScorerKind::Rules => {
            let rules = match &args.rules_file {
                Some(p) => RuleSet::read(open(p)?)?,
                None => RuleSet::default(),
            };
            Ok(classify_all(db.reports(), &rules))
        }
        ScorerKind::Linear => {
            let path = args
                .model_file
                .as_deref()
                .ok_or_else(|| CliError::Usage("--scorer linear needs --model-file".into()))?;
            let model = LinearTextModel::read(open(path)?)?;
            Ok(classify_all(db.reports(), &model))
        }
    }
}

fn write_dynamics(db: &TrajectoryDatabase, labels: &LabelMap, anchor: NaiveDate, dir: &Path) -> CliResult<()> {
    let table = weekly_snapshots(db, labels, anchor, None)?;
    if !table.before_anchor.is_empty() {
        warn!(
            "{} reports dated before {anchor} counted in week 1",
            table.before_anchor.len()
        );
    }
    write_out(dir, "table1.csv", |w| table.write_csv(w))?;
    let daily = daily_series(db, labels)?;
    write_out(dir, "daily.csv", |w| daily.write_csv(w))?;
    let spatial = spatial_table(db, labels)?;
    write_out(dir, "spatial.csv", |w| spatial.write_csv(w))?;
    let delays = admission_delay_stats(db);
    match delays.fraction_within(5) {
        Some(f) => println!("admitted within 5 days of onset: {:.2}% of {} cases", f * 100.0, delays.defined),
        None => println!("no admission delays defined"),
    }
    write_out(dir, "delays.csv", |w| delays.write_csv(w))
}

fn geo_paths(args: &GeoArgs) -> CliResult<Option<(&Path, &Path)>> {
    match (&args.coords, &args.outflow) {
        (Some(c), Some(o)) => Ok(Some((c, o))),
        (None, None) => Ok(None),
        _ => Err(CliError::Usage("--coords and --outflow go together".into())),
    }
}

fn gbr_config(args: &GeoArgs) -> CliResult<GbrConfig> {
    if !(args.gbr_shrinkage > 0.0 && args.gbr_shrinkage <= 1.0) {
        return Err(CliError::Usage(format!(
            "--gbr-shrinkage {} not in (0, 1]",
            args.gbr_shrinkage
        )));
    }
    Ok(GbrConfig {
        stages: args.gbr_stages as usize,
        max_depth: args.gbr_depth as usize,
        shrinkage: args.gbr_shrinkage,
        loss: match args.loss {
            LossArg::Squared => LossFunction::Squared,
            LossArg::Absolute => LossFunction::Absolute,
        },
        seed: args.seed,
    })
}

fn describe_sign(r: Option<f64>) -> String {
    match r {
        Some(r) if r > 0.0 => format!("{r:.4} (positive)"),
        Some(r) if r < 0.0 => format!("{r:.4} (negative)"),
        Some(r) => format!("{r:.4} (zero)"),
        None => "undefined".into(),
    }
}

fn write_regress(db: &TrajectoryDatabase, args: &GeoArgs, coords: &Path, outflow: &Path, dir: &Path) -> CliResult<()> {
    let gbr = gbr_config(args)?;
    let geo = build_geo_dataset_from_files(db, coords, outflow)?;
    for city in &geo.missing_outflow {
        warn!("no outflow data for {city}; using 0");
    }
    write_out(dir, "geo_dataset.csv", |w| geo.write_csv(w))?;
    println!("correlation of reported cases with distance: {}", describe_sign(geo.distance_correlation()));
    println!("correlation of reported cases with outflow: {}", describe_sign(geo.outflow_correlation()));
    let data = geo.to_dataset()?;
    let split = SplitConfig {
        seed: args.seed,
        ..SplitConfig::default()
    };
    let table = compare_models(&data, &split, &ModelSpec::default_suite(gbr))?;
    write_out(dir, "comparison.csv", |w| table.write_csv(w))
}

fn synth(args: &SynthArgs) -> CliResult<()> {
    if !(0.0..0.5).contains(&args.noise) {
        return Err(CliError::Usage(format!("--noise {} not in [0, 0.5)", args.noise)));
    }
    let config = ScenarioConfig::golden_sized(args.seed, args.cases as usize, args.noise);
    let scenario = generate(&config)?;
    ensure_dir(&args.output.output_dir)?;
    let files = scenario.write_to_dir(&args.output.output_dir)?;
    println!(
        "generated {} cases (seed {}) into {}",
        scenario.reports.len(),
        config.seed,
        files.corpus.display()
    );
    Ok(())
}

fn read_leaf_labels(path: &Path) -> CliResult<BTreeMap<String, SubCategory>> {
    let bad = |m: String| covtrace_core::Error::Format {
        what: "labels file".into(),
        message: m,
    };
    let file = File::open(path).map_err(|e| covtrace_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let id_col = col("id").ok_or_else(|| bad("missing id column".into()))?;
    let leaf_col = col("true_leaf")
        .or_else(|| col("subcategory"))
        .ok_or_else(|| bad("missing true_leaf or subcategory column".into()))?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let leaf: SubCategory = rec[leaf_col].parse().map_err(covtrace_core::Error::from)?;
        out.insert(rec[id_col].to_string(), leaf);
    }
    Ok(out)
}

fn train(args: &TrainArgs) -> CliResult<()> {
    let (db, _) = parse_corpus(&args.corpus.input)?;
    let leaves = read_leaf_labels(&args.labels)?;
    let corpus: Vec<_> = db
        .reports()
        .filter_map(|r| leaves.get(&r.id).map(|l| (r, *l)))
        .collect();
    let config = TrainConfig {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let model = train_linear(corpus.iter().copied(), config)?;
    let path = &args.model_file;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let wrap = |source| CliError::Write {
        path: path.clone(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(wrap)?);
    model.write(&mut w).and_then(|_| w.flush()).map_err(wrap)?;
    println!(
        "trained on {} cases, vocabulary {}, final loss {:.6}",
        corpus.len(),
        model.vocabulary_len(),
        model.loss_history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}
