use std::collections::BTreeMap;
use std::path::Path;

use covtrace_cli::run;

fn covtrace(args: &[&str]) -> i32 {
    run(std::iter::once("covtrace").chain(args.iter().copied()))
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

/// Generates a scenario into `dir/data` and returns its directory.
fn synth(dir: &Path, seed: &str, cases: &str) -> String {
    let data = path(dir, "data");
    assert_eq!(covtrace(&["synth", "--seed", seed, "--cases", cases, "--output-dir", &data]), 0);
    data
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(covtrace(&[]), 2);
    assert_eq!(covtrace(&["dynamics", "--bogus"]), 2);
    assert_eq!(covtrace(&["frobnicate"]), 2);
    assert_eq!(covtrace(&["classify", "--input", "x.jsonl", "--output-dir", "o", "--scorer", "linear"]), 2);
    assert_eq!(covtrace(&["synth", "--noise", "0.5", "--output-dir", "o"]), 2);
    assert_eq!(covtrace(&["dynamics", "--input", "x", "--output-dir", "o", "--anchor", "18/01/2020"]), 2);
    assert_eq!(covtrace(&["--help"]), 0);
}

#[test]
fn data_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = path(dir.path(), "missing.jsonl");
    let out = path(dir.path(), "out");
    assert_eq!(covtrace(&["ingest", "--input", &missing, "--output-dir", &out]), 1);

    let data = synth(dir.path(), "1", "40");
    let corpus = format!("{data}/corpus.jsonl");
    let coords = path(dir.path(), "coords.csv");
    std::fs::write(&coords, "city,lat,lon\nBeijing,39.9,116.4\n").unwrap();
    let outflow = format!("{data}/outflow.csv");
    assert_eq!(
        covtrace(&["regress", "--input", &corpus, "--coords", &coords, "--outflow", &outflow, "--output-dir", &out]),
        1
    );
    // one of --coords/--outflow without the other is a usage error
    assert_eq!(covtrace(&["regress", "--input", &corpus, "--coords", &coords, "--output-dir", &out]), 2);
    let bad = format!("{data}/coords.csv");
    assert_eq!(
        covtrace(&["regress", "--input", &corpus, "--coords", &bad, "--outflow", &outflow, "--gbr-shrinkage", "0", "--output-dir", &out]),
        2
    );
}

#[test]
fn synth_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), "1", "10");
    synth(b.path(), "1", "10");
    let (fa, fb) = (read_dir(&a.path().join("data")), read_dir(&b.path().join("data")));
    assert_eq!(fa.keys().collect::<Vec<_>>(), ["coords.csv", "corpus.jsonl", "ledger.csv", "outflow.csv"]);
    assert_eq!(fa, fb);
}

#[test]
fn dynamics_week5_matches_golden_mix() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "42", "5000");
    let out = path(dir.path(), "out");
    let corpus = format!("{data}/corpus.jsonl");
    assert_eq!(covtrace(&["dynamics", "--input", &corpus, "--anchor", "2020-01-18", "--output-dir", &out]), 0);
    let files = read_dir(Path::new(&out));
    assert_eq!(files.keys().collect::<Vec<_>>(), ["daily.csv", "delays.csv", "spatial.csv", "table1.csv"]);
    let table = String::from_utf8(files["table1.csv"].clone()).unwrap();
    let mix = covtrace_core::synth::ScenarioConfig::golden().leaf_mix;
    let rows: Vec<&str> = table.lines().skip(2).take(14).collect();
    for (leaf, row) in covtrace_core::case_model::SubCategory::ALL.iter().zip(rows) {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[1], leaf.as_str());
        let week5: f64 = cells[6].parse().unwrap();
        assert!((week5 - mix[leaf.index()] * 100.0).abs() <= 1.5, "{row}");
    }
}

#[test]
fn report_equals_individual_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "5", "300");
    let corpus = format!("{data}/corpus.jsonl");
    let coords = format!("{data}/coords.csv");
    let outflow = format!("{data}/outflow.csv");
    let geo = ["--coords", &coords, "--outflow", &outflow, "--seed", "2"];
    let single = path(dir.path(), "single");
    let all = path(dir.path(), "all");

    assert_eq!(covtrace(&["ingest", "--input", &corpus, "--output-dir", &single]), 0);
    assert_eq!(covtrace(&["classify", "--input", &corpus, "--output-dir", &single]), 0);
    assert_eq!(covtrace(&["dynamics", "--input", &corpus, "--output-dir", &single]), 0);
    let mut regress = vec!["regress", "--input", &corpus, "--output-dir", &single];
    regress.extend(geo);
    assert_eq!(covtrace(&regress), 0);
    let mut report = vec!["report", "--input", &corpus, "--output-dir", &all];
    report.extend(geo);
    assert_eq!(covtrace(&report), 0);

    let (s, a) = (read_dir(Path::new(&single)), read_dir(Path::new(&all)));
    assert_eq!(s.len(), 8);
    assert_eq!(s, a);
}

#[test]
fn ingest_reports_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = path(dir.path(), "corpus.jsonl");
    std::fs::write(
        &corpus,
        concat!(
            r#"{"id":"a","report_date":"2020-01-20","province":"P","city":"C"}"#,
            "\n",
            "not json\n",
            r#"{"id":"b","report_date":"2020-01-21","province":"P","city":"C","symptom_onset_date":"2020-01-25","hospital_admission_date":"2020-01-22"}"#,
            "\n",
        ),
    )
    .unwrap();
    let edges = path(dir.path(), "edges.jsonl");
    std::fs::write(&edges, "{\"infector_id\":\"a\",\"infectee_id\":\"zz\"}\n").unwrap();
    let out = path(dir.path(), "out");
    assert_eq!(covtrace(&["ingest", "--input", &corpus, "--edges", &edges, "--output-dir", &out]), 0);
    let text = std::fs::read_to_string(format!("{out}/rejections.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# covtrace rejections v1");
    assert_eq!(lines[1], "source,line,id,reason");
    assert!(lines[2].contains(",2,,"));
    assert!(lines[3].contains("unresolved case id"));
    assert_eq!(lines[4], "validation,,b,hospital_admission_date: date order: onset <= admission");
    // the remaining violations are dates past the last report date
    assert!(lines[5..].iter().all(|l| l.contains("after corpus end 2020-01-21")), "{text}");
    assert_eq!(lines.len(), 7);
}

#[test]
fn train_then_classify_with_linear_scorer() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "3", "300");
    let corpus = format!("{data}/corpus.jsonl");
    let model = path(dir.path(), "model/linear.txt");
    let ledger = format!("{data}/ledger.csv");
    assert_eq!(covtrace(&["train", "--input", &corpus, "--labels", &ledger, "--model-file", &model]), 0);
    let out = path(dir.path(), "out");
    assert_eq!(
        covtrace(&["classify", "--input", &corpus, "--scorer", "linear", "--model-file", &model, "--output-dir", &out]),
        0
    );
    let labels = std::fs::read_to_string(format!("{out}/labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 302);

    // labels.csv from a classify run is accepted as training input too
    let rules_out = path(dir.path(), "rules");
    assert_eq!(covtrace(&["classify", "--input", &corpus, "--output-dir", &rules_out]), 0);
    let relabeled = format!("{rules_out}/labels.csv");
    assert_eq!(covtrace(&["train", "--input", &corpus, "--labels", &relabeled, "--model-file", &model, "--epochs", "5"]), 0);
}

#[test]
fn custom_rules_file() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = path(dir.path(), "corpus.jsonl");
    std::fs::write(
        &corpus,
        r#"{"id":"a","report_date":"2020-01-20","province":"P","city":"C","narrative":"Took a ferry."}"#,
    )
    .unwrap();
    let rules = path(dir.path(), "rules.jsonl");
    std::fs::write(&rules, r#"{"pattern":"ferry","leaf":"bus","weight":1.0}"#).unwrap();
    let out = path(dir.path(), "out");
    assert_eq!(covtrace(&["classify", "--input", &corpus, "--rules-file", &rules, "--output-dir", &out]), 0);
    let labels = std::fs::read_to_string(format!("{out}/labels.csv")).unwrap();
    assert_eq!(labels.lines().nth(2), Some("a,public_transit,bus,1.000000"));
}
