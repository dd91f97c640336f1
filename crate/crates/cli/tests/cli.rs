use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use citematch::classifier::load_model;
use citematch::corpus::load_corpus;
use citematch::eval::{cache_outcomes, gold_to_jsonl, load_gold, SweepCurve, DEFAULT_PENALTIES};
use citematch::index::Index;
use citematch::matcher::{batch_entry_json, MatchConfig, Matcher};
use citematch::synth::{synth, Perturbations, SynthConfig};
use citematch_cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use serde_json::Value;
use tempfile::TempDir;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Out {
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let code = run(std::iter::once("citematch").chain(args.iter().copied()), &mut o, &mut e);
    Out { code, stdout: String::from_utf8(o).unwrap(), stderr: String::from_utf8(e).unwrap() }
}

fn ok(args: &[&str]) -> String {
    let out = cli(args);
    assert_eq!(out.code, EXIT_OK, "{args:?}: {}", out.stderr);
    out.stdout
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small synthetic workspace with a trained forest, built once.
struct Fixture {
    _dir: TempDir,
    corpus: PathBuf,
    gold: PathBuf,
    model: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let corpus = dir.path().join("corpus.jsonl");
        let gold = dir.path().join("gold.jsonl");
        let model = dir.path().join("model.json");
        ok(&["synth", "--records", "300", "--gold", "80", "--seed", "5", "--corpus-out", s(&corpus), "--gold-out", s(&gold)]);
        ok(&["train", "--corpus", s(&corpus), "--gold", s(&gold), "--output", s(&model), "--trees", "20"]);
        Fixture { _dir: dir, corpus, gold, model }
    })
}

#[test]
fn exit_codes() {
    let out = cli(&["frobnicate"]);
    assert_eq!(out.code, EXIT_USAGE);
    assert!(out.stderr.contains("Usage"), "{}", out.stderr);
    assert_eq!(cli(&["--help"]).code, EXIT_OK);
    assert_eq!(cli(&["eval"]).code, EXIT_USAGE);
    assert_eq!(cli(&["sweep", "--corpus", "x", "--model", "y", "--gold", "z", "--penalties", "1"]).code, EXIT_USAGE);

    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\": 1, \"title\": \"ok\"}\nnot json\n").unwrap();
    let out = cli(&["ingest", "--input", s(&bad)]);
    assert_eq!(out.code, EXIT_DATA);
    assert!(out.stderr.contains("line 2"), "{}", out.stderr);
    assert_eq!(cli(&["ingest", "--input", s(&dir.path().join("missing.jsonl"))]).code, EXIT_DATA);

    // The real binary maps codes to the process exit status.
    let status = Command::new(env!("CARGO_BIN_EXE_citematch")).arg("frobnicate").output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&status.stderr).contains("Usage"));
}

#[test]
fn synth_files_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let paths: Vec<(PathBuf, PathBuf)> =
        (0..2).map(|i| (dir.path().join(format!("c{i}.jsonl")), dir.path().join(format!("g{i}.jsonl")))).collect();
    for (c, g) in &paths {
        ok(&["synth", "--seed", "7", "--corpus-out", s(c), "--gold-out", s(g)]);
    }
    let lib = synth(&SynthConfig::default()).unwrap();
    for (c, g) in &paths {
        assert_eq!(fs::read_to_string(c).unwrap(), lib.corpus.to_jsonl());
        assert_eq!(fs::read_to_string(g).unwrap(), gold_to_jsonl(&lib.gold));
    }
    let corpus = load_corpus(&paths[0].0).unwrap();
    assert_eq!(corpus.len(), 1000);
    assert_eq!(load_gold(&paths[0].1, &corpus).unwrap().len(), 200);
}

#[test]
fn match_output_equals_library() {
    let f = fixture();
    let corpus = load_corpus(&f.corpus).unwrap();
    let gold = load_gold(&f.gold, &corpus).unwrap();
    let model = load_model(&f.model).unwrap();
    let index = Index::build(&corpus);
    let matcher = Matcher::new(&corpus, &index, &model, MatchConfig::default());

    let dir = TempDir::new().unwrap();
    let inputs = dir.path().join("inputs.txt");
    let lines: Vec<String> = gold.iter().take(10).map(|g| serde_json::to_string(&g.input).unwrap()).map(|j| {
        // Plain citations go in as raw lines, structured ones as JSON.
        serde_json::from_str::<String>(&j).unwrap_or(j)
    }).collect();
    fs::write(&inputs, lines.join("\n")).unwrap();
    let printed = ok(&["match", "--corpus", s(&f.corpus), "--model", s(&f.model), "--input", s(&inputs)]);
    let want: Vec<Value> = gold.iter().take(10).map(|g| batch_entry_json(&g.input, &matcher.match_one(&g.input))).collect();
    let got: Vec<Value> = printed.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(got, want);

    // A saved index snapshot gives the same answers.
    let snap = dir.path().join("index.bin");
    ok(&["index", "--corpus", s(&f.corpus), "--output", s(&snap)]);
    let via_snapshot = ok(&["match", "--corpus", s(&f.corpus), "--index", s(&snap), "--model", s(&f.model), "--input", s(&inputs)]);
    assert_eq!(via_snapshot, printed);

    let one = ok(&["match", "--corpus", s(&f.corpus), "--model", s(&f.model), "--citation", &lines[0]]);
    assert_eq!(one.lines().next().unwrap(), printed.lines().next().unwrap());
}

#[test]
fn sweep_csv_shape_and_values() {
    let f = fixture();
    let csv = ok(&["sweep", "--corpus", s(&f.corpus), "--model", s(&f.model), "--gold", s(&f.gold)]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 11 * 3);
    assert_eq!(lines[0], "threshold,alpha,beta,tp,fm,fn,fp,tn,informedness");

    let corpus = load_corpus(&f.corpus).unwrap();
    let gold = load_gold(&f.gold, &corpus).unwrap();
    let model = load_model(&f.model).unwrap();
    let index = Index::build(&corpus);
    let matcher = Matcher::new(&corpus, &index, &model, MatchConfig::default());
    let thresholds: Vec<f64> = (0..=10).map(|i| ((0.5 + 0.05 * i as f64) * 1e9).round() / 1e9).collect();
    let want = SweepCurve::from_outcomes(&cache_outcomes(&matcher, &gold), &thresholds, &DEFAULT_PENALTIES).to_csv();
    assert_eq!(csv, want);

    let custom = ok(&[
        "sweep", "--corpus", s(&f.corpus), "--model", s(&f.model), "--gold", s(&f.gold), "--thresholds", "0.6,0.7", "--penalties", "3,0",
    ]);
    assert_eq!(custom.lines().count(), 3);
    assert!(custom.lines().nth(1).unwrap().starts_with("0.6,3,0,"));
}

#[test]
fn eval_on_noise_free_gold_is_perfect() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let (c, g) = (dir.path().join("c.jsonl"), dir.path().join("g.jsonl"));
    let clean = synth(&SynthConfig { records: 300, gold: 50, negative_fraction: 0.0, perturbations: Perturbations::NONE, seed: 5 }).unwrap();
    clean.corpus.write_jsonl(&c).unwrap();
    fs::write(&g, gold_to_jsonl(&clean.gold)).unwrap();
    let text = ok(&["--deterministic", "eval", "--corpus", s(&c), "--model", s(&f.model), "--gold", s(&g)]);
    let doc: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["generated_at"], "1970-01-01T00:00:00Z");
    assert_eq!(doc["report"]["counts"]["tp"], 50);
    for v in doc["report"]["informedness"].as_array().unwrap() {
        assert_eq!(v["informedness"], 1.0);
    }
    assert_eq!(doc["report"]["rn_zero"], true);
    // Deterministic output is byte-stable.
    assert_eq!(ok(&["--deterministic", "eval", "--corpus", s(&c), "--model", s(&f.model), "--gold", s(&g)]), text);
}

#[test]
fn config_file_supplies_and_flags_override() {
    let dir = TempDir::new().unwrap();
    let conf = dir.path().join("run.conf");
    let (c1, g1) = (dir.path().join("c1.jsonl"), dir.path().join("g1.jsonl"));
    fs::write(&conf, format!("# small run\nrecords = 40\ngold = 10\nseed = 9\ncorpus_out = {}\ngold_out = {}\n", s(&c1), s(&g1))).unwrap();
    ok(&["--config", s(&conf), "synth"]);
    let lib = synth(&SynthConfig { records: 40, gold: 10, seed: 9, ..SynthConfig::default() }).unwrap();
    assert_eq!(fs::read_to_string(&c1).unwrap(), lib.corpus.to_jsonl());

    ok(&["--config", s(&conf), "synth", "--seed", "10", "--records", "50"]);
    let lib = synth(&SynthConfig { records: 50, gold: 10, seed: 10, ..SynthConfig::default() }).unwrap();
    assert_eq!(fs::read_to_string(&c1).unwrap(), lib.corpus.to_jsonl());

    fs::write(&conf, "records = many\n").unwrap();
    assert_eq!(cli(&["--config", s(&conf), "synth", "--corpus-out", "a", "--gold-out", "b"]).code, EXIT_USAGE);
    fs::write(&conf, "records = 1\nrecords = 2\n").unwrap();
    assert_eq!(cli(&["--config", s(&conf), "synth"]).code, EXIT_USAGE);
}

#[test]
fn links_stats_report() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("c.jsonl");
    fs::write(
        &corpus,
        "{\"id\": 1, \"title\": \"Bessel functions\", \"year\": 1990, \"msc\": [\"33C10\"]}\n\
         {\"id\": 2, \"title\": \"Quadrature\", \"year\": 1991, \"msc\": [\"65D30\"]}\n",
    )
    .unwrap();
    let links = dir.path().join("l.jsonl");
    let link = |obj: &str, target: u64| {
        format!(
            "{{\"source_provider\": \"DLMF\", \"source_object_id\": \"{obj}\", \"source_url\": \"https://dlmf.nist.gov/{obj}\", \
             \"target_id\": {target}, \"link_publication_date\": \"2022-01-01\", \"link_provider\": \"x\"}}"
        )
    };
    fs::write(&links, [link("10.2", 1), link("10.3", 1), link("3.5", 2), link("1.1", 9)].join("\n")).unwrap();
    let text = ok(&["--deterministic", "links-stats", "--corpus", s(&corpus), "--links", s(&links)]);
    let doc: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["links"], 3);
    assert_eq!(doc["rejected"].as_array().unwrap().len(), 1);
    assert_eq!(doc["msc_histogram"], serde_json::json!({"33": 2, "65": 1}));
    assert_eq!(doc["msc_ranking"][0][0], "33");
}
