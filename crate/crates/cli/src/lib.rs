//! Command-line driver. Every subcommand is a thin shell over a library call.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use citematch::classifier::{load_model, save_model, train, ForestConfig, LinearConfig, Model, ModelConfig, TrainWarning};
use citematch::corpus::{load_corpus, Corpus};
use citematch::eval::{
    cache_outcomes, evaluate, gold_to_jsonl, load_gold, parse_threshold_range, training_set, PenaltyParams,
    SweepCurve, DEFAULT_PENALTIES,
};
use citematch::index::Index;
use citematch::kvconfig::parse_key_values;
use citematch::links::load_links;
use citematch::matcher::{batch_entry_json, MatchConfig, MatchInput, Matcher};
use citematch::synth::{synth, Perturbations, SynthConfig, DEFAULT_SEED};
use citematch_service::{AppState, ServiceConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

fn data(e: impl Display) -> CliError {
    CliError::Data(e.to_string())
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "citematch", version, about = "Citation matching against a bibliographic corpus")]
pub struct Cli {
    /// `key = value` file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Zero timestamps in outputs so runs are byte-identical.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a JSONL corpus and write it in canonical form.
    Ingest {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build the retrieval index and write a snapshot.
    Index {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train a match model from a gold set.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// forest or linear
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Match one citation or a file of citations; prints JSONL results.
    Match {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, conflicts_with = "input")]
        citation: Option<String>,
        /// One citation per line; lines starting with `{` are field maps.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Confusion counts and informedness for a gold set.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long, num_args = 1..)]
        penalties: Vec<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Informedness over a threshold range, as CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// `start:end:step` or a comma-separated list
        #[arg(long)]
        thresholds: Option<String>,
        #[arg(long, num_args = 1..)]
        penalties: Vec<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Link histograms by target MSC section and year.
    LinksStats {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        links: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic corpus and gold set.
    Synth {
        #[arg(long)]
        records: Option<usize>,
        #[arg(long)]
        gold: Option<usize>,
        #[arg(long)]
        negative_fraction: Option<f64>,
        #[arg(long)]
        token_drop_p: Option<f64>,
        #[arg(long)]
        author_initial_p: Option<f64>,
        #[arg(long)]
        year_jitter_p: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        corpus_out: Option<PathBuf>,
        #[arg(long)]
        gold_out: Option<PathBuf>,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        links: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
    },
}

/// Corpus and matching options shared by the pipeline subcommands.
#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Index snapshot to load instead of rebuilding.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub min_score: Option<f64>,
}

/// Flag values backed by the config file.
struct Settings {
    file: BTreeMap<String, String>,
}

impl Settings {
    fn get<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}"))),
        }
    }

    fn or<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        Ok(self.get(key, flag)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        self.get(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("--{} is required", key.replace('_', "-"))))
    }

    fn list(&self, key: &str, flag: Vec<String>) -> Vec<String> {
        if !flag.is_empty() {
            return flag;
        }
        self.file.get(key).map(|v| v.split_whitespace().map(str::to_owned).collect()).unwrap_or_default()
    }
}

pub fn parse_penalties(items: &[String]) -> Result<Vec<PenaltyParams>, CliError> {
    if items.is_empty() {
        return Ok(DEFAULT_PENALTIES.to_vec());
    }
    items
        .iter()
        .map(|s| {
            let bad = || CliError::Usage(format!("penalty must be `alpha,beta` with non-negative values, got {s:?}"));
            let (a, b) = s.split_once(',').ok_or_else(bad)?;
            let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if !(a.is_finite() && b.is_finite() && a >= 0.0 && b >= 0.0) {
                return Err(bad());
            }
            Ok(PenaltyParams::new(a, b))
        })
        .collect()
}

pub fn parse_thresholds(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("bad threshold list {text:?}"));
    let list = if text.contains(':') {
        parse_threshold_range(text).ok_or_else(bad)?
    } else {
        text.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if list.is_empty() || list.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(bad());
    }
    Ok(list)
}

fn read_corpus(path: &Path) -> Result<Corpus, CliError> {
    load_corpus(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<Model, CliError> {
    load_model(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_index(corpus: &Corpus, snapshot: Option<&Path>) -> Result<Index, CliError> {
    match snapshot {
        None => Ok(Index::build(corpus)),
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| io_err(p, e))?;
            Index::read_snapshot_for(io::BufReader::new(f), corpus).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
        }
    }
}

fn match_config(s: &Settings, c: &Common) -> Result<MatchConfig, CliError> {
    let d = MatchConfig::default();
    let cfg = MatchConfig { k: s.or("k", c.k, d.k)?, min_score: s.or("min_score", c.min_score, d.min_score)? };
    if cfg.k == 0 || !(0.0..=1.0).contains(&cfg.min_score) {
        return Err(CliError::Usage("k must be positive and min_score in [0, 1]".into()));
    }
    Ok(cfg)
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_err(p, e)),
        None => out.write_all(text.as_bytes()).map_err(|e| CliError::Internal(e.to_string())),
    }
}

fn timestamp(deterministic: bool) -> String {
    let t = if deterministic { DateTime::<Utc>::UNIX_EPOCH } else { Utc::now() };
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "{}", e.to_string().lines().next().unwrap_or(""));
            e.code()
        }
    }
}

pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            parse_key_values(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => BTreeMap::new(),
    };
    let s = Settings { file };
    match cli.command {
        Command::Ingest { input, output } => {
            let input: PathBuf = s.require("input", input)?;
            let corpus = read_corpus(&input)?;
            match s.get::<PathBuf>("output", output)? {
                Some(p) => corpus.write_jsonl(&p).map_err(|e| io_err(&p, e))?,
                None => emit(out, None, &corpus.to_jsonl())?,
            }
            writeln!(err, "ingested {} records", corpus.len()).ok();
        }
        Command::Index { corpus, output } => {
            let corpus = read_corpus(&s.require::<PathBuf>("corpus", corpus)?)?;
            let output: PathBuf = s.require("output", output)?;
            let index = Index::build(&corpus);
            let f = fs::File::create(&output).map_err(|e| io_err(&output, e))?;
            index.write_snapshot(io::BufWriter::new(f)).map_err(|e| io_err(&output, e))?;
            writeln!(err, "indexed {} records, {} terms", index.doc_count(), index.terms().count()).ok();
        }
        Command::Train { common, gold, output, kind, trees, max_depth, seed } => {
            let corpus = read_corpus(&s.require::<PathBuf>("corpus", common.corpus.clone())?)?;
            let gold = load_gold(&s.require::<PathBuf>("gold", gold)?, &corpus).map_err(data)?;
            let output: PathBuf = s.require("output", output)?;
            let index = load_index(&corpus, s.get::<PathBuf>("index", common.index.clone())?.as_deref())?;
            let placeholder = Model::constant(0.5);
            let matcher = Matcher::new(&corpus, &index, &placeholder, match_config(&s, &common)?);
            let rows = training_set(&matcher, &gold);
            let fd = ForestConfig::default();
            let config = match s.or("kind", kind, "forest".to_owned())?.as_str() {
                "forest" => ModelConfig::Forest(ForestConfig {
                    n_trees: s.or("trees", trees, fd.n_trees)?,
                    max_depth: s.or("max_depth", max_depth, fd.max_depth)?,
                    seed: s.or("seed", seed, fd.seed)?,
                    ..fd
                }),
                "linear" => ModelConfig::Linear(LinearConfig::default()),
                other => return Err(CliError::Usage(format!("unknown model kind {other:?}"))),
            };
            let outcome = train(&rows, &config).map_err(data)?;
            if let Some(TrainWarning::SingleClass { label }) = outcome.warning {
                writeln!(err, "warning: training rows are all {}; model is constant", if label { "matches" } else { "non-matches" }).ok();
            }
            save_model(&outcome.model, &output).map_err(data)?;
            writeln!(err, "trained {} model on {} rows ({} matches)", outcome.model.kind(), rows.len(), rows.positives()).ok();
        }
        Command::Match { common, model, citation, input, output } => {
            let corpus = read_corpus(&s.require::<PathBuf>("corpus", common.corpus.clone())?)?;
            let model = read_model(&s.require::<PathBuf>("model", model)?)?;
            let index = load_index(&corpus, s.get::<PathBuf>("index", common.index.clone())?.as_deref())?;
            let inputs: Vec<MatchInput> = match (citation, input) {
                (Some(c), _) => vec![MatchInput::Citation(c)],
                (None, Some(p)) => read_inputs(&p)?,
                (None, None) => return Err(CliError::Usage("give --citation or --input".into())),
            };
            let matcher = Matcher::new(&corpus, &index, &model, match_config(&s, &common)?);
            let mut text = String::new();
            for (i, r) in inputs.iter().zip(matcher.match_batch(&inputs)) {
                text.push_str(&batch_entry_json(i, &r).to_string());
                text.push('\n');
            }
            emit(out, s.get::<PathBuf>("output", output)?.as_deref(), &text)?;
        }
        Command::Eval { common, model, gold, penalties, output } => {
            let params = parse_penalties(&s.list("penalties", penalties))?;
            let corpus = read_corpus(&s.require::<PathBuf>("corpus", common.corpus.clone())?)?;
            let model = read_model(&s.require::<PathBuf>("model", model)?)?;
            let gold = load_gold(&s.require::<PathBuf>("gold", gold)?, &corpus).map_err(data)?;
            let index = load_index(&corpus, s.get::<PathBuf>("index", common.index.clone())?.as_deref())?;
            let matcher = Matcher::new(&corpus, &index, &model, match_config(&s, &common)?);
            let report = evaluate(&matcher, &gold, &params);
            let doc = json!({ "generated_at": timestamp(cli.deterministic), "report": report });
            let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Internal(e.to_string()))? + "\n";
            emit(out, s.get::<PathBuf>("output", output)?.as_deref(), &text)?;
        }
        Command::Sweep { common, model, gold, thresholds, penalties, output } => {
            let thresholds = parse_thresholds(&s.or("thresholds", thresholds, "0.5:1.0:0.05".to_owned())?)?;
            let params = parse_penalties(&s.list("penalties", penalties))?;
            let corpus = read_corpus(&s.require::<PathBuf>("corpus", common.corpus.clone())?)?;
            let model = read_model(&s.require::<PathBuf>("model", model)?)?;
            let gold = load_gold(&s.require::<PathBuf>("gold", gold)?, &corpus).map_err(data)?;
            let index = load_index(&corpus, s.get::<PathBuf>("index", common.index.clone())?.as_deref())?;
            let matcher = Matcher::new(&corpus, &index, &model, match_config(&s, &common)?);
            let curve = SweepCurve::from_outcomes(&cache_outcomes(&matcher, &gold), &thresholds, &params);
            emit(out, s.get::<PathBuf>("output", output)?.as_deref(), &curve.to_csv())?;
        }
        Command::LinksStats { corpus, links, output } => {
            let corpus = read_corpus(&s.require::<PathBuf>("corpus", corpus)?)?;
            let (set, rejects) = load_links(&s.require::<PathBuf>("links", links)?, &corpus).map_err(data)?;
            let stats = set.stats();
            let doc = json!({
                "generated_at": timestamp(cli.deterministic),
                "links": set.len(),
                "rejected": rejects,
                "msc_histogram": stats.msc_histogram,
                "msc_ranking": stats.msc_ranking(),
                "year_histogram": stats.year_histogram,
            });
            let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Internal(e.to_string()))? + "\n";
            emit(out, s.get::<PathBuf>("output", output)?.as_deref(), &text)?;
        }
        Command::Synth {
            records,
            gold,
            negative_fraction,
            token_drop_p,
            author_initial_p,
            year_jitter_p,
            seed,
            corpus_out,
            gold_out,
        } => {
            let d = SynthConfig::default();
            let config = SynthConfig {
                records: s.or("records", records, d.records)?,
                gold: s.or("gold", gold, d.gold)?,
                negative_fraction: s.or("negative_fraction", negative_fraction, d.negative_fraction)?,
                perturbations: Perturbations {
                    token_drop_p: s.or("token_drop_p", token_drop_p, d.perturbations.token_drop_p)?,
                    author_initial_p: s.or("author_initial_p", author_initial_p, d.perturbations.author_initial_p)?,
                    year_jitter_p: s.or("year_jitter_p", year_jitter_p, d.perturbations.year_jitter_p)?,
                },
                seed: s.or("seed", seed, DEFAULT_SEED)?,
            };
            let corpus_out: PathBuf = s.require("corpus_out", corpus_out)?;
            let gold_out: PathBuf = s.require("gold_out", gold_out)?;
            let generated = synth(&config).map_err(|e| CliError::Usage(e.to_string()))?;
            generated.corpus.write_jsonl(&corpus_out).map_err(|e| io_err(&corpus_out, e))?;
            fs::write(&gold_out, gold_to_jsonl(&generated.gold)).map_err(|e| io_err(&gold_out, e))?;
            writeln!(err, "wrote {} records and {} gold items", generated.corpus.len(), generated.gold.len()).ok();
        }
        Command::Serve { corpus, model, links, port } => {
            let mut config = ServiceConfig::default();
            if let Some(p) = &cli.config {
                let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
                config = config.apply_kv(&text).map_err(CliError::Usage)?;
            }
            if let Some(c) = corpus {
                config.corpus = c;
            }
            if model.is_some() {
                config.model = model;
            }
            if links.is_some() {
                config.links = links;
            }
            if let Some(p) = port {
                config.port = p;
            }
            let state = AppState::load(config).map_err(CliError::Data)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
            writeln!(err, "listening on port {}", state.config.port).ok();
            rt.block_on(citematch_service::serve(state)).map_err(|e| CliError::Internal(e.to_string()))?;
        }
    }
    Ok(())
}

fn read_inputs(path: &Path) -> Result<Vec<MatchInput>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            if l.trim_start().starts_with('{') {
                serde_json::from_str(l).map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))
            } else {
                Ok(MatchInput::Citation(l.to_owned()))
            }
        })
        .collect()
}
