//! Gold-set handling, confusion accounting and penalized informedness.
//!
//! Gold items with an expected id are real positives (RP), the rest real
//! negatives (RN). A returned match is a true positive (TP) when it equals
//! the expected id, a false match (FM) when it differs, and a miss is a
//! false negative (FN). On real negatives any match is a false positive (FP),
//! otherwise a true negative (TN).
//!
//! ```text
//! inf(α, β) = TP/RP − (α − 1)·FM/RP − β·FP/RN
//!           = 1 − FN/RP − α·FM/RP − β·FP/RN
//! ```
//!
//! A ratio with an empty class (RP = 0 or RN = 0) contributes nothing: the
//! whole positive-class part is 0 when RP = 0, and the FP term is 0 when
//! RN = 0.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::TrainingSet;
use crate::corpus::{Corpus, RecordId};
use crate::matcher::{MatchInput, MatchResult, Matcher};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("gold line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("gold line {line}: expected id {id} is not in the corpus")]
    UnknownExpectedId { line: usize, id: RecordId },
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldItem {
    pub input: MatchInput,
    #[serde(default)]
    pub expected_id: Option<RecordId>,
}

impl GoldItem {
    pub fn is_real_positive(&self) -> bool {
        self.expected_id.is_some()
    }
}

pub fn parse_gold(text: &str, corpus: &Corpus) -> Result<Vec<GoldItem>, EvalError> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: GoldItem = serde_json::from_str(line).map_err(|e| EvalError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(id) = item.expected_id {
            if !corpus.contains(id) {
                return Err(EvalError::UnknownExpectedId { line: i + 1, id });
            }
        }
        items.push(item);
    }
    Ok(items)
}

pub fn load_gold(path: &Path, corpus: &Corpus) -> Result<Vec<GoldItem>, EvalError> {
    parse_gold(&fs::read_to_string(path)?, corpus)
}

pub fn gold_to_jsonl(items: &[GoldItem]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("gold item serializes") + "\n")
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GoldSplit {
    pub train: Vec<GoldItem>,
    pub eval: Vec<GoldItem>,
    pub test: Vec<GoldItem>,
}

/// Seeded shuffle, then cut into train/eval/test by rounded ratios.
pub fn partition_gold(gold: &[GoldItem], seed: u64, ratios: (f64, f64, f64)) -> Result<GoldSplit, EvalError> {
    let (a, b, c) = ratios;
    let finite = [a, b, c].iter().all(|r| r.is_finite() && *r > 0.0);
    if !finite || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(EvalError::BadRatios(ratios));
    }
    let mut order: Vec<usize> = (0..gold.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = gold.len() as f64;
    let n_train = (a * n).round() as usize;
    let n_eval = ((b * n).round() as usize).min(gold.len() - n_train);
    let take = |idx: &[usize]| idx.iter().map(|&i| gold[i].clone()).collect::<Vec<_>>();
    Ok(GoldSplit {
        train: take(&order[..n_train]),
        eval: take(&order[n_train..n_train + n_eval]),
        test: take(&order[n_train + n_eval..]),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fm: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn rp(&self) -> u64 {
        self.tp + self.fm + self.fn_
    }

    pub fn rn(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn n(&self) -> u64 {
        self.rp() + self.rn()
    }

    pub fn record(&mut self, expected: Option<RecordId>, matched: Option<RecordId>) {
        match (expected, matched) {
            (Some(e), Some(m)) if e == m => self.tp += 1,
            (Some(_), Some(_)) => self.fm += 1,
            (Some(_), None) => self.fn_ += 1,
            (None, Some(_)) => self.fp += 1,
            (None, None) => self.tn += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Option<RecordId>, Option<RecordId>)>) -> Self {
        let mut c = Self::default();
        for (e, m) in pairs {
            c.record(e, m);
        }
        c
    }
}

pub fn confusion_counts(results: &[(GoldItem, MatchResult)]) -> ConfusionCounts {
    ConfusionCounts::from_pairs(results.iter().map(|(g, r)| (g.expected_id, r.matched_id)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub alpha: f64,
    pub beta: f64,
}

impl PenaltyParams {
    pub const fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }
}

/// The penalty pairs plotted by default: (1,1), (2,2), (5,5).
pub const DEFAULT_PENALTIES: [PenaltyParams; 3] =
    [PenaltyParams::new(1.0, 1.0), PenaltyParams::new(2.0, 2.0), PenaltyParams::new(5.0, 5.0)];

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `TP/RP − (α−1)·FM/RP − β·FP/RN`.
pub fn informedness(c: &ConfusionCounts, p: PenaltyParams) -> f64 {
    let (rp, rn) = (c.rp(), c.rn());
    ratio(c.tp, rp) - (p.alpha - 1.0) * ratio(c.fm, rp) - p.beta * ratio(c.fp, rn)
}

/// `1 − FN/RP − α·FM/RP − β·FP/RN`; identical to [`informedness`] since
/// TP + FM + FN = RP.
pub fn informedness_complement_form(c: &ConfusionCounts, p: PenaltyParams) -> f64 {
    let (rp, rn) = (c.rp(), c.rn());
    let positive = if rp == 0 { 0.0 } else { 1.0 - ratio(c.fn_, rp) - p.alpha * ratio(c.fm, rp) };
    positive - p.beta * ratio(c.fp, rn)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InformednessValue {
    pub alpha: f64,
    pub beta: f64,
    pub informedness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub min_score: f64,
    pub counts: ConfusionCounts,
    pub rp: u64,
    pub rn: u64,
    /// RP = 0: the positive-class terms were taken as 0.
    pub rp_zero: bool,
    /// RN = 0: the FP term was taken as 0.
    pub rn_zero: bool,
    pub informedness: Vec<InformednessValue>,
}

impl EvalReport {
    pub fn new(counts: ConfusionCounts, min_score: f64, params: &[PenaltyParams]) -> Self {
        Self {
            min_score,
            counts,
            rp: counts.rp(),
            rn: counts.rn(),
            rp_zero: counts.rp() == 0,
            rn_zero: counts.rn() == 0,
            informedness: params
                .iter()
                .map(|&p| InformednessValue { alpha: p.alpha, beta: p.beta, informedness: informedness(&counts, p) })
                .collect(),
        }
    }
}

/// Expected id and the best-scoring candidate for one gold item. Threshold
/// decisions are re-derived from this without re-running the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CachedOutcome {
    pub expected_id: Option<RecordId>,
    pub top: Option<(RecordId, f64)>,
}

impl CachedOutcome {
    pub fn matched_at(&self, threshold: f64) -> Option<RecordId> {
        self.top.filter(|&(_, s)| crate::classifier::accept(s, threshold)).map(|(id, _)| id)
    }
}

pub fn cache_outcomes(matcher: &Matcher<'_>, gold: &[GoldItem]) -> Vec<CachedOutcome> {
    gold.iter()
        .map(|g| {
            let top = matcher
                .match_one(&g.input)
                .ok()
                .and_then(|r| r.ranked.first().map(|c| (c.record_id, c.score)));
            CachedOutcome { expected_id: g.expected_id, top }
        })
        .collect()
}

pub fn evaluate(matcher: &Matcher<'_>, gold: &[GoldItem], params: &[PenaltyParams]) -> EvalReport {
    let min = matcher.config.min_score;
    let counts = ConfusionCounts::from_pairs(
        gold.iter().map(|g| (g.expected_id, matcher.match_one(&g.input).ok().and_then(|r| r.matched_id))),
    );
    EvalReport::new(counts, min, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub alpha: f64,
    pub beta: f64,
    pub counts: ConfusionCounts,
    pub informedness: f64,
}

/// Informedness against minimum score, one curve per penalty pair.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
}

pub const SWEEP_CSV_HEADER: &str = "threshold,alpha,beta,tp,fm,fn,fp,tn,informedness";

impl SweepCurve {
    pub fn from_outcomes(outcomes: &[CachedOutcome], thresholds: &[f64], params: &[PenaltyParams]) -> Self {
        let counts: Vec<ConfusionCounts> = thresholds
            .iter()
            .map(|&t| ConfusionCounts::from_pairs(outcomes.iter().map(|o| (o.expected_id, o.matched_at(t)))))
            .collect();
        let mut points = Vec::with_capacity(thresholds.len() * params.len());
        for &p in params {
            for (&threshold, &c) in thresholds.iter().zip(&counts) {
                points.push(SweepPoint { threshold, alpha: p.alpha, beta: p.beta, counts: c, informedness: informedness(&c, p) });
            }
        }
        Self { points }
    }

    /// Points for one penalty pair, in threshold order.
    pub fn curve(&self, p: PenaltyParams) -> Vec<&SweepPoint> {
        self.points.iter().filter(|q| q.alpha == p.alpha && q.beta == p.beta).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for q in &self.points {
            let c = q.counts;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                q.threshold, q.alpha, q.beta, c.tp, c.fm, c.fn_, c.fp, c.tn, q.informedness
            )
            .unwrap();
        }
        out
    }
}

pub fn threshold_sweep(
    matcher: &Matcher<'_>,
    gold: &[GoldItem],
    thresholds: &[f64],
    params: &[PenaltyParams],
) -> SweepCurve {
    SweepCurve::from_outcomes(&cache_outcomes(matcher, gold), thresholds, params)
}

/// Candidate-level training rows: every retrieved candidate of every gold
/// item, labeled by whether it is the expected record.
pub fn training_set(matcher: &Matcher<'_>, gold: &[GoldItem]) -> TrainingSet {
    let mut rows = Vec::new();
    for g in gold {
        let Ok(Some(reference)) = matcher.reference_for(&g.input) else {
            continue;
        };
        for s in matcher.candidate_features(&reference) {
            rows.push((s.features, Some(s.candidate.record_id) == g.expected_id));
        }
    }
    TrainingSet::new(rows)
}

/// Parses `start:end:step`; the end is included when the step divides the
/// range. Values are rounded to 1e-9 to keep printed thresholds tidy.
pub fn parse_threshold_range(text: &str) -> Option<Vec<f64>> {
    let parts: Vec<f64> = text.split(':').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    let [start, end, step] = parts[..] else {
        return None;
    };
    if !(start.is_finite() && end.is_finite() && step.is_finite()) || step <= 0.0 || end < start {
        return None;
    }
    let steps = ((end - start) / step + 1e-9).floor() as usize;
    Some((0..=steps).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect())
}
