//! End-to-end matching: extraction, candidate retrieval, features, scoring
//! and the single-answer accept decision.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{accept, Model};
use crate::corpus::{Corpus, RecordId};
use crate::features::{feature_vector, FeatureVector};
use crate::index::{Candidate, Index, DEFAULT_K};
use crate::refextract::{extract_structured, ExtractError, ExtractedReference, Extractor, RuleExtractor, StructuredFields};

/// A citation string or a map of already separated fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatchInput {
    Citation(String),
    Structured(StructuredFields),
}

impl MatchInput {
    pub fn raw(&self) -> String {
        match self {
            MatchInput::Citation(s) => s.clone(),
            MatchInput::Structured(f) => serde_json::to_string(&f.0).expect("string map serializes"),
        }
    }
}

impl From<&str> for MatchInput {
    fn from(s: &str) -> Self {
        MatchInput::Citation(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub k: usize,
    pub min_score: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { k: DEFAULT_K, min_score: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub record_id: RecordId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub query_raw: String,
    pub matched_id: Option<RecordId>,
    /// Best candidate score, present whenever any candidate was scored.
    pub score: Option<f64>,
    pub candidates_considered: usize,
    pub ranked: Vec<RankedCandidate>,
}

impl MatchResult {
    fn no_match(query_raw: String) -> Self {
        Self { query_raw, matched_id: None, score: None, candidates_considered: 0, ranked: Vec::new() }
    }

    /// Re-applies the accept rule at another threshold.
    pub fn at_threshold(&self, min_score: f64) -> Option<RecordId> {
        match (self.ranked.first(), self.score) {
            (Some(top), Some(s)) if accept(s, min_score) => Some(top.record_id),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum MatchError {
    #[error("empty input")]
    EmptyInput,
}

/// One scored candidate with its feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub candidate: Candidate,
    pub features: FeatureVector,
}

/// Shared read-only pipeline state.
pub struct Matcher<'a> {
    pub corpus: &'a Corpus,
    pub index: &'a Index,
    pub model: &'a Model,
    pub extractor: &'a dyn Extractor,
    pub config: MatchConfig,
}

impl<'a> Matcher<'a> {
    pub fn new(corpus: &'a Corpus, index: &'a Index, model: &'a Model, config: MatchConfig) -> Self {
        Self { corpus, index, model, extractor: &RuleExtractor, config }
    }

    /// Extraction with the raw-text fallback. `Ok(None)` means the input is
    /// structurally invalid and cannot produce candidates.
    pub fn reference_for(&self, input: &MatchInput) -> Result<Option<ExtractedReference>, MatchError> {
        match input {
            MatchInput::Citation(text) => match self.extractor.extract(text) {
                Ok(r) => Ok(Some(r)),
                Err(ExtractError::EmptyInput) => Err(MatchError::EmptyInput),
                Err(_) => {
                    let mut r = ExtractedReference::empty(text);
                    r.title = Some(text.trim().to_owned());
                    Ok(Some(r))
                }
            },
            MatchInput::Structured(fields) => {
                if fields.0.values().all(|v| v.trim().is_empty()) {
                    return Err(MatchError::EmptyInput);
                }
                match extract_structured(fields) {
                    Ok(r) => Ok(Some(r)),
                    Err(ExtractError::Unparseable) => {
                        let text = fields.0.values().cloned().collect::<Vec<_>>().join(" ");
                        let mut r = ExtractedReference::empty(&input.raw());
                        r.title = Some(text);
                        Ok(Some(r))
                    }
                    Err(_) => Ok(None),
                }
            }
        }
    }

    /// Candidates with feature vectors, in retrieval order.
    pub fn candidate_features(&self, reference: &ExtractedReference) -> Vec<ScoredCandidate> {
        let candidates = self.index.candidates(reference, self.config.k);
        let max = candidates.first().map_or(0.0, |c| c.retrieval_score);
        candidates
            .into_iter()
            .filter_map(|c| {
                let record = self.corpus.get_record(c.record_id)?;
                Some(ScoredCandidate {
                    candidate: c,
                    features: feature_vector(reference, record, c.retrieval_score, max),
                })
            })
            .collect()
    }

    pub fn match_one(&self, input: &MatchInput) -> Result<MatchResult, MatchError> {
        let query_raw = input.raw();
        let Some(reference) = self.reference_for(input)? else {
            return Ok(MatchResult::no_match(query_raw));
        };
        let scored = self.candidate_features(&reference);
        let mut ranked: Vec<RankedCandidate> = scored
            .iter()
            .map(|s| RankedCandidate { record_id: s.candidate.record_id, score: self.model.score_vector(&s.features) })
            .collect();
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.record_id.cmp(&b.record_id)));
        let score = ranked.first().map(|r| r.score);
        let matched_id = ranked.first().filter(|r| accept(r.score, self.config.min_score)).map(|r| r.record_id);
        Ok(MatchResult { query_raw, matched_id, score, candidates_considered: ranked.len(), ranked })
    }

    /// Maps `match_one` over the inputs; failures stay in place.
    pub fn match_batch(&self, inputs: &[MatchInput]) -> Vec<Result<MatchResult, MatchError>> {
        inputs.iter().map(|i| self.match_one(i)).collect()
    }
}

/// JSON form of one batch entry: the result, or `{query_raw, error}`.
pub fn batch_entry_json(input: &MatchInput, entry: &Result<MatchResult, MatchError>) -> serde_json::Value {
    match entry {
        Ok(r) => serde_json::to_value(r).expect("match result serializes"),
        Err(e) => serde_json::json!({ "query_raw": input.raw(), "error": e }),
    }
}
