//! Text analysis, inverted index and BM25 candidate retrieval.
//!
//! Each record is indexed as one bag of tokens: its normalized title plus
//! its normalized author surnames. Scoring uses
//!
//! ```text
//! idf(t)    = ln(1 + (N - df + 0.5) / (df + 0.5))
//! score(d)  = Σ_t idf(t) · tf·(k1 + 1) / (tf + k1·(1 - b + b·|d| / avgdl))
//! ```
//!
//! summed over the distinct query terms.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{self, Read, Write};
use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{Corpus, RecordId};
use crate::refextract::ExtractedReference;

const STOPWORD_LIST: &str = include_str!("stopwords.txt");

pub const DEFAULT_K: usize = 20;

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORD_LIST
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

/// Lowercases and strips diacritics where an ASCII fold exists.
/// Characters without a fold (CJK, Cyrillic, ...) pass through lowercased.
pub fn fold(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.nfd() {
        if is_combining_mark(c) {
            continue;
        }
        match c {
            'ß' => out.push_str("ss"),
            'æ' | 'Æ' => out.push_str("ae"),
            'œ' | 'Œ' => out.push_str("oe"),
            'ø' | 'Ø' => out.push('o'),
            'ł' | 'Ł' => out.push('l'),
            'đ' | 'Đ' | 'ð' | 'Ð' => out.push('d'),
            'þ' | 'Þ' => out.push_str("th"),
            'ı' => out.push('i'),
            _ => out.extend(c.to_lowercase()),
        }
    }
    out
}

/// Splits folded text on non-alphanumerics without dropping anything.
pub fn raw_tokens(text: &str) -> Vec<String> {
    fold(text)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// The analyzer: fold, split, drop tokens shorter than two characters and
/// stopwords.
pub fn normalize(text: &str) -> Vec<String> {
    raw_tokens(text)
        .into_iter()
        .filter(|t| t.chars().count() >= 2 && !is_stopword(t))
        .collect()
}

/// Tokens indexed for one record: title tokens followed by surname tokens.
pub fn record_tokens(record: &crate::corpus::BibRecord) -> Vec<String> {
    let mut tokens = normalize(&record.title);
    for a in &record.authors {
        tokens.extend(normalize(&a.surname));
    }
    tokens
}

/// Distinct query terms for a reference: title tokens and author surnames.
pub fn query_terms(query: &ExtractedReference) -> BTreeSet<String> {
    let mut terms = BTreeSet::new();
    if let Some(t) = &query.title {
        terms.extend(normalize(t));
    }
    for a in &query.authors {
        terms.extend(normalize(&a.surname));
    }
    terms
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Candidate {
    pub record_id: RecordId,
    pub retrieval_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    postings: BTreeMap<String, Vec<(RecordId, u32)>>,
    doc_lengths: BTreeMap<RecordId, u32>,
    total_tokens: u64,
    generation: u64,
    params: Bm25Params,
}

impl Index {
    pub fn build(corpus: &Corpus) -> Self {
        let mut postings: BTreeMap<String, Vec<(RecordId, u32)>> = BTreeMap::new();
        let mut doc_lengths = BTreeMap::new();
        let mut total_tokens = 0u64;
        // Records arrive in ascending id order, so each posting list stays sorted.
        for record in corpus.records() {
            let tokens = record_tokens(record);
            doc_lengths.insert(record.id, tokens.len() as u32);
            total_tokens += tokens.len() as u64;
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((record.id, n));
            }
        }
        Self {
            postings,
            doc_lengths,
            total_tokens,
            generation: corpus.fingerprint(),
            params: Bm25Params::default(),
        }
    }

    pub fn with_params(mut self, params: Bm25Params) -> Self {
        self.params = params;
        self
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        if self.doc_lengths.is_empty() {
            0.0
        } else {
            self.total_tokens as f64 / self.doc_lengths.len() as f64
        }
    }

    pub fn doc_length(&self, id: RecordId) -> Option<u32> {
        self.doc_lengths.get(&id).copied()
    }

    pub fn postings(&self, token: &str) -> &[(RecordId, u32)] {
        self.postings.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    /// Fingerprint of the corpus this index was built from.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.doc_count() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Top-`k` records by BM25 over the query's title and surname terms.
    /// Records sharing no term with the query are never returned.
    pub fn candidates(&self, query: &ExtractedReference, k: usize) -> Vec<Candidate> {
        self.candidates_for_terms(&query_terms(query), k)
    }

    pub fn candidates_for_terms(&self, terms: &BTreeSet<String>, k: usize) -> Vec<Candidate> {
        if k == 0 || self.doc_lengths.is_empty() {
            return Vec::new();
        }
        let Bm25Params { k1, b } = self.params;
        let avgdl = self.avg_doc_length();
        let mut scores: HashMap<RecordId, f64> = HashMap::new();
        for term in terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(list.len());
            for &(id, tf) in list {
                let dl = f64::from(self.doc_lengths[&id]);
                let tf = f64::from(tf);
                let denom = tf + k1 * (1.0 - b + b * dl / avgdl);
                *scores.entry(id).or_default() += idf * tf * (k1 + 1.0) / denom;
            }
        }
        let mut ranked: Vec<Candidate> = scores
            .into_iter()
            .map(|(record_id, retrieval_score)| Candidate { record_id, retrieval_score })
            .collect();
        ranked.sort_by(|a, b| {
            b.retrieval_score
                .total_cmp(&a.retrieval_score)
                .then(a.record_id.cmp(&b.record_id))
        });
        ranked.truncate(k);
        ranked
    }
}

// Snapshot format (little-endian):
//   "CMIX1" | generation u64 | k1 f64 | b f64
//   | ndocs u64 | (id u64, len u32)*
//   | nterms u64 | (term_len u32, term utf8, nposts u32, (id u64, tf u32)*)*
const SNAPSHOT_MAGIC: &[u8; 5] = b"CMIX1";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not an index snapshot (bad magic)")]
    BadMagic,
    #[error("snapshot is corrupt: {0}")]
    Corrupt(&'static str),
    #[error("snapshot was built from a different corpus (generation {found:#x}, expected {expected:#x})")]
    StaleGeneration { found: u64, expected: u64 },
}

impl Index {
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&self.generation.to_le_bytes())?;
        w.write_all(&self.params.k1.to_le_bytes())?;
        w.write_all(&self.params.b.to_le_bytes())?;
        w.write_all(&(self.doc_lengths.len() as u64).to_le_bytes())?;
        for (&id, &len) in &self.doc_lengths {
            w.write_all(&id.to_le_bytes())?;
            w.write_all(&len.to_le_bytes())?;
        }
        w.write_all(&(self.postings.len() as u64).to_le_bytes())?;
        for (term, list) in &self.postings {
            w.write_all(&(term.len() as u32).to_le_bytes())?;
            w.write_all(term.as_bytes())?;
            w.write_all(&(list.len() as u32).to_le_bytes())?;
            for &(id, tf) in list {
                w.write_all(&id.to_le_bytes())?;
                w.write_all(&tf.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self, SnapshotError> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        let mut cur = Cursor { buf: &buf, pos: 0 };
        if cur.take(5)? != SNAPSHOT_MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let generation = cur.u64()?;
        let k1 = f64::from_bits(cur.u64()?);
        let b = f64::from_bits(cur.u64()?);
        let ndocs = cur.u64()?;
        let mut doc_lengths = BTreeMap::new();
        let mut total_tokens = 0u64;
        for _ in 0..ndocs {
            let id = cur.u64()?;
            let len = cur.u32()?;
            total_tokens += u64::from(len);
            doc_lengths.insert(id, len);
        }
        let nterms = cur.u64()?;
        let mut postings = BTreeMap::new();
        for _ in 0..nterms {
            let tlen = cur.u32()? as usize;
            let term = std::str::from_utf8(cur.take(tlen)?)
                .map_err(|_| SnapshotError::Corrupt("term is not utf-8"))?
                .to_owned();
            let n = cur.u32()? as usize;
            let mut list = Vec::with_capacity(n.min(1 << 16));
            for _ in 0..n {
                let id = cur.u64()?;
                let tf = cur.u32()?;
                if !doc_lengths.contains_key(&id) {
                    return Err(SnapshotError::Corrupt("posting references unknown record"));
                }
                list.push((id, tf));
            }
            postings.insert(term, list);
        }
        if cur.pos != buf.len() {
            return Err(SnapshotError::Corrupt("trailing bytes"));
        }
        Ok(Self {
            postings,
            doc_lengths,
            total_tokens,
            generation,
            params: Bm25Params { k1, b },
        })
    }

    /// Reads a snapshot and checks it belongs to `corpus`.
    pub fn read_snapshot_for<R: Read>(r: R, corpus: &Corpus) -> Result<Self, SnapshotError> {
        let index = Self::read_snapshot(r)?;
        let expected = corpus.fingerprint();
        if index.generation != expected {
            return Err(SnapshotError::StaleGeneration { found: index.generation, expected });
        }
        Ok(index)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(SnapshotError::Corrupt("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AuthorName, BibRecord};

    fn rec(id: RecordId, title: &str, surnames: &[&str]) -> BibRecord {
        BibRecord {
            id,
            title: title.into(),
            authors: surnames.iter().map(|s| AuthorName::new(*s, None)).collect(),
            year: None,
            serial: None,
            volume: None,
            pages: None,
            doi: None,
            msc: vec![],
            abstract_redacted: false,
        }
    }

    fn title_query(title: &str) -> ExtractedReference {
        ExtractedReference { title: Some(title.into()), ..ExtractedReference::empty(title) }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize("Zur Elektrodynamik bewegter Körper"),
            vec!["elektrodynamik", "bewegter", "korper"]
        );
        assert!(normalize("").is_empty());
        assert!(normalize("A B C").is_empty());
        assert_eq!(normalize("Erdős–Rényi graphs, ß"), vec!["erdos", "renyi", "graphs", "ss"]);
        assert_eq!(normalize("Łojasiewicz"), vec!["lojasiewicz"]);
    }

    #[test]
    fn stopword_list_is_reasonably_sized() {
        let n = stopwords().len();
        assert!((180..=230).contains(&n), "{n}");
        assert!(is_stopword("zur") && is_stopword("the") && !is_stopword("graph"));
    }

    #[test]
    fn empty_corpus_index() {
        let idx = Index::build(&Corpus::new());
        assert_eq!(idx.doc_count(), 0);
        assert_eq!(idx.avg_doc_length(), 0.0);
        assert!(idx.candidates(&title_query("graph"), 5).is_empty());
    }

    #[test]
    fn single_record_postings() {
        let corpus = Corpus::from_records([rec(9, "graph theory", &[])]).unwrap();
        let idx = Index::build(&corpus);
        assert_eq!(idx.postings("graph"), &[(9, 1)]);
        assert_eq!(idx.postings("theory"), &[(9, 1)]);
        assert_eq!(idx.terms().count(), 2);
        assert_eq!(idx.avg_doc_length(), 2.0);
    }

    #[test]
    fn repeated_token_counts() {
        let corpus = Corpus::from_records([rec(1, "ring ring", &["Artin"])]).unwrap();
        let idx = Index::build(&corpus);
        assert_eq!(idx.postings("ring"), &[(1, 2)]);
        assert_eq!(idx.postings("artin"), &[(1, 1)]);
        assert_eq!(idx.doc_length(1), Some(3));
    }

    #[test]
    fn exact_title_ranks_first_and_disjoint_query_is_empty() {
        let corpus = Corpus::from_records([rec(3, "Modular forms and elliptic curves", &["Serre"])]).unwrap();
        let idx = Index::build(&corpus);
        let c = idx.candidates(&title_query("Modular forms and elliptic curves"), 20);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].record_id, 3);
        assert!(idx.candidates(&title_query("stochastic calculus"), 20).is_empty());
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let corpus =
            Corpus::from_records([rec(8, "lattice", &[]), rec(2, "lattice", &[]), rec(5, "lattice", &[])])
                .unwrap();
        let idx = Index::build(&corpus);
        let ids: Vec<_> = idx.candidates(&title_query("lattice"), 3).iter().map(|c| c.record_id).collect();
        assert_eq!(ids, vec![2, 5, 8]);
    }

    #[test]
    fn snapshot_round_trip_and_rejections() {
        let corpus = Corpus::from_records([
            rec(1, "Prime number races", &["Granville"]),
            rec(2, "Körper und Ringe", &["Müller"]),
        ])
        .unwrap();
        let idx = Index::build(&corpus);
        let mut bytes = Vec::new();
        idx.write_snapshot(&mut bytes).unwrap();
        assert_eq!(&bytes[..5], b"CMIX1");
        let back = Index::read_snapshot_for(bytes.as_slice(), &corpus).unwrap();
        assert_eq!(back, idx);

        assert!(matches!(
            Index::read_snapshot(&bytes[..bytes.len() - 3]),
            Err(SnapshotError::Corrupt(_))
        ));
        assert!(matches!(Index::read_snapshot(&b"ZBIX2xxxx"[..]), Err(SnapshotError::BadMagic)));

        let other = Corpus::from_records([rec(1, "Something else", &[])]).unwrap();
        assert!(matches!(
            Index::read_snapshot_for(bytes.as_slice(), &other),
            Err(SnapshotError::StaleGeneration { .. })
        ));
    }
}
