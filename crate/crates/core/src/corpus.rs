//! Bibliographic records and the id-indexed record store.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type RecordId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthorName {
    pub surname: String,
    #[serde(default)]
    pub given: Option<String>,
    #[serde(default)]
    pub author_id: Option<String>,
}

impl AuthorName {
    pub fn new(surname: impl Into<String>, given: Option<&str>) -> Self {
        Self {
            surname: surname.into(),
            given: given.map(str::to_owned),
            author_id: None,
        }
    }

    /// "Surname, Given" display form, or the bare surname.
    pub fn display_inverted(&self) -> String {
        match &self.given {
            Some(g) if !g.trim().is_empty() => format!("{}, {}", self.surname, g),
            _ => self.surname.clone(),
        }
    }
}

/// One indexed publication.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BibRecord {
    pub id: RecordId,
    pub title: String,
    #[serde(default)]
    pub authors: Vec<AuthorName>,
    #[serde(default)]
    pub year: Option<i32>,
    #[serde(default)]
    pub serial: Option<String>,
    #[serde(default)]
    pub volume: Option<String>,
    #[serde(default)]
    pub pages: Option<String>,
    #[serde(default)]
    pub doi: Option<String>,
    #[serde(default)]
    pub msc: Vec<String>,
    #[serde(default)]
    pub abstract_redacted: bool,
}

pub const MIN_YEAR: i32 = 1500;
pub const MAX_YEAR: i32 = 2100;

pub fn year_in_range(year: i32) -> bool {
    (MIN_YEAR..=MAX_YEAR).contains(&year)
}

fn msc_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[0-9]{2}(?:[A-Z-](?:[0-9A-Za-z]{2})?)?$").unwrap())
}

/// Full MSC code shape: two digits, optionally a capital letter or `-`,
/// optionally two more alphanumerics after that.
pub fn is_msc_code(code: &str) -> bool {
    msc_regex().is_match(code)
}

impl BibRecord {
    /// Checks the record invariants, returning the name of the first
    /// offending field.
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.id == 0 {
            return Err("id");
        }
        if self.title.trim().is_empty() {
            return Err("title");
        }
        if self.authors.iter().any(|a| a.surname.trim().is_empty()) {
            return Err("authors");
        }
        if let Some(y) = self.year {
            if !year_in_range(y) {
                return Err("year");
            }
        }
        if !self.msc.iter().all(|c| is_msc_code(c)) {
            return Err("msc");
        }
        Ok(())
    }

    /// First listed MSC code, which is the record's primary classification.
    pub fn primary_msc(&self) -> Option<&str> {
        self.msc.first().map(String::as_str)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate record id {0}")]
    DuplicateId(RecordId),
    #[error("invalid record {id}: bad field `{field}`")]
    InvalidRecord { id: RecordId, field: &'static str },
}

/// Id-indexed record collection. Iteration is in ascending id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    records: BTreeMap<RecordId, BibRecord>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = BibRecord>) -> Result<Self, CorpusError> {
        let mut corpus = Self::new();
        for r in records {
            corpus.add_record(r)?;
        }
        Ok(corpus)
    }

    pub fn add_record(&mut self, record: BibRecord) -> Result<RecordId, CorpusError> {
        record
            .validate()
            .map_err(|field| CorpusError::InvalidRecord { id: record.id, field })?;
        let id = record.id;
        if self.records.contains_key(&id) {
            return Err(CorpusError::DuplicateId(id));
        }
        self.records.insert(id, record);
        Ok(id)
    }

    pub fn get_record(&self, id: RecordId) -> Option<&BibRecord> {
        self.records.get(&id)
    }

    pub fn contains(&self, id: RecordId) -> bool {
        self.records.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &BibRecord> {
        self.records.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = RecordId> + '_ {
        self.records.keys().copied()
    }

    /// Parses JSONL text. Blank lines are skipped; line numbers are 1-based.
    pub fn from_jsonl(text: &str) -> Result<Self, CorpusError> {
        let mut corpus = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: BibRecord = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            corpus.add_record(record)?;
        }
        Ok(corpus)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.records() {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> io::Result<()> {
        let mut f = io::BufWriter::new(fs::File::create(path)?);
        f.write_all(self.to_jsonl().as_bytes())?;
        f.flush()
    }

    /// Stable content fingerprint used to stamp derived artifacts
    /// (resumption tokens, snapshots) with the corpus generation.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the canonical JSONL form.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_jsonl().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path)?;
    Corpus::from_jsonl(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(id: RecordId, title: &str) -> BibRecord {
        BibRecord {
            id,
            title: title.to_string(),
            authors: vec![AuthorName::new("Noether", Some("E."))],
            year: Some(1921),
            serial: Some("Math. Ann.".into()),
            volume: Some("83".into()),
            pages: Some("24-66".into()),
            doi: None,
            msc: vec!["13A15".into()],
            abstract_redacted: false,
        }
    }

    #[test]
    fn empty_text_gives_empty_corpus() {
        let c = Corpus::from_jsonl("").unwrap();
        assert!(c.is_empty());
        assert!(c.get_record(1).is_none());
    }

    #[test]
    fn duplicate_id_on_later_line_is_rejected() {
        let lines: Vec<String> = [1, 7, 3, 4, 7]
            .iter()
            .map(|&id| serde_json::to_string(&record(id, "Idealtheorie in Ringbereichen")).unwrap())
            .collect();
        let err = Corpus::from_jsonl(&lines.join("\n")).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId(7)));
    }

    #[test]
    fn parse_error_names_line() {
        let good = serde_json::to_string(&record(1, "A")).unwrap();
        let text = format!("{good}\n{{\"id\": 2, \"title\": \"B\", \"colour\": 1}}\n");
        match Corpus::from_jsonl(&text).unwrap_err() {
            CorpusError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("colour"), "{message}");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn add_and_get() {
        let mut c = Corpus::new();
        let r = record(42, "Idealtheorie in Ringbereichen");
        assert_eq!(c.add_record(r.clone()).unwrap(), 42);
        assert_eq!(c.len(), 1);
        assert_eq!(c.get_record(42), Some(&r));
        assert!(matches!(c.add_record(r), Err(CorpusError::DuplicateId(42))));
    }

    #[test]
    fn invalid_fields_are_named() {
        let mut c = Corpus::new();
        let r = record(1, "   ");
        assert!(matches!(
            c.add_record(r),
            Err(CorpusError::InvalidRecord { field: "title", .. })
        ));
        let mut r = record(2, "T");
        r.year = Some(1499);
        assert!(matches!(
            c.add_record(r),
            Err(CorpusError::InvalidRecord { field: "year", .. })
        ));
        let mut r = record(3, "T");
        r.msc = vec!["6F10".into()];
        assert!(matches!(
            c.add_record(r),
            Err(CorpusError::InvalidRecord { field: "msc", .. })
        ));
        let r = record(0, "T");
        assert!(matches!(
            c.add_record(r),
            Err(CorpusError::InvalidRecord { field: "id", .. })
        ));
    }

    #[test]
    fn msc_list_with_mixed_depths_is_accepted() {
        let mut r = record(5, "T");
        r.msc = vec!["65F10".into(), "11".into()];
        let mut c = Corpus::new();
        assert!(c.add_record(r).is_ok());
    }

    #[test]
    fn msc_shapes() {
        for ok in ["11", "33C", "33-", "65F10", "05C80", "11-01", "33Cxx"] {
            assert!(is_msc_code(ok), "{ok}");
        }
        for bad in ["", "1", "3", "333", "33c", "33C0", "65F100", "A1", "33C 5"] {
            assert!(!is_msc_code(bad), "{bad}");
        }
    }
}
