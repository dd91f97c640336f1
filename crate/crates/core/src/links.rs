//! Source→target links between external objects and corpus records, with
//! filters joined through the corpus and Scholix-shaped export.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{is_msc_code, Corpus, RecordId};

pub const DEFAULT_RELATIONSHIP: &str = "References";
/// Recorded in export metadata; the export is a flat subset of Scholix.
pub const SCHOLIX_EXPORT_VERSION: &str = "scholix-subset-1";
pub const TARGET_ID_SCHEME: &str = "DE";

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("malformed scholix document: {0}")]
    Scholix(String),
    #[error("bad MSC code {0:?}")]
    BadMscCode(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkSource {
    pub provider: String,
    pub object_id: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "FlatLink", into = "FlatLink")]
pub struct ScholixLink {
    pub source: LinkSource,
    pub target: RecordId,
    pub relationship: String,
    pub link_publication_date: NaiveDate,
    pub link_provider: String,
}

/// Line format of link files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlatLink {
    source_provider: String,
    source_object_id: String,
    source_url: String,
    target_id: RecordId,
    #[serde(default = "default_relationship")]
    relationship: String,
    link_publication_date: NaiveDate,
    link_provider: String,
}

fn default_relationship() -> String {
    DEFAULT_RELATIONSHIP.to_owned()
}

impl From<FlatLink> for ScholixLink {
    fn from(f: FlatLink) -> Self {
        Self {
            source: LinkSource { provider: f.source_provider, object_id: f.source_object_id, url: f.source_url },
            target: f.target_id,
            relationship: f.relationship,
            link_publication_date: f.link_publication_date,
            link_provider: f.link_provider,
        }
    }
}

impl From<ScholixLink> for FlatLink {
    fn from(l: ScholixLink) -> Self {
        Self {
            source_provider: l.source.provider,
            source_object_id: l.source.object_id,
            source_url: l.source.url,
            target_id: l.target,
            relationship: l.relationship,
            link_publication_date: l.link_publication_date,
            link_provider: l.link_provider,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinkReject {
    pub line: usize,
    pub target_id: RecordId,
    pub reason: String,
}

impl ScholixLink {
    /// Checks everything except target existence.
    fn validate_shape(&self) -> Result<(), String> {
        if self.relationship.trim().is_empty() {
            return Err("empty relationship".into());
        }
        if self.source.url.trim().is_empty() {
            return Err("empty source url".into());
        }
        url::Url::parse(&self.source.url).map_err(|e| format!("bad source url: {e}"))?;
        Ok(())
    }
}

/// Immutable link collection with lookup indexes.
#[derive(Debug, Clone, Default)]
pub struct LinkSet {
    links: Vec<ScholixLink>,
    by_provider: BTreeMap<String, Vec<usize>>,
    by_target: BTreeMap<RecordId, Vec<usize>>,
    by_msc_prefix: BTreeMap<String, BTreeSet<usize>>,
    by_author: BTreeMap<String, BTreeSet<usize>>,
    target_years: BTreeMap<RecordId, i32>,
    target_primary_msc: BTreeMap<RecordId, String>,
}

impl LinkSet {
    /// Builds the set, keeping links whose target exists in `corpus`.
    pub fn build(links: Vec<ScholixLink>, corpus: &Corpus) -> (Self, Vec<LinkReject>) {
        let mut set = LinkSet::default();
        let mut rejects = Vec::new();
        for (i, link) in links.into_iter().enumerate() {
            if let Err(reason) = set.push(link.clone(), corpus) {
                rejects.push(LinkReject { line: i + 1, target_id: link.target, reason });
            }
        }
        (set, rejects)
    }

    fn push(&mut self, link: ScholixLink, corpus: &Corpus) -> Result<(), String> {
        link.validate_shape()?;
        let record = corpus
            .get_record(link.target)
            .ok_or_else(|| format!("target {} not in corpus", link.target))?;
        let at = self.links.len();
        self.by_provider.entry(link.source.provider.clone()).or_default().push(at);
        self.by_target.entry(link.target).or_default().push(at);
        for code in &record.msc {
            for len in [2, 3, 5] {
                if let Some(prefix) = code.get(..len) {
                    self.by_msc_prefix.entry(prefix.to_owned()).or_default().insert(at);
                }
            }
        }
        for a in &record.authors {
            if let Some(id) = &a.author_id {
                self.by_author.entry(id.clone()).or_default().insert(at);
            }
        }
        if let Some(y) = record.year {
            self.target_years.insert(record.id, y);
        }
        if let Some(code) = record.primary_msc() {
            self.target_primary_msc.insert(record.id, code[..2].to_owned());
        }
        self.links.push(link);
        Ok(())
    }

    pub fn links(&self) -> &[ScholixLink] {
        &self.links
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    fn collect_sorted(&self, idx: impl IntoIterator<Item = usize>) -> Vec<ScholixLink> {
        let mut out: Vec<ScholixLink> = idx.into_iter().map(|i| self.links[i].clone()).collect();
        sort_links(&mut out);
        out
    }

    /// Links whose target carries an MSC code starting with `code`.
    pub fn links_by_msc(&self, code: &str) -> Result<Vec<ScholixLink>, LinkError> {
        if !is_msc_code(code) {
            return Err(LinkError::BadMscCode(code.to_owned()));
        }
        Ok(self.collect_sorted(self.by_msc_prefix.get(code).into_iter().flatten().copied()))
    }

    pub fn links_by_author(&self, author_id: &str) -> Vec<ScholixLink> {
        self.collect_sorted(self.by_author.get(author_id).into_iter().flatten().copied())
    }

    pub fn links_by_provider(&self, provider: &str) -> Vec<ScholixLink> {
        self.collect_sorted(self.by_provider.get(provider).into_iter().flatten().copied())
    }

    /// Reverse direction: every external object linking to a record.
    pub fn links_to(&self, target: RecordId) -> Vec<ScholixLink> {
        self.collect_sorted(self.by_target.get(&target).into_iter().flatten().copied())
    }

    pub fn providers(&self) -> impl Iterator<Item = (&str, usize)> {
        self.by_provider.iter().map(|(p, v)| (p.as_str(), v.len()))
    }

    pub fn stats(&self) -> LinkStats {
        let mut stats = LinkStats::default();
        for link in &self.links {
            if let Some(code) = self.target_primary_msc.get(&link.target) {
                *stats.msc_histogram.entry(code.clone()).or_default() += 1;
            }
            if let Some(&y) = self.target_years.get(&link.target) {
                *stats.year_histogram.entry(y).or_default() += 1;
            }
        }
        stats
    }
}

/// Order used by every filter: target id, then source object id.
pub fn sort_links(links: &mut [ScholixLink]) {
    links.sort_by(|a, b| {
        (a.target, &a.source.object_id, &a.source.provider).cmp(&(b.target, &b.source.object_id, &b.source.provider))
    });
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LinkStats {
    /// Two-digit primary MSC of the target → link count.
    pub msc_histogram: BTreeMap<String, u64>,
    /// Target publication year → link count.
    pub year_histogram: BTreeMap<i32, u64>,
}

impl LinkStats {
    /// Histogram entries by descending count, ties by ascending code.
    pub fn msc_ranking(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self.msc_histogram.iter().map(|(k, &n)| (k.as_str(), n)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }
}

pub fn link_stats(set: &LinkSet) -> LinkStats {
    set.stats()
}

pub fn parse_links_jsonl(text: &str) -> Result<Vec<ScholixLink>, LinkError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let link: ScholixLink = serde_json::from_str(line).map_err(|e| LinkError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(link);
    }
    Ok(out)
}

pub fn links_to_jsonl(links: &[ScholixLink]) -> String {
    links
        .iter()
        .map(|l| serde_json::to_string(l).expect("link serializes") + "\n")
        .collect()
}

pub fn load_links(path: &Path, corpus: &Corpus) -> Result<(LinkSet, Vec<LinkReject>), LinkError> {
    let links = parse_links_jsonl(&fs::read_to_string(path)?)?;
    Ok(LinkSet::build(links, corpus))
}

// Scholix-shaped export.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase")]
struct ScholixIdentifier {
    #[serde(rename = "ID")]
    id: String,
    #[serde(rename = "IDScheme")]
    id_scheme: String,
    #[serde(rename = "IDURL", default, skip_serializing_if = "Option::is_none")]
    id_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase")]
struct ScholixObject {
    identifier: ScholixIdentifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase")]
struct ScholixName {
    name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase")]
pub struct ScholixEntry {
    source: ScholixObject,
    target: ScholixObject,
    relationship_type: ScholixName,
    link_publication_date: NaiveDate,
    link_provider: Vec<ScholixName>,
}

impl From<&ScholixLink> for ScholixEntry {
    fn from(l: &ScholixLink) -> Self {
        Self {
            source: ScholixObject {
                identifier: ScholixIdentifier {
                    id: l.source.object_id.clone(),
                    id_scheme: l.source.provider.clone(),
                    id_url: Some(l.source.url.clone()),
                },
            },
            target: ScholixObject {
                identifier: ScholixIdentifier {
                    id: l.target.to_string(),
                    id_scheme: TARGET_ID_SCHEME.to_owned(),
                    id_url: None,
                },
            },
            relationship_type: ScholixName { name: l.relationship.clone() },
            link_publication_date: l.link_publication_date,
            link_provider: vec![ScholixName { name: l.link_provider.clone() }],
        }
    }
}

impl TryFrom<ScholixEntry> for ScholixLink {
    type Error = LinkError;

    fn try_from(e: ScholixEntry) -> Result<Self, LinkError> {
        let bad = |m: &str| LinkError::Scholix(m.to_owned());
        let target = e.target.identifier.id.parse().map_err(|_| bad("target id is not numeric"))?;
        let url = e.source.identifier.id_url.ok_or_else(|| bad("source without IDURL"))?;
        let provider = e.link_provider.into_iter().next().ok_or_else(|| bad("missing LinkProvider"))?;
        Ok(Self {
            source: LinkSource { provider: e.source.identifier.id_scheme, object_id: e.source.identifier.id, url },
            target,
            relationship: e.relationship_type.name,
            link_publication_date: e.link_publication_date,
            link_provider: provider.name,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScholixDocument {
    pub schema_version: String,
    pub links: Vec<ScholixEntry>,
}

pub fn scholix_entries(links: &[ScholixLink]) -> Vec<ScholixEntry> {
    links.iter().map(ScholixEntry::from).collect()
}

pub fn export_scholix(links: &[ScholixLink]) -> String {
    let doc = ScholixDocument { schema_version: SCHOLIX_EXPORT_VERSION.to_owned(), links: scholix_entries(links) };
    serde_json::to_string_pretty(&doc).expect("scholix document serializes")
}

pub fn import_scholix(text: &str) -> Result<Vec<ScholixLink>, LinkError> {
    let doc: ScholixDocument = serde_json::from_str(text).map_err(|e| LinkError::Scholix(e.to_string()))?;
    if doc.schema_version != SCHOLIX_EXPORT_VERSION {
        return Err(LinkError::Scholix(format!("unsupported schema version {:?}", doc.schema_version)));
    }
    doc.links.into_iter().map(ScholixLink::try_from).collect()
}
