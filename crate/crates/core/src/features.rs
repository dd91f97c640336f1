//! Pairwise similarity features between an extracted reference and a
//! candidate record.
//!
//! Absent fields map to a neutral value instead of a sentinel: 0.5 for
//! equality-style components (year, volume, pages, serial) and 0 for
//! overlap-style components (titles, authors).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::BibRecord;
use crate::index::normalize;
use crate::refextract::ExtractedReference;

pub const FEATURE_COUNT: usize = 8;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "title_jaccard",
    "title_edit_sim",
    "author_overlap",
    "year_sim",
    "volume_match",
    "pages_match",
    "serial_sim",
    "retrieval_score_norm",
];

const NEUTRAL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.0[i])
    }
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - levenshtein / max_len` over the analyzed, space-joined strings.
pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let a = normalize(a).join(" ");
    let b = normalize(b).join(" ");
    let max = a.chars().count().max(b.chars().count());
    if max == 0 {
        return 0.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / max as f64
}

fn token_set(text: &str) -> BTreeSet<String> {
    normalize(text).into_iter().collect()
}

fn token_jaccard(a: &str, b: &str) -> f64 {
    jaccard(&token_set(a), &token_set(b))
}

fn exact_or_neutral(a: Option<&str>, b: Option<&str>) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) => f64::from(u8::from(a.trim() == b.trim())),
        _ => NEUTRAL,
    }
}

pub fn feature_vector(
    query: &ExtractedReference,
    record: &BibRecord,
    retrieval_score: f64,
    max_retrieval_score: f64,
) -> FeatureVector {
    let title_jaccard = query.title.as_deref().map_or(0.0, |t| token_jaccard(t, &record.title));
    let title_edit_sim = query.title.as_deref().map_or(0.0, |t| edit_similarity(t, &record.title));

    let record_surnames: BTreeSet<String> = record.authors.iter().map(|a| a.surname.to_lowercase()).collect();
    let shared = query.authors.iter().filter(|a| record_surnames.contains(&a.surname.to_lowercase())).count();
    let author_overlap = shared as f64 / query.authors.len().max(1) as f64;

    let year_sim = match (query.year, record.year) {
        (Some(a), Some(b)) => match (a - b).abs() {
            0 => 1.0,
            1 => 0.5,
            _ => 0.0,
        },
        _ => NEUTRAL,
    };
    let volume_match = exact_or_neutral(query.volume.as_deref(), record.volume.as_deref());
    let pages_match = exact_or_neutral(query.pages.as_deref(), record.pages.as_deref());
    let serial_sim = match (query.container.as_deref(), record.serial.as_deref()) {
        (Some(a), Some(b)) => token_jaccard(a, b),
        _ => NEUTRAL,
    };
    let retrieval_score_norm = if max_retrieval_score > 0.0 {
        (retrieval_score / max_retrieval_score).clamp(0.0, 1.0)
    } else {
        0.0
    };

    FeatureVector([
        title_jaccard,
        title_edit_sim,
        author_overlap,
        year_sim,
        volume_match,
        pages_match,
        serial_sim,
        retrieval_score_norm,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AuthorName;

    fn record() -> BibRecord {
        BibRecord {
            id: 1,
            title: "Spectral bounds for elliptic operators".into(),
            authors: vec![AuthorName::new("Kato", Some("T.")), AuthorName::new("Simon", Some("B."))],
            year: Some(1972),
            serial: Some("J. Funct. Anal.".into()),
            volume: Some("9".into()),
            pages: Some("100-120".into()),
            doi: None,
            msc: vec![],
            abstract_redacted: false,
        }
    }

    fn query_from(r: &BibRecord) -> ExtractedReference {
        ExtractedReference {
            authors: r.authors.clone(),
            title: Some(r.title.clone()),
            container: r.serial.clone(),
            year: r.year,
            volume: r.volume.clone(),
            pages: r.pages.clone(),
            doi: None,
            raw: String::new(),
        }
    }

    #[test]
    fn identity_is_all_ones() {
        let r = record();
        let fv = feature_vector(&query_from(&r), &r, 3.5, 3.5);
        assert_eq!(fv.0, [1.0; 8]);
    }

    #[test]
    fn identity_with_fields_absent_on_both_sides() {
        let mut r = record();
        r.volume = None;
        r.pages = None;
        let fv = feature_vector(&query_from(&r), &r, 2.0, 2.0);
        assert_eq!(fv.get("volume_match"), Some(0.5));
        assert_eq!(fv.get("pages_match"), Some(0.5));
        assert_eq!(fv.get("title_jaccard"), Some(1.0));
    }

    #[test]
    fn disjoint_pair_scores_low() {
        let r = record();
        let q = ExtractedReference {
            authors: vec![AuthorName::new("Tao", Some("T."))],
            title: Some("Additive combinatorics".into()),
            container: Some("Cambridge Studies".into()),
            year: Some(2006),
            volume: Some("105".into()),
            pages: Some("1-512".into()),
            doi: None,
            raw: String::new(),
        };
        let fv = feature_vector(&q, &r, 1.0, 4.0);
        let v = fv.0;
        assert_eq!([v[0], v[2], v[3], v[4], v[5], v[6]], [0.0; 6]);
        assert!(v[1] < 0.5);
        assert_eq!(fv.get("retrieval_score_norm"), Some(0.25));
    }

    #[test]
    fn title_jaccard_two_thirds() {
        let mut r = record();
        r.title = "graph theory notes".into();
        let q = ExtractedReference { title: Some("graph theory".into()), ..ExtractedReference::empty("") };
        let fv = feature_vector(&q, &r, 0.0, 0.0);
        assert!((fv.0[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(fv.get("retrieval_score_norm"), Some(0.0));
    }

    #[test]
    fn year_and_neutral_rules() {
        let r = record();
        let mut q = ExtractedReference::empty("");
        q.year = Some(1973);
        assert_eq!(feature_vector(&q, &r, 0.0, 1.0).get("year_sim"), Some(0.5));
        q.year = Some(1975);
        assert_eq!(feature_vector(&q, &r, 0.0, 1.0).get("year_sim"), Some(0.0));
        q.year = None;
        let fv = feature_vector(&q, &r, 0.0, 1.0);
        assert_eq!(fv.get("year_sim"), Some(0.5));
        assert_eq!(fv.get("serial_sim"), Some(0.5));
        assert_eq!(fv.get("author_overlap"), Some(0.0));
        assert_eq!(fv.get("title_edit_sim"), Some(0.0));
    }

    #[test]
    fn author_overlap_is_case_folded() {
        let r = record();
        let mut q = ExtractedReference::empty("");
        q.authors = vec![AuthorName::new("KATO", None), AuthorName::new("Lax", None)];
        assert_eq!(feature_vector(&q, &r, 0.0, 1.0).get("author_overlap"), Some(0.5));
    }

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("körper", "korper"), 1);
        assert!((edit_similarity("graph theory", "graph theories") - (1.0 - 3.0 / 14.0)).abs() < 1e-15);
    }
}
