//! Field extraction from raw citation strings.
//!
//! The default [`RuleExtractor`] runs a fixed cascade:
//!
//! 1. DOI by regex (`10.NNNN/...`), removed from the working text;
//! 2. year: the first four-digit number in range that is parenthesized or
//!    stands alone between commas;
//! 3. trailing `<container> <volume> (<year>)[, <pages>]` pattern;
//! 4. leading author block, comma separated, with `and`/`&`/`;` joins and
//!    `Surname, I.` pairs;
//! 5. title: the longest remaining segment between author block and
//!    container.
//!
//! A title is only reported when an author block or a container anchors it,
//! so free text such as a bare DOI mention does not become a title.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{year_in_range, AuthorName};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedReference {
    pub authors: Vec<AuthorName>,
    pub title: Option<String>,
    pub container: Option<String>,
    pub year: Option<i32>,
    pub volume: Option<String>,
    pub pages: Option<String>,
    pub doi: Option<String>,
    pub raw: String,
}

impl ExtractedReference {
    pub fn empty(raw: &str) -> Self {
        Self {
            authors: Vec::new(),
            title: None,
            container: None,
            year: None,
            volume: None,
            pages: None,
            doi: None,
            raw: raw.to_owned(),
        }
    }

    fn is_anchored(&self) -> bool {
        self.title.is_some() || !self.authors.is_empty() || self.doi.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("empty citation")]
    EmptyInput,
    #[error("no author, title or doi could be located")]
    Unparseable,
    #[error("invalid field `{0}`")]
    InvalidField(String),
}

/// Anything that turns a citation string into fields.
pub trait Extractor: Send + Sync {
    fn extract(&self, citation: &str) -> Result<ExtractedReference, ExtractError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RuleExtractor;

impl Extractor for RuleExtractor {
    fn extract(&self, citation: &str) -> Result<ExtractedReference, ExtractError> {
        extract_fields(citation)
    }
}

struct Patterns {
    doi: Regex,
    paren_year: Regex,
    trailing: Regex,
    initials: Regex,
    surname_only: Regex,
    forward: Regex,
    reversed: Regex,
    conjunction: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| {
        let initial = r"\p{Lu}[a-z]?\.(?:\s*-\s*\p{Lu}[a-z]?\.)?";
        let particle = r"(?:van|von|der|den|de|da|di|du|del|della|le|la|dos|ten|ter)";
        let surname = format!(r"(?:{particle}\s+)*\p{{Lu}}[\p{{L}}'’]*(?:-\p{{Lu}}[\p{{L}}'’]*)?");
        let given_word = r"\p{Lu}\p{Ll}+(?:-\p{Lu}\p{Ll}+)?";
        Patterns {
            doi: Regex::new(r"(?i)(?:https?://(?:dx\.)?doi\.org/|\bdoi:?\s*)?(10\.\d{4,9}/\S+)").unwrap(),
            paren_year: Regex::new(r"\((\d{4})\)").unwrap(),
            trailing: Regex::new(
                r"(?:^|,)\s*(?P<container>[^,]*?\p{L}[^,]*?)\s+(?P<volume>\d+)\s*\((?P<year>\d{4})\)\s*(?:[,:]\s*(?:pp?\.\s*)?(?P<pages>\d+(?:\s*[-–]+\s*\d+)?))?\s*$",
            )
            .unwrap(),
            initials: Regex::new(&format!(r"^(?:{initial}\s*)+$")).unwrap(),
            surname_only: Regex::new(&format!(r"^{surname}$")).unwrap(),
            forward: Regex::new(&format!(
                r"^(?P<given>(?:{initial}\s*)+|{given_word}(?:\s+(?:{initial}|{given_word}))?)\s+(?P<surname>{surname})$"
            ))
            .unwrap(),
            reversed: Regex::new(&format!(r"^(?P<surname>{surname})\s+(?P<given>(?:{initial}\s*)+)$")).unwrap(),
            conjunction: Regex::new(r"\s*;\s*|\s+(?:and|&)\s+").unwrap(),
        }
    })
}

/// Extracts structured fields from one citation string.
pub fn extract_fields(citation: &str) -> Result<ExtractedReference, ExtractError> {
    let trimmed = citation.trim();
    if trimmed.is_empty() {
        return Err(ExtractError::EmptyInput);
    }
    let p = patterns();
    let mut out = ExtractedReference::empty(citation);

    // 1. DOI
    let mut work = trimmed.to_owned();
    if let Some(m) = p.doi.captures(trimmed) {
        let whole = m.get(0).unwrap();
        let doi = m[1].trim_end_matches(['.', ',', ';']);
        let doi = if doi.ends_with(')') && !doi.contains('(') { &doi[..doi.len() - 1] } else { doi };
        out.doi = Some(doi.to_owned());
        let tail_start = whole.start() + (whole.as_str().len() - m[1].len()) + doi.len();
        work = format!("{}{}", &trimmed[..whole.start()], &trimmed[tail_start..]);
    }
    let work = tidy(&work);

    // 2. year
    out.year = find_year(&work);

    // 3. trailing container/volume/pages
    let head = match p.trailing.captures(&work) {
        Some(c) => {
            out.container = Some(c["container"].trim().to_owned());
            out.volume = Some(c["volume"].to_owned());
            out.pages = c.name("pages").map(|m| m.as_str().to_owned());
            work[..c.get(0).unwrap().start()].to_owned()
        }
        None => work.clone(),
    };

    // 4. author block
    let segments: Vec<&str> = head
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty() && !is_year_segment(s))
        .collect();
    let (authors, consumed) = author_block(&segments);
    out.authors = authors;

    // 5. title
    if !out.authors.is_empty() || out.container.is_some() {
        out.title = segments[consumed..]
            .iter()
            .map(|s| clean_title(s))
            .filter(|s| !s.is_empty())
            .fold(None::<String>, |best, s| match best {
                Some(b) if b.chars().count() >= s.chars().count() => Some(b),
                _ => Some(s),
            });
    }

    if out.is_anchored() {
        Ok(out)
    } else {
        Err(ExtractError::Unparseable)
    }
}

/// Collapses whitespace and strips dangling separators left after removals.
fn tidy(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut t = collapsed.replace(" ,", ",");
    while t.contains(",,") {
        t = t.replace(",,", ",");
    }
    t.trim_matches(|c: char| c == ',' || c == '.' || c == ';' || c.is_whitespace())
        .to_owned()
}

fn is_year_segment(s: &str) -> bool {
    let s = s.trim_end_matches('.').trim_matches(|c| c == '(' || c == ')');
    s.len() == 4 && s.bytes().all(|b| b.is_ascii_digit())
}

fn find_year(text: &str) -> Option<i32> {
    let p = patterns();
    let mut hits: Vec<(usize, i32)> = p
        .paren_year
        .captures_iter(text)
        .filter_map(|c| {
            let m = c.get(1).unwrap();
            m.as_str().parse().ok().map(|y| (m.start(), y))
        })
        .collect();
    let mut offset = 0;
    for seg in text.split(',') {
        let t = seg.trim().trim_end_matches('.');
        if t.len() == 4 && t.bytes().all(|b| b.is_ascii_digit()) {
            let at = offset + seg.find(t).unwrap_or(0);
            hits.push((at, t.parse().unwrap()));
        }
        offset += seg.len() + 1;
    }
    hits.sort();
    hits.into_iter().map(|(_, y)| y).find(|&y| year_in_range(y))
}

fn clean_title(s: &str) -> String {
    s.trim()
        .trim_matches(|c| matches!(c, '"' | '“' | '”' | '\'' | '‘' | '’'))
        .trim_end_matches('.')
        .trim()
        .to_owned()
}

#[derive(Debug)]
enum Atom {
    Name(AuthorName),
    Surname(String),
    Initials(String),
}

fn classify(part: &str) -> Option<(Atom, bool)> {
    let p = patterns();
    let part = part.trim();
    if p.initials.is_match(part) {
        return Some((Atom::Initials(part.to_owned()), false));
    }
    if p.surname_only.is_match(part) {
        return Some((Atom::Surname(part.to_owned()), false));
    }
    if let Some(c) = p.reversed.captures(part) {
        return Some((Atom::Name(AuthorName::new(&c["surname"], Some(c["given"].trim()))), false));
    }
    if let Some(c) = p.forward.captures(part) {
        let given = c["given"].trim();
        let full_given = !p.initials.is_match(given);
        return Some((Atom::Name(AuthorName::new(&c["surname"], Some(given))), full_given));
    }
    None
}

/// Consumes leading segments that read as author names. Returns the names
/// and how many segments were consumed.
fn author_block(segments: &[&str]) -> (Vec<AuthorName>, usize) {
    let p = patterns();
    // (atom, segment index, segment is a conjunction list)
    let mut stream = Vec::new();
    // segment index -> "Given Surname" with a spelled-out given name only
    let mut ambiguous = Vec::new();
    for (i, seg) in segments.iter().enumerate() {
        let parts: Vec<&str> = p.conjunction.split(seg).filter(|s| !s.trim().is_empty()).collect();
        let Some(atoms) = parts.iter().map(|part| classify(part)).collect::<Option<Vec<_>>>() else {
            break;
        };
        let multi = parts.len() > 1;
        ambiguous.push(!multi && atoms.iter().all(|(_, full_given)| *full_given));
        stream.extend(atoms.into_iter().map(|(atom, _)| (atom, i, multi)));
    }

    // (author, segment index of its last atom)
    let mut authors: Vec<(AuthorName, usize)> = Vec::new();
    let mut stop_at = ambiguous.len();
    let mut k = 0;
    while k < stream.len() {
        let (atom, seg, multi) = &stream[k];
        match atom {
            Atom::Name(n) => {
                authors.push((n.clone(), *seg));
                k += 1;
            }
            Atom::Surname(s) => match stream.get(k + 1) {
                Some((Atom::Initials(ini), next_seg, _)) => {
                    authors.push((AuthorName::new(s.clone(), Some(ini)), *next_seg));
                    k += 2;
                }
                _ if *multi => {
                    authors.push((AuthorName::new(s.clone(), None), *seg));
                    k += 1;
                }
                _ => {
                    stop_at = *seg;
                    break;
                }
            },
            Atom::Initials(_) => {
                stop_at = *seg;
                break;
            }
        }
    }
    authors.retain(|(_, seg)| *seg < stop_at);
    let mut consumed = authors.last().map_or(0, |(_, seg)| seg + 1);

    // "Given Surname" reads the same as a two-word title; if the author block
    // swallowed every segment, give the last one back.
    if consumed > 0 && consumed == segments.len() && ambiguous[consumed - 1] {
        consumed -= 1;
        authors.retain(|(_, seg)| *seg < consumed);
    }
    (authors.into_iter().map(|(a, _)| a).collect(), consumed)
}

/// Splits an author list such as `"Knuth, D.; Lamport, L."`,
/// `"D. Knuth and L. Lamport"` or `"Knuth, D."`.
pub fn parse_author_list(text: &str) -> Vec<AuthorName> {
    let p = patterns();
    let text = text.trim();
    if text.is_empty() {
        return Vec::new();
    }
    if text.contains(';') {
        return text
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(parse_single_author)
            .collect();
    }
    let segments: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let (authors, consumed) = author_block(&segments);
    if consumed == segments.len() && !authors.is_empty() {
        return authors;
    }
    p.conjunction
        .split(text)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_single_author)
        .collect()
}

fn parse_single_author(s: &str) -> AuthorName {
    if let Some((surname, given)) = s.split_once(',') {
        let given = given.trim();
        return AuthorName::new(surname.trim(), (!given.is_empty()).then_some(given));
    }
    match classify(s) {
        Some((Atom::Name(n), _)) => n,
        _ => match s.rsplit_once(' ') {
            Some((given, surname)) => AuthorName::new(surname, Some(given.trim())),
            None => AuthorName::new(s, None),
        },
    }
}

pub const STRUCTURED_KEYS: [&str; 7] = ["authors", "title", "container", "year", "volume", "pages", "doi"];

/// Structured input: field name to text value. Deserializes from a JSON
/// object whose values are strings, numbers or arrays of strings (joined
/// with `"; "`, the author-list separator).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StructuredFields(pub BTreeMap<String, String>);

impl<'de> Deserialize<'de> for StructuredFields {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = StructuredFields;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object of citation fields")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut out = BTreeMap::new();
                while let Some((k, v)) = map.next_entry::<String, serde_json::Value>()? {
                    let text = match v {
                        serde_json::Value::String(s) => s,
                        serde_json::Value::Number(n) => n.to_string(),
                        serde_json::Value::Null => continue,
                        serde_json::Value::Array(items) => items
                            .into_iter()
                            .map(|i| match i {
                                serde_json::Value::String(s) => Ok(s),
                                _ => Err(de::Error::custom("array items must be strings")),
                            })
                            .collect::<Result<Vec<_>, _>>()?
                            .join("; "),
                        _ => return Err(de::Error::custom(format!("unsupported value for `{k}`"))),
                    };
                    out.insert(k, text);
                }
                Ok(StructuredFields(out))
            }
        }
        d.deserialize_map(V)
    }
}

impl<K: Into<String>, S: Into<String>> FromIterator<(K, S)> for StructuredFields {
    fn from_iter<I: IntoIterator<Item = (K, S)>>(iter: I) -> Self {
        Self(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

/// Validates structured input and passes it through.
pub fn extract_structured(fields: &StructuredFields) -> Result<ExtractedReference, ExtractError> {
    let raw = serde_json::to_string(&fields.0).expect("string map serializes");
    let mut out = ExtractedReference::empty(&raw);
    for (key, value) in &fields.0 {
        let value = value.trim();
        let non_empty = (!value.is_empty()).then(|| value.to_owned());
        match key.as_str() {
            "authors" => out.authors = parse_author_list(value),
            "title" => out.title = non_empty,
            "container" => out.container = non_empty,
            "volume" => out.volume = non_empty,
            "pages" => out.pages = non_empty,
            "doi" => out.doi = non_empty,
            "year" => {
                if !value.is_empty() {
                    let year: i32 = value.parse().map_err(|_| ExtractError::InvalidField("year".into()))?;
                    if !year_in_range(year) {
                        return Err(ExtractError::InvalidField("year".into()));
                    }
                    out.year = Some(year);
                }
            }
            other => return Err(ExtractError::InvalidField(other.to_owned())),
        }
    }
    if out.is_anchored() {
        Ok(out)
    } else {
        Err(ExtractError::Unparseable)
    }
}
