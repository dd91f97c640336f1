//! OAI-PMH 2.0 request handling. Errors are reported inside the XML
//! response, never through the transport.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};

use citematch::corpus::{BibRecord, Corpus, RecordId};

use crate::msc::section_title;

pub const DEFAULT_PAGE_SIZE: usize = 100;
pub const PREFIX_DC: &str = "oai_dc";
pub const PREFIX_MSC: &str = "oai_msc";

const OAI_NS: &str = "http://www.openarchives.org/OAI/2.0/";
const DC_NS: &str = "http://purl.org/dc/elements/1.1/";
const OAI_DC_NS: &str = "http://www.openarchives.org/OAI/2.0/oai_dc/";
const OAI_DC_SCHEMA: &str = "http://www.openarchives.org/OAI/2.0/oai_dc.xsd";
pub const MSC_NS: &str = "urn:citematch:oai_msc:1";
const MSC_SCHEMA: &str = "urn:citematch:oai_msc:1.xsd";

/// Everything a response depends on.
#[derive(Debug, Clone, Copy)]
pub struct Repository<'a> {
    pub corpus: &'a Corpus,
    pub name: &'a str,
    pub base_url: &'a str,
    /// Namespace part of `oai:<namespace>:<id>` identifiers.
    pub namespace: &'a str,
    pub admin_email: &'a str,
    /// Shared by every record: the corpus is published as one unit.
    pub datestamp: NaiveDate,
    pub page_size: usize,
    pub generation: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OaiError {
    pub code: &'static str,
    pub message: String,
}

fn err(code: &'static str, message: impl Into<String>) -> OaiError {
    OaiError { code, message: message.into() }
}

/// Harvest position plus the filters it was issued under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResumptionToken {
    pub cursor: usize,
    pub set: Option<String>,
    pub from: Option<NaiveDate>,
    pub until: Option<NaiveDate>,
    pub prefix: String,
    pub page_size: usize,
    pub generation: u64,
}

impl ResumptionToken {
    pub fn encode(&self) -> String {
        let date = |d: Option<NaiveDate>| d.map(|d| d.to_string()).unwrap_or_default();
        let plain = format!(
            "v1|{}|{}|{}|{}|{}|{}|{:x}",
            self.cursor,
            self.set.as_deref().unwrap_or(""),
            date(self.from),
            date(self.until),
            self.prefix,
            self.page_size,
            self.generation
        );
        URL_SAFE_NO_PAD.encode(plain)
    }

    pub fn decode(token: &str) -> Option<Self> {
        let plain = String::from_utf8(URL_SAFE_NO_PAD.decode(token).ok()?).ok()?;
        let parts: Vec<&str> = plain.split('|').collect();
        let ["v1", cursor, set, from, until, prefix, page_size, generation] = parts[..] else {
            return None;
        };
        let date = |s: &str| -> Option<Option<NaiveDate>> {
            if s.is_empty() {
                Some(None)
            } else {
                s.parse().ok().map(Some)
            }
        };
        let page_size: usize = page_size.parse().ok()?;
        (page_size > 0 && !prefix.is_empty()).then_some(())?;
        Some(Self {
            cursor: cursor.parse().ok()?,
            set: (!set.is_empty()).then(|| set.to_owned()),
            from: date(from)?,
            until: date(until)?,
            prefix: prefix.to_owned(),
            page_size,
            generation: u64::from_str_radix(generation, 16).ok()?,
        })
    }
}

pub fn escape(s: &str) -> Cow<'_, str> {
    if !s.contains(['&', '<', '>', '"', '\'']) {
        return Cow::Borrowed(s);
    }
    let mut out = String::with_capacity(s.len() + 8);
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    Cow::Owned(out)
}

const VERBS: [&str; 6] = ["Identify", "ListMetadataFormats", "ListSets", "ListIdentifiers", "ListRecords", "GetRecord"];

/// Answers one request. `args` are the raw query pairs including `verb`.
pub fn handle_oai(repo: &Repository<'_>, args: &[(String, String)], response_date: DateTime<Utc>) -> String {
    let mut map = BTreeMap::new();
    let mut repeated = None;
    for (k, v) in args {
        if map.insert(k.as_str(), v.as_str()).is_some() {
            repeated = Some(k.as_str());
        }
    }
    let verb = map.get("verb").copied();
    let outcome = match (verb, repeated) {
        (_, Some("verb")) => Err(err("badVerb", "verb argument repeated")),
        (None, _) => Err(err("badVerb", "missing verb argument")),
        (Some(v), _) if !VERBS.contains(&v) => Err(err("badVerb", format!("illegal verb {v:?}"))),
        (_, Some(k)) => Err(err("badArgument", format!("argument {k:?} repeated"))),
        (Some(v), None) => {
            map.remove("verb");
            dispatch(repo, v, &map)
        }
    };

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    writeln!(
        out,
        "<OAI-PMH xmlns=\"{OAI_NS}\" xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" \
         xsi:schemaLocation=\"{OAI_NS} http://www.openarchives.org/OAI/2.0/OAI-PMH.xsd\">"
    )
    .unwrap();
    writeln!(out, "<responseDate>{}</responseDate>", response_date.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap();
    out.push_str("<request");
    let echo = !matches!(&outcome, Err(e) if e.code == "badVerb" || e.code == "badArgument");
    if echo {
        for (k, v) in args {
            write!(out, " {}=\"{}\"", escape(k), escape(v)).unwrap();
        }
    }
    writeln!(out, ">{}</request>", escape(repo.base_url)).unwrap();
    match outcome {
        Ok(body) => out.push_str(&body),
        Err(e) => writeln!(out, "<error code=\"{}\">{}</error>", e.code, escape(&e.message)).unwrap(),
    }
    out.push_str("</OAI-PMH>\n");
    out
}

fn allow_only(map: &BTreeMap<&str, &str>, allowed: &[&str]) -> Result<(), OaiError> {
    match map.keys().find(|k| !allowed.contains(k)) {
        Some(k) => Err(err("badArgument", format!("illegal argument {k:?}"))),
        None => Ok(()),
    }
}

fn dispatch(repo: &Repository<'_>, verb: &str, map: &BTreeMap<&str, &str>) -> Result<String, OaiError> {
    match verb {
        "Identify" => {
            allow_only(map, &[])?;
            Ok(identify(repo))
        }
        "ListMetadataFormats" => {
            allow_only(map, &["identifier"])?;
            if let Some(id) = map.get("identifier") {
                lookup(repo, id)?;
            }
            Ok(list_metadata_formats())
        }
        "ListSets" => {
            allow_only(map, &["resumptionToken"])?;
            if map.contains_key("resumptionToken") {
                return Err(err("badResumptionToken", "ListSets is never paginated"));
            }
            Ok(list_sets(repo))
        }
        "GetRecord" => {
            allow_only(map, &["identifier", "metadataPrefix"])?;
            let (Some(id), Some(prefix)) = (map.get("identifier"), map.get("metadataPrefix")) else {
                return Err(err("badArgument", "GetRecord requires identifier and metadataPrefix"));
            };
            check_prefix(prefix)?;
            let record = lookup(repo, id)?;
            let mut out = String::from("<GetRecord>\n");
            write_record(&mut out, repo, record, prefix);
            out.push_str("</GetRecord>\n");
            Ok(out)
        }
        _ => list(repo, verb, map),
    }
}

fn identify(repo: &Repository<'_>) -> String {
    let mut out = String::from("<Identify>\n");
    writeln!(out, "<repositoryName>{}</repositoryName>", escape(repo.name)).unwrap();
    writeln!(out, "<baseURL>{}</baseURL>", escape(repo.base_url)).unwrap();
    out.push_str("<protocolVersion>2.0</protocolVersion>\n");
    writeln!(out, "<adminEmail>{}</adminEmail>", escape(repo.admin_email)).unwrap();
    writeln!(out, "<earliestDatestamp>{}</earliestDatestamp>", repo.datestamp).unwrap();
    out.push_str("<deletedRecord>no</deletedRecord>\n<granularity>YYYY-MM-DD</granularity>\n</Identify>\n");
    out
}

fn list_metadata_formats() -> String {
    format!(
        "<ListMetadataFormats>\n\
         <metadataFormat><metadataPrefix>{PREFIX_DC}</metadataPrefix><schema>{OAI_DC_SCHEMA}</schema>\
         <metadataNamespace>{OAI_DC_NS}</metadataNamespace></metadataFormat>\n\
         <metadataFormat><metadataPrefix>{PREFIX_MSC}</metadataPrefix><schema>{MSC_SCHEMA}</schema>\
         <metadataNamespace>{MSC_NS}</metadataNamespace></metadataFormat>\n\
         </ListMetadataFormats>\n"
    )
}

fn record_sets(r: &BibRecord) -> BTreeSet<&str> {
    r.msc.iter().filter_map(|c| c.get(..2)).collect()
}

fn list_sets(repo: &Repository<'_>) -> String {
    let sets: BTreeSet<&str> = repo.corpus.records().flat_map(record_sets).collect();
    let mut out = String::from("<ListSets>\n");
    for s in sets {
        let name = section_title(s).unwrap_or(s);
        writeln!(out, "<set><setSpec>{s}</setSpec><setName>{}</setName></set>", escape(name)).unwrap();
    }
    out.push_str("</ListSets>\n");
    out
}

fn check_prefix(prefix: &str) -> Result<(), OaiError> {
    if prefix == PREFIX_DC || prefix == PREFIX_MSC {
        Ok(())
    } else {
        Err(err("cannotDisseminateFormat", format!("unsupported metadataPrefix {prefix:?}")))
    }
}

pub fn oai_identifier(repo: &Repository<'_>, id: RecordId) -> String {
    format!("oai:{}:{id}", repo.namespace)
}

fn lookup<'a>(repo: &Repository<'a>, identifier: &str) -> Result<&'a BibRecord, OaiError> {
    let missing = || err("idDoesNotExist", format!("no record {identifier:?}"));
    let local = identifier
        .strip_prefix("oai:")
        .and_then(|s| s.strip_prefix(repo.namespace))
        .and_then(|s| s.strip_prefix(':'))
        .ok_or_else(missing)?;
    let id: RecordId = local.parse().map_err(|_| missing())?;
    repo.corpus.get_record(id).ok_or_else(missing)
}

fn parse_date(arg: &str, value: &str) -> Result<NaiveDate, OaiError> {
    NaiveDate::parse_from_str(value, "%Y-%m-%d")
        .ok()
        .filter(|d| d.format("%Y-%m-%d").to_string() == value)
        .ok_or_else(|| err("badArgument", format!("{arg} must be YYYY-MM-DD, got {value:?}")))
}

fn list(repo: &Repository<'_>, verb: &str, map: &BTreeMap<&str, &str>) -> Result<String, OaiError> {
    let token = if let Some(t) = map.get("resumptionToken") {
        if map.len() > 1 {
            return Err(err("badArgument", "resumptionToken is an exclusive argument"));
        }
        let tok = ResumptionToken::decode(t).ok_or_else(|| err("badResumptionToken", "malformed token"))?;
        if tok.generation != repo.generation {
            return Err(err("badResumptionToken", "corpus changed since the token was issued"));
        }
        tok
    } else {
        allow_only(map, &["metadataPrefix", "from", "until", "set"])?;
        let prefix = map.get("metadataPrefix").ok_or_else(|| err("badArgument", "metadataPrefix is required"))?;
        let from = map.get("from").map(|v| parse_date("from", v)).transpose()?;
        let until = map.get("until").map(|v| parse_date("until", v)).transpose()?;
        if let (Some(f), Some(u)) = (from, until) {
            if f > u {
                return Err(err("badArgument", "from is later than until"));
            }
        }
        let set = map.get("set").map(|s| s.to_string());
        if let Some(s) = &set {
            if s.len() != 2 || !s.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err("badArgument", format!("sets are two-digit MSC sections, got {s:?}")));
            }
        }
        check_prefix(prefix)?;
        ResumptionToken {
            cursor: 0,
            set,
            from,
            until,
            prefix: prefix.to_string(),
            page_size: repo.page_size.max(1),
            generation: repo.generation,
        }
    };
    check_prefix(&token.prefix).map_err(|_| err("badResumptionToken", "token names an unknown format"))?;

    let in_dates = token.from.is_none_or(|f| f <= repo.datestamp) && token.until.is_none_or(|u| repo.datestamp <= u);
    let selected: Vec<&BibRecord> = if in_dates {
        repo.corpus
            .records()
            .filter(|r| token.set.as_deref().is_none_or(|s| record_sets(r).contains(s)))
            .collect()
    } else {
        Vec::new()
    };
    if selected.is_empty() {
        return Err(err("noRecordsMatch", "no records match the request"));
    }
    if token.cursor >= selected.len() {
        return Err(err("badResumptionToken", "cursor past the end of the list"));
    }
    let end = (token.cursor + token.page_size).min(selected.len());
    let full = verb == "ListRecords";
    let mut out = format!("<{verb}>\n");
    for r in &selected[token.cursor..end] {
        if full {
            write_record(&mut out, repo, r, &token.prefix);
        } else {
            write_header(&mut out, repo, r);
        }
    }
    if token.cursor > 0 || end < selected.len() {
        let size = selected.len();
        if end < selected.len() {
            let next = ResumptionToken { cursor: end, ..token.clone() };
            writeln!(
                out,
                "<resumptionToken completeListSize=\"{size}\" cursor=\"{}\">{}</resumptionToken>",
                token.cursor,
                next.encode()
            )
            .unwrap();
        } else {
            writeln!(out, "<resumptionToken completeListSize=\"{size}\" cursor=\"{}\"/>", token.cursor).unwrap();
        }
    }
    writeln!(out, "</{verb}>").unwrap();
    Ok(out)
}

fn write_header(out: &mut String, repo: &Repository<'_>, r: &BibRecord) {
    out.push_str("<header>");
    write!(out, "<identifier>{}</identifier>", escape(&oai_identifier(repo, r.id))).unwrap();
    write!(out, "<datestamp>{}</datestamp>", repo.datestamp).unwrap();
    for s in record_sets(r) {
        write!(out, "<setSpec>{s}</setSpec>").unwrap();
    }
    out.push_str("</header>\n");
}

fn write_record(out: &mut String, repo: &Repository<'_>, r: &BibRecord, prefix: &str) {
    out.push_str("<record>\n");
    write_header(out, repo, r);
    out.push_str("<metadata>\n");
    if prefix == PREFIX_MSC {
        writeln!(out, "<oai_msc:record xmlns:oai_msc=\"{MSC_NS}\" xmlns:dc=\"{DC_NS}\">").unwrap();
        write_dc_fields(out, repo, r);
        for code in &r.msc {
            writeln!(out, "<oai_msc:classification>{}</oai_msc:classification>", escape(code)).unwrap();
        }
        if r.abstract_redacted {
            out.push_str("<oai_msc:redacted>abstract</oai_msc:redacted>\n");
        }
        out.push_str("</oai_msc:record>\n");
    } else {
        writeln!(
            out,
            "<oai_dc:dc xmlns:oai_dc=\"{OAI_DC_NS}\" xmlns:dc=\"{DC_NS}\" \
             xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" \
             xsi:schemaLocation=\"{OAI_DC_NS} {OAI_DC_SCHEMA}\">"
        )
        .unwrap();
        write_dc_fields(out, repo, r);
        out.push_str("</oai_dc:dc>\n");
    }
    out.push_str("</metadata>\n");
    out.push_str("</record>\n");
}

/// Citation-style source line: serial, volume, year, pages.
pub fn source_line(r: &BibRecord) -> Option<String> {
    let serial = r.serial.as_deref()?;
    let mut s = serial.to_owned();
    if let Some(v) = &r.volume {
        write!(s, " {v}").unwrap();
    }
    if let Some(y) = r.year {
        write!(s, " ({y})").unwrap();
    }
    if let Some(p) = &r.pages {
        write!(s, ", {p}").unwrap();
    }
    Some(s)
}

fn write_dc_fields(out: &mut String, repo: &Repository<'_>, r: &BibRecord) {
    writeln!(out, "<dc:title>{}</dc:title>", escape(&r.title)).unwrap();
    for a in &r.authors {
        writeln!(out, "<dc:creator>{}</dc:creator>", escape(&a.display_inverted())).unwrap();
    }
    if let Some(y) = r.year {
        writeln!(out, "<dc:date>{y}</dc:date>").unwrap();
    }
    if let Some(src) = source_line(r) {
        writeln!(out, "<dc:source>{}</dc:source>", escape(&src)).unwrap();
    }
    writeln!(out, "<dc:identifier>{}</dc:identifier>", escape(&oai_identifier(repo, r.id))).unwrap();
    if let Some(doi) = &r.doi {
        writeln!(out, "<dc:identifier>doi:{}</dc:identifier>", escape(doi)).unwrap();
    }
}
