//! HTTP facade: matching, field search, entity lookups, links and OAI-PMH.
//!
//! All handlers read one immutable [`AppState`]; responses are pure
//! functions of the state and the request.

pub mod msc;
pub mod oai;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use citematch::classifier::{load_model, Model};
use citematch::corpus::{is_msc_code, load_corpus, BibRecord, Corpus, RecordId};
use citematch::index::{fold, Index};
use citematch::kvconfig::parse_key_values;
use citematch::links::{load_links, scholix_entries, LinkError, LinkSet, ScholixLink};
use citematch::matcher::{batch_entry_json, MatchConfig, MatchInput, Matcher};
use citematch::queryparse::{parse_query, structured_query, Field, Query as SearchQuery, QueryError, SearchIndex};

pub const DEFAULT_BATCH_CAP: usize = 1000;
pub const MAX_PAGE_SIZE: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub port: u16,
    pub corpus: PathBuf,
    pub model: Option<PathBuf>,
    pub links: Option<PathBuf>,
    pub page_size: usize,
    pub batch_cap: usize,
    pub base_url: String,
    pub repository_name: String,
    pub namespace: String,
    pub admin_email: String,
    pub match_config: MatchConfig,
    /// Datestamp of every OAI record; defaults to the start date.
    pub datestamp: Option<NaiveDate>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            corpus: PathBuf::from("corpus.jsonl"),
            model: None,
            links: None,
            page_size: oai::DEFAULT_PAGE_SIZE,
            batch_cap: DEFAULT_BATCH_CAP,
            base_url: "http://localhost:8080/oai".into(),
            repository_name: "Citation corpus".into(),
            namespace: "citematch.local".into(),
            admin_email: "admin@localhost".into(),
            match_config: MatchConfig::default(),
            datestamp: None,
        }
    }
}

impl ServiceConfig {
    /// Applies `key = value` settings on top of `self`.
    pub fn apply_kv(mut self, text: &str) -> Result<Self, String> {
        for (k, v) in parse_key_values(text).map_err(|e| e.to_string())? {
            let bad = |e: &dyn std::fmt::Display| format!("config key `{k}`: {e}");
            match k.as_str() {
                "port" => self.port = v.parse().map_err(|e| bad(&e))?,
                "corpus" => self.corpus = v.into(),
                "model" => self.model = Some(v.into()),
                "links" => self.links = Some(v.into()),
                "page_size" => self.page_size = v.parse().map_err(|e| bad(&e))?,
                "batch_cap" => self.batch_cap = v.parse().map_err(|e| bad(&e))?,
                "base_url" => self.base_url = v,
                "repository_name" => self.repository_name = v,
                "namespace" => self.namespace = v,
                "admin_email" => self.admin_email = v,
                "k" => self.match_config.k = v.parse().map_err(|e| bad(&e))?,
                "min_score" => self.match_config.min_score = v.parse().map_err(|e| bad(&e))?,
                "datestamp" => self.datestamp = Some(v.parse().map_err(|e| bad(&e))?),
                _ => return Err(format!("unknown config key `{k}`")),
            }
        }
        if self.page_size == 0 || self.page_size > MAX_PAGE_SIZE {
            return Err(format!("page_size must be in 1..={MAX_PAGE_SIZE}"));
        }
        Ok(self)
    }
}

pub struct AppState {
    pub corpus: Corpus,
    pub index: Index,
    pub search: SearchIndex,
    pub model: Option<Model>,
    pub links: LinkSet,
    pub config: ServiceConfig,
    pub datestamp: NaiveDate,
}

impl AppState {
    pub fn new(corpus: Corpus, model: Option<Model>, links: LinkSet, config: ServiceConfig) -> Self {
        let index = Index::build(&corpus);
        let search = SearchIndex::new(&corpus);
        let datestamp = config.datestamp.unwrap_or_else(|| Utc::now().date_naive());
        Self { corpus, index, search, model, links, config, datestamp }
    }

    /// Loads corpus, model and links named by the config.
    pub fn load(config: ServiceConfig) -> Result<Self, String> {
        let corpus = load_corpus(&config.corpus).map_err(|e| format!("{}: {e}", config.corpus.display()))?;
        let model = match &config.model {
            Some(p) => Some(load_model(p).map_err(|e| format!("{}: {e}", p.display()))?),
            None => None,
        };
        let links = match &config.links {
            Some(p) => load_links(p, &corpus).map_err(|e| format!("{}: {e}", p.display()))?.0,
            None => LinkSet::default(),
        };
        Ok(Self::new(corpus, model, links, config))
    }

    pub fn repository(&self) -> oai::Repository<'_> {
        oai::Repository {
            corpus: &self.corpus,
            name: &self.config.repository_name,
            base_url: &self.config.base_url,
            namespace: &self.config.namespace,
            admin_email: &self.config.admin_email,
            datestamp: self.datestamp,
            page_size: self.config.page_size,
            generation: self.corpus.fingerprint(),
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/oai", get(oai_handler))
        .route("/match", post(match_handler))
        .route("/search", get(search_handler))
        .route("/document/{id}", get(document_handler))
        .route("/author/{id}", get(author_handler))
        .route("/classification/{code}", get(classification_handler))
        .route("/serial/{name}", get(serial_handler))
        .route("/links", get(links_handler))
        .with_state(state)
}

pub async fn serve(state: AppState) -> std::io::Result<()> {
    let addr = std::net::SocketAddr::from(([0, 0, 0, 0], state.config.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(state))).await
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    offset: Option<usize>,
}

fn error(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: kind, message: message.into(), offset: None })).into_response()
}

fn query_error(e: &QueryError) -> Response {
    let kind = match e {
        QueryError::SyntaxError { .. } => "SyntaxError",
        QueryError::UnknownField { .. } => "UnknownField",
    };
    let body = ErrorBody { error: kind, message: e.to_string(), offset: Some(e.offset()) };
    (StatusCode::BAD_REQUEST, Json(body)).into_response()
}

async fn oai_handler(State(state): State<Arc<AppState>>, Query(args): Query<Vec<(String, String)>>) -> Response {
    let xml = oai::handle_oai(&state.repository(), &args, Utc::now());
    ([(header::CONTENT_TYPE, "text/xml; charset=utf-8")], xml).into_response()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatchRequest {
    citations: Vec<MatchInput>,
    #[serde(default)]
    min_score: Option<f64>,
}

async fn match_handler(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: MatchRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, "MalformedBody", e.to_string()),
    };
    if req.citations.len() > state.config.batch_cap {
        return error(
            StatusCode::PAYLOAD_TOO_LARGE,
            "BatchTooLarge",
            format!("{} citations exceed the cap of {}", req.citations.len(), state.config.batch_cap),
        );
    }
    let mut config = state.config.match_config;
    if let Some(s) = req.min_score {
        if !(0.0..=1.0).contains(&s) {
            return error(StatusCode::BAD_REQUEST, "MalformedBody", "min_score must lie in [0, 1]");
        }
        config.min_score = s;
    }
    let Some(model) = &state.model else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "NoModel", "no match model is loaded");
    };
    let matcher = Matcher::new(&state.corpus, &state.index, model, config);
    let out: Vec<Value> = req
        .citations
        .iter()
        .zip(matcher.match_batch(&req.citations))
        .map(|(input, r)| batch_entry_json(input, &r))
        .collect();
    Json(out).into_response()
}

#[derive(Debug, Serialize)]
pub struct SearchPage<'a> {
    pub query: String,
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub results: Vec<&'a BibRecord>,
}

/// Parses search parameters into a query and page window.
#[allow(clippy::result_large_err)]
pub fn search_request(args: &[(String, String)]) -> Result<(SearchQuery, usize, usize), Response> {
    let mut q = None;
    let mut structured = BTreeMap::new();
    let mut page = 1;
    let mut page_size = MAX_PAGE_SIZE;
    let bad = |m: String| error(StatusCode::BAD_REQUEST, "BadRequest", m);
    for (k, v) in args {
        let dup = match k.as_str() {
            "q" => q.replace(v.clone()).is_some(),
            "page" => {
                page = v.parse().ok().filter(|p| *p >= 1).ok_or_else(|| bad(format!("bad page {v:?}")))?;
                false
            }
            "page_size" => {
                page_size = v
                    .parse()
                    .ok()
                    .filter(|s| (1..=MAX_PAGE_SIZE).contains(s))
                    .ok_or_else(|| bad(format!("page_size must be in 1..={MAX_PAGE_SIZE}")))?;
                false
            }
            other => {
                let field = Field::from_code(other).ok_or_else(|| bad(format!("unknown parameter {other:?}")))?;
                structured.insert(field, v.clone()).is_some()
            }
        };
        if dup {
            return Err(bad(format!("parameter {k:?} repeated")));
        }
    }
    let query = match (q, structured.is_empty()) {
        (Some(q), true) => parse_query(&q).map_err(|e| query_error(&e))?,
        (None, false) => structured_query(&structured).map_err(|e| query_error(&e))?.expect("non-empty params"),
        (Some(_), false) => return Err(bad("give either q or structured fields, not both".into())),
        (None, true) => return Err(bad("missing q or structured fields".into())),
    };
    Ok((query, page, page_size))
}

async fn search_handler(State(state): State<Arc<AppState>>, Query(args): Query<Vec<(String, String)>>) -> Response {
    let (query, page, page_size) = match search_request(&args) {
        Ok(x) => x,
        Err(r) => return r,
    };
    let ids = state.search.evaluate(&query);
    let results = ids
        .iter()
        .skip((page - 1).saturating_mul(page_size))
        .take(page_size)
        .filter_map(|id| state.corpus.get_record(*id))
        .collect();
    Json(SearchPage { query: query.to_string(), total: ids.len(), page, page_size, results }).into_response()
}

async fn document_handler(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match id.parse::<RecordId>().ok().and_then(|id| state.corpus.get_record(id)) {
        Some(r) => Json(r).into_response(),
        None => error(StatusCode::NOT_FOUND, "NotFound", format!("no document {id:?}")),
    }
}

async fn author_handler(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let mut names = BTreeSet::new();
    let mut documents = Vec::new();
    for r in state.corpus.records() {
        let mine: Vec<_> = r.authors.iter().filter(|a| a.author_id.as_deref() == Some(id.as_str())).collect();
        if !mine.is_empty() {
            names.extend(mine.iter().map(|a| a.display_inverted()));
            documents.push(r.id);
        }
    }
    if documents.is_empty() {
        return error(StatusCode::NOT_FOUND, "NotFound", format!("no author {id:?}"));
    }
    Json(json!({ "author_id": id, "names": names, "documents": documents })).into_response()
}

async fn classification_handler(State(state): State<Arc<AppState>>, Path(code): Path<String>) -> Response {
    let valid = code.len() >= 2 && (code.len() == 2 || is_msc_code(&code));
    let title = valid.then(|| msc::section_title(&code)).flatten();
    let Some(description) = title else {
        return error(StatusCode::NOT_FOUND, "NotFound", format!("unknown classification {code:?}"));
    };
    let count = state.corpus.records().filter(|r| r.msc.iter().any(|c| c.starts_with(code.as_str()))).count();
    Json(json!({ "code": code, "description": description, "count": count })).into_response()
}

async fn serial_handler(State(state): State<Arc<AppState>>, Path(name): Path<String>) -> Response {
    let key = fold(name.trim());
    let docs: Vec<RecordId> = state
        .corpus
        .records()
        .filter(|r| r.serial.as_deref().is_some_and(|s| fold(s.trim()) == key))
        .map(|r| r.id)
        .collect();
    if docs.is_empty() {
        return error(StatusCode::NOT_FOUND, "NotFound", format!("unknown serial {name:?}"));
    }
    Json(json!({ "serial": name, "count": docs.len(), "documents": docs })).into_response()
}

/// The link filter selected by request parameters.
#[allow(clippy::result_large_err)]
pub fn links_request(state: &AppState, args: &[(String, String)]) -> Result<Vec<ScholixLink>, Response> {
    let bad = |m: &str| error(StatusCode::BAD_REQUEST, "BadRequest", m);
    let [(k, v)] = args else {
        return Err(bad("give exactly one of msc, author_id, provider"));
    };
    match k.as_str() {
        "msc" => state.links.links_by_msc(v).map_err(|e| match e {
            LinkError::BadMscCode(_) => bad(&e.to_string()),
            other => error(StatusCode::INTERNAL_SERVER_ERROR, "Internal", other.to_string()),
        }),
        "author_id" => Ok(state.links.links_by_author(v)),
        "provider" => Ok(state.links.links_by_provider(v)),
        _ => Err(bad("give exactly one of msc, author_id, provider")),
    }
}

async fn links_handler(State(state): State<Arc<AppState>>, Query(args): Query<Vec<(String, String)>>) -> Response {
    match links_request(&state, &args) {
        Ok(links) => Json(scholix_entries(&links)).into_response(),
        Err(r) => r,
    }
}
