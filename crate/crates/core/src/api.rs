//! Read-only query layer over a [`ResultBundle`], independent of any HTTP
//! server. Every body carries the bundle's `schema_version`.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{cluster_kmeans, cut, Scope};
use crate::corpus::{CountryCode, Dimension, DocumentKey, Section, SubsetId};
use crate::interpret::{relevance, RelevanceQuery, ScoredWord};
use crate::pipeline::{default_threshold, ResultBundle, SubsetResult};

pub const DEFAULT_KMEANS_SEED: u64 = 0;

/// Paths served by [`respond`].
pub const ENDPOINTS: [&str; 14] = [
    "/api/meta",
    "/api/subsets",
    "/api/topics",
    "/api/theta",
    "/api/distribution-compare",
    "/api/similarity",
    "/api/dendrogram",
    "/api/clusters",
    "/api/embedding",
    "/api/cooccurrence",
    "/api/inconsistency",
    "/api/correlations",
    "/api/health",
    "/api/schema",
];

/// Published response schemas, by endpoint name (`/api/<name>`) plus `error`.
pub const SCHEMAS: [(&str, &str); 14] = [
    ("health", include_str!("../schemas/api/health.json")),
    ("meta", include_str!("../schemas/api/meta.json")),
    ("subsets", include_str!("../schemas/api/subsets.json")),
    ("topics", include_str!("../schemas/api/topics.json")),
    ("theta", include_str!("../schemas/api/theta.json")),
    ("distribution-compare", include_str!("../schemas/api/distribution-compare.json")),
    ("similarity", include_str!("../schemas/api/similarity.json")),
    ("dendrogram", include_str!("../schemas/api/dendrogram.json")),
    ("clusters", include_str!("../schemas/api/clusters.json")),
    ("embedding", include_str!("../schemas/api/embedding.json")),
    ("cooccurrence", include_str!("../schemas/api/cooccurrence.json")),
    ("inconsistency", include_str!("../schemas/api/inconsistency.json")),
    ("correlations", include_str!("../schemas/api/correlations.json")),
    ("error", include_str!("../schemas/api/error.json")),
];

pub const BUNDLE_SCHEMA: &str = include_str!("../schemas/bundle.json");

pub fn schema(name: &str) -> Option<Value> {
    SCHEMAS.iter().find(|(n, _)| *n == name).map(|(_, s)| serde_json::from_str(s).expect("bundled schemas are valid JSON"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: u16,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: 400, code: "bad_request", message: message.into() }
    }

    fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status: 404, code, message: message.into() }
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        ApiError { status: 422, code: "out_of_range", message: message.into() }
    }
}

type ApiResult = Result<Value, ApiError>;

struct Query(BTreeMap<String, String>);

impl Query {
    fn parse(raw: &str) -> Result<Self, ApiError> {
        let mut map = BTreeMap::new();
        for (k, v) in form_urlencoded::parse(raw.trim_start_matches('?').as_bytes()) {
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ApiError::bad_request(format!("parameter {k} given twice")));
            }
        }
        Ok(Query(map))
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> Result<&str, ApiError> {
        self.get(key).ok_or_else(|| ApiError::bad_request(format!("missing parameter {key}")))
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ApiError> {
        self.get(key).map(|v| v.parse::<T>().map_err(|_| ApiError::bad_request(format!("malformed {key}: {v:?}")))).transpose()
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("bundle types serialize")
}

fn subset<'a>(b: &'a ResultBundle, q: &Query) -> Result<(SubsetId, &'a SubsetResult), ApiError> {
    let raw = q.required("subset")?;
    let id: SubsetId = raw.parse().map_err(|_| ApiError::not_found("unknown_subset", format!("unknown subset {raw:?}")))?;
    b.subsets.get(&id).map(|r| (id, r)).ok_or_else(|| ApiError::not_found("unknown_subset", format!("subset {id} has no model")))
}

fn scope(r: &SubsetResult, id: SubsetId, q: &Query) -> Result<Scope, ApiError> {
    match q.get("scope") {
        None => Ok(r.default_scope),
        Some(raw) => {
            let s: Scope = raw.parse().map_err(|_| ApiError::bad_request(format!("malformed scope {raw:?}")))?;
            if r.agendas.contains_key(&s) {
                Ok(s)
            } else {
                Err(ApiError::not_found("unknown_scope", format!("subset {id} has no {s} agendas")))
            }
        }
    }
}

fn section(q: &Query, id: SubsetId) -> Result<Section, ApiError> {
    let raw = q.required("section")?;
    let s: Section = raw.parse().map_err(|_| ApiError::bad_request(format!("malformed section {raw:?}")))?;
    if id.sections().contains(&s) {
        Ok(s)
    } else {
        Err(ApiError::bad_request(format!("section {s} is not part of subset {id}")))
    }
}

fn meta(b: &ResultBundle) -> ApiResult {
    Ok(json!({
        "metadata": to_value(&b.metadata),
        "documents": b.corpus.documents.len(),
        "flagged_documents": b.corpus.documents.iter().filter(|d| d.flagged).count(),
        "unassigned_spans": b.corpus.unassigned.len(),
        "dropped_documents": to_value(&b.corpus.dropped_documents),
        "empty_subsets": to_value(&b.corpus.empty_subsets),
        "subsets": b.subsets.keys().map(|s| s.to_string()).collect::<Vec<_>>(),
    }))
}

fn subsets(b: &ResultBundle) -> ApiResult {
    let list: Vec<Value> = b
        .subsets
        .iter()
        .map(|(s, r)| {
            let mut countries: Vec<&str> = r.model.doc_keys.iter().map(|k| k.country.as_str()).collect();
            countries.dedup();
            json!({
                "id": s.to_string(),
                "num_topics": r.model.num_topics(),
                "num_documents": r.model.doc_keys.len(),
                "vocabulary_size": r.model.vocab_size(),
                "countries": countries,
                "sections": s.sections().iter().map(|x| x.to_string()).collect::<Vec<_>>(),
                "scopes": r.agendas.keys().map(|x| x.to_string()).collect::<Vec<_>>(),
                "default_scope": r.default_scope.to_string(),
                "threshold": r.threshold,
                "coherence": {"umass": r.coherence.umass.aggregate, "cv": r.coherence.cv.aggregate},
            })
        })
        .collect();
    Ok(json!({ "subsets": list }))
}

fn topics(b: &ResultBundle, q: &Query) -> ApiResult {
    let (id, r) = subset(b, q)?;
    let lambda: Option<f64> = q.parsed("lambda")?;
    let top_n: Option<usize> = q.parsed("top_n")?;
    let mut topics = r.topics.clone();
    if lambda.is_some() || top_n.is_some() {
        let cfg = &b.metadata.config.interpretation;
        let rq = RelevanceQuery::new(lambda.unwrap_or(cfg.lambda), top_n.unwrap_or(cfg.relevance_top_n)).map_err(|e| ApiError::unprocessable(e.to_string()))?;
        let rel: Vec<Vec<ScoredWord>> = relevance(&r.model, &rq);
        for (t, words) in topics.iter_mut().zip(rel) {
            t.keywords = words.iter().take(cfg.keyword_count).map(|w| w.word.clone()).collect();
            t.top_words_relevance = words;
        }
    }
    Ok(json!({
        "subset": id.to_string(),
        "lambda": lambda.unwrap_or(b.metadata.config.interpretation.lambda),
        "topic_mass": r.model.topic_marginal(),
        "topics": to_value(&topics),
        "saliency": to_value(&r.saliency),
    }))
}

fn theta(b: &ResultBundle, q: &Query) -> ApiResult {
    let (id, r) = subset(b, q)?;
    let raw = q.required("country")?;
    let country = CountryCode::new(raw).map_err(|_| ApiError::bad_request(format!("malformed country {raw:?}")))?;
    let sec = section(q, id)?;
    if !r.model.doc_keys.iter().any(|k| k.country == country) {
        return Err(ApiError::not_found("unknown_country", format!("no {id} documents for {country}")));
    }
    let key = DocumentKey { country, dimension: id.dimension().unwrap_or(Dimension::None), section: sec };
    let values = r.model.doc_topics(&key).map_err(|_| ApiError::not_found("unknown_document", format!("no document {key}")))?;
    Ok(json!({ "key": key.to_string(), "subset": id.to_string(), "country": key.country.to_string(), "section": sec.to_string(), "theta": values }))
}

fn distribution_compare(b: &ResultBundle, q: &Query) -> ApiResult {
    let (id, r) = subset(b, q)?;
    let sec = section(q, id)?;
    let topic: usize = q.parsed("topic")?.ok_or_else(|| ApiError::bad_request("missing parameter topic"))?;
    if topic >= r.model.num_topics() {
        return Err(ApiError::unprocessable(format!("topic {topic} out of range for K={}", r.model.num_topics())));
    }
    let values: Vec<(&str, f64)> =
        r.model.doc_keys.iter().zip(&r.model.theta).filter(|(k, _)| k.section == sec).map(|(k, t)| (k.country.as_str(), t[topic])).collect();
    let mut sorted: Vec<f64> = values.iter().map(|v| v.1).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let summary = if n == 0 {
        Value::Null
    } else {
        let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
        let max = sorted[n - 1];
        json!({
            "min": sorted[0],
            "max": max,
            "mean": sorted.iter().sum::<f64>() / n as f64,
            "median": median,
            "max_countries": values.iter().filter(|v| v.1 == max).map(|v| v.0).collect::<Vec<_>>(),
        })
    };
    Ok(json!({
        "subset": id.to_string(),
        "section": sec.to_string(),
        "topic": topic,
        "label": r.topics[topic].label,
        "values": values.iter().map(|(c, v)| json!({"country": c, "value": v})).collect::<Vec<_>>(),
        "summary": summary,
    }))
}

fn similarity(b: &ResultBundle, q: &Query) -> ApiResult {
    let (id, r) = subset(b, q)?;
    let s = scope(r, id, q)?;
    Ok(json!({ "subset": id.to_string(), "scope": s.to_string(), "matrix": to_value(&r.similarity[&s]) }))
}

fn dendrogram(b: &ResultBundle, q: &Query) -> ApiResult {
    let (id, r) = subset(b, q)?;
    let s = scope(r, id, q)?;
    let d = &r.dendrograms[&s];
    let threshold = if s == r.default_scope { r.threshold } else { Some(default_threshold(d)) };
    Ok(json!({
        "subset": id.to_string(),
        "scope": s.to_string(),
        "dendrogram": to_value(d),
        "max_height": d.max_height(),
        "default_threshold": threshold,
    }))
}

fn parse_threshold(raw: &str) -> Result<f64, ApiError> {
    let t: f64 = raw.parse().map_err(|_| ApiError::bad_request(format!("malformed threshold {raw:?}")))?;
    if t.is_nan() || t < 0.0 {
        return Err(ApiError::unprocessable(format!("threshold must be a non-negative number, got {raw}")));
    }
    Ok(t)
}

fn clusters(b: &ResultBundle, q: &Query) -> ApiResult {
    let (id, r) = subset(b, q)?;
    let s = scope(r, id, q)?;
    let assignment = match q.get("method").unwrap_or("hierarchical") {
        "hierarchical" => {
            let d = &r.dendrograms[&s];
            let t = match q.get("threshold") {
                Some(raw) => parse_threshold(raw)?,
                None if s == r.default_scope => r.threshold.unwrap_or_else(|| default_threshold(d)),
                None => default_threshold(d),
            };
            cut(d, t).map_err(|e| ApiError::unprocessable(e.to_string()))?
        }
        "kmeans" => {
            let k: usize = q.parsed("k")?.ok_or_else(|| ApiError::bad_request("kmeans needs parameter k"))?;
            let seed: u64 = q.parsed("seed")?.unwrap_or(DEFAULT_KMEANS_SEED);
            let agendas = &r.agendas[&s];
            let labels: Vec<String> = agendas.iter().map(|a| a.country.to_string()).collect();
            let vectors: Vec<Vec<f64>> = agendas.iter().map(|a| a.values.clone()).collect();
            cluster_kmeans(&labels, &vectors, k, seed).map_err(|e| ApiError::unprocessable(e.to_string()))?
        }
        other => return Err(ApiError::bad_request(format!("unknown method {other:?}; use hierarchical or kmeans"))),
    };
    Ok(json!({
        "subset": id.to_string(),
        "scope": s.to_string(),
        "num_clusters": assignment.num_clusters(),
        "assignment": to_value(&assignment),
    }))
}

fn embedding(b: &ResultBundle, q: &Query) -> ApiResult {
    let (id, r) = subset(b, q)?;
    let e = r.embedding.as_ref().ok_or_else(|| ApiError::not_found("no_embedding", format!("subset {id} has too few countries for an embedding")))?;
    Ok(json!({ "subset": id.to_string(), "scope": r.default_scope.to_string(), "embedding": to_value(e) }))
}

fn correlations(b: &ResultBundle, q: &Query) -> ApiResult {
    match q.get("subset") {
        None => Ok(json!({ "correlations": to_value(&b.correlations) })),
        Some(_) => {
            let (id, _) = subset(b, q)?;
            let m = b.correlations.get(&id).ok_or_else(|| ApiError::not_found("no_correlations", format!("no indicator correlations for {id}")))?;
            Ok(json!({ "correlations": { id.to_string(): to_value(m) } }))
        }
    }
}

fn route(b: &ResultBundle, path: &str, q: &Query) -> ApiResult {
    match path.trim_end_matches('/') {
        "/api/health" => Ok(json!({ "status": "ok" })),
        "/api/meta" => meta(b),
        "/api/subsets" => subsets(b),
        "/api/topics" => topics(b, q),
        "/api/theta" => theta(b, q),
        "/api/distribution-compare" => distribution_compare(b, q),
        "/api/similarity" => similarity(b, q),
        "/api/dendrogram" => dendrogram(b, q),
        "/api/clusters" => clusters(b, q),
        "/api/embedding" => embedding(b, q),
        "/api/cooccurrence" => Ok(json!({ "cooccurrence": to_value(&b.cooccurrence) })),
        "/api/inconsistency" => Ok(json!({ "inconsistency": to_value(&b.inconsistency) })),
        "/api/correlations" => correlations(b, q),
        "/api/schema" => {
            let name = q.required("endpoint")?;
            let s = schema(name).ok_or_else(|| ApiError::not_found("unknown_schema", format!("no schema for {name:?}")))?;
            Ok(json!({ "endpoint": name, "schema": s }))
        }
        other => Err(ApiError::not_found("unknown_endpoint", format!("no endpoint {other}"))),
    }
}

/// Answers one GET request. `query` is the raw query string, with or
/// without the leading `?`.
pub fn respond(bundle: &ResultBundle, path: &str, query: &str) -> ApiResponse {
    let result = Query::parse(query).and_then(|q| route(bundle, path, &q));
    let (status, mut body) = match result {
        Ok(v) => (200, v),
        Err(e) => (e.status, json!({ "error": { "status": e.status, "code": e.code, "message": e.message } })),
    };
    body.as_object_mut().expect("bodies are objects").insert("schema_version".into(), Value::String(bundle.schema_version.clone()));
    ApiResponse { status, body }
}
