use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    write_atomic, AnalysisOutput, DocumentSummary, Exclusion, IngestOutput, Interpretation, ModelCoherence, PipelineConfig, PipelineError, Staged,
    UnassignedReport,
};
use crate::analysis::{AgendaVector, ClusterAssignment, CooccurrenceMatrix, CorrelationMatrix, Dendrogram, InconsistencyTable, Scope, SimilarityMatrix};
use crate::corpus::{DocumentKey, SubsetId};
use crate::embedding::Embedding2D;
use crate::evaluation::GridSearchResult;
use crate::interpret::{ScoredWord, TopicSummary};
use crate::json;
use crate::lda::TopicModel;

pub const SCHEMA_VERSION: &str = "1.0.0";
const ZSTD_LEVEL: i32 = 9;
const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub generator: String,
    /// Hash of the ingest inputs: source texts, template, resources and
    /// preprocessing settings.
    pub corpus_hash: String,
    pub stage_hashes: BTreeMap<String, String>,
    /// Taken from `SOURCE_DATE_EPOCH`; never the wall clock.
    pub source_date_epoch: Option<u64>,
    pub seed: u64,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub documents: Vec<DocumentSummary>,
    pub unassigned: Vec<UnassignedReport>,
    pub dropped_documents: Vec<DocumentKey>,
    pub empty_subsets: Vec<SubsetId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetResult {
    pub model: TopicModel,
    pub coherence: ModelCoherence,
    pub topics: Vec<TopicSummary>,
    pub saliency: Vec<ScoredWord>,
    pub agendas: BTreeMap<Scope, Vec<AgendaVector>>,
    pub similarity: BTreeMap<Scope, SimilarityMatrix>,
    pub dendrograms: BTreeMap<Scope, Dendrogram>,
    pub default_scope: Scope,
    pub threshold: Option<f64>,
    pub clusters: Option<ClusterAssignment>,
    pub embedding: Option<Embedding2D>,
    pub excluded: Vec<Exclusion>,
}

/// Everything the explorer reads, in one self-describing file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub schema_version: String,
    pub metadata: Metadata,
    pub corpus: CorpusReport,
    pub subsets: BTreeMap<SubsetId, SubsetResult>,
    pub cooccurrence: CooccurrenceMatrix,
    pub inconsistency: InconsistencyTable,
    pub correlations: BTreeMap<SubsetId, CorrelationMatrix>,
    pub grid: BTreeMap<SubsetId, GridSearchResult>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn assemble(
    config: &PipelineConfig,
    ingest: Staged<IngestOutput>,
    models: BTreeMap<SubsetId, TopicModel>,
    mut coherence: BTreeMap<SubsetId, ModelCoherence>,
    grid: BTreeMap<SubsetId, GridSearchResult>,
    mut interp: BTreeMap<SubsetId, Interpretation>,
    analysis: AnalysisOutput,
    mut embeddings: BTreeMap<SubsetId, Embedding2D>,
    stage_hashes: BTreeMap<String, String>,
) -> ResultBundle {
    let mut per_subset = analysis.subsets;
    let subsets = models
        .into_iter()
        .map(|(s, model)| {
            let a = per_subset.remove(&s).expect("analysis covers every model");
            let i = interp.remove(&s).expect("interpretation covers every model");
            let r = SubsetResult {
                model,
                coherence: coherence.remove(&s).expect("coherence covers every model"),
                topics: i.topics,
                saliency: i.saliency,
                agendas: a.agendas,
                similarity: a.similarity,
                dendrograms: a.dendrograms,
                default_scope: a.default_scope,
                threshold: a.threshold,
                clusters: a.clusters,
                embedding: embeddings.remove(&s),
                excluded: a.excluded,
            };
            (s, r)
        })
        .collect();
    let ing = ingest.value;
    ResultBundle {
        schema_version: SCHEMA_VERSION.to_string(),
        metadata: Metadata {
            generator: concat!("policy-frames ", env!("CARGO_PKG_VERSION")).to_string(),
            corpus_hash: ingest.hash,
            stage_hashes,
            source_date_epoch: std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse().ok()),
            seed: config.seed,
            config: config.clone(),
        },
        corpus: CorpusReport { documents: ing.documents, unassigned: ing.unassigned, dropped_documents: ing.dropped, empty_subsets: ing.empty_subsets },
        subsets,
        cooccurrence: analysis.cooccurrence,
        inconsistency: analysis.inconsistency,
        correlations: analysis.correlations,
        grid,
    }
}

fn is_zst(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "zst")
}

fn simplex(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite() && *x >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE
}

impl ResultBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        json::to_vec(self).expect("bundle serializes")
    }

    /// Writes JSON, or zstd-compressed JSON for a `.zst` path, atomically.
    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        let err = |e: &dyn std::fmt::Display| PipelineError::stage("export", path.display(), e);
        let mut bytes = self.to_bytes();
        if is_zst(path) {
            bytes = zstd::encode_all(bytes.as_slice(), ZSTD_LEVEL).map_err(|e| err(&e))?;
        }
        write_atomic(path, &bytes).map_err(|e| err(&e))
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let err = |e: &dyn std::fmt::Display| PipelineError::stage("load", path.display(), e);
        let file = std::fs::File::open(path).map_err(|e| err(&e))?;
        let mut bytes = Vec::new();
        if is_zst(path) {
            zstd::Decoder::new(file).and_then(|mut d| d.read_to_end(&mut bytes)).map_err(|e| err(&e))?;
        } else {
            std::io::BufReader::new(file).read_to_end(&mut bytes).map_err(|e| err(&e))?;
        }
        let b: ResultBundle = serde_json::from_slice(&bytes).map_err(|e| err(&e))?;
        if b.schema_version != SCHEMA_VERSION {
            return Err(err(&format!("schema version {} is not {SCHEMA_VERSION}", b.schema_version)));
        }
        Ok(b)
    }

    /// Checks internal references and probability invariants. Returns every
    /// problem found.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errs.push(format!("schema_version {} is not {SCHEMA_VERSION}", self.schema_version));
        }
        let known_docs: BTreeSet<&DocumentKey> = self.corpus.documents.iter().map(|d| &d.key).collect();
        let mut countries = BTreeSet::new();
        for (s, r) in &self.subsets {
            let m = &r.model;
            let k = m.num_topics();
            if m.subset_id != *s {
                errs.push(format!("{s}: model is for {}", m.subset_id));
            }
            if m.theta.len() != m.doc_keys.len() {
                errs.push(format!("{s}: {} theta rows for {} documents", m.theta.len(), m.doc_keys.len()));
            }
            for (i, row) in m.phi.iter().enumerate() {
                if row.len() != m.vocab_size() || !simplex(row) {
                    errs.push(format!("{s}: phi row {i} is not a distribution over the vocabulary"));
                }
            }
            for (key, row) in m.doc_keys.iter().zip(&m.theta) {
                if key.subset() != *s || !known_docs.contains(key) {
                    errs.push(format!("{s}: model references unknown document {key}"));
                }
                if row.len() != k || !simplex(row) {
                    errs.push(format!("{s}: theta row {key} is not a distribution over {k} topics"));
                }
                countries.insert(key.country.to_string());
            }
            if r.topics.len() != k || r.topics.iter().enumerate().any(|(i, t)| t.topic_id != i) {
                errs.push(format!("{s}: topic summaries do not match K={k}"));
            }
            if r.coherence.cv.per_topic.len() != k || r.coherence.umass.per_topic.len() != k {
                errs.push(format!("{s}: coherence does not cover K={k} topics"));
            }
            for (scope, list) in &r.agendas {
                let width = if *scope == Scope::Bound { 3 * k } else { k };
                for a in list {
                    if a.scope != *scope || a.subset_id != *s || a.values.len() != width || !simplex(&a.values) {
                        errs.push(format!("{s}/{scope}: malformed agenda for {}", a.country));
                    }
                    if !m.doc_keys.iter().any(|d| d.country == a.country) {
                        errs.push(format!("{s}/{scope}: agenda for {} has no document", a.country));
                    }
                }
                let labels: Vec<String> = list.iter().map(|a| a.country.to_string()).collect();
                match r.similarity.get(scope) {
                    Some(sm) if sm.labels == labels => {}
                    _ => errs.push(format!("{s}/{scope}: similarity labels differ from agendas")),
                }
                match r.dendrograms.get(scope) {
                    Some(d) if d.labels == labels && d.merges.len() + 1 == labels.len().max(1) => {}
                    _ => errs.push(format!("{s}/{scope}: dendrogram does not match agendas")),
                }
            }
            if r.similarity.keys().chain(r.dendrograms.keys()).any(|sc| !r.agendas.contains_key(sc)) {
                errs.push(format!("{s}: matrix or dendrogram without agendas"));
            }
            let default_labels = r.similarity.get(&r.default_scope).map(|m| &m.labels);
            if let Some(c) = &r.clusters {
                if Some(&c.labels) != default_labels {
                    errs.push(format!("{s}: clusters do not match the {} matrix", r.default_scope));
                }
            }
            if let Some(e) = &r.embedding {
                if Some(&e.labels) != default_labels || e.coordinates.iter().flatten().any(|x| !x.is_finite()) {
                    errs.push(format!("{s}: embedding does not match the {} matrix", r.default_scope));
                }
            }
        }
        for l in &self.cooccurrence.labels {
            if !countries.contains(l) {
                errs.push(format!("cooccurrence: unknown country {l}"));
            }
        }
        for row in &self.inconsistency.rows {
            if !self.subsets.contains_key(&row.subset_id) || !countries.contains(row.country.as_str()) {
                errs.push(format!("inconsistency: unknown {}/{}", row.country, row.subset_id));
            }
        }
        for s in self.correlations.keys().chain(self.grid.keys()) {
            if !self.subsets.contains_key(s) {
                errs.push(format!("results for unmodeled subset {s}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    /// Writes the CSV tables next to the bundle: inconsistency, correlations
    /// and grid results.
    pub fn write_tables(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>, PipelineError> {
        let mut files = vec![(dir.join("inconsistency.csv"), self.inconsistency.to_csv())];
        for (s, c) in &self.correlations {
            files.push((dir.join(format!("correlations_{s}.csv")), c.to_csv()));
        }
        for (s, g) in &self.grid {
            let csv = g.to_csv().map_err(|e| PipelineError::stage("export", s, e))?;
            files.push((dir.join(format!("grid_{s}.csv")), csv));
        }
        for (p, text) in &files {
            write_atomic(p, text.as_bytes()).map_err(|e| PipelineError::stage("export", p.display(), e))?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}
