//! Staged, cached pipeline from plan texts to a result bundle.

pub mod bundle;
pub mod cache;
pub mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    bind_distributions, cluster_hierarchical, cooccurrence, correlation_matrix, cut, section_inconsistency, AgendaVector, ClusterAssignment,
    CooccurrenceMatrix, CorrelationMatrix, Dendrogram, InconsistencyTable, IndicatorTable, Scope, SimilarityMatrix,
};
use crate::corpus::{
    build_subcorpora, preprocess, sectionize, CountryCode, DocumentKey, HeadingTemplate, Lemmatizer, Manifest, PolicyDocument, Preprocessor, Section, Stoplist,
    SubCorpus, SubsetId,
};
use crate::embedding::{tsne, Embedding2D};
use crate::evaluation::{grid_search, score_model, CoherenceReport, GridSearchResult};
use crate::interpret::{name_topics, saliency_table, summarize, top_words, RelevanceQuery, ScoredWord, TopicSummary, NAMING_WORDS};
use crate::lda::{train, TopicModel};

pub use bundle::{CorpusReport, Metadata, ResultBundle, SubsetResult, SCHEMA_VERSION};
pub use cache::{bytes_hash, content_hash, write_atomic, StageCache};
pub use config::PipelineConfig;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("stage {stage} failed at {artifact}: {message}")]
    Stage { stage: &'static str, artifact: String, message: String },
    #[error("bundle failed validation: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

impl PipelineError {
    pub fn stage(stage: &'static str, artifact: impl fmt::Display, err: impl fmt::Display) -> Self {
        PipelineError::Stage { stage, artifact: artifact.to_string(), message: err.to_string() }
    }
}

/// A stage output with the hash of its inputs.
#[derive(Debug, Clone)]
pub struct Staged<T> {
    pub value: T,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub key: DocumentKey,
    pub tokens: usize,
    /// No tokens survived preprocessing.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnassignedReport {
    pub country: CountryCode,
    pub start_line: usize,
    pub characters: usize,
    pub excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOutput {
    pub documents: Vec<DocumentSummary>,
    pub unassigned: Vec<UnassignedReport>,
    pub subcorpora: BTreeMap<SubsetId, SubCorpus>,
    pub empty_subsets: Vec<SubsetId>,
    /// Documents without in-vocabulary tokens, left out of training.
    pub dropped: Vec<DocumentKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCoherence {
    pub umass: CoherenceReport,
    pub cv: CoherenceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpretation {
    pub topics: Vec<TopicSummary>,
    pub saliency: Vec<ScoredWord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub country: CountryCode,
    pub scope: Scope,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetAnalysis {
    pub agendas: BTreeMap<Scope, Vec<AgendaVector>>,
    pub similarity: BTreeMap<Scope, SimilarityMatrix>,
    pub dendrograms: BTreeMap<Scope, Dendrogram>,
    pub default_scope: Scope,
    /// `None` when the default scope has no countries.
    pub threshold: Option<f64>,
    pub clusters: Option<ClusterAssignment>,
    pub excluded: Vec<Exclusion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutput {
    pub subsets: BTreeMap<SubsetId, SubsetAnalysis>,
    pub cooccurrence: CooccurrenceMatrix,
    pub inconsistency: InconsistencyTable,
    pub correlations: BTreeMap<SubsetId, CorrelationMatrix>,
}

/// Bound agendas for the five dimensions, the single section elsewhere.
pub fn default_scope(subset: SubsetId) -> Scope {
    if subset.is_dimension() {
        Scope::Bound
    } else {
        Scope::Section(subset.sections()[0])
    }
}

/// Midpoint of the widest gap between consecutive merge heights (first one
/// on ties). With a single merge the threshold equals its height, which keeps
/// the two leaves apart; with none it is 0.
pub fn default_threshold(den: &Dendrogram) -> f64 {
    let h: Vec<f64> = den.merges.iter().map(|m| m.height).collect();
    match h.len() {
        0 => 0.0,
        1 => h[0],
        _ => {
            let mut best = 0;
            for i in 1..h.len() - 1 {
                if h[i + 1] - h[i] > h[best + 1] - h[best] {
                    best = i;
                }
            }
            (h[best] + h[best + 1]) / 2.0
        }
    }
}

fn file_hash(stage: &'static str, path: &Path) -> Result<String, PipelineError> {
    std::fs::read(path).map(|b| bytes_hash(&b)).map_err(|e| PipelineError::stage(stage, path.display(), e))
}

fn optional_hash(stage: &'static str, path: Option<&Path>) -> Result<Option<String>, PipelineError> {
    path.map(|p| file_hash(stage, p)).transpose()
}

/// Source texts read up front so a missing file fails before any work.
enum Sources {
    Manifest(Vec<PolicyDocument>),
    Plans(Vec<(CountryCode, String)>, HeadingTemplate),
}

/// Sources plus their (name, content hash) fingerprint and the template hash.
type ReadSources = (Sources, Vec<(String, String)>, String);

pub struct Pipeline {
    pub config: PipelineConfig,
    pub out_dir: PathBuf,
    cache: StageCache,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, out_dir: impl Into<PathBuf>) -> Self {
        let out_dir = out_dir.into();
        let cache = if config.output.cache {
            let dir = config.output.cache_dir.as_ref().map(|d| config.resolve(d)).unwrap_or_else(|| out_dir.join("cache"));
            StageCache::new(Some(dir))
        } else {
            StageCache::disabled()
        };
        Pipeline { config, out_dir, cache }
    }

    pub fn bundle_path(&self) -> PathBuf {
        self.out_dir.join(&self.config.output.bundle)
    }

    fn resolved(&self, p: &Option<PathBuf>) -> Option<PathBuf> {
        p.as_ref().map(|p| self.config.resolve(p))
    }

    /// Verifies that every auxiliary input file exists.
    pub fn check_inputs(&self) -> Result<(), PipelineError> {
        let c = &self.config;
        let files = [
            ("ingest", self.resolved(&c.corpus.manifest)),
            ("ingest", self.resolved(&c.corpus.template)),
            ("ingest", self.resolved(&c.preprocess.lemmas)),
            ("ingest", self.resolved(&c.preprocess.stopwords)),
            ("interpret", self.resolved(&c.namer.mapping_path)),
            ("analyze", self.resolved(&c.indicators)),
        ];
        let plans = c.corpus.plans.iter().map(|p| ("ingest", Some(c.resolve(&p.path))));
        for (stage, path) in files.into_iter().chain(plans) {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(PipelineError::stage(stage, p.display(), "file not found"));
                }
            }
        }
        Ok(())
    }

    fn read_sources(&self) -> Result<ReadSources, PipelineError> {
        let c = &self.config;
        if let Some(m) = self.resolved(&c.corpus.manifest) {
            let manifest = Manifest::load(&m).map_err(|e| PipelineError::stage("ingest", m.display(), e))?;
            let docs = manifest.read_documents().map_err(|e| PipelineError::stage("ingest", m.display(), e))?;
            let mut fp: Vec<(String, String)> = docs.iter().map(|d| (d.key.to_string(), bytes_hash(d.raw_text.as_bytes()))).collect();
            fp.sort();
            Ok((Sources::Manifest(docs), fp, "manifest".into()))
        } else {
            let (template, template_hash) = match self.resolved(&c.corpus.template) {
                Some(p) => (HeadingTemplate::load(&p).map_err(|e| PipelineError::stage("ingest", p.display(), e))?, file_hash("ingest", &p)?),
                None => (HeadingTemplate::standard(), "standard".to_string()),
            };
            let mut plans = Vec::new();
            let mut fp = Vec::new();
            for p in &c.corpus.plans {
                let path = c.resolve(&p.path);
                let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::stage("ingest", path.display(), e))?;
                fp.push((p.country.to_string(), bytes_hash(text.as_bytes())));
                plans.push((p.country.clone(), text));
            }
            fp.sort();
            Ok((Sources::Plans(plans, template), fp, template_hash))
        }
    }

    fn preprocessor(&self) -> Result<Preprocessor, PipelineError> {
        let c = &self.config.preprocess;
        let lemmatizer = match self.resolved(&c.lemmas) {
            Some(p) => Lemmatizer::load(&p).map_err(|e| PipelineError::stage("ingest", p.display(), e))?,
            None => Lemmatizer::standard(),
        };
        let mut stoplist = match self.resolved(&c.stopwords) {
            Some(p) => Stoplist::load(&p).map_err(|e| PipelineError::stage("ingest", p.display(), e))?,
            None => Stoplist::standard(),
        };
        stoplist.extend(c.extra_stopwords.iter().map(|w| w.to_lowercase()));
        Ok(Preprocessor { lemmatizer, stoplist })
    }

    pub fn ingest(&self) -> Result<Staged<IngestOutput>, PipelineError> {
        self.check_inputs()?;
        let (sources, fingerprint, template_hash) = self.read_sources()?;
        let c = &self.config.preprocess;
        let key = (
            fingerprint,
            template_hash,
            optional_hash("ingest", self.resolved(&c.lemmas).as_deref())?,
            optional_hash("ingest", self.resolved(&c.stopwords).as_deref())?,
            c,
        );
        let (value, hash) = self.cache.get_or_compute("ingest", &key, || {
            let mut unassigned = Vec::new();
            let mut docs = match sources {
                Sources::Manifest(docs) => docs,
                Sources::Plans(plans, template) => {
                    let mut docs = Vec::new();
                    for (country, text) in &plans {
                        let plan = sectionize(country, text, &template).map_err(|e| PipelineError::stage("ingest", country, e))?;
                        for u in plan.unassigned {
                            log::warn!("{country}: {} characters from line {} match no heading", u.text.len(), u.start_line + 1);
                            unassigned.push(UnassignedReport {
                                country: country.clone(),
                                start_line: u.start_line,
                                characters: u.text.chars().count(),
                                excerpt: u.text.chars().take(120).collect(),
                            });
                        }
                        docs.extend(plan.documents);
                    }
                    docs
                }
            };
            preprocess(&mut docs, &self.preprocessor()?, &self.config.phrase_scorer());
            let built = build_subcorpora(&docs, c.min_doc_freq).map_err(|e| PipelineError::stage("ingest", "corpus", e))?;
            let mut documents: Vec<DocumentSummary> =
                docs.iter().map(|d| DocumentSummary { key: d.key.clone(), tokens: d.tokens.len(), flagged: d.is_flagged() }).collect();
            documents.sort_by(|a, b| a.key.cmp(&b.key));
            let mut subcorpora = BTreeMap::new();
            let mut dropped = Vec::new();
            let mut empty_subsets = built.empty;
            for (s, sc) in built.subsets {
                let (kept, gone) = sc.without_empty();
                for k in &gone {
                    log::warn!("dropping {k}: no in-vocabulary tokens");
                }
                dropped.extend(gone);
                if kept.num_docs() == 0 || kept.vocab_size() == 0 {
                    log::warn!("subset {s} has nothing to model after filtering");
                    empty_subsets.push(s);
                } else {
                    subcorpora.insert(s, kept);
                }
            }
            empty_subsets.sort();
            dropped.sort();
            Ok(IngestOutput { documents, unassigned, subcorpora, empty_subsets, dropped })
        })?;
        Ok(Staged { value, hash })
    }

    /// Configured subsets that have a non-empty sub-corpus.
    fn modeled<'a>(&'a self, ingest: &'a IngestOutput) -> impl Iterator<Item = (SubsetId, &'a SubCorpus)> + 'a {
        self.config.subsets.keys().filter_map(move |s| ingest.subcorpora.get(s).map(|sc| (*s, sc)))
    }

    pub fn train(&self, ingest: &Staged<IngestOutput>) -> Result<Staged<BTreeMap<SubsetId, TopicModel>>, PipelineError> {
        let jobs: Vec<(SubsetId, &SubCorpus)> = self.modeled(&ingest.value).collect();
        let results = jobs
            .par_iter()
            .map(|&(s, sc)| {
                let cfg = self.config.lda_config(s);
                let key = (&ingest.hash, s, &cfg);
                let (model, hash) = self.cache.get_or_compute("train", &key, || {
                    log::info!("training {s}: {} documents, {} words, K={}", sc.num_docs(), sc.vocab_size(), cfg.num_topics);
                    train(sc, &cfg).map(TopicModel::without_counts).map_err(|e| PipelineError::stage("train", s, e))
                })?;
                Ok((s, model, hash))
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        let hashes: BTreeMap<SubsetId, &String> = results.iter().map(|(s, _, h)| (*s, h)).collect();
        let hash = content_hash(&hashes);
        Ok(Staged { value: results.into_iter().map(|(s, m, _)| (s, m)).collect(), hash })
    }

    pub fn evaluate(
        &self,
        ingest: &Staged<IngestOutput>,
        models: &Staged<BTreeMap<SubsetId, TopicModel>>,
    ) -> Result<Staged<BTreeMap<SubsetId, ModelCoherence>>, PipelineError> {
        let key = (&models.hash, &self.config.coherence);
        let (value, hash) = self.cache.get_or_compute("evaluate", &key, || {
            models
                .value
                .par_iter()
                .map(|(s, m)| {
                    let (umass, cv) =
                        score_model(m, &ingest.value.subcorpora[s], &self.config.coherence).map_err(|e| PipelineError::stage("evaluate", s, e))?;
                    Ok((*s, ModelCoherence { umass, cv }))
                })
                .collect()
        })?;
        Ok(Staged { value, hash })
    }

    /// Coherence grid for the configured subsets; empty without a grid config.
    pub fn gridsearch(&self, ingest: &Staged<IngestOutput>) -> Result<Staged<BTreeMap<SubsetId, GridSearchResult>>, PipelineError> {
        let Some(grid) = &self.config.grid else {
            return Ok(Staged { value: BTreeMap::new(), hash: content_hash(&()) });
        };
        let subsets: Vec<(SubsetId, &SubCorpus)> = self.modeled(&ingest.value).filter(|(s, _)| grid.subsets.is_empty() || grid.subsets.contains(s)).collect();
        let mut out = BTreeMap::new();
        let mut hashes = BTreeMap::new();
        for (s, sc) in subsets {
            let base = self.config.lda_config(s);
            let key = (&ingest.hash, s, &base, grid, &self.config.coherence);
            let (r, h) = self.cache.get_or_compute("gridsearch", &key, || {
                grid_search(sc, &base, &grid.k_grid, &grid.alpha_grid, &grid.seeds, &self.config.coherence)
                    .map_err(|e| PipelineError::stage("gridsearch", s, e))
            })?;
            out.insert(s, r);
            hashes.insert(s, h);
        }
        Ok(Staged { value: out, hash: content_hash(&hashes) })
    }

    pub fn interpret(&self, models: &Staged<BTreeMap<SubsetId, TopicModel>>) -> Result<Staged<BTreeMap<SubsetId, Interpretation>>, PipelineError> {
        let ic = &self.config.interpretation;
        let mut namer_cfg = self.config.namer.clone();
        namer_cfg.mapping_path = self.resolved(&namer_cfg.mapping_path);
        let key = (&models.hash, ic, &self.config.namer, optional_hash("interpret", namer_cfg.mapping_path.as_deref())?);
        let (value, hash) = self.cache.get_or_compute("interpret", &key, || {
            let (namer, manual) = namer_cfg.build().map_err(|e| PipelineError::stage("interpret", "namer", e))?;
            let q = RelevanceQuery::new(ic.lambda, ic.relevance_top_n).map_err(|e| PipelineError::stage("interpret", "relevance", e))?;
            let mut out = BTreeMap::new();
            for (s, m) in &models.value {
                let words: Vec<Vec<String>> = (0..m.num_topics()).map(|k| top_words(m, k, NAMING_WORDS).expect("topic in range")).collect();
                let labels = name_topics(*s, &words, namer.as_ref(), manual.as_ref());
                let mut saliency = saliency_table(m);
                saliency.truncate(ic.saliency_top_n);
                out.insert(*s, Interpretation { topics: summarize(m, &q, &labels, ic.keyword_count), saliency });
            }
            Ok(out)
        })?;
        Ok(Staged { value, hash })
    }

    pub fn analyze(&self, models: &Staged<BTreeMap<SubsetId, TopicModel>>) -> Result<Staged<AnalysisOutput>, PipelineError> {
        let indicators = self.resolved(&self.config.indicators);
        let key = (&models.hash, &self.config.clustering, optional_hash("analyze", indicators.as_deref())?);
        let (value, hash) = self.cache.get_or_compute("analyze", &key, || {
            let table = indicators.as_ref().map(|p| IndicatorTable::load(p).map_err(|e| PipelineError::stage("analyze", p.display(), e))).transpose()?;
            let mut subsets = BTreeMap::new();
            let mut inconsistency = Vec::new();
            let mut correlations = BTreeMap::new();
            for (s, m) in &models.value {
                let a = analyze_subset(*s, m, self.config.clustering.thresholds.get(s).copied())?;
                if s.is_dimension() {
                    let obj = &a.agendas.get(&Scope::Section(Section::Objectives));
                    let pol = &a.agendas.get(&Scope::Section(Section::Policies));
                    if let (Some(obj), Some(pol)) = (obj, pol) {
                        for o in obj.iter() {
                            if let Some(p) = pol.iter().find(|p| p.country == o.country) {
                                let v = section_inconsistency(&o.values, &p.values, m.num_topics()).map_err(|e| PipelineError::stage("analyze", s, e))?;
                                inconsistency.push((o.country.clone(), *s, v));
                            }
                        }
                    }
                }
                if let Some(t) = &table {
                    let theta: Vec<(DocumentKey, Vec<f64>)> = m.doc_keys.iter().cloned().zip(m.theta.iter().cloned()).collect();
                    correlations.insert(*s, correlation_matrix(*s, &theta, t));
                }
                subsets.insert(*s, a);
            }
            let dims: Vec<ClusterAssignment> = subsets.iter().filter(|(s, _)| s.is_dimension()).filter_map(|(_, a)| a.clusters.clone()).collect();
            Ok(AnalysisOutput { cooccurrence: cooccurrence(&dims), inconsistency: InconsistencyTable::new(inconsistency), correlations, subsets })
        })?;
        Ok(Staged { value, hash })
    }

    /// t-SNE of each subset's default-scope matrix; subsets with fewer than
    /// four countries are skipped.
    pub fn embed(&self, analysis: &Staged<AnalysisOutput>) -> Result<Staged<BTreeMap<SubsetId, Embedding2D>>, PipelineError> {
        let key = (&analysis.hash, &self.config.tsne);
        let (value, hash) = self.cache.get_or_compute("embed", &key, || {
            analysis
                .value
                .subsets
                .par_iter()
                .filter_map(|(s, a)| {
                    let m = a.similarity.get(&a.default_scope)?;
                    if m.len() < 4 {
                        log::warn!("{s}: {} countries, skipping embedding", m.len());
                        return None;
                    }
                    let cfg = self.config.tsne.clamped(m.len());
                    if cfg.perplexity != self.config.tsne.perplexity {
                        log::warn!("{s}: perplexity lowered to {} for {} countries", cfg.perplexity, m.len());
                    }
                    Some(tsne(m, &cfg).map(|e| (*s, e)).map_err(|e| PipelineError::stage("embed", s, e)))
                })
                .collect()
        })?;
        Ok(Staged { value, hash })
    }

    /// Runs every stage and assembles the bundle without writing it.
    pub fn build_bundle(&self) -> Result<ResultBundle, PipelineError> {
        let ingest = self.ingest()?;
        let models = self.train(&ingest)?;
        let coherence = self.evaluate(&ingest, &models)?;
        let grid = self.gridsearch(&ingest)?;
        let interp = self.interpret(&models)?;
        let analysis = self.analyze(&models)?;
        let embeddings = self.embed(&analysis)?;
        let hashes: BTreeMap<String, String> = [
            ("ingest", &ingest.hash),
            ("train", &models.hash),
            ("evaluate", &coherence.hash),
            ("gridsearch", &grid.hash),
            ("interpret", &interp.hash),
            ("analyze", &analysis.hash),
            ("embed", &embeddings.hash),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect();
        let b = bundle::assemble(&self.config, ingest, models.value, coherence.value, grid.value, interp.value, analysis.value, embeddings.value, hashes);
        b.validate().map_err(PipelineError::Invalid)?;
        Ok(b)
    }

    /// Builds, validates and atomically writes the bundle. Nothing is
    /// written when any stage fails.
    pub fn run(&self) -> Result<(ResultBundle, PathBuf), PipelineError> {
        let b = self.build_bundle()?;
        let path = self.bundle_path();
        b.write(&path)?;
        log::info!("wrote {}", path.display());
        Ok((b, path))
    }
}

/// Agendas, distance matrices, dendrograms and the default clustering of one subset.
pub fn analyze_subset(subset: SubsetId, model: &TopicModel, threshold: Option<f64>) -> Result<SubsetAnalysis, PipelineError> {
    let err = |e: crate::analysis::AnalysisError| PipelineError::stage("analyze", subset, e);
    let mut by_country: BTreeMap<CountryCode, BTreeMap<Section, Vec<f64>>> = BTreeMap::new();
    for (key, theta) in model.doc_keys.iter().zip(&model.theta) {
        by_country.entry(key.country.clone()).or_default().insert(key.section, theta.clone());
    }
    let mut agendas: BTreeMap<Scope, Vec<AgendaVector>> = BTreeMap::new();
    let mut excluded = Vec::new();
    for &section in subset.sections() {
        let scope = Scope::Section(section);
        for (country, secs) in &by_country {
            match secs.get(&section) {
                Some(v) => agendas.entry(scope).or_default().push(AgendaVector { country: country.clone(), subset_id: subset, scope, values: v.clone() }),
                None => excluded.push(Exclusion { country: country.clone(), scope, reason: format!("no {section} document") }),
            }
        }
    }
    if subset.is_dimension() {
        for (country, secs) in &by_country {
            match bind_distributions(country, subset, secs) {
                Ok(a) => agendas.entry(Scope::Bound).or_default().push(a),
                Err(e) => excluded.push(Exclusion { country: country.clone(), scope: Scope::Bound, reason: e.to_string() }),
            }
        }
    }
    let mut similarity = BTreeMap::new();
    let mut dendrograms = BTreeMap::new();
    for (scope, list) in &agendas {
        let labels: Vec<String> = list.iter().map(|a| a.country.to_string()).collect();
        let vectors: Vec<Vec<f64>> = list.iter().map(|a| a.values.clone()).collect();
        let m = SimilarityMatrix::from_vectors(labels, &vectors).map_err(err)?;
        dendrograms.insert(*scope, cluster_hierarchical(&m));
        similarity.insert(*scope, m);
    }
    let scope = default_scope(subset);
    let (threshold, clusters) = match dendrograms.get(&scope) {
        Some(d) => {
            let t = threshold.unwrap_or_else(|| default_threshold(d));
            (Some(t), Some(cut(d, t).map_err(err)?))
        }
        None => (None, None),
    };
    Ok(SubsetAnalysis { agendas, similarity, dendrograms, default_scope: scope, threshold, clusters, excluded })
}
