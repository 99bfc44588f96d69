use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::{CountryCode, PhraseScorer, SubsetId, DEFAULT_MIN_DOC_FREQ};
use crate::embedding::TsneConfig;
use crate::evaluation::CoherenceConfig;
use crate::interpret::{NamerConfig, DEFAULT_LAMBDA};
use crate::lda::{EtaMode, LdaConfig};

/// Where plan texts come from: a manifest of pre-split section files, or
/// whole plans plus a heading template.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSource {
    pub manifest: Option<PathBuf>,
    pub plans: Vec<PlanSource>,
    /// Heading template for `plans`; the bundled template when absent.
    pub template: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSource {
    pub country: CountryCode,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub lemmas: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub extra_stopwords: Vec<String>,
    pub phrase_min_count: u64,
    pub phrase_threshold: f64,
    pub min_doc_freq: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        let s = PhraseScorer::default();
        PreprocessConfig {
            lemmas: None,
            stopwords: None,
            extra_stopwords: vec![],
            phrase_min_count: s.min_count,
            phrase_threshold: s.threshold,
            min_doc_freq: DEFAULT_MIN_DOC_FREQ,
        }
    }
}

/// Sampler settings shared by all subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaDefaults {
    pub alpha: f64,
    pub eta: EtaMode,
    pub iterations: usize,
    pub burn_in: usize,
    pub eta_cadence: usize,
}

impl Default for LdaDefaults {
    fn default() -> Self {
        let c = LdaConfig::default();
        LdaDefaults { alpha: c.alpha, eta: c.eta, iterations: c.iterations, burn_in: c.burn_in, eta_cadence: c.eta_cadence }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetSettings {
    pub num_topics: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub k_grid: Vec<usize>,
    pub alpha_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// All modeled subsets when empty.
    #[serde(default)]
    pub subsets: Vec<SubsetId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpretationConfig {
    pub lambda: f64,
    pub relevance_top_n: usize,
    pub keyword_count: usize,
    pub saliency_top_n: usize,
}

impl Default for InterpretationConfig {
    fn default() -> Self {
        InterpretationConfig { lambda: DEFAULT_LAMBDA, relevance_top_n: 30, keyword_count: 10, saliency_top_n: 100 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    /// Hierarchical cut per subset; the midpoint of the widest gap between
    /// consecutive merge heights when absent.
    pub thresholds: BTreeMap<SubsetId, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Bundle file name, relative to the output directory. A `.json.zst`
    /// suffix selects zstd compression.
    pub bundle: PathBuf,
    /// Stage cache; `<out>/cache` when absent.
    pub cache_dir: Option<PathBuf>,
    pub cache: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { bundle: PathBuf::from("bundle.json"), cache_dir: None, cache: true }
    }
}

pub fn default_subsets() -> BTreeMap<SubsetId, SubsetSettings> {
    [
        (SubsetId::Decarbonisation, 5),
        (SubsetId::EnergyEfficiency, 5),
        (SubsetId::EnergySecurity, 3),
        (SubsetId::InternalMarket, 3),
        (SubsetId::RniCompetitiveness, 3),
        (SubsetId::Overview, 3),
        (SubsetId::ImpactAssessment, 3),
    ]
    .into_iter()
    .map(|(s, k)| (s, SubsetSettings { num_topics: k, alpha: None }))
    .collect()
}

/// Full pipeline configuration, readable from JSON or TOML. Relative paths
/// resolve against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: CorpusSource,
    pub preprocess: PreprocessConfig,
    pub seed: u64,
    pub lda: LdaDefaults,
    pub subsets: BTreeMap<SubsetId, SubsetSettings>,
    pub coherence: CoherenceConfig,
    pub grid: Option<GridConfig>,
    pub tsne: TsneConfig,
    pub interpretation: InterpretationConfig,
    pub namer: NamerConfig,
    pub indicators: Option<PathBuf>,
    pub clustering: ClusteringConfig,
    pub output: OutputConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: CorpusSource::default(),
            preprocess: PreprocessConfig::default(),
            seed: 0,
            lda: LdaDefaults::default(),
            subsets: default_subsets(),
            coherence: CoherenceConfig::default(),
            grid: None,
            tsne: TsneConfig::default(),
            interpretation: InterpretationConfig::default(),
            namer: NamerConfig::default(),
            indicators: None,
            clustering: ClusteringConfig::default(),
            output: OutputConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl PipelineConfig {
    /// Parses `.toml` files as TOML and anything else as JSON.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let err = |msg: String| PipelineError::Config { path: path.display().to_string(), message: msg };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut cfg: PipelineConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| err(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| err(e.to_string()))?
        };
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        cfg.validate().map_err(err)?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_relative() {
            self.base_dir.join(p)
        } else {
            p.to_path_buf()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.corpus.manifest.is_some() == !self.corpus.plans.is_empty() {
            return Err("corpus needs exactly one of `manifest` or `plans`".into());
        }
        if self.subsets.is_empty() {
            return Err("no subsets configured".into());
        }
        for s in self.subsets.keys() {
            self.lda_config(*s).validate().map_err(|e| format!("subset {s}: {e}"))?;
        }
        if !(0.0..=1.0).contains(&self.interpretation.lambda) {
            return Err(format!("interpretation.lambda must be in [0, 1], got {}", self.interpretation.lambda));
        }
        if let Some(g) = &self.grid {
            if g.k_grid.is_empty() || g.alpha_grid.is_empty() || g.seeds.is_empty() {
                return Err("grid needs nonempty k_grid, alpha_grid and seeds".into());
            }
        }
        for (s, t) in &self.clustering.thresholds {
            if t.is_nan() || *t < 0.0 {
                return Err(format!("clustering threshold for {s} must be non-negative"));
            }
        }
        Ok(())
    }

    /// Sampler config for one subset; K defaults to 3 for unlisted subsets.
    pub fn lda_config(&self, subset: SubsetId) -> LdaConfig {
        let s = self.subsets.get(&subset).copied().unwrap_or(SubsetSettings { num_topics: 3, alpha: None });
        LdaConfig {
            num_topics: s.num_topics,
            alpha: s.alpha.unwrap_or(self.lda.alpha),
            eta: self.lda.eta,
            iterations: self.lda.iterations,
            burn_in: self.lda.burn_in,
            seed: self.seed,
            eta_cadence: self.lda.eta_cadence,
        }
    }

    pub fn phrase_scorer(&self) -> PhraseScorer {
        PhraseScorer::new(self.preprocess.phrase_min_count, self.preprocess.phrase_threshold)
    }
}
