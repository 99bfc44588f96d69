//! Ingestion: plan sectionizing, tokenization, phrase detection and the
//! seven per-subset bag-of-words corpora.

pub mod keys;
pub mod phrases;
pub mod sectionize;
pub mod subcorpus;
pub mod tokenize;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use keys::{CountryCode, Dimension, DocumentKey, Section, SubsetId};
pub use phrases::{detect_phrases, PhraseScorer};
pub use sectionize::{sectionize, HeadingRule, HeadingTemplate, SectionizedPlan, UnassignedSpan};
pub use subcorpus::{build_subcorpora, SubCorpora, SubCorpus, DEFAULT_MIN_DOC_FREQ};
pub use tokenize::{tokenize_and_lemmatize, Lemmatizer, Preprocessor, Stoplist};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid country code {0:?}")]
    InvalidCountry(String),
    #[error("unknown {kind} {value:?}")]
    UnknownSlug { kind: &'static str, value: String },
    #[error("invalid document key {0}: dimension must be none exactly for overview and impact_assessment")]
    InvalidKey(String),
    #[error("no template heading matched in the plan for {0}")]
    NoHeadingsMatched(String),
    #[error("two spans map to the same key {0}")]
    DuplicateKey(String),
    #[error("template: {0}")]
    Template(String),
    #[error("resource: {0}")]
    Resource(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

/// One country × dimension × section text unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDocument {
    pub key: DocumentKey,
    pub raw_text: String,
    pub tokens: Vec<String>,
}

impl PolicyDocument {
    pub fn new(key: DocumentKey, raw_text: String) -> Self {
        PolicyDocument { key, raw_text, tokens: Vec::new() }
    }

    /// True when preprocessing left no tokens.
    pub fn is_flagged(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub country: CountryCode,
    pub dimension: Dimension,
    pub section: Section,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub documents: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io(path.display().to_string(), e))?;
        let mut m: Manifest = serde_json::from_str(&text).map_err(|e| CorpusError::Manifest(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut m.documents {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
        }
        Ok(m)
    }

    /// Checks that every listed file exists before anything is read.
    pub fn check_paths(&self) -> Result<(), CorpusError> {
        for e in &self.documents {
            if !e.path.is_file() {
                return Err(CorpusError::Io(
                    e.path.display().to_string(),
                    std::io::Error::new(std::io::ErrorKind::NotFound, "listed in manifest but not found"),
                ));
            }
        }
        Ok(())
    }

    pub fn read_documents(&self) -> Result<Vec<PolicyDocument>, CorpusError> {
        self.check_paths()?;
        self.documents
            .iter()
            .map(|e| {
                let key = DocumentKey::new(e.country.clone(), e.dimension, e.section)?;
                let text = std::fs::read_to_string(&e.path).map_err(|err| CorpusError::Io(e.path.display().to_string(), err))?;
                Ok(PolicyDocument::new(key, text))
            })
            .collect()
    }
}

/// Tokenizes every document, then appends corpus-wide phrase tokens.
/// Documents left without tokens are logged and kept (see [`PolicyDocument::is_flagged`]).
pub fn preprocess(docs: &mut [PolicyDocument], pre: &Preprocessor, scorer: &PhraseScorer) {
    let tokenized: Vec<Vec<String>> = docs.iter().map(|d| pre.tokenize(&d.raw_text)).collect();
    let augmented = detect_phrases(&tokenized, scorer);
    for (doc, toks) in docs.iter_mut().zip(augmented) {
        doc.tokens = toks;
        if doc.is_flagged() {
            log::warn!("document {} has no tokens after preprocessing", doc.key);
        }
    }
}
