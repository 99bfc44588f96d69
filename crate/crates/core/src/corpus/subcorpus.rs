use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::keys::{DocumentKey, SubsetId};
use super::{CorpusError, PolicyDocument};

pub const DEFAULT_MIN_DOC_FREQ: usize = 4;

/// Vocabulary plus ordered token-id streams for one modeling subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SubCorpusFile", into = "SubCorpusFile")]
pub struct SubCorpus {
    pub subset_id: SubsetId,
    pub vocabulary: Vec<String>,
    pub doc_keys: Vec<DocumentKey>,
    /// In-vocabulary token ids of each document, in source order.
    pub streams: Vec<Vec<u32>>,
}

impl SubCorpus {
    pub fn num_docs(&self) -> usize {
        self.doc_keys.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.streams.iter().map(Vec::len).sum()
    }

    pub fn bow(&self, doc: usize) -> BTreeMap<u32, u32> {
        let mut counts = BTreeMap::new();
        for &t in &self.streams[doc] {
            *counts.entry(t).or_insert(0) += 1;
        }
        counts
    }

    pub fn word_id(&self, word: &str) -> Option<u32> {
        self.vocabulary.binary_search_by(|w| w.as_str().cmp(word)).ok().map(|i| i as u32)
    }

    /// Number of distinct documents containing each vocabulary id.
    pub fn document_frequencies(&self) -> Vec<usize> {
        let mut df = vec![0; self.vocab_size()];
        for s in &self.streams {
            let uniq: BTreeSet<u32> = s.iter().copied().collect();
            for t in uniq {
                df[t as usize] += 1;
            }
        }
        df
    }

    pub fn doc_index(&self, key: &DocumentKey) -> Option<usize> {
        self.doc_keys.iter().position(|k| k == key)
    }

    /// Splits off documents with no in-vocabulary tokens.
    pub fn without_empty(&self) -> (SubCorpus, Vec<DocumentKey>) {
        let mut kept = SubCorpus { streams: Vec::new(), doc_keys: Vec::new(), ..self.clone() };
        let mut dropped = Vec::new();
        for (k, s) in self.doc_keys.iter().zip(&self.streams) {
            if s.is_empty() {
                dropped.push(k.clone());
            } else {
                kept.doc_keys.push(k.clone());
                kept.streams.push(s.clone());
            }
        }
        (kept, dropped)
    }

    pub fn from_token_lists(subset_id: SubsetId, docs: &[(DocumentKey, Vec<String>)], min_doc_freq: usize) -> SubCorpus {
        let mut df: HashMap<&str, usize> = HashMap::new();
        for (_, toks) in docs {
            let uniq: BTreeSet<&str> = toks.iter().map(String::as_str).collect();
            for t in uniq {
                *df.entry(t).or_default() += 1;
            }
        }
        let vocabulary: Vec<String> = df.iter().filter(|(_, &c)| c >= min_doc_freq).map(|(t, _)| t.to_string()).collect::<BTreeSet<_>>().into_iter().collect();
        let ids: HashMap<&str, u32> = vocabulary.iter().enumerate().map(|(i, w)| (w.as_str(), i as u32)).collect();
        let streams = docs.iter().map(|(_, toks)| toks.iter().filter_map(|t| ids.get(t.as_str()).copied()).collect()).collect();
        SubCorpus { subset_id, vocabulary, doc_keys: docs.iter().map(|(k, _)| k.clone()).collect(), streams }
    }
}

#[derive(Serialize, Deserialize)]
struct SubCorpusFile {
    subset_id: SubsetId,
    vocabulary: Vec<String>,
    documents: Vec<SubCorpusDoc>,
}

#[derive(Serialize, Deserialize)]
struct SubCorpusDoc {
    key: DocumentKey,
    counts: BTreeMap<String, u32>,
    tokens: Vec<u32>,
}

impl From<SubCorpus> for SubCorpusFile {
    fn from(sc: SubCorpus) -> Self {
        let documents = (0..sc.num_docs())
            .map(|d| SubCorpusDoc {
                key: sc.doc_keys[d].clone(),
                counts: sc.bow(d).into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
                tokens: sc.streams[d].clone(),
            })
            .collect();
        SubCorpusFile { subset_id: sc.subset_id, vocabulary: sc.vocabulary, documents }
    }
}

impl TryFrom<SubCorpusFile> for SubCorpus {
    type Error = String;
    fn try_from(f: SubCorpusFile) -> Result<Self, Self::Error> {
        let v = f.vocabulary.len() as u32;
        if f.vocabulary.windows(2).any(|w| w[0] >= w[1]) {
            return Err("vocabulary must be sorted and unique".into());
        }
        let mut sc = SubCorpus { subset_id: f.subset_id, vocabulary: f.vocabulary, doc_keys: Vec::new(), streams: Vec::new() };
        for doc in f.documents {
            if doc.tokens.iter().any(|&t| t >= v) {
                return Err(format!("{}: token id out of range", doc.key));
            }
            sc.doc_keys.push(doc.key);
            sc.streams.push(doc.tokens);
            let d = sc.num_docs() - 1;
            let recount: BTreeMap<String, u32> = sc.bow(d).into_iter().map(|(k, c)| (k.to_string(), c)).collect();
            if recount != doc.counts {
                return Err(format!("{}: counts disagree with token stream", sc.doc_keys[d]));
            }
        }
        Ok(sc)
    }
}

/// The seven sub-corpora, plus the subsets that received no documents.
#[derive(Debug, Clone)]
pub struct SubCorpora {
    pub subsets: BTreeMap<SubsetId, SubCorpus>,
    pub empty: Vec<SubsetId>,
}

/// Groups documents into the seven modeling subsets and filters each
/// vocabulary to tokens present in at least `min_doc_freq` documents.
pub fn build_subcorpora(docs: &[PolicyDocument], min_doc_freq: usize) -> Result<SubCorpora, CorpusError> {
    let mut grouped: BTreeMap<SubsetId, Vec<(DocumentKey, Vec<String>)>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for doc in docs {
        doc.key.validate()?;
        if !seen.insert(&doc.key) {
            return Err(CorpusError::DuplicateKey(doc.key.to_string()));
        }
        grouped.entry(doc.key.subset()).or_default().push((doc.key.clone(), doc.tokens.clone()));
    }
    let mut out = SubCorpora { subsets: BTreeMap::new(), empty: Vec::new() };
    for &subset in SubsetId::ALL {
        match grouped.get_mut(&subset) {
            Some(list) => {
                list.sort_by(|a, b| a.0.cmp(&b.0));
                out.subsets.insert(subset, SubCorpus::from_token_lists(subset, list, min_doc_freq));
            }
            None => {
                log::warn!("subset {subset} has no documents");
                out.empty.push(subset);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::keys::{CountryCode, Dimension, Section};

    fn doc(country: &str, dim: Dimension, sec: Section, toks: &str) -> PolicyDocument {
        let key = DocumentKey::new(CountryCode::new(country).unwrap(), dim, sec).unwrap();
        PolicyDocument { key, raw_text: toks.to_string(), tokens: toks.split_whitespace().map(String::from).collect() }
    }

    fn five_docs() -> Vec<PolicyDocument> {
        use Dimension::*;
        use Section::*;
        vec![
            doc("AT", Decarbonisation, Objectives, "wind three four"),
            doc("BE", Decarbonisation, Policies, "wind three four"),
            doc("CY", Decarbonisation, CurrentSituation, "wind three four"),
            doc("DK", Decarbonisation, Objectives, "wind four"),
            doc("EE", Decarbonisation, Objectives, "solar"),
        ]
    }

    #[test]
    fn doc_frequency_threshold_boundary() {
        let sc = build_subcorpora(&five_docs(), 4).unwrap();
        let dec = &sc.subsets[&SubsetId::Decarbonisation];
        assert_eq!(dec.vocabulary, ["four", "wind"]);
        assert_eq!(dec.word_id("three"), None);
        assert_eq!(sc.empty.len(), 6);
    }

    #[test]
    fn pooling_and_overview_subsets() {
        let mut docs = five_docs();
        docs.push(doc("AT", Dimension::None, Section::Overview, "plan"));
        docs.push(doc("AT", Dimension::None, Section::ImpactAssessment, "impact"));
        let sc = build_subcorpora(&docs, 1).unwrap();
        assert_eq!(sc.subsets[&SubsetId::Decarbonisation].num_docs(), 5);
        assert_eq!(sc.subsets[&SubsetId::Overview].num_docs(), 1);
        assert_eq!(sc.subsets[&SubsetId::ImpactAssessment].num_docs(), 1);
        let total: usize = sc.subsets.values().map(SubCorpus::num_docs).sum();
        assert_eq!(total, docs.len());
    }

    #[test]
    fn duplicate_keys_rejected() {
        let mut docs = five_docs();
        docs.push(docs[0].clone());
        assert!(matches!(build_subcorpora(&docs, 1), Err(CorpusError::DuplicateKey(_))));
    }

    #[test]
    fn json_round_trip_and_schema() {
        let sc = build_subcorpora(&five_docs(), 1).unwrap();
        let dec = &sc.subsets[&SubsetId::Decarbonisation];
        let json = serde_json::to_value(dec).unwrap();
        assert_eq!(json["documents"][0]["counts"]["0"], 1);
        let back: SubCorpus = serde_json::from_value(json).unwrap();
        assert_eq!(&back, dec);
    }

    #[test]
    fn empty_documents_split_off() {
        let sc = build_subcorpora(&five_docs(), 4).unwrap();
        let (kept, dropped) = sc.subsets[&SubsetId::Decarbonisation].without_empty();
        assert_eq!(kept.num_docs(), 4);
        assert_eq!(dropped.len(), 1);
        assert_eq!(dropped[0].country.as_str(), "EE");
    }
}
