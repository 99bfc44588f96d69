use std::borrow::Cow;
use std::collections::{HashMap, HashSet};
use std::path::Path;

use super::CorpusError;

const MAX_CHAIN: usize = 8;

/// Dictionary-plus-suffix-rule English lemmatizer.
///
/// Every lemma it returns is a fixed point: `lemma(lemma(w)) == lemma(w)`.
#[derive(Debug, Clone)]
pub struct Lemmatizer {
    table: HashMap<String, String>,
}

impl Lemmatizer {
    pub fn new<I, K, V>(entries: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let raw: HashMap<String, String> = entries.into_iter().map(|(k, v)| (k.into().to_lowercase(), v.into().to_lowercase())).collect();

        // collapse chains so that every value maps to itself
        let mut table = HashMap::with_capacity(raw.len());
        for (k, v) in &raw {
            let mut v = v.clone();
            for _ in 0..MAX_CHAIN {
                match raw.get(&v) {
                    Some(next) if *next != v => v = next.clone(),
                    _ => break,
                }
            }
            table.insert(k.clone(), v);
        }
        let values: Vec<String> = table.values().cloned().collect();
        for v in values {
            if strip_suffix(&v) != v || table.get(&v).is_some_and(|t| *t != v) {
                table.insert(v.clone(), v);
            }
        }
        Lemmatizer { table }
    }

    /// Parses `surface<TAB>lemma` lines; `#` starts a comment.
    pub fn from_tsv(text: &str) -> Result<Self, CorpusError> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            match (parts.next(), parts.next()) {
                (Some(k), Some(v)) if !k.is_empty() && !v.is_empty() => entries.push((k.to_string(), v.to_string())),
                _ => return Err(CorpusError::Resource(format!("lemma table line {}: expected two tab-separated fields", n + 1))),
            }
        }
        Ok(Self::new(entries))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io(path.display().to_string(), e))?;
        Self::from_tsv(&text)
    }

    pub fn standard() -> Self {
        Self::from_tsv(include_str!("../../resources/lemmas.tsv")).expect("bundled lemma table is valid")
    }

    pub fn lemma(&self, word: &str) -> String {
        if let Some(l) = self.table.get(word) {
            return l.clone();
        }
        let stripped = strip_suffix(word);
        match self.table.get(stripped.as_ref()) {
            Some(l) => l.clone(),
            None => stripped.into_owned(),
        }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// Plural-stripping rules. Idempotent on every input.
pub fn strip_suffix(word: &str) -> Cow<'_, str> {
    let n = word.len();
    if n <= 3 {
        return Cow::Borrowed(word);
    }
    if n > 4 && word.ends_with("ies") {
        return Cow::Owned(format!("{}y", &word[..n - 3]));
    }
    if word.ends_with("sses") || word.ends_with("xes") || word.ends_with("ches") || word.ends_with("shes") {
        return Cow::Borrowed(&word[..n - 2]);
    }
    if word.ends_with('s') && !(word.ends_with("ss") || word.ends_with("us") || word.ends_with("is")) {
        return Cow::Borrowed(&word[..n - 1]);
    }
    Cow::Borrowed(word)
}

/// Set of tokens dropped after lemmatization.
#[derive(Debug, Clone, Default)]
pub struct Stoplist {
    words: HashSet<String>,
}

impl Stoplist {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(words: I) -> Self {
        Stoplist { words: words.into_iter().map(|w| w.into().to_lowercase()).collect() }
    }

    pub fn parse(text: &str) -> Self {
        Self::new(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io(path.display().to_string(), e))?;
        Ok(Self::parse(&text))
    }

    pub fn standard() -> Self {
        Self::parse(include_str!("../../resources/stopwords.txt"))
    }

    pub fn extend<I: IntoIterator<Item = S>, S: Into<String>>(&mut self, words: I) {
        self.words.extend(words.into_iter().map(|w| w.into().to_lowercase()));
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }
}

/// Lowercases, splits on non-alphanumerics, drops numbers and one-letter
/// tokens, lemmatizes and removes stopwords.
pub fn tokenize_and_lemmatize(text: &str, lemmatizer: &Lemmatizer, stoplist: &Stoplist) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|word| !word.is_empty())
        .filter_map(|word| {
            if word.chars().count() < 2 || word.chars().all(|c| c.is_numeric()) || stoplist.contains(word) {
                return None;
            }
            let lemma = lemmatizer.lemma(word);
            if lemma.chars().count() < 2 || stoplist.contains(&lemma) {
                None
            } else {
                Some(lemma)
            }
        })
        .collect()
}

/// Bundled lemmatizer and stoplist.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub lemmatizer: Lemmatizer,
    pub stoplist: Stoplist,
}

impl Preprocessor {
    pub fn standard() -> Self {
        Preprocessor { lemmatizer: Lemmatizer::standard(), stoplist: Stoplist::standard() }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        tokenize_and_lemmatize(text, &self.lemmatizer, &self.stoplist)
    }
}
