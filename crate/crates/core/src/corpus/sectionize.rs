use std::collections::HashSet;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::keys::{CountryCode, Dimension, DocumentKey, Section};
use super::{CorpusError, PolicyDocument};

/// One row of the heading template file.
///
/// Rows without a section are boundaries: they close the running span and
/// route the text that follows to the unassigned report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadingRule {
    pub pattern: String,
    #[serde(default)]
    pub dimension: Option<Dimension>,
    #[serde(default)]
    pub section: Option<Section>,
}

#[derive(Debug)]
struct CompiledRule {
    regex: Regex,
    target: Option<(Dimension, Section)>,
}

/// Compiled heading template.
#[derive(Debug)]
pub struct HeadingTemplate {
    rules: Vec<CompiledRule>,
}

impl HeadingTemplate {
    pub fn new(rules: &[HeadingRule]) -> Result<Self, CorpusError> {
        let mut compiled = Vec::with_capacity(rules.len());
        for rule in rules {
            let regex = Regex::new(&rule.pattern).map_err(|e| CorpusError::Template(format!("{}: {e}", rule.pattern)))?;
            let target = match (rule.dimension, rule.section) {
                (_, None) => None,
                (dim, Some(section)) => {
                    let dim = dim.unwrap_or(Dimension::None);
                    if section.is_dimensioned() == (dim == Dimension::None) {
                        return Err(CorpusError::Template(format!("pattern {:?} maps to inconsistent key {dim}/{section}", rule.pattern)));
                    }
                    Some((dim, section))
                }
            };
            compiled.push(CompiledRule { regex, target });
        }
        Ok(HeadingTemplate { rules: compiled })
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let rules: Vec<HeadingRule> = serde_json::from_str(text).map_err(|e| CorpusError::Template(e.to_string()))?;
        Self::new(&rules)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    /// Template for the standard plan layout, shipped with the crate.
    pub fn standard() -> Self {
        Self::from_json(include_str!("../../resources/heading_template.json")).expect("bundled template is valid")
    }

    fn classify(&self, line: &str) -> Option<Option<(Dimension, Section)>> {
        let line = line.trim();
        if line.is_empty() {
            return None;
        }
        self.rules.iter().find(|r| r.regex.is_match(line)).map(|r| r.target)
    }
}

/// Text that fell outside any keyed span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnassignedSpan {
    /// Zero-based line number of the first line in the span.
    pub start_line: usize,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct SectionizedPlan {
    pub documents: Vec<PolicyDocument>,
    /// Zero-based line index where each document's body starts (parallel to `documents`).
    pub start_lines: Vec<usize>,
    pub unassigned: Vec<UnassignedSpan>,
    /// Zero-based line numbers of matched heading lines.
    pub heading_lines: Vec<usize>,
}

impl SectionizedPlan {
    /// Rebuilds the plan text with heading lines removed.
    pub fn reconstruct(&self) -> String {
        let mut pieces: Vec<(usize, &str)> = self
            .documents
            .iter()
            .zip(&self.start_lines)
            .map(|(d, &l)| (l, d.raw_text.as_str()))
            .chain(self.unassigned.iter().map(|u| (u.start_line, u.text.as_str())))
            .filter(|(_, t)| !t.is_empty())
            .collect();
        pieces.sort_by_key(|(l, _)| *l);
        pieces.iter().map(|(_, t)| *t).collect::<Vec<_>>().join("\n")
    }
}

/// Splits a full plan into keyed spans between matched headings.
pub fn sectionize(country: &CountryCode, raw_plan: &str, template: &HeadingTemplate) -> Result<SectionizedPlan, CorpusError> {
    struct Open {
        target: Option<(Dimension, Section)>,
        start: usize,
        lines: Vec<String>,
    }

    let mut out = SectionizedPlan { documents: Vec::new(), start_lines: Vec::new(), unassigned: Vec::new(), heading_lines: Vec::new() };
    let mut seen = HashSet::new();
    let mut open = Open { target: None, start: 0, lines: Vec::new() };

    let mut close = |open: Open, out: &mut SectionizedPlan| -> Result<(), CorpusError> {
        let text = open.lines.join("\n");
        match open.target {
            Some((dimension, section)) => {
                let key = DocumentKey::new(country.clone(), dimension, section)?;
                if !seen.insert(key.clone()) {
                    return Err(CorpusError::DuplicateKey(key.to_string()));
                }
                out.documents.push(PolicyDocument::new(key, text));
                out.start_lines.push(open.start);
            }
            None => {
                if !text.trim().is_empty() {
                    out.unassigned.push(UnassignedSpan { start_line: open.start, text });
                }
            }
        }
        Ok(())
    };

    for (i, line) in raw_plan.lines().enumerate() {
        match template.classify(line) {
            Some(target) => {
                out.heading_lines.push(i);
                let prev = std::mem::replace(&mut open, Open { target, start: i + 1, lines: Vec::new() });
                close(prev, &mut out)?;
            }
            None => open.lines.push(line.to_string()),
        }
    }
    close(open, &mut out)?;

    if out.heading_lines.is_empty() {
        return Err(CorpusError::NoHeadingsMatched(country.to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini_template() -> HeadingTemplate {
        HeadingTemplate::from_json(
            r#"[
            {"pattern": "^2\\.\\d+\\.?\\s+Dimension decarbonisation$", "dimension": "decarbonisation", "section": "objectives"},
            {"pattern": "^3\\.\\d+\\.?\\s+Dimension decarbonisation$", "dimension": "decarbonisation", "section": "policies"},
            {"pattern": "^\\d\\.\\s+[A-Z ]+$"}
        ]"#,
        )
        .unwrap()
    }

    #[test]
    fn mini_plan_two_documents() {
        let plan = "Preface text.\n2. NATIONAL OBJECTIVES\n2.1 Dimension decarbonisation\nCut emissions.\n\
                    3. POLICIES AND MEASURES\n3.1 Dimension decarbonisation\nTax carbon.\nMore.";
        let xx = CountryCode::new("XX").unwrap();
        let out = sectionize(&xx, plan, &mini_template()).unwrap();
        let keys: Vec<_> = out.documents.iter().map(|d| d.key.to_string()).collect();
        assert_eq!(keys, ["XX/decarbonisation/objectives", "XX/decarbonisation/policies"]);
        assert_eq!(out.documents[1].raw_text, "Tax carbon.\nMore.");
        assert_eq!(out.unassigned.len(), 1);
        assert_eq!(out.unassigned[0].text, "Preface text.");
        assert_eq!(out.reconstruct(), "Preface text.\nCut emissions.\nTax carbon.\nMore.");
    }

    #[test]
    fn no_headings() {
        let xx = CountryCode::new("XX").unwrap();
        let err = sectionize(&xx, "just prose\nand more prose", &mini_template()).unwrap_err();
        assert!(matches!(err, CorpusError::NoHeadingsMatched(_)));
    }

    #[test]
    fn duplicate_key() {
        let xx = CountryCode::new("XX").unwrap();
        let plan = "2.1 Dimension decarbonisation\na\n2.4 Dimension decarbonisation\nb";
        let err = sectionize(&xx, plan, &mini_template()).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateKey(_)));
    }

    #[test]
    fn inconsistent_template_rejected() {
        let err = HeadingTemplate::from_json(r#"[{"pattern": "x", "dimension": "decarbonisation", "section": "overview"}]"#);
        assert!(err.is_err());
    }

    #[test]
    fn standard_template_compiles() {
        let t = HeadingTemplate::standard();
        assert_eq!(t.classify("2.1. Dimension decarbonisation"), Some(Some((Dimension::Decarbonisation, Section::Objectives))));
        assert_eq!(
            t.classify("4.6 Dimension Research, innovation and competitiveness"),
            Some(Some((Dimension::RniCompetitiveness, Section::CurrentSituation)))
        );
        assert_eq!(t.classify("1. OVERVIEW AND PROCESS FOR ESTABLISHING THE PLAN"), Some(Some((Dimension::None, Section::Overview))));
        assert_eq!(t.classify("Dimension decarbonisation is important."), None);
    }
}
