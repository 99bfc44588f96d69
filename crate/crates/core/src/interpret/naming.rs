use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SubsetId;

pub const MAX_LABEL_WORDS: usize = 5;
pub const DEFAULT_PROMPT: &str = "Give a short name (at most five words) for a policy topic described by these keywords, most important first: {words}";

#[derive(Debug, Error)]
pub enum NamingError {
    #[error("naming backend unavailable: {0}")]
    NamerUnavailable(String),
    #[error("mapping file {0}: {1}")]
    Mapping(String, String),
    #[error("namer config: {0}")]
    Config(String),
}

/// Word list in, short label out.
pub trait TopicNamer: Send + Sync {
    fn name(&self, words: &[String]) -> Result<String, NamingError>;
}

/// Joins the top three words with `" / "`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassthroughNamer;

impl TopicNamer for PassthroughNamer {
    fn name(&self, words: &[String]) -> Result<String, NamingError> {
        Ok(passthrough_label(words))
    }
}

fn passthrough_label(words: &[String]) -> String {
    let label = words.iter().take(3).map(String::as_str).collect::<Vec<_>>().join(" / ");
    if label.is_empty() {
        "unnamed topic".to_string()
    } else {
        label
    }
}

/// Hand-written labels: `{"<subset>": {"<topic id>": "<label>"}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManualMapping(pub BTreeMap<SubsetId, BTreeMap<String, String>>);

impl ManualMapping {
    pub fn load(path: &Path) -> Result<Self, NamingError> {
        let text = std::fs::read_to_string(path).map_err(|e| NamingError::Mapping(path.display().to_string(), e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| NamingError::Mapping(path.display().to_string(), e.to_string()))
    }

    pub fn label(&self, subset: SubsetId, topic: usize) -> Option<&str> {
        self.0.get(&subset)?.get(&topic.to_string()).map(String::as_str)
    }
}

#[derive(Serialize)]
struct NamingRequest<'a> {
    prompt: String,
    words: &'a [String],
    max_words: usize,
}

#[derive(Deserialize)]
struct NamingResponse {
    label: String,
}

/// Client for a text-completion service.
///
/// Sends `POST {endpoint}` with `{"prompt", "words", "max_words"}` and expects
/// `{"label": "..."}` back. The label is trimmed to [`MAX_LABEL_WORDS`] words.
#[derive(Debug, Clone)]
pub struct ExternalNamer {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub prompt_template: String,
    pub timeout: Duration,
}

impl ExternalNamer {
    pub fn new(endpoint: impl Into<String>) -> Self {
        ExternalNamer { endpoint: endpoint.into(), api_key: None, prompt_template: DEFAULT_PROMPT.to_string(), timeout: Duration::from_secs(20) }
    }
}

impl TopicNamer for ExternalNamer {
    fn name(&self, words: &[String]) -> Result<String, NamingError> {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(self.timeout)).build().into();
        let body = NamingRequest { prompt: self.prompt_template.replace("{words}", &words.join(", ")), words, max_words: MAX_LABEL_WORDS };
        let mut req = agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| NamingError::NamerUnavailable(e.to_string()))?;
        let parsed: NamingResponse = resp.body_mut().read_json().map_err(|e| NamingError::NamerUnavailable(e.to_string()))?;
        let label = parsed.label.split_whitespace().take(MAX_LABEL_WORDS).collect::<Vec<_>>().join(" ");
        if label.is_empty() {
            return Err(NamingError::NamerUnavailable("empty label".into()));
        }
        Ok(label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamerBackend {
    Manual,
    External,
    #[default]
    Passthrough,
}

/// `{"backend": "manual|external|passthrough", "mapping_path", "endpoint", "api_key_env"}`
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NamerConfig {
    pub backend: NamerBackend,
    pub mapping_path: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
}

impl NamerConfig {
    /// Resolves the backend; the manual mapping, when configured, is returned
    /// separately because it overrides every backend.
    pub fn build(&self) -> Result<(Box<dyn TopicNamer>, Option<ManualMapping>), NamingError> {
        let mapping = self.mapping_path.as_deref().map(ManualMapping::load).transpose()?;
        let namer: Box<dyn TopicNamer> = match self.backend {
            NamerBackend::Passthrough => Box::new(PassthroughNamer),
            NamerBackend::Manual => {
                if mapping.is_none() {
                    return Err(NamingError::Config("manual backend needs mapping_path".into()));
                }
                Box::new(PassthroughNamer)
            }
            NamerBackend::External => {
                let endpoint = self.endpoint.clone().ok_or_else(|| NamingError::Config("external backend needs endpoint".into()))?;
                let mut n = ExternalNamer::new(endpoint);
                n.api_key = self.api_key_env.as_deref().and_then(|v| std::env::var(v).ok());
                Box::new(n)
            }
        };
        Ok((namer, mapping))
    }
}

/// Labels every topic. Backend failures fall back to the passthrough label;
/// manual mapping entries always win.
pub fn name_topics(subset: SubsetId, word_lists: &[Vec<String>], namer: &dyn TopicNamer, manual: Option<&ManualMapping>) -> Vec<String> {
    word_lists
        .iter()
        .enumerate()
        .map(|(k, words)| {
            if let Some(label) = manual.and_then(|m| m.label(subset, k)) {
                return label.to_string();
            }
            match namer.name(words) {
                Ok(label) => label,
                Err(e) => {
                    log::warn!("{subset} topic {k}: {e}; using passthrough label");
                    passthrough_label(words)
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn passthrough_joins_top_three() {
        let w = words(&["target", "biomass", "wind", "solar"]);
        assert_eq!(PassthroughNamer.name(&w).unwrap(), "target / biomass / wind");
    }

    #[test]
    fn unreachable_service_falls_back() {
        let mut namer = ExternalNamer::new("http://127.0.0.1:9/complete");
        namer.timeout = Duration::from_millis(500);
        let labels = name_topics(SubsetId::Decarbonisation, &[words(&["target", "biomass", "wind"])], &namer, None);
        assert_eq!(labels, ["target / biomass / wind"]);
    }

    #[test]
    fn manual_mapping_overrides() {
        let mapping: ManualMapping = serde_json::from_str(
            r#"{"decarbonisation": {"0": "Sustainable transport", "1": "GHG emissions", "2": "National energy policy",
                "3": "Renewable energy sources", "4": "All developments"}}"#,
        )
        .unwrap();
        let lists: Vec<Vec<String>> = (0..5).map(|i| words(&[&format!("w{i}")])).collect();
        let labels = name_topics(SubsetId::Decarbonisation, &lists, &PassthroughNamer, Some(&mapping));
        assert_eq!(labels, ["Sustainable transport", "GHG emissions", "National energy policy", "Renewable energy sources", "All developments"]);
        let other = name_topics(SubsetId::EnergySecurity, &lists[..1], &PassthroughNamer, Some(&mapping));
        assert_eq!(other, ["w0"]);
    }

    #[test]
    fn external_contract_against_local_stub() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line.trim().to_string();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
            assert_eq!(req["words"][0], "vehicle");
            assert_eq!(req["max_words"], 5);
            assert!(req["prompt"].as_str().unwrap().contains("vehicle, transport"));
            let reply = r#"{"label": "Sustainable transport in the modern era"}"#;
            write!(stream, "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}", reply.len()).unwrap();
            auth
        });
        let mut namer = ExternalNamer::new(format!("http://{addr}/complete"));
        namer.api_key = Some("k3y".into());
        let label = namer.name(&words(&["vehicle", "transport"])).unwrap();
        assert_eq!(label, "Sustainable transport in the modern");
        assert!(server.join().unwrap().eq_ignore_ascii_case("authorization: Bearer k3y"));
    }

    #[test]
    fn config_validation() {
        let cfg: NamerConfig = serde_json::from_str(r#"{"backend": "manual"}"#).unwrap();
        assert!(cfg.build().is_err());
        let cfg: NamerConfig = serde_json::from_str(r#"{"backend": "external"}"#).unwrap();
        assert!(cfg.build().is_err());
        let cfg = NamerConfig::default();
        assert!(cfg.build().is_ok());
    }
}
