use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::json;

/// Hex sha256 of the canonical JSON of `value`.
pub fn content_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = json::to_vec(value).expect("stage keys serialize");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn bytes_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

/// Content-addressed store of stage outputs: `<dir>/<stage>/<hash>.json`.
#[derive(Debug, Clone)]
pub struct StageCache {
    dir: Option<PathBuf>,
}

impl StageCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        StageCache { dir }
    }

    pub fn disabled() -> Self {
        StageCache { dir: None }
    }

    fn path(&self, stage: &str, hash: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(stage).join(format!("{hash}.json")))
    }

    /// Returns the cached output for `key`, or computes and stores it.
    /// The second element is the stage hash.
    pub fn get_or_compute<K, T, F>(&self, stage: &'static str, key: &K, compute: F) -> Result<(T, String), PipelineError>
    where
        K: Serialize + ?Sized,
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T, PipelineError>,
    {
        let hash = content_hash(&(stage, key));
        if let Some(path) = self.path(stage, &hash) {
            if let Ok(bytes) = std::fs::read(&path) {
                match serde_json::from_slice(&bytes) {
                    Ok(v) => {
                        log::info!("{stage}: cache hit {}", &hash[..12]);
                        return Ok((v, hash));
                    }
                    Err(e) => log::warn!("{stage}: ignoring unreadable cache entry {}: {e}", path.display()),
                }
            }
        }
        let value = compute()?;
        if let Some(path) = self.path(stage, &hash) {
            let bytes = json::to_vec(&value).map_err(|e| PipelineError::stage(stage, path.display(), e))?;
            if let Err(e) = write_atomic(&path, &bytes) {
                log::warn!("{stage}: could not write cache entry {}: {e}", path.display());
            }
        }
        Ok((value, hash))
    }
}
