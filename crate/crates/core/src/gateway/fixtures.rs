//! On-disk completion fixtures: one JSON file per key.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{Completion, GatewayError, ModelEndpoint};

/// Stable fixture key for (endpoint identity, prompt, decoding).
///
/// The prompt is trailing-whitespace-stripped and decoding keys are
/// serialized in sorted order, so prompts rendered on different platforms
/// hit the same fixture.
pub fn fixture_key(endpoint: &ModelEndpoint, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    for part in [
        endpoint.base_url.as_str(),
        endpoint.model_name.as_str(),
        &format!("max_tokens={}", endpoint.decoding.max_tokens),
        &format!("temperature={}", endpoint.decoding.temperature),
        prompt.trim_end(),
    ] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Directory of recorded completions keyed by [`fixture_key`].
#[derive(Debug, Clone)]
pub struct FixtureStore {
    directory: PathBuf,
}

impl FixtureStore {
    pub fn new(directory: impl AsRef<Path>) -> Self {
        Self {
            directory: directory.as_ref().to_path_buf(),
        }
    }

    pub fn directory(&self) -> &Path {
        &self.directory
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.directory.join(format!("{key}.json"))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.path_for(key).is_file()
    }

    /// Load the completion for `key`; a missing fixture is an error, never
    /// a live call.
    pub fn load(&self, key: &str) -> Result<Completion, GatewayError> {
        let path = self.path_for(key);
        let bytes = fs::read(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                GatewayError::FixtureMiss { key: key.to_string() }
            } else {
                GatewayError::FixtureIo {
                    path: path.display().to_string(),
                    source: e,
                }
            }
        })?;
        serde_json::from_slice(&bytes).map_err(|e| GatewayError::FixtureCorrupt {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    /// Persist atomically: write to a temp file in the same directory and
    /// rename into place, so concurrent readers never observe a partial
    /// fixture.
    pub fn save(&self, key: &str, completion: &Completion) -> Result<(), GatewayError> {
        fs::create_dir_all(&self.directory).map_err(|e| GatewayError::FixtureIo {
            path: self.directory.display().to_string(),
            source: e,
        })?;
        let path = self.path_for(key);
        let tmp = self.directory.join(format!(".{key}.tmp"));
        let body = serde_json::to_vec_pretty(completion).expect("completion serializes");
        fs::write(&tmp, body).map_err(|e| GatewayError::FixtureIo {
            path: tmp.display().to_string(),
            source: e,
        })?;
        fs::rename(&tmp, &path).map_err(|e| GatewayError::FixtureIo {
            path: path.display().to_string(),
            source: e,
        })
    }
}
