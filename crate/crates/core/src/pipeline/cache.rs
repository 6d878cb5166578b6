//! On-disk cache of inference results, one JSON file per input.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::infer::InferenceResult;
use crate::param_space::{Problem, ProblemKind};
use crate::{Error, Result};

/// Overrides the cache directory.
pub const CACHE_DIR_ENV: &str = "AUTOTUNE_CACHE_DIR";
pub const CACHE_SCHEMA: &str = "autotune-cache v1";

#[derive(Serialize, Deserialize)]
#[serde(bound = "P: Problem")]
struct CacheEntry<P: Problem> {
    schema: String,
    kind: ProblemKind,
    feature_version: String,
    context: String,
    result: InferenceResult<P>,
}

/// Hex SHA-256 of length-prefixed parts.
pub fn digest(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone)]
pub struct InferenceCache {
    dir: PathBuf,
}

impl InferenceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        InferenceCache { dir: dir.into() }
    }

    /// Uses `$AUTOTUNE_CACHE_DIR` when set, `fallback` otherwise.
    pub fn from_env(fallback: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Self::new(dir),
            _ => Self::new(fallback),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// File holding the result for `input` under `context`, which should
    /// identify everything else the result depends on (model, hardware,
    /// bounds, backend, top-k).
    pub fn path_for<P: Problem>(&self, input: &P, context: &str) -> PathBuf {
        let input_json = serde_json::to_string(input).expect("inputs serialize");
        let key = digest(&[
            P::KIND.name().as_bytes(),
            P::FEATURE_VERSION.as_bytes(),
            input_json.as_bytes(),
            context.as_bytes(),
        ]);
        self.dir.join(format!("{key}.json"))
    }

    pub fn store<P: Problem>(&self, context: &str, result: &InferenceResult<P>) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.path_for(&result.input, context);
        let entry = CacheEntry {
            schema: CACHE_SCHEMA.to_string(),
            kind: P::KIND,
            feature_version: P::FEATURE_VERSION.to_string(),
            context: context.to_string(),
            result: result.clone(),
        };
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&entry)?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Cached result for `input`, if any. Unreadable or mismatching entries
    /// are reported as warnings and treated as misses.
    pub fn lookup<P: Problem>(&self, input: &P, context: &str) -> Option<InferenceResult<P>> {
        let path = self.path_for(input, context);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                return None;
            }
        };
        let entry: CacheEntry<P> = match serde_json::from_str(&text) {
            Ok(entry) => entry,
            Err(e) => {
                log::warn!("ignoring corrupt cache entry {}: {e}", path.display());
                return None;
            }
        };
        let matches = entry.schema == CACHE_SCHEMA
            && entry.kind == P::KIND
            && entry.feature_version == P::FEATURE_VERSION
            && entry.context == context
            && &entry.result.input == input;
        if !matches {
            log::warn!("ignoring stale cache entry {}", path.display());
            return None;
        }
        Some(entry.result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::BackendTag;
    use crate::param_space::{DType, GemmInput, GemmTuning};
    use crate::pipeline::infer::Candidate;

    fn result(input: GemmInput) -> InferenceResult<GemmInput> {
        let t = GemmTuning { m_s: 2, ..GemmTuning::ONES };
        InferenceResult {
            input,
            tuning: t,
            predicted: 1.25,
            measured_gflops: 3.5,
            legal_configurations: 7,
            backend: BackendTag::Analytical,
            ranked: vec![Candidate { tuning: t, predicted: 1.25, measured_gflops: 3.5 }],
        }
    }

    #[test]
    fn store_then_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let cache = InferenceCache::new(dir.path().join("c"));
        let x = GemmInput::new(32, 32, 60000, DType::F32, false, true).unwrap();
        assert!(cache.lookup(&x, "ctx").is_none());
        cache.store("ctx", &result(x)).unwrap();
        assert_eq!(cache.lookup(&x, "ctx").unwrap(), result(x));
        let flipped = GemmInput { trans_b: false, ..x };
        assert!(cache.lookup(&flipped, "ctx").is_none());
        assert!(cache.lookup(&x, "other model").is_none());
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = InferenceCache::new(dir.path());
        let x = GemmInput::new(1, 2, 3, DType::F32, false, false).unwrap();
        let path = cache.store("", &result(x)).unwrap();
        fs::write(&path, "{ not json").unwrap();
        assert!(cache.lookup(&x, "").is_none());
    }
}
