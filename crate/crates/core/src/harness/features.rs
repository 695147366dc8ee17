use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::cepstra::{extract_features, read_cache, write_cache, ContextRepresentation, FeatureKind, PipelineConfig};
use crate::data::{read_wav, CorpusEntry};
use crate::error::{Error, Result};

/// `<cache>/<config hash>/<kind>/<first 16 hex digits of sha256(path)>.emcf`
fn cache_path(dir: &Path, hash: &str, kind: FeatureKind, audio: &Path) -> PathBuf {
    let key = hex::encode(&Sha256::digest(audio.to_string_lossy().as_bytes())[..8]);
    dir.join(hash).join(kind.as_str()).join(format!("{key}.emcf"))
}

fn extract_one(entry: &CorpusEntry, pipeline: &PipelineConfig, kind: FeatureKind) -> Result<ContextRepresentation> {
    let wave = read_wav(&entry.path)?;
    extract_features(&wave, pipeline, kind)
}

/// Context representations for every entry, in order, computed in parallel.
/// With a cache directory, representations are read from it when present
/// for the same pipeline configuration and written to it otherwise;
/// unreadable cache files are recomputed.
pub fn load_features(
    entries: &[CorpusEntry],
    pipeline: &PipelineConfig,
    kind: FeatureKind,
    cache_dir: Option<&Path>,
) -> Result<Vec<ContextRepresentation>> {
    let hash = pipeline.config_hash();
    if let Some(dir) = cache_dir {
        let sub = dir.join(&hash).join(kind.as_str());
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    }
    entries
        .par_iter()
        .map(|entry| {
            let wrap = |e: Error| Error::Utterance {
                path: entry.path.clone(),
                source: Box::new(e),
            };
            let Some(dir) = cache_dir else {
                return extract_one(entry, pipeline, kind).map_err(wrap);
            };
            let path = cache_path(dir, &hash, kind, &entry.path);
            if path.exists() {
                match read_cache(&path, &hash, kind) {
                    Ok(Some(rep)) => return Ok(rep),
                    Ok(None) => {}
                    Err(e) => log::warn!("ignoring feature cache: {e}"),
                }
            }
            let rep = extract_one(entry, pipeline, kind).map_err(wrap)?;
            write_cache(&path, &rep, &hash)?;
            Ok(rep)
        })
        .collect()
}
