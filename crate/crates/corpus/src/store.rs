//! Corpus directory layout: `manifest.json` plus one DVT1 tensor file per
//! video under `videos/`, with per-file SHA-256 checksums recorded in the
//! manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::degrade::DegradationSpec;
use crate::synth::VideoSample;
use crate::{CorpusError, Result};
use vdq_tensor::io::{load_tensor, save_tensor};
use vdq_tensor::Tensor;

pub const MANIFEST_VERSION: &str = "v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: usize,
    pub file: String,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub degradations: Vec<DegradationSpec>,
    pub mos: f64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: String,
    pub seed: u64,
    pub entries: Vec<CorpusEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_corpus(dir: &Path, seed: u64, samples: &[VideoSample]) -> Result<CorpusManifest> {
    let videos = dir.join("videos");
    fs::create_dir_all(&videos)?;
    let mut entries = Vec::with_capacity(samples.len());
    for (id, sample) in samples.iter().enumerate() {
        let rel = format!("videos/{id:04}.dvt");
        let path = dir.join(&rel);
        save_tensor(&path, &sample.frames)?;
        let bytes = fs::read(&path)?;
        entries.push(CorpusEntry {
            id,
            file: rel,
            frames: sample.frames.shape()[1],
            height: sample.frames.shape()[2],
            width: sample.frames.shape()[3],
            degradations: sample.degradations.clone(),
            mos: sample.mos,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = CorpusManifest {
        version: MANIFEST_VERSION.to_string(),
        seed,
        entries,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CorpusError::Manifest(e.to_string()))?;
    fs::write(dir.join("manifest.json"), json)?;
    Ok(manifest)
}

/// Lazy reader: the manifest is parsed eagerly, video tensors load (and
/// checksum-verify) on demand.
pub struct CorpusReader {
    dir: PathBuf,
    pub manifest: CorpusManifest,
}

pub fn read_corpus(dir: &Path) -> Result<CorpusReader> {
    let manifest_path = dir.join("manifest.json");
    let json = fs::read_to_string(&manifest_path)?;
    let manifest: CorpusManifest =
        serde_json::from_str(&json).map_err(|e| CorpusError::Manifest(e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(CorpusError::Version {
            found: manifest.version,
            expected: MANIFEST_VERSION.to_string(),
        });
    }
    for e in &manifest.entries {
        if !dir.join(&e.file).exists() {
            return Err(CorpusError::Manifest(format!(
                "referenced file {} does not exist",
                e.file
            )));
        }
    }
    Ok(CorpusReader {
        dir: dir.to_path_buf(),
        manifest,
    })
}

impl CorpusReader {
    pub fn len(&self) -> usize {
        self.manifest.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.entries.is_empty()
    }

    pub fn entry(&self, id: usize) -> &CorpusEntry {
        &self.manifest.entries[id]
    }

    /// Loads one video's frames [3, N, H, W], verifying its checksum.
    pub fn load_video(&self, id: usize) -> Result<Tensor> {
        let entry = self
            .manifest
            .entries
            .get(id)
            .ok_or_else(|| CorpusError::Manifest(format!("no entry {id}")))?;
        let path = self.dir.join(&entry.file);
        let bytes = fs::read(&path)?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(CorpusError::Checksum(entry.file.clone()));
        }
        Ok(load_tensor(&path)?)
    }
}
