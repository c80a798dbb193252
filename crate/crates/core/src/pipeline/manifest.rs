use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::bev::{OrthoCamera, PatchGrid};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of the canonical JSON form of `value`.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("fingerprint input serializes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash over the stage's parameters and its inputs' hashes.
    pub fingerprint: String,
    pub complete: bool,
    /// Output path relative to the run directory, to its sha256.
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub summary: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendInfo {
    pub contract: String,
    pub encoding: String,
    pub normative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub config: RunConfig,
    /// Local frame offset; geometry is stored in local meters.
    pub georeference_offset: [f64; 3],
    pub class_table: BTreeMap<u8, String>,
    pub camera: Option<OrthoCamera>,
    pub grid: Option<PatchGrid>,
    pub stages: BTreeMap<String, StageRecord>,
    pub warnings: Vec<String>,
    pub blend: Option<BlendInfo>,
}

impl RunManifest {
    pub fn new(config: RunConfig) -> Self {
        let class_table = config.class_table().map(|t| t.classes().clone()).unwrap_or_default();
        Self {
            format_version: FORMAT_VERSION,
            config,
            georeference_offset: [0.0; 3],
            class_table,
            camera: None,
            grid: None,
            stages: BTreeMap::new(),
            warnings: Vec::new(),
            blend: None,
        }
    }

    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let m: Self = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
            offset: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "{} has format version {}, expected {FORMAT_VERSION}",
                path.display(),
                m.format_version
            )));
        }
        Ok(Some(m))
    }

    /// Writes via a temporary file so a crash never leaves a torn manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(MANIFEST_FILE);
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        let json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        fs::write(&tmp, json).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    /// True when every output of `stage` exists and matches its hash.
    pub fn outputs_intact(&self, stage: &str, dir: &Path) -> bool {
        self.stages.get(stage).is_some_and(|r| {
            r.complete
                && r.outputs
                    .iter()
                    .all(|(rel, hash)| hash_file(&dir.join(rel)).is_ok_and(|h| &h == hash))
        })
    }

    pub fn warn(&mut self, message: String) {
        log::warn!("{message}");
        if !self.warnings.contains(&message) {
            self.warnings.push(message);
        }
    }
}
