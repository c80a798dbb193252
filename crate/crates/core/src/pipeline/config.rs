use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inpaint::{BackendSpec, ExemplarParams, ExternalParams, HarmonicParams};
use crate::mask::ClassTable;
use crate::remesh::RemeshConfig;
use crate::retexture::{RetextureConfig, TextureMode};
use crate::synth::SceneSpec;

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Synthetic fixture written by the `synth` stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Explicit scene; when absent, `boxes` random boxes are placed on flat
    /// ground over `extent`.
    pub scene: Option<SceneSpec>,
    pub extent: [f64; 2],
    pub boxes: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            scene: None,
            extent: [32.0, 32.0],
            boxes: 5,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn scene_spec(&self) -> Result<SceneSpec> {
        match &self.scene {
            Some(s) => Ok(s.clone()),
            None => SceneSpec::with_random_boxes(self.extent, self.boxes, self.seed),
        }
    }
}

/// Every user-settable parameter of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Input mesh; falls back to the synthetic scene when unset.
    pub input: Option<PathBuf>,
    /// Directory holding `patch_{row}_{col}_mask.png` class-id rasters.
    pub masks: Option<PathBuf>,
    pub out: PathBuf,
    pub gsd: f64,
    pub patch_px: usize,
    pub overlap: f64,
    /// Height codec range; derived from the mesh bounds when unset.
    pub z_range: Option<[f64; 2]>,
    /// Class name to mask pixel value.
    pub class_table: BTreeMap<String, u8>,
    /// Classes removed from the scene.
    pub classes: Vec<String>,
    pub kernel_px: usize,
    /// Number of 2x-coarser mask levels written after merging.
    pub lod_levels: usize,
    pub backend: BackendSpec,
    pub remesh: RemeshConfig,
    pub retexture: RetextureConfig,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            masks: None,
            out: PathBuf::from("run"),
            gsd: 0.06,
            patch_px: 2048,
            overlap: 0.5,
            z_range: None,
            class_table: [("vehicle".to_string(), 1), ("vessel".to_string(), 2)].into(),
            classes: vec!["vehicle".into(), "vessel".into()],
            kernel_px: 5,
            lod_levels: 2,
            backend: BackendSpec::Harmonic(HarmonicParams::default()),
            remesh: RemeshConfig::default(),
            retexture: RetextureConfig::default(),
            workers: default_workers(),
            synth: SynthConfig::default(),
        }
    }
}

/// Command-line values; each `Some` replaces the file or default value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub gsd: Option<f64>,
    pub patch_px: Option<usize>,
    pub overlap: Option<f64>,
    pub classes: Option<Vec<String>>,
    pub kernel_px: Option<usize>,
    pub backend: Option<String>,
    pub external_command: Option<String>,
    pub merge_distance: Option<f64>,
    pub texture_mode: Option<TextureMode>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Defaults, then the file at `path`, then `overrides`. Relative paths
    /// in the file are resolved against its directory.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                let mut cfg = Self::from_toml(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                let base = p.parent().unwrap_or(Path::new(""));
                for field in [&mut cfg.input, &mut cfg.masks] {
                    if let Some(f) = field.as_mut().filter(|f| f.is_relative()) {
                        *f = base.join(&*f);
                    }
                }
                if cfg.out.is_relative() {
                    cfg.out = base.join(&cfg.out);
                }
                cfg
            }
            None => Self::default(),
        };
        cfg.apply(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = &o.input {
            self.input = Some(v.clone());
        }
        if let Some(v) = &o.masks {
            self.masks = Some(v.clone());
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = o.gsd {
            self.gsd = v;
        }
        if let Some(v) = o.patch_px {
            self.patch_px = v;
        }
        if let Some(v) = o.overlap {
            self.overlap = v;
        }
        if let Some(v) = &o.classes {
            self.classes = v.clone();
        }
        if let Some(v) = o.kernel_px {
            self.kernel_px = v;
        }
        if let Some(v) = o.merge_distance {
            self.remesh.merge_distance = v;
        }
        if let Some(v) = o.texture_mode {
            self.retexture.mode = v;
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        if let Some(name) = &o.backend {
            self.backend = match (name.as_str(), &self.backend) {
                ("harmonic", BackendSpec::Harmonic(_)) | ("exemplar", BackendSpec::Exemplar(_)) => self.backend.clone(),
                ("external", BackendSpec::External(p)) => BackendSpec::External(p.clone()),
                ("harmonic", _) => BackendSpec::Harmonic(HarmonicParams::default()),
                ("exemplar", _) => BackendSpec::Exemplar(ExemplarParams::default()),
                ("external", _) => BackendSpec::External(ExternalParams::default()),
                (other, _) => {
                    return Err(Error::Config(format!(
                        "unknown backend `{other}` (expected harmonic, exemplar or external)"
                    )))
                }
            };
        }
        if let Some(cmd) = &o.external_command {
            match &mut self.backend {
                BackendSpec::External(p) => p.command = cmd.clone(),
                _ => return Err(Error::Config("an external command requires the external backend".into())),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.gsd > 0.0 && self.gsd.is_finite()) {
            return bad(format!("gsd must be positive, got {}", self.gsd));
        }
        if self.patch_px == 0 {
            return bad("patch_px must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return bad(format!("overlap must be in [0, 1), got {}", self.overlap));
        }
        if let Some([lo, hi]) = self.z_range {
            if !(lo < hi) {
                return bad(format!("z_range [{lo}, {hi}] is empty"));
            }
        }
        if self.kernel_px == 0 {
            return bad("kernel_px must be >= 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        self.class_table()?;
        for (what, r) in [
            ("backend", self.backend.validate()),
            ("remesh", self.remesh.validate()),
        ] {
            if let Err(e) = r {
                return bad(format!("{what}: {e}"));
            }
        }
        Ok(())
    }

    pub fn class_table(&self) -> Result<ClassTable> {
        let mut by_id = BTreeMap::new();
        for (name, &id) in &self.class_table {
            if let Some(prev) = by_id.insert(id, name.clone()) {
                return Err(Error::Config(format!("classes `{prev}` and `{name}` share id {id}")));
            }
        }
        ClassTable::new(by_id, self.classes.iter().cloned()).map_err(|e| Error::Config(e.to_string()))
    }
}
