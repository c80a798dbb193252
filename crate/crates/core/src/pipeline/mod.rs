//! Stage orchestration with a resumable run manifest.
//!
//! Each stage's fingerprint hashes its parameters together with the
//! fingerprints and output hashes of the stages it reads from. A stage whose
//! fingerprint is unchanged and whose outputs are intact is skipped.

mod config;
mod manifest;
mod stages;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{Overrides, RunConfig, SynthConfig};
pub use manifest::{fingerprint, hash_file, sha256_hex, BlendInfo, RunManifest, StageRecord, MANIFEST_FILE};
pub use stages::{
    mask_file_name, patch_file, MASK_MOSAIC, METRICS_JSON, METRICS_TXT, OUTPUT, REMESHED, SYNTH_CLEAN, SYNTH_MASKS,
    SYNTH_OCCLUDED,
};

use crate::error::{Error, Result};
use crate::mesh::referenced_files;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Synth,
    Render,
    Masks,
    Inpaint,
    Remesh,
    Retexture,
    Metrics,
}

impl Stage {
    /// Stages executed by a full run, in order.
    pub const PIPELINE: [Stage; 6] = [
        Stage::Render,
        Stage::Masks,
        Stage::Inpaint,
        Stage::Remesh,
        Stage::Retexture,
        Stage::Metrics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Render => "render",
            Stage::Masks => "masks",
            Stage::Inpaint => "inpaint",
            Stage::Remesh => "remesh",
            Stage::Retexture => "retexture",
            Stage::Metrics => "metrics",
        }
    }

    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Synth | Stage::Render => &[],
            Stage::Masks => &[Stage::Render],
            Stage::Inpaint => &[Stage::Render, Stage::Masks],
            Stage::Remesh => &[Stage::Render, Stage::Masks, Stage::Inpaint],
            Stage::Retexture => &[Stage::Masks, Stage::Inpaint, Stage::Remesh],
            Stage::Metrics => &[Stage::Render, Stage::Masks, Stage::Inpaint],
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Stage::Synth]
            .into_iter()
            .chain(Stage::PIPELINE)
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Executed,
    Skipped,
}

/// Loads the configuration for a run: the file if given, otherwise the
/// snapshot in an existing manifest under the output directory, otherwise
/// defaults; command-line overrides apply last.
pub fn resolve_config(config: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    if config.is_none() {
        let out = overrides.out.clone().unwrap_or_else(|| RunConfig::default().out);
        if let Some(m) = RunManifest::load(&out)? {
            let mut cfg = m.config;
            cfg.out = out;
            cfg.apply(overrides)?;
            cfg.validate()?;
            return Ok(cfg);
        }
    }
    RunConfig::resolve(config, overrides)
}

pub struct Pipeline {
    cfg: RunConfig,
    dir: PathBuf,
    manifest: RunManifest,
}

impl Pipeline {
    /// Opens the run directory, picking up an existing manifest.
    pub fn open(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let dir = cfg.out.clone();
        let manifest = match RunManifest::load(&dir)? {
            Some(mut m) => {
                m.config = cfg.clone();
                m.class_table = cfg.class_table()?.classes().clone();
                m
            }
            None => RunManifest::new(cfg.clone()),
        };
        Ok(Self { cfg, dir, manifest })
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    fn input_mesh(&self) -> Option<PathBuf> {
        self.cfg.input.clone().or_else(|| {
            self.manifest
                .stages
                .get(Stage::Synth.name())
                .filter(|r| r.complete)
                .map(|_| self.dir.join(SYNTH_OCCLUDED))
        })
    }

    fn mask_dir(&self) -> Option<PathBuf> {
        self.cfg.masks.clone().or_else(|| {
            self.manifest
                .stages
                .get(Stage::Synth.name())
                .filter(|r| r.complete)
                .map(|_| self.dir.join(SYNTH_MASKS))
        })
    }

    fn upstream(&self, stage: Stage) -> serde_json::Value {
        let deps: serde_json::Map<String, serde_json::Value> = stage
            .prerequisites()
            .iter()
            .map(|p| {
                let rec = self.manifest.stages.get(p.name());
                (
                    p.name().to_string(),
                    json!({
                        "fingerprint": rec.map(|r| &r.fingerprint),
                        "outputs": rec.map(|r| &r.outputs),
                    }),
                )
            })
            .collect();
        serde_json::Value::Object(deps)
    }

    fn stage_fingerprint(&self, stage: Stage) -> Result<String> {
        let c = &self.cfg;
        let params = match stage {
            Stage::Synth => json!({
                "synth": c.synth, "gsd": c.gsd, "patch_px": c.patch_px,
                "overlap": c.overlap, "class_table": c.class_table,
            }),
            Stage::Render => {
                let inputs = match self.input_mesh() {
                    Some(p) => referenced_files(&p)?
                        .iter()
                        .map(|f| hash_file(f))
                        .collect::<Result<Vec<_>>>()?,
                    None => Vec::new(),
                };
                json!({ "gsd": c.gsd, "patch_px": c.patch_px, "overlap": c.overlap, "z_range": c.z_range, "input": inputs })
            }
            Stage::Masks => {
                let files: Vec<Option<String>> = match (self.mask_dir(), &self.manifest.grid) {
                    (Some(dir), Some(grid)) => grid
                        .patches
                        .iter()
                        .map(|r| hash_file(&dir.join(mask_file_name(r))).ok())
                        .collect(),
                    _ => Vec::new(),
                };
                json!({
                    "class_table": c.class_table, "classes": c.classes, "kernel_px": c.kernel_px,
                    "lod_levels": c.lod_levels, "masks": files,
                })
            }
            Stage::Inpaint => json!({ "backend": c.backend }),
            Stage::Remesh => json!({ "remesh": c.remesh }),
            Stage::Retexture => json!({ "retexture": c.retexture }),
            Stage::Metrics => json!({}),
        };
        Ok(fingerprint(&json!({
            "stage": stage.name(),
            "params": params,
            "upstream": self.upstream(stage),
        })))
    }

    /// True when `stage` has a complete record matching the current
    /// fingerprint and its outputs are intact.
    pub fn is_current(&self, stage: Stage) -> Result<bool> {
        let Some(rec) = self.manifest.stages.get(stage.name()) else {
            return Ok(false);
        };
        Ok(rec.complete
            && rec.fingerprint == self.stage_fingerprint(stage)?
            && self.manifest.outputs_intact(stage.name(), &self.dir))
    }

    /// Runs one stage unless it is already current.
    pub fn run(&mut self, stage: Stage) -> Result<Outcome> {
        for &p in stage.prerequisites() {
            if !self.is_current(p).map_err(|e| e.in_stage(stage.name(), None))? {
                return Err(Error::Prerequisite {
                    stage: stage.name().into(),
                    missing: p.name().into(),
                });
            }
        }
        let fp = self.stage_fingerprint(stage).map_err(|e| e.in_stage(stage.name(), None))?;
        if self.is_current(stage)? {
            log::info!("{stage}: up to date");
            return Ok(Outcome::Skipped);
        }
        log::info!("{stage}: running");
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let ctx = stages::Ctx {
            cfg: &self.cfg,
            dir: &self.dir,
            camera: self.manifest.camera.as_ref(),
            grid: self.manifest.grid.as_ref(),
            input: self.input_mesh(),
            masks: self.mask_dir(),
        };
        let result = par::with_workers(self.cfg.workers, || match stage {
            Stage::Synth => stages::synth(&ctx),
            Stage::Render => stages::render(&ctx),
            Stage::Masks => stages::masks(&ctx),
            Stage::Inpaint => stages::inpaint_stage(&ctx),
            Stage::Remesh => stages::remesh_stage(&ctx),
            Stage::Retexture => stages::retexture_stage(&ctx),
            Stage::Metrics => stages::metrics_stage(&ctx),
        });
        let out = match result {
            Ok(out) => out,
            Err(e) => {
                let e = e.in_stage(stage.name(), None);
                self.manifest.stages.insert(
                    stage.name().into(),
                    StageRecord {
                        fingerprint: fp,
                        complete: false,
                        outputs: Default::default(),
                        summary: serde_json::Value::Null,
                        error: Some(e.to_string()),
                    },
                );
                self.manifest.save(&self.dir)?;
                return Err(e);
            }
        };
        let outputs = out
            .files
            .iter()
            .map(|rel| Ok((rel.clone(), hash_file(&self.dir.join(rel))?)))
            .collect::<Result<_>>()?;
        if let Some(cam) = out.camera {
            self.manifest.camera = Some(cam);
        }
        if let Some(grid) = out.grid {
            self.manifest.grid = Some(grid);
        }
        if stage == Stage::Retexture {
            self.manifest.blend = out.blend;
        }
        for w in out.warnings {
            self.manifest.warn(format!("{stage}: {w}"));
        }
        self.manifest.stages.insert(
            stage.name().into(),
            StageRecord {
                fingerprint: fp,
                complete: true,
                outputs,
                summary: out.summary,
                error: None,
            },
        );
        self.manifest.save(&self.dir)?;
        Ok(Outcome::Executed)
    }

    /// Runs every pipeline stage in order.
    pub fn run_all(&mut self) -> Result<Vec<(Stage, Outcome)>> {
        Stage::PIPELINE.iter().map(|&s| Ok((s, self.run(s)?))).collect()
    }
}

/// Runs the full pipeline for `config` and returns the final manifest.
pub fn run_pipeline(config: RunConfig) -> Result<RunManifest> {
    let mut p = Pipeline::open(config)?;
    p.run_all()?;
    Ok(p.manifest)
}
