//! Work performed by each stage. Every function reads its inputs from the
//! run directory and returns the files it wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::config::RunConfig;
use super::manifest::BlendInfo;
use crate::bev::{make_camera_with_z_range, make_patch_grid, BevRasterizer, OrthoCamera, PatchGrid, PatchRect, NO_COVERAGE};
use crate::error::{Error, Result};
use crate::grid::{self, Grid, MaskRaster};
use crate::inpaint::{inpaint, HeightImage, InpaintImage, InpaintRequest, Pass};
use crate::mask::{self, MaskMosaic};
use crate::mesh::{compute_bounds, load_mesh, save_mesh, sidecar_files};
use crate::metrics::{self, PatchMetrics};
use crate::par;
use crate::remesh::{self, HeightMosaic, MergeScope};
use crate::retexture::{self, TextureMode, BLEND_CONTRACT};
use crate::synth;

pub const SYNTH_OCCLUDED: &str = "synth/occluded.gltf";
pub const SYNTH_CLEAN: &str = "synth/clean.gltf";
pub const SYNTH_MASKS: &str = "synth/masks";
pub const MASK_MOSAIC: &str = "mask_mosaic.png";
pub const REMESHED: &str = "remeshed.gltf";
pub const OUTPUT: &str = "output.gltf";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_TXT: &str = "metrics.txt";

/// Path of a per-patch artifact relative to the run directory.
pub fn patch_file(rect: &PatchRect, kind: &str, ext: &str) -> String {
    format!("patches/patch_{}_{}_{kind}.{ext}", rect.row, rect.col)
}

/// Name of an input mask inside the masks directory.
pub fn mask_file_name(rect: &PatchRect) -> String {
    format!("patch_{}_{}_mask.png", rect.row, rect.col)
}

pub(crate) struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub dir: &'a Path,
    pub camera: Option<&'a OrthoCamera>,
    pub grid: Option<&'a PatchGrid>,
    pub input: Option<PathBuf>,
    pub masks: Option<PathBuf>,
}

#[derive(Default)]
pub(crate) struct StageOutput {
    pub files: Vec<String>,
    pub summary: serde_json::Value,
    pub warnings: Vec<String>,
    pub camera: Option<OrthoCamera>,
    pub grid: Option<PatchGrid>,
    pub blend: Option<BlendInfo>,
}

impl Ctx<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn camera(&self) -> Result<&OrthoCamera> {
        self.camera.ok_or_else(|| Error::Validation("manifest has no camera".into()))
    }

    fn grid(&self) -> Result<&PatchGrid> {
        self.grid.ok_or_else(|| Error::Validation("manifest has no patch grid".into()))
    }

    fn input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::Config("no input mesh: set `input` or run the synth stage".into()))
    }

    fn masks(&self) -> Result<&Path> {
        self.masks
            .as_deref()
            .ok_or_else(|| Error::Config("no mask directory: set `masks` or run the synth stage".into()))
    }

    /// Saves `mesh` and returns its files relative to the run directory.
    fn save_mesh(&self, mesh: &crate::mesh::TexturedMesh, rel: &str) -> Result<Vec<String>> {
        let path = self.path(rel);
        save_mesh(mesh, &path)?;
        Ok(sidecar_files(mesh, &path)
            .iter()
            .map(|p| relative(self.dir, p))
            .collect())
    }

    /// Runs `f` on every patch in parallel, tagging errors with the patch.
    fn per_patch<R: Send>(&self, stage: &str, f: impl Fn(&PatchRect) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
        par::try_map_slice(&self.grid()?.patches, |rect| f(rect).map_err(|e| e.in_stage(stage, Some(rect.id()))))
    }

    fn load_coverage(&self, rect: &PatchRect) -> Result<MaskRaster> {
        let ids = grid::load_tri_id(&self.path(&patch_file(rect, "triid", "bin")))?;
        Ok(ids.map(|&t| t != NO_COVERAGE))
    }

    fn load_maskbin(&self, rect: &PatchRect) -> Result<MaskRaster> {
        grid::load_mask_png(&self.path(&patch_file(rect, "maskbin", "png")))
    }

    fn load_mask_mosaic(&self) -> Result<MaskMosaic> {
        Ok(MaskMosaic::from_raster(&grid::load_mask_png(&self.path(MASK_MOSAIC))?))
    }
}

fn relative(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

pub(crate) fn synth(ctx: &Ctx) -> Result<StageOutput> {
    let cfg = ctx.cfg;
    let spec = cfg.synth.scene_spec()?;
    let classes = cfg.class_table()?;
    let scene = synth::generate_scene(&spec, cfg.gsd, &classes)?;
    let grid = make_patch_grid(&scene.camera, cfg.patch_px, cfg.overlap)?;
    let mut files = ctx.save_mesh(&scene.occluded, SYNTH_OCCLUDED)?;
    files.extend(ctx.save_mesh(&scene.clean, SYNTH_CLEAN)?);
    let truth = scene.truth_classes_for(&grid.patches);
    let mut truth_pixels = 0;
    for (rect, classes) in grid.patches.iter().zip(&truth) {
        let rel = format!("{SYNTH_MASKS}/{}", mask_file_name(rect));
        grid::save_gray_png(classes, &ctx.path(&rel))?;
        truth_pixels += classes.data().iter().filter(|&&c| c != 0).count();
        files.push(rel);
    }
    let spec_rel = "synth/scene.json".to_string();
    let spec_json = serde_json::to_vec_pretty(&spec).expect("scene spec serializes");
    std::fs::write(ctx.path(&spec_rel), spec_json).map_err(|e| Error::io(ctx.path(&spec_rel), e))?;
    files.push(spec_rel);
    Ok(StageOutput {
        files,
        summary: json!({
            "occluders": spec.occluders.len(),
            "vertices": scene.occluded.vertex_count(),
            "triangles": scene.occluded.triangle_count(),
            "truth_pixels": truth_pixels,
        }),
        ..Default::default()
    })
}

pub(crate) fn render(ctx: &Ctx) -> Result<StageOutput> {
    let cfg = ctx.cfg;
    let mesh = load_mesh(ctx.input()?)?;
    mesh.validate()?;
    let bounds = compute_bounds(&mesh)?;
    let camera = make_camera_with_z_range(&bounds, cfg.gsd, cfg.z_range)?;
    let mut warnings = Vec::new();
    if let Some([lo, hi]) = cfg.z_range {
        if bounds.min_z < lo || bounds.max_z > hi {
            warnings.push(format!(
                "mesh z-range [{}, {}] exceeds the configured codec range [{lo}, {hi}]",
                bounds.min_z, bounds.max_z
            ));
        }
    }
    let grid = make_patch_grid(&camera, cfg.patch_px, cfg.overlap)?;
    let rasterizer = BevRasterizer::new(&mesh, &camera);
    let inner = Ctx {
        grid: Some(&grid),
        camera: Some(&camera),
        cfg: ctx.cfg,
        dir: ctx.dir,
        input: None,
        masks: None,
    };
    let per_patch = inner.per_patch("render", |rect| {
        let patch = rasterizer.rasterize(rect);
        let names = [
            patch_file(rect, "color", "png"),
            patch_file(rect, "height", "png"),
            patch_file(rect, "triid", "bin"),
        ];
        grid::save_color_png(&patch.color, &ctx.path(&names[0]))?;
        grid::save_height_png(&patch.height, &ctx.path(&names[1]))?;
        grid::save_tri_id(&patch.tri_id, &ctx.path(&names[2]))?;
        let covered = patch.tri_id.data().iter().filter(|&&t| t != NO_COVERAGE).count();
        Ok((names, covered))
    })?;
    let covered: usize = per_patch.iter().map(|(_, c)| c).sum();
    Ok(StageOutput {
        files: per_patch.into_iter().flat_map(|(n, _)| n).collect(),
        summary: json!({
            "patches": grid.len(),
            "mosaic": [camera.mosaic_width, camera.mosaic_height],
            "covered_pixels": covered,
        }),
        warnings,
        camera: Some(camera),
        grid: Some(grid),
        blend: None,
    })
}

pub(crate) fn masks(ctx: &Ctx) -> Result<StageOutput> {
    let cfg = ctx.cfg;
    let classes = cfg.class_table()?;
    let dir = ctx.masks()?;
    let grid = ctx.grid()?;
    let dilated = ctx.per_patch("masks", |rect| {
        let m = mask::ingest_patch_mask(&dir.join(mask_file_name(rect)), &classes, rect)?;
        mask::dilate(&m, cfg.kernel_px)
    })?;
    let mut mosaic = MaskMosaic::new(grid.mosaic_width, grid.mosaic_height);
    for (rect, m) in grid.patches.iter().zip(&dilated) {
        mask::merge_into_mosaic(&mut mosaic, m, rect)?;
    }
    let raster = mosaic.to_raster();
    grid::save_mask_png(&raster, &ctx.path(MASK_MOSAIC))?;
    let mut files = vec![MASK_MOSAIC.to_string()];
    let per_patch = ctx.per_patch("masks", |rect| {
        let m = mask::extract_patch_mask(&mosaic, rect)?;
        let name = patch_file(rect, "maskbin", "png");
        grid::save_mask_png(&m, &ctx.path(&name))?;
        Ok((name, m.any()))
    })?;
    let masked_patches = per_patch.iter().filter(|(_, any)| *any).count();
    files.extend(per_patch.into_iter().map(|(n, _)| n));
    for level in 1..=cfg.lod_levels {
        let lod = mask::downsample_mask(&raster, 1 << level)?;
        let name = format!("lod/mask_lod{level}.png");
        grid::save_mask_png(&lod, &ctx.path(&name))?;
        files.push(name);
    }
    Ok(StageOutput {
        files,
        summary: json!({
            "masked_pixels": mosaic.count(),
            "masked_patches": masked_patches,
            "selected_classes": classes.selected(),
        }),
        ..Default::default()
    })
}

pub(crate) fn inpaint_stage(ctx: &Ctx) -> Result<StageOutput> {
    let cfg = ctx.cfg;
    let codec = ctx.camera()?.height_codec;
    let per_patch = ctx.per_patch("inpaint", |rect| {
        let mask = ctx.load_maskbin(rect)?;
        let color = grid::load_color_png(&ctx.path(&patch_file(rect, "color", "png")))?;
        let codes = grid::load_height_png(&ctx.path(&patch_file(rect, "height", "png")))?;
        let coverage = ctx.load_coverage(rect)?;
        let height_mask = Grid::from_fn(mask.width(), mask.height(), |x, y| *mask.get(x, y) && *coverage.get(x, y));
        let uncovered = mask.count_true() - height_mask.count_true();

        let color_in = InpaintImage::Color(color);
        let color_out = inpaint(&InpaintRequest {
            image: &color_in,
            mask: &mask,
            backend: &cfg.backend,
        })?;
        let height_in = InpaintImage::Height(HeightImage {
            codes,
            valid: coverage,
            codec,
        });
        let height_out = inpaint(&InpaintRequest {
            image: &height_in,
            mask: &height_mask,
            backend: &cfg.backend,
        })?;
        let names = [
            patch_file(rect, "color_inpainted", "png"),
            patch_file(rect, "height_inpainted", "png"),
        ];
        match (&color_out, &height_out) {
            (InpaintImage::Color(c), InpaintImage::Height(h)) => {
                grid::save_color_png(c, &ctx.path(&names[0]))?;
                grid::save_height_png(&h.codes, &ctx.path(&names[1]))?;
            }
            _ => unreachable!("passes are preserved"),
        }
        Ok((names, mask.count_true(), uncovered))
    })?;
    let mut warnings = Vec::new();
    let uncovered: usize = per_patch.iter().map(|p| p.2).sum();
    if uncovered > 0 {
        warnings.push(format!(
            "{uncovered} masked pixels have no mesh coverage; their heights were left empty"
        ));
    }
    let masked: usize = per_patch.iter().map(|p| p.1).sum();
    Ok(StageOutput {
        files: per_patch.into_iter().flat_map(|p| p.0).collect(),
        summary: json!({ "backend": cfg.backend.name(), "masked_pixels": masked }),
        warnings,
        ..Default::default()
    })
}

fn assemble<T: Copy + Send + Sync>(
    ctx: &Ctx,
    load: impl Fn(&PatchRect) -> Result<Grid<T>> + Sync + Send,
) -> Result<Grid<T>> {
    let grid = ctx.grid()?;
    let patches = ctx.per_patch("assemble", |rect| load(rect).map(|g| (rect.id(), g)))?;
    remesh::assemble_mosaic(grid, &patches.into_iter().collect::<BTreeMap<_, _>>())
}

pub(crate) fn remesh_stage(ctx: &Ctx) -> Result<StageOutput> {
    let cfg = ctx.cfg;
    let camera = ctx.camera()?;
    let mesh = load_mesh(ctx.input()?)?;
    let codes = assemble(ctx, |r| grid::load_height_png(&ctx.path(&patch_file(r, "height_inpainted", "png"))))?;
    let valid = assemble(ctx, |r| ctx.load_coverage(r))?;
    let heights = HeightMosaic {
        meters: codes.map(|&c| camera.height_codec.decode(c)),
        valid,
    };
    let mask = ctx.load_mask_mosaic()?;
    let (replaced, replace) = remesh::replace_elevations(&mesh, &heights, &mask, camera, &cfg.remesh)?;
    let eligible = match cfg.remesh.merge_scope {
        MergeScope::Masked => Some(replace.in_mask.as_slice()),
        MergeScope::All => None,
    };
    let (merged, report) = remesh::merge_vertices_where(
        &replaced,
        cfg.remesh.merge_distance,
        cfg.remesh.degenerate_area_epsilon,
        eligible,
    );
    let files = ctx.save_mesh(&merged, REMESHED)?;
    Ok(StageOutput {
        files,
        summary: json!({
            "masked_vertices": replace.in_mask.iter().filter(|&&m| m).count(),
            "changed_vertices": replace.changed,
            "merge": report,
        }),
        ..Default::default()
    })
}

pub(crate) fn retexture_stage(ctx: &Ctx) -> Result<StageOutput> {
    let cfg = ctx.cfg;
    let camera = ctx.camera()?;
    let mesh = load_mesh(&ctx.path(REMESHED))?;
    let color = assemble(ctx, |r| grid::load_color_png(&ctx.path(&patch_file(r, "color_inpainted", "png"))))?;
    let mask = ctx.load_mask_mosaic()?;
    let (out, report) = retexture::retexture(&mesh, camera, &color, &mask, &cfg.retexture)?;
    let files = ctx.save_mesh(&out, OUTPUT)?;
    let mut warnings = Vec::new();
    if report.clamped_uv > 0 {
        warnings.push(format!(
            "{} vertices projected outside the mosaic; their uv1 was clamped to the edge",
            report.clamped_uv
        ));
    }
    let blend = (cfg.retexture.mode == TextureMode::Blend && !mask.is_empty()).then(|| BlendInfo {
        contract: BLEND_CONTRACT.into(),
        encoding: "uv1 = normalized mosaic position; inpaint texture = inpainted color mosaic; \
                   blend texture = occluder mask, 255 inside"
            .into(),
        normative: false,
    });
    Ok(StageOutput {
        files,
        summary: json!({ "mode": cfg.retexture.mode, "report": report }),
        warnings,
        blend,
        ..Default::default()
    })
}

pub(crate) fn metrics_stage(ctx: &Ctx) -> Result<StageOutput> {
    let codec = ctx.camera()?.height_codec;
    let per_patch = ctx.per_patch("metrics", |rect| {
        let mask = ctx.load_maskbin(rect)?;
        if !mask.any() {
            return Ok(None);
        }
        let load_c = |kind| grid::load_color_png(&ctx.path(&patch_file(rect, kind, "png")));
        let load_h = |kind| grid::load_height_png(&ctx.path(&patch_file(rect, kind, "png")));
        let (src_c, inp_c) = (load_c("color")?, load_c("color_inpainted")?);
        let (src_h, inp_h) = (load_h("height")?, load_h("height_inpainted")?);
        let coverage = ctx.load_coverage(rect)?;
        let color = PatchMetrics::from_histograms(
            rect.row,
            rect.col,
            Pass::Color,
            &metrics::color_histogram(&src_c),
            &metrics::color_histogram(&inp_c),
        )?;
        let height = PatchMetrics::from_histograms(
            rect.row,
            rect.col,
            Pass::Height,
            &metrics::height_histogram(&src_h, Some(&coverage)),
            &metrics::height_histogram(&inp_h, Some(&coverage)),
        )?;
        let decode = |g: &Grid<u16>| g.map(|&c| codec.decode(c));
        let heatmap = metrics::elevation_diff_heatmap(&decode(&src_h), &decode(&inp_h), &mask, &src_c)?;
        let name = patch_file(rect, "diff", "png");
        grid::save_color_png(&heatmap, &ctx.path(&name))?;
        Ok(Some((name, [color, height])))
    })?;
    let mut files = Vec::new();
    let mut records = Vec::new();
    for (name, pair) in per_patch.into_iter().flatten() {
        files.push(name);
        records.extend(pair);
    }
    let mut warnings = Vec::new();
    let report = if records.is_empty() {
        warnings.push("no patch contains a mask; metrics are empty".to_string());
        metrics::MetricsReport {
            patches: Vec::new(),
            aggregate: Vec::new(),
        }
    } else {
        metrics::aggregate(records)?
    };
    let json_bytes = serde_json::to_vec_pretty(&report).expect("metrics serialize");
    std::fs::write(ctx.path(METRICS_JSON), json_bytes).map_err(|e| Error::io(ctx.path(METRICS_JSON), e))?;
    std::fs::write(ctx.path(METRICS_TXT), report.to_table()).map_err(|e| Error::io(ctx.path(METRICS_TXT), e))?;
    files.extend([METRICS_JSON.to_string(), METRICS_TXT.to_string()]);
    Ok(StageOutput {
        files,
        summary: serde_json::to_value(&report.aggregate).expect("aggregate serializes"),
        warnings,
        ..Default::default()
    })
}
