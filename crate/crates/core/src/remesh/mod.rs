//! Writing inpainted elevations back into the mesh and welding vertices.

mod weld;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bev::{project_vertex, HeightCodec, OrthoCamera, PatchGrid};
use crate::error::{Error, Result};
use crate::grid::{Grid, MaskRaster};
use crate::inpaint::HeightImage;
use crate::mask::MaskMosaic;
use crate::mesh::TexturedMesh;
use crate::par;
use crate::sample::bilinear_valid;

pub use weld::{cluster_points, merge_vertices, merge_vertices_where, MergeReport};

/// Which vertices take part in welding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeScope {
    /// Only vertices that project into the occluder mask.
    #[default]
    Masked,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemeshConfig {
    pub merge_distance: f64,
    pub replace_only_masked: bool,
    pub degenerate_area_epsilon: f64,
    pub merge_scope: MergeScope,
}

impl Default for RemeshConfig {
    fn default() -> Self {
        Self {
            merge_distance: 0.4,
            replace_only_masked: true,
            degenerate_area_epsilon: 1e-8,
            merge_scope: MergeScope::Masked,
        }
    }
}

impl RemeshConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.merge_distance >= 0.0 && self.merge_distance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "merge distance must be >= 0, got {}",
                self.merge_distance
            )));
        }
        if !(self.degenerate_area_epsilon >= 0.0) {
            return Err(Error::InvalidArgument("degenerate area epsilon must be >= 0".into()));
        }
        Ok(())
    }
}

/// Decoded elevations over the whole mosaic.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMosaic {
    pub meters: Grid<f64>,
    pub valid: MaskRaster,
}

impl HeightMosaic {
    pub fn width(&self) -> usize {
        self.meters.width()
    }

    pub fn height(&self) -> usize {
        self.meters.height()
    }
}

/// For each mosaic column (or row), the patch column (or row) whose center
/// is nearest the pixel center; ties go to the lower index. Because patch
/// centers form a rectilinear lattice, combining both axes gives the nearest
/// center in the plane.
fn axis_owners(n: usize, centers: &[f64]) -> Vec<usize> {
    (0..n)
        .map(|i| {
            let c = i as f64 + 0.5;
            let mut best = 0;
            for (k, &m) in centers.iter().enumerate() {
                if (c - m).abs() < (c - centers[best]).abs() {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Patch `(row, col)` owning each mosaic pixel.
pub fn ownership(grid: &PatchGrid) -> Grid<(usize, usize)> {
    let col_centers: Vec<f64> = (0..grid.cols).map(|c| grid.patches[c].center()[0]).collect();
    let row_centers: Vec<f64> = (0..grid.rows).map(|r| grid.patches[r * grid.cols].center()[1]).collect();
    let cols = axis_owners(grid.mosaic_width, &col_centers);
    let rows = axis_owners(grid.mosaic_height, &row_centers);
    Grid::from_fn(grid.mosaic_width, grid.mosaic_height, |x, y| (rows[y], cols[x]))
}

/// Stitches per-patch rasters into a mosaic under nearest-center ownership.
pub fn assemble_mosaic<T: Copy + Send + Sync>(
    grid: &PatchGrid,
    patches: &BTreeMap<(usize, usize), Grid<T>>,
) -> Result<Grid<T>> {
    for rect in &grid.patches {
        match patches.get(&rect.id()) {
            None => {
                return Err(Error::InvalidArgument(format!(
                    "patch ({}, {}) is missing from the mosaic assembly",
                    rect.row, rect.col
                )))
            }
            Some(p) if p.dims() != (rect.width, rect.height) => {
                return Err(Error::InvalidArgument(format!(
                    "patch ({}, {}) is {}x{}, expected {}x{}",
                    rect.row,
                    rect.col,
                    p.width(),
                    p.height(),
                    rect.width,
                    rect.height
                )))
            }
            Some(_) => {}
        }
    }
    let owners = ownership(grid);
    let (w, h) = (grid.mosaic_width, grid.mosaic_height);
    let rows: Vec<Vec<T>> = par::map_range(h, |y| {
        (0..w)
            .map(|x| {
                let (r, c) = *owners.get(x, y);
                let rect = &grid.patches[r * grid.cols + c];
                *patches[&(r, c)].get(x - rect.x0, y - rect.y0)
            })
            .collect()
    });
    Grid::from_vec(w, h, rows.into_iter().flatten().collect())
}

/// Assembles inpainted height patches and decodes them to meters.
pub fn assemble_height_mosaic(
    patches: &BTreeMap<(usize, usize), HeightImage>,
    grid: &PatchGrid,
    codec: &HeightCodec,
) -> Result<HeightMosaic> {
    let codes: BTreeMap<_, _> = patches.iter().map(|(k, p)| (*k, p.codes.clone())).collect();
    let valid: BTreeMap<_, _> = patches.iter().map(|(k, p)| (*k, p.valid.clone())).collect();
    let codes = assemble_mosaic(grid, &codes)?;
    let valid = assemble_mosaic(grid, &valid)?;
    Ok(HeightMosaic {
        meters: codes.map(|&c| codec.decode(c)),
        valid,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplaceReport {
    /// Per input vertex: whether it projects into the mask.
    pub in_mask: Vec<bool>,
    pub changed: usize,
}

fn vertex_in_mask(camera: &OrthoCamera, mask: &MaskMosaic, p: [f64; 3]) -> bool {
    let uv = project_vertex(camera, p);
    if !camera.contains_pixel(uv) {
        return false;
    }
    let (i, j) = camera.pixel_index(uv);
    mask.get(i, j)
}

/// Sets each selected vertex's z to the bilinear sample of the mosaic at its
/// projected position. x and y never change; unselected vertices are copied
/// bit-for-bit.
pub fn replace_elevations(
    mesh: &TexturedMesh,
    mosaic: &HeightMosaic,
    mask: &MaskMosaic,
    camera: &OrthoCamera,
    cfg: &RemeshConfig,
) -> Result<(TexturedMesh, ReplaceReport)> {
    cfg.validate()?;
    if (mosaic.width(), mosaic.height()) != (camera.mosaic_width, camera.mosaic_height)
        || (mask.width(), mask.height()) != (camera.mosaic_width, camera.mosaic_height)
    {
        return Err(Error::InvalidArgument("mosaic and mask must match the camera mosaic size".into()));
    }
    let results: Vec<Result<(bool, [f32; 3])>> = par::map_range(mesh.vertex_count(), |i| {
        let p = mesh.position(i);
        let masked = vertex_in_mask(camera, mask, p);
        if !masked && cfg.replace_only_masked {
            return Ok((false, mesh.vertices[i]));
        }
        let uv = project_vertex(camera, p);
        match bilinear_valid(&mosaic.meters, &mosaic.valid, uv[0], uv[1]) {
            Some(z) => Ok((masked, [mesh.vertices[i][0], mesh.vertices[i][1], z as f32])),
            None if masked => Err(Error::Validation(format!(
                "masked vertex {i} at ({:.3}, {:.3}) projects onto pixels without elevation data",
                p[0], p[1]
            ))),
            None => Ok((false, mesh.vertices[i])),
        }
    });
    let mut out = mesh.clone();
    let mut in_mask = Vec::with_capacity(results.len());
    let mut changed = 0;
    for (i, r) in results.into_iter().enumerate() {
        let (m, v) = r?;
        if v != mesh.vertices[i] {
            changed += 1;
        }
        out.vertices[i] = v;
        in_mask.push(m);
    }
    Ok((out, ReplaceReport { in_mask, changed }))
}
