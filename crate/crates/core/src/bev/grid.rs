use serde::{Deserialize, Serialize};

use super::OrthoCamera;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchRect {
    pub row: usize,
    pub col: usize,
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl PatchRect {
    /// Center in continuous mosaic pixel coordinates.
    pub fn center(&self) -> [f64; 2] {
        [
            self.x0 as f64 + self.width as f64 / 2.0,
            self.y0 as f64 + self.height as f64 / 2.0,
        ]
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x0 + self.width && y >= self.y0 && y < self.y0 + self.height
    }

    pub fn id(&self) -> (usize, usize) {
        (self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub patch_px: usize,
    pub overlap_fraction: f64,
    pub stride: usize,
    pub rows: usize,
    pub cols: usize,
    pub mosaic_width: usize,
    pub mosaic_height: usize,
    /// Row-major.
    pub patches: Vec<PatchRect>,
}

impl PatchGrid {
    pub fn get(&self, row: usize, col: usize) -> Option<&PatchRect> {
        (row < self.rows && col < self.cols).then(|| &self.patches[row * self.cols + col])
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Distinct patch origins along x (by column) and y (by row).
    pub fn col_origins(&self) -> Vec<usize> {
        self.patches[..self.cols].iter().map(|p| p.x0).collect()
    }

    pub fn row_origins(&self) -> Vec<usize> {
        (0..self.rows).map(|r| self.patches[r * self.cols].y0).collect()
    }
}

fn axis_origins(mosaic: usize, patch: usize, stride: usize) -> Vec<usize> {
    if mosaic <= patch {
        return vec![0];
    }
    let n = (mosaic - patch).div_ceil(stride) + 1;
    (0..n).map(|k| (k * stride).min(mosaic - patch)).collect()
}

/// Lays out square patches of `patch_px` with the given fractional overlap.
/// The last row/column is shifted inward so every patch stays inside the
/// mosaic at full size; a patch larger than the mosaic is clamped to it.
pub fn make_patch_grid(camera: &OrthoCamera, patch_px: usize, overlap_fraction: f64) -> Result<PatchGrid> {
    if patch_px < 8 {
        return Err(Error::InvalidArgument(format!("patch size must be >= 8 px, got {patch_px}")));
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::InvalidArgument(format!(
            "overlap must lie in [0, 1), got {overlap_fraction}"
        )));
    }
    let stride = ((patch_px as f64 * (1.0 - overlap_fraction)).round() as usize).max(1);
    let (mw, mh) = (camera.mosaic_width, camera.mosaic_height);
    let xs = axis_origins(mw, patch_px, stride);
    let ys = axis_origins(mh, patch_px, stride);
    let (width, height) = (patch_px.min(mw), patch_px.min(mh));
    let mut patches = Vec::with_capacity(xs.len() * ys.len());
    for (row, &y0) in ys.iter().enumerate() {
        for (col, &x0) in xs.iter().enumerate() {
            patches.push(PatchRect {
                row,
                col,
                x0,
                y0,
                width,
                height,
            });
        }
    }
    Ok(PatchGrid {
        patch_px,
        overlap_fraction,
        stride,
        rows: ys.len(),
        cols: xs.len(),
        mosaic_width: mw,
        mosaic_height: mh,
        patches,
    })
}
