//! Occluder masks: class filtering, dilation, cross-patch merging in mosaic
//! space and OR-downsampling for coarser levels of detail.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bev::PatchRect;
use crate::error::{Error, Result};
use crate::grid::{self, ClassRaster, Grid, MaskRaster};
use crate::par;

/// Class-id to name table plus the names selected for removal. Id 0 is
/// background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTable {
    classes: BTreeMap<u8, String>,
    selected: BTreeSet<String>,
}

impl Default for ClassTable {
    fn default() -> Self {
        Self::new(
            [(1, "vehicle".to_string()), (2, "vessel".to_string())].into(),
            ["vehicle".to_string(), "vessel".to_string()],
        )
        .expect("default class table is valid")
    }
}

impl ClassTable {
    pub fn new(classes: BTreeMap<u8, String>, selected: impl IntoIterator<Item = String>) -> Result<Self> {
        if classes.contains_key(&0) {
            return Err(Error::InvalidArgument("class id 0 is reserved for background".into()));
        }
        let selected: BTreeSet<String> = selected.into_iter().collect();
        let names: BTreeSet<&String> = classes.values().collect();
        if let Some(missing) = selected.iter().find(|s| !names.contains(s)) {
            return Err(Error::InvalidArgument(format!(
                "selected class `{missing}` is not in the class table ({})",
                classes.values().cloned().collect::<Vec<_>>().join(", ")
            )));
        }
        Ok(Self { classes, selected })
    }

    pub fn classes(&self) -> &BTreeMap<u8, String> {
        &self.classes
    }

    pub fn selected(&self) -> &BTreeSet<String> {
        &self.selected
    }

    pub fn with_selected(&self, selected: impl IntoIterator<Item = String>) -> Result<Self> {
        Self::new(self.classes.clone(), selected)
    }

    pub fn id_of(&self, name: &str) -> Option<u8> {
        self.classes.iter().find(|(_, n)| *n == name).map(|(&id, _)| id)
    }

    pub fn is_selected(&self, id: u8) -> bool {
        self.classes.get(&id).is_some_and(|n| self.selected.contains(n))
    }
}

/// Turns a class-id raster into a binary occluder mask.
pub fn classify(raster: &ClassRaster, classes: &ClassTable) -> Result<MaskRaster> {
    let mut lut = [false; 256];
    let mut known = [false; 256];
    known[0] = true;
    for &id in classes.classes.keys() {
        known[id as usize] = true;
        lut[id as usize] = classes.is_selected(id);
    }
    let unknown: BTreeSet<u8> = raster.data().iter().copied().filter(|&v| !known[v as usize]).collect();
    if !unknown.is_empty() {
        return Err(Error::Mask(format!(
            "unknown class ids {:?}",
            unknown.into_iter().collect::<Vec<_>>()
        )));
    }
    Ok(raster.map(|&v| lut[v as usize]))
}

/// Reads an 8-bit class-id PNG for one patch and filters it by the selected
/// classes.
pub fn ingest_patch_mask(path: &Path, classes: &ClassTable, rect: &PatchRect) -> Result<MaskRaster> {
    let raster = grid::load_gray_png(path)?;
    if raster.dims() != (rect.width, rect.height) {
        return Err(Error::Mask(format!(
            "mask for patch ({}, {}) is {}x{} but the patch is {}x{}",
            rect.row,
            rect.col,
            raster.width(),
            raster.height(),
            rect.width,
            rect.height
        )));
    }
    classify(&raster, classes).map_err(|e| match e {
        Error::Mask(m) => Error::Mask(format!("patch ({}, {}): {m}", rect.row, rect.col)),
        e => e,
    })
}

/// Running OR over a window of `2 * radius + 1` along one axis, via prefix
/// counts.
fn dilate_line(src: impl Iterator<Item = bool>, len: usize, radius: usize, out: &mut [bool]) {
    let mut prefix = Vec::with_capacity(len + 1);
    prefix.push(0u32);
    for b in src {
        prefix.push(prefix.last().unwrap() + b as u32);
    }
    for (i, o) in out.iter_mut().enumerate() {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius + 1).min(len);
        *o = prefix[hi] > prefix[lo];
    }
}

/// Binary dilation with a `kernel_px` x `kernel_px` square structuring
/// element centered on each pixel. Pixels outside the raster are background.
pub fn dilate(mask: &MaskRaster, kernel_px: usize) -> Result<MaskRaster> {
    if kernel_px == 0 || kernel_px.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "dilation kernel must be odd and >= 1, got {kernel_px}"
        )));
    }
    let r = kernel_px / 2;
    let (w, h) = mask.dims();
    if r == 0 || w == 0 || h == 0 {
        return Ok(mask.clone());
    }
    // Square element is separable: rows, then columns.
    let mut horizontal = vec![false; w * h];
    par::for_each_chunk_mut(&mut horizontal, w, |y, row| {
        dilate_line(mask.data()[y * w..(y + 1) * w].iter().copied(), w, r, row);
    });
    let columns: Vec<Vec<bool>> = par::map_range(w, |x| {
        let mut col = vec![false; h];
        dilate_line((0..h).map(|y| horizontal[y * w + x]), h, r, &mut col);
        col
    });
    Ok(Grid::from_fn(w, h, |x, y| columns[x][y]))
}

/// Full-extent 1-bit occluder field in mosaic pixel space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMosaic {
    width: usize,
    height: usize,
    bits: BitVec,
}

impl MaskMosaic {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: bitvec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.not_any()
    }

    /// OR of two mosaics of equal size.
    pub fn union(&mut self, other: &MaskMosaic) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.bits |= other.bits.as_bitslice();
    }

    pub fn to_raster(&self) -> MaskRaster {
        Grid::from_fn(self.width, self.height, |x, y| self.get(x, y))
    }

    pub fn from_raster(mask: &MaskRaster) -> Self {
        let mut m = Self::new(mask.width(), mask.height());
        for (i, &b) in mask.data().iter().enumerate() {
            if b {
                m.bits.set(i, true);
            }
        }
        m
    }

    fn check_rect(&self, rect: &PatchRect) -> Result<()> {
        if rect.x0 + rect.width > self.width || rect.y0 + rect.height > self.height {
            return Err(Error::InvalidArgument(format!(
                "patch ({}, {}) at ({}, {}) size {}x{} exceeds the {}x{} mosaic",
                rect.row, rect.col, rect.x0, rect.y0, rect.width, rect.height, self.width, self.height
            )));
        }
        Ok(())
    }
}

/// ORs a patch mask into the mosaic at `rect`.
pub fn merge_into_mosaic(mosaic: &mut MaskMosaic, patch_mask: &MaskRaster, rect: &PatchRect) -> Result<()> {
    mosaic.check_rect(rect)?;
    if patch_mask.dims() != (rect.width, rect.height) {
        return Err(Error::InvalidArgument(format!(
            "patch mask is {}x{} but rect is {}x{}",
            patch_mask.width(),
            patch_mask.height(),
            rect.width,
            rect.height
        )));
    }
    for y in 0..rect.height {
        let row = (rect.y0 + y) * mosaic.width + rect.x0;
        for (x, &b) in patch_mask.data()[y * rect.width..(y + 1) * rect.width].iter().enumerate() {
            if b {
                mosaic.bits.set(row + x, true);
            }
        }
    }
    Ok(())
}

/// Crops the mosaic to `rect`.
pub fn extract_patch_mask(mosaic: &MaskMosaic, rect: &PatchRect) -> Result<MaskRaster> {
    mosaic.check_rect(rect)?;
    Ok(Grid::from_fn(rect.width, rect.height, |x, y| {
        mosaic.get(rect.x0 + x, rect.y0 + y)
    }))
}

/// OR-pooling by a power-of-two factor. Partial blocks at the right/bottom
/// edge produce an output pixel too, so no occluder is ever dropped.
pub fn downsample_mask(mask: &MaskRaster, factor: usize) -> Result<MaskRaster> {
    if factor < 2 || !factor.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "downsample factor must be a power of two >= 2, got {factor}"
        )));
    }
    let (w, h) = mask.dims();
    let (ow, oh) = (w.div_ceil(factor), h.div_ceil(factor));
    let mut out = Grid::filled(ow, oh, false);
    for y in 0..h {
        for x in 0..w {
            if *mask.get(x, y) {
                out.set(x / factor, y / factor, true);
            }
        }
    }
    Ok(out)
}
