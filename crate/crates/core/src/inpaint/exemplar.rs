use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ColorRaster, Grid, MaskRaster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExemplarParams {
    /// Odd window side length.
    pub patch_px: usize,
    /// Random candidates tried per pixel when the search is not exhaustive.
    pub search_iterations: usize,
    pub seed: u64,
    /// Source windows up to this count are searched exhaustively.
    pub exhaustive_limit: usize,
}

impl Default for ExemplarParams {
    fn default() -> Self {
        Self {
            patch_px: 7,
            search_iterations: 64,
            seed: 0,
            exhaustive_limit: 4096,
        }
    }
}

impl ExemplarParams {
    pub fn validate(&self) -> Result<()> {
        if self.patch_px < 3 || self.patch_px.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "exemplar patch_px must be odd and >= 3, got {}",
                self.patch_px
            )));
        }
        Ok(())
    }
}

/// Multi-channel raster stored pixel-interleaved.
struct Planar<'a> {
    data: &'a mut [f64],
    w: usize,
    h: usize,
    c: usize,
}

/// Exemplar fill of an RGB raster over full-color windows.
pub fn exemplar_fill(image: &ColorRaster, mask: &MaskRaster, params: &ExemplarParams) -> Result<ColorRaster> {
    let (w, h) = image.dims();
    let mut data: Vec<f64> = image.data().iter().flat_map(|p| p.map(f64::from)).collect();
    exemplar_fill_planar(&mut data, w, h, 3, mask, None, params)?;
    Ok(Grid::from_fn(w, h, |x, y| {
        let i = (y * w + x) * 3;
        [data[i] as u8, data[i + 1] as u8, data[i + 2] as u8]
    }))
}

/// Exemplar fill of a single-channel raster. Unmasked pixels outside `valid`
/// carry no data: they are never copied and never compared.
pub fn exemplar_fill_scalar(
    image: &Grid<f64>,
    mask: &MaskRaster,
    valid: Option<&MaskRaster>,
    params: &ExemplarParams,
) -> Result<Grid<f64>> {
    let (w, h) = image.dims();
    let mut data = image.data().to_vec();
    exemplar_fill_planar(&mut data, w, h, 1, mask, valid, params)?;
    Grid::from_vec(w, h, data)
}

fn exemplar_fill_planar(
    data: &mut [f64],
    w: usize,
    h: usize,
    c: usize,
    mask: &MaskRaster,
    valid: Option<&MaskRaster>,
    params: &ExemplarParams,
) -> Result<()> {
    params.validate()?;
    if mask.dims() != (w, h) || valid.is_some_and(|v| v.dims() != (w, h)) {
        return Err(Error::InvalidArgument("image, mask and validity dimensions differ".into()));
    }
    let masked = mask.data();
    if !masked.iter().any(|&m| m) {
        return Ok(());
    }
    if masked.iter().all(|&m| m) {
        return Err(Error::Inpaint("mask covers the entire image".into()));
    }
    let mut known: Vec<bool> = (0..w * h)
        .map(|i| !masked[i] && valid.is_none_or(|v| v.data()[i]))
        .collect();

    let r = params.patch_px / 2;
    let sources = source_centers(&known, w, h, r);
    if sources.is_empty() {
        return Err(Error::Inpaint(format!(
            "no fully known {0}x{0} source window in a {w}x{h} image",
            params.patch_px
        )));
    }
    let img = Planar { data, w, h, c };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    // Chosen source per filled pixel, used for propagation.
    let mut nnf: Vec<Option<(usize, usize)>> = vec![None; w * h];
    let exhaustive = sources.len() <= params.exhaustive_limit;
    let is_source = {
        let mut s = vec![false; w * h];
        for &(x, y) in &sources {
            s[y * w + x] = true;
        }
        s
    };

    let mut pending: Vec<usize> = (0..w * h).filter(|&i| masked[i]).collect();
    while !pending.is_empty() {
        let (layer, rest): (Vec<usize>, Vec<usize>) = pending.iter().partition(|&&i| {
            let (x, y) = (i % w, i / w);
            [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
            ]
            .into_iter()
            .flatten()
            .any(|j| known[j])
        });
        if layer.is_empty() {
            let i = rest[0];
            return Err(Error::Inpaint(format!(
                "masked pixel ({}, {}) is not connected to any known pixel",
                i % w,
                i / w
            )));
        }
        for t in layer {
            let (tx, ty) = (t % w, t / w);
            let best = if exhaustive {
                search_exhaustive(&img, &known, tx, ty, r, &sources)
            } else {
                search_randomized(&img, &known, &nnf, &is_source, tx, ty, r, &sources, params, &mut rng)
            };
            let s = best.1 * w + best.0;
            for k in 0..c {
                img.data[t * c + k] = img.data[s * c + k];
            }
            known[t] = true;
            nnf[t] = Some(best);
        }
        pending = rest;
    }
    Ok(())
}

/// Centers of windows lying fully inside the raster with every pixel known.
fn source_centers(known: &[bool], w: usize, h: usize, r: usize) -> Vec<(usize, usize)> {
    let p = 2 * r + 1;
    if w < p || h < p {
        return Vec::new();
    }
    // Summed-area table of unknown pixels.
    let mut sat = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0;
        for x in 0..w {
            row += (!known[y * w + x]) as u32;
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    let mut out = Vec::new();
    for cy in r..h - r {
        for cx in r..w - r {
            let (x0, y0, x1, y1) = (cx - r, cy - r, cx + r + 1, cy + r + 1);
            let bad = sat[y1 * (w + 1) + x1] + sat[y0 * (w + 1) + x0] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0];
            if bad == 0 {
                out.push((cx, cy));
            }
        }
    }
    out
}

/// Sum of squared differences over the target window's known pixels. Stops
/// early once `limit` is exceeded.
fn ssd(img: &Planar, known: &[bool], tx: usize, ty: usize, sx: usize, sy: usize, r: usize, limit: f64) -> f64 {
    let r = r as isize;
    let mut acc = 0.0;
    for dy in -r..=r {
        let ty2 = ty as isize + dy;
        if ty2 < 0 || ty2 >= img.h as isize {
            continue;
        }
        let sy2 = (sy as isize + dy) as usize;
        for dx in -r..=r {
            let tx2 = tx as isize + dx;
            if tx2 < 0 || tx2 >= img.w as isize {
                continue;
            }
            let ti = ty2 as usize * img.w + tx2 as usize;
            if !known[ti] {
                continue;
            }
            let si = sy2 * img.w + (sx as isize + dx) as usize;
            for k in 0..img.c {
                let d = img.data[ti * img.c + k] - img.data[si * img.c + k];
                acc += d * d;
            }
        }
        if acc > limit {
            return acc;
        }
    }
    acc
}

fn search_exhaustive(img: &Planar, known: &[bool], tx: usize, ty: usize, r: usize, sources: &[(usize, usize)]) -> (usize, usize) {
    let mut best = sources[0];
    let mut best_d = f64::INFINITY;
    for &(sx, sy) in sources {
        let d = ssd(img, known, tx, ty, sx, sy, r, best_d);
        if d < best_d {
            best_d = d;
            best = (sx, sy);
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn search_randomized(
    img: &Planar,
    known: &[bool],
    nnf: &[Option<(usize, usize)>],
    is_source: &[bool],
    tx: usize,
    ty: usize,
    r: usize,
    sources: &[(usize, usize)],
    params: &ExemplarParams,
    rng: &mut ChaCha8Rng,
) -> (usize, usize) {
    let (w, h) = (img.w as isize, img.h as isize);
    let valid_source = |x: isize, y: isize| x >= 0 && y >= 0 && x < w && y < h && is_source[(y * w + x) as usize];
    let mut best = sources[rng.random_range(0..sources.len())];
    let mut best_d = ssd(img, known, tx, ty, best.0, best.1, r, f64::INFINITY);
    let consider = |c: (usize, usize), best: &mut (usize, usize), best_d: &mut f64| {
        let d = ssd(img, known, tx, ty, c.0, c.1, r, *best_d);
        if d < *best_d || (d == *best_d && (c.1, c.0) < (best.1, best.0)) {
            *best_d = d;
            *best = c;
        }
    };
    // Propagation: shift the matches of filled neighbours.
    for (dx, dy) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
        let (nx, ny) = (tx as isize + dx, ty as isize + dy);
        if nx < 0 || ny < 0 || nx >= w || ny >= h {
            continue;
        }
        if let Some((sx, sy)) = nnf[(ny * w + nx) as usize] {
            let (cx, cy) = (sx as isize - dx, sy as isize - dy);
            if valid_source(cx, cy) {
                consider((cx as usize, cy as usize), &mut best, &mut best_d);
            }
        }
    }
    for _ in 0..params.search_iterations {
        consider(sources[rng.random_range(0..sources.len())], &mut best, &mut best_d);
    }
    // Local refinement with a shrinking radius.
    let mut radius = w.max(h) / 2;
    while radius >= 1 {
        let cx = best.0 as isize + rng.random_range(-(radius as i64)..=radius as i64) as isize;
        let cy = best.1 as isize + rng.random_range(-(radius as i64)..=radius as i64) as isize;
        if valid_source(cx, cy) {
            consider((cx as usize, cy as usize), &mut best, &mut best_d);
        }
        radius /= 2;
    }
    best
}
