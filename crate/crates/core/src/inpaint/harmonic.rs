use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, MaskRaster};

const SKIP: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarmonicParams {
    /// Max-residual stopping threshold, in quantization steps of the raster
    /// being filled.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for HarmonicParams {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            max_iterations: 10_000,
        }
    }
}

impl HarmonicParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "harmonic tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("harmonic max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicStats {
    pub iterations: usize,
    /// Final max-norm residual, in the raster's units.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicOutput {
    pub image: Grid<f64>,
    pub stats: HarmonicStats,
}

#[inline]
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    m.clamp(0, n - 1) as usize
}

/// Solves the discrete Laplace equation over the masked pixels of `image`,
/// with unmasked pixels as Dirichlet data and mirrored raster borders.
/// `tolerance` is in the raster's own units.
pub fn harmonic_fill(image: &Grid<f64>, mask: &MaskRaster, tolerance: f64, max_iterations: usize) -> Result<HarmonicOutput> {
    harmonic_fill_with_validity(image, mask, None, tolerance, max_iterations)
}

/// As [`harmonic_fill`], but unmasked pixels that are not `valid` carry no
/// data and are left out of every neighbour mean.
pub fn harmonic_fill_with_validity(
    image: &Grid<f64>,
    mask: &MaskRaster,
    valid: Option<&MaskRaster>,
    tolerance: f64,
    max_iterations: usize,
) -> Result<HarmonicOutput> {
    if image.dims() != mask.dims() || valid.is_some_and(|v| v.dims() != mask.dims()) {
        return Err(Error::InvalidArgument("image, mask and validity dimensions differ".into()));
    }
    HarmonicParams {
        tolerance,
        max_iterations,
    }
    .validate()?;
    let (w, h) = image.dims();
    let masked = mask.data();
    let known: Vec<bool> = (0..w * h)
        .map(|i| !masked[i] && valid.is_none_or(|v| v.data()[i]))
        .collect();

    let components = label_components(mask);
    let mut bounds = Vec::with_capacity(components.len());
    let mut extent = 1usize;
    for comp in &components {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
        for &i in comp {
            let (x, y) = (i % w, i / w);
            (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x), y1.max(y));
            for j in neighbours4(x, y, w, h).into_iter().flatten() {
                if known[j] {
                    lo = lo.min(image.data()[j]);
                    hi = hi.max(image.data()[j]);
                }
            }
        }
        if lo > hi {
            let i = comp[0];
            return Err(Error::Inpaint(format!(
                "masked region of {} pixels containing ({}, {}) has no known neighbouring pixel",
                comp.len(),
                i % w,
                i / w
            )));
        }
        extent = extent.max(x1 - x0 + 1).max(y1 - y0 + 1);
        bounds.push((lo, hi));
    }

    let mut values = image.data().to_vec();
    if components.is_empty() {
        return Ok(HarmonicOutput {
            image: image.clone(),
            stats: HarmonicStats {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        });
    }
    onion_peel_init(&mut values, &known, masked, w, h);

    // Red-black ordering; each cell lists its mirrored neighbours that carry
    // data (masked cells always do once initialized).
    let mut colored: [Vec<(usize, [usize; 4])>; 2] = [Vec::new(), Vec::new()];
    for comp in &components {
        for &i in comp {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            let mut nb = [SKIP; 4];
            for (k, (dx, dy)) in [(-1, 0), (1, 0), (0, -1), (0, 1)].into_iter().enumerate() {
                let j = mirror(y + dy, h) * w + mirror(x + dx, w);
                if masked[j] || known[j] {
                    nb[k] = j;
                }
            }
            colored[((x + y) % 2) as usize].push((i, nb));
        }
    }
    for list in &mut colored {
        list.sort_unstable_by_key(|c| c.0);
    }

    // Over-relaxation tuned to the largest masked extent.
    let omega = 2.0 / (1.0 + (std::f64::consts::PI / (extent as f64 + 1.0)).sin());
    let mut stats = HarmonicStats {
        iterations: 0,
        residual: f64::INFINITY,
        converged: false,
    };
    for it in 1..=max_iterations {
        let mut max_r: f64 = 0.0;
        for list in &colored {
            for (i, nb) in list {
                let r = neighbour_mean(&values, nb) - values[*i];
                max_r = max_r.max(r.abs());
                values[*i] += omega * r;
            }
        }
        stats.iterations = it;
        if max_r < tolerance {
            let true_r = residual(&values, &colored);
            stats.residual = true_r;
            if true_r < tolerance {
                stats.converged = true;
                break;
            }
        }
    }
    if !stats.converged {
        stats.residual = residual(&values, &colored);
        log::warn!(
            "harmonic fill stopped after {} iterations with residual {:.3e} (tolerance {:.3e})",
            stats.iterations,
            stats.residual,
            tolerance
        );
    }
    for (comp, (lo, hi)) in components.iter().zip(bounds) {
        for &i in comp {
            values[i] = values[i].clamp(lo, hi);
        }
    }
    Ok(HarmonicOutput {
        image: Grid::from_vec(w, h, values)?,
        stats,
    })
}

#[inline]
fn neighbour_mean(values: &[f64], nb: &[usize; 4]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0.0;
    for &j in nb {
        if j != SKIP {
            sum += values[j];
            n += 1.0;
        }
    }
    sum / n
}

fn residual(values: &[f64], colored: &[Vec<(usize, [usize; 4])>; 2]) -> f64 {
    colored
        .iter()
        .flatten()
        .map(|(i, nb)| (neighbour_mean(values, nb) - values[*i]).abs())
        .fold(0.0, f64::max)
}

fn neighbours4(x: usize, y: usize, w: usize, h: usize) -> [Option<usize>; 4] {
    [
        (x > 0).then(|| y * w + x - 1),
        (x + 1 < w).then(|| y * w + x + 1),
        (y > 0).then(|| (y - 1) * w + x),
        (y + 1 < h).then(|| (y + 1) * w + x),
    ]
}

/// 4-connected components of the mask, each as ascending pixel indices,
/// ordered by their first pixel.
pub(crate) fn label_components(mask: &MaskRaster) -> Vec<Vec<usize>> {
    let (w, h) = mask.dims();
    let m = mask.data();
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if !m[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut head = 0;
        while head < comp.len() {
            let i = comp[head];
            head += 1;
            for j in neighbours4(i % w, i / w, w, h).into_iter().flatten() {
                if m[j] && !seen[j] {
                    seen[j] = true;
                    comp.push(j);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Fills masked pixels layer by layer from the known boundary inward, each
/// with the mean of its already-available neighbours.
fn onion_peel_init(values: &mut [f64], known: &[bool], masked: &[bool], w: usize, h: usize) {
    let mut avail = known.to_vec();
    let mut pending: Vec<usize> = (0..w * h).filter(|&i| masked[i]).collect();
    while !pending.is_empty() {
        let mut layer = Vec::new();
        let mut rest = Vec::new();
        for &i in &pending {
            let mut sum = 0.0;
            let mut n = 0usize;
            for j in neighbours4(i % w, i / w, w, h).into_iter().flatten() {
                if avail[j] {
                    sum += values[j];
                    n += 1;
                }
            }
            if n > 0 {
                layer.push((i, sum / n as f64));
            } else {
                rest.push(i);
            }
        }
        if layer.is_empty() {
            break;
        }
        for (i, v) in layer {
            values[i] = v;
            avail[i] = true;
        }
        pending = rest;
    }
}
