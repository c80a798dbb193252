//! Histogram entropy, 1-D earth mover distance and elevation-difference
//! heatmaps for comparing source and inpainted patches.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ColorRaster, Grid, HeightRaster, MaskRaster};
use crate::inpaint::Pass;

pub const BINS: usize = 256;

/// Opacity of the heatmap ramp over the source color.
pub const HEATMAP_OPACITY: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<f64>,
    /// Value range covered by the bins, `[lo, hi)`.
    pub domain: [f64; 2],
}

impl Histogram {
    pub fn new(counts: Vec<f64>, domain: [f64; 2]) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidArgument("a histogram needs at least 2 bins".into()));
        }
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidArgument("histogram counts must be finite and >= 0".into()));
        }
        Ok(Self { counts, domain })
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// Luminance `round(0.299 R + 0.587 G + 0.114 B)`.
#[inline]
pub fn luminance(p: [u8; 3]) -> u8 {
    (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).round() as u8
}

/// 256-bin luminance histogram.
pub fn color_histogram(img: &ColorRaster) -> Histogram {
    let mut counts = vec![0.0; BINS];
    for &p in img.data() {
        counts[luminance(p) as usize] += 1.0;
    }
    Histogram {
        counts,
        domain: [0.0, 256.0],
    }
}

/// 256 equal-width bins over the 16-bit code range, counting only pixels
/// flagged in `valid` when given.
pub fn height_histogram(codes: &HeightRaster, valid: Option<&MaskRaster>) -> Histogram {
    let mut counts = vec![0.0; BINS];
    for (i, &c) in codes.data().iter().enumerate() {
        if valid.is_none_or(|v| v.data()[i]) {
            counts[(c >> 8) as usize] += 1.0;
        }
    }
    Histogram {
        counts,
        domain: [0.0, 65536.0],
    }
}

/// Shannon entropy in bits. An empty histogram has zero entropy.
pub fn shannon_entropy(hist: &Histogram) -> f64 {
    let total = hist.total();
    if total <= 0.0 {
        return 0.0;
    }
    -hist
        .counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Earth mover distance between the unit-mass normalizations of two
/// histograms, in bin widths: the L1 distance between their CDFs.
pub fn emd_1d(source: &Histogram, target: &Histogram) -> Result<f64> {
    if source.counts.len() != target.counts.len() || source.domain != target.domain {
        return Err(Error::InvalidArgument(format!(
            "histograms differ: {} bins over {:?} vs {} bins over {:?}",
            source.counts.len(),
            source.domain,
            target.counts.len(),
            target.domain
        )));
    }
    let (ts, tt) = (source.total(), target.total());
    if ts <= 0.0 || tt <= 0.0 {
        return Err(Error::InvalidArgument("cannot normalize an empty histogram".into()));
    }
    let (mut cs, mut ct, mut acc) = (0.0, 0.0, 0.0);
    for (a, b) in source.counts.iter().zip(&target.counts) {
        cs += a / ts;
        ct += b / tt;
        acc += (cs - ct).abs();
    }
    Ok(acc)
}

/// Monotone black-red-yellow-white ramp.
pub fn hot_ramp(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let ch = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [ch(3.0 * t), ch(3.0 * t - 1.0), ch(3.0 * t - 2.0)]
}

/// Per masked pixel, `|source - inpainted|` divided by the largest masked
/// difference (0 when that is 0). Unmasked pixels are `None`.
pub fn normalized_differences(source: &Grid<f64>, inpainted: &Grid<f64>, mask: &MaskRaster) -> Result<Grid<Option<f64>>> {
    if source.dims() != inpainted.dims() || source.dims() != mask.dims() {
        return Err(Error::InvalidArgument("heatmap inputs must have equal dimensions".into()));
    }
    let diff: Vec<Option<f64>> = (0..source.len())
        .map(|i| mask.data()[i].then(|| (source.data()[i] - inpainted.data()[i]).abs()))
        .collect();
    let max = diff.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    let (w, h) = source.dims();
    Grid::from_vec(
        w,
        h,
        diff.into_iter()
            .map(|d| d.map(|d| if max > 0.0 { d / max } else { 0.0 }))
            .collect(),
    )
}

/// Composites `color` over `base` at the heatmap opacity.
pub fn overlay(base: [u8; 3], color: [u8; 3]) -> [u8; 3] {
    std::array::from_fn(|k| {
        (HEATMAP_OPACITY * color[k] as f64 + (1.0 - HEATMAP_OPACITY) * base[k] as f64).round() as u8
    })
}

/// Normalized elevation differences inside the mask, through [`hot_ramp`]
/// and overlaid on the source color. Pixels outside the mask, and masked
/// pixels whose elevation did not change, show the source color.
pub fn elevation_diff_heatmap(
    source_height: &Grid<f64>,
    inpainted_height: &Grid<f64>,
    mask: &MaskRaster,
    source_color: &ColorRaster,
) -> Result<ColorRaster> {
    if source_color.dims() != mask.dims() {
        return Err(Error::InvalidArgument("heatmap inputs must have equal dimensions".into()));
    }
    let t = normalized_differences(source_height, inpainted_height, mask)?;
    let (w, h) = mask.dims();
    Ok(Grid::from_fn(w, h, |x, y| {
        let src = *source_color.get(x, y);
        match *t.get(x, y) {
            Some(t) if t > 0.0 => overlay(src, hot_ramp(t)),
            _ => src,
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchMetrics {
    pub row: usize,
    pub col: usize,
    pub pass: Pass,
    pub entropy_source: f64,
    pub entropy_inpainted: f64,
    pub emd: f64,
}

impl PatchMetrics {
    pub fn from_histograms(row: usize, col: usize, pass: Pass, source: &Histogram, inpainted: &Histogram) -> Result<Self> {
        Ok(Self {
            row,
            col,
            pass,
            entropy_source: shannon_entropy(source),
            entropy_inpainted: shannon_entropy(inpainted),
            emd: emd_1d(source, inpainted)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassSummary {
    pub pass: Pass,
    pub patches: usize,
    pub mean_entropy_source: f64,
    pub mean_entropy_inpainted: f64,
    pub mean_emd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub patches: Vec<PatchMetrics>,
    pub aggregate: Vec<PassSummary>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    sum / n as f64
}

/// Per-pass arithmetic means over the records.
pub fn aggregate(records: Vec<PatchMetrics>) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no metric records to aggregate".into()));
    }
    let mut summaries = Vec::new();
    for pass in [Pass::Color, Pass::Height] {
        let of_pass: Vec<&PatchMetrics> = records.iter().filter(|r| r.pass == pass).collect();
        if of_pass.is_empty() {
            continue;
        }
        summaries.push(PassSummary {
            pass,
            patches: of_pass.len(),
            mean_entropy_source: mean(of_pass.iter().map(|r| r.entropy_source)),
            mean_entropy_inpainted: mean(of_pass.iter().map(|r| r.entropy_inpainted)),
            mean_emd: mean(of_pass.iter().map(|r| r.emd)),
        });
    }
    Ok(MetricsReport {
        patches: records,
        aggregate: summaries,
    })
}

impl MetricsReport {
    /// Plain-text table: one row per pass, then one row per patch.
    pub fn to_table(&self) -> String {
        let name = |p: Pass| match p {
            Pass::Color => "color",
            Pass::Height => "height",
        };
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>8} {:>12} {:>14} {:>12}", "pass", "patches", "H(source)", "H(inpainted)", "EMD");
        for a in &self.aggregate {
            let _ = writeln!(
                s,
                "{:<8} {:>8} {:>12.4} {:>14.4} {:>12.4}",
                name(a.pass),
                a.patches,
                a.mean_entropy_source,
                a.mean_entropy_inpainted,
                a.mean_emd
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<10} {:<8} {:>12} {:>14} {:>12}", "patch", "pass", "H(source)", "H(inpainted)", "EMD");
        for r in &self.patches {
            let _ = writeln!(
                s,
                "{:<10} {:<8} {:>12.4} {:>14.4} {:>12.4}",
                format!("({}, {})", r.row, r.col),
                name(r.pass),
                r.entropy_source,
                r.entropy_inpainted,
                r.emd
            );
        }
        s
    }
}
