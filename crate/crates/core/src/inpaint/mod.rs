//! Filling masked pixels of color and height rasters.
//!
//! Two built-in backends are provided, a harmonic (membrane) fill and an
//! exemplar copy fill, plus an adapter that hands PNG files to an external
//! program. Whatever the backend returns, unmasked pixels of the result are
//! restored from the input.

mod exemplar;
mod external;
mod harmonic;

use serde::{Deserialize, Serialize};

use crate::bev::HeightCodec;
use crate::error::{Error, Result};
use crate::grid::{self, ColorRaster, Grid, HeightRaster, MaskRaster};

pub use exemplar::{exemplar_fill, exemplar_fill_scalar, ExemplarParams};
pub use external::{run_external_backend, ExpectedOutput, ExternalImage, ExternalParams};
pub use harmonic::{harmonic_fill, harmonic_fill_with_validity, HarmonicOutput, HarmonicParams, HarmonicStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pass {
    Color,
    Height,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    Harmonic(HarmonicParams),
    Exemplar(ExemplarParams),
    External(ExternalParams),
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec::Harmonic(HarmonicParams::default())
    }
}

impl BackendSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            BackendSpec::Harmonic(p) => p.validate(),
            BackendSpec::Exemplar(p) => p.validate(),
            BackendSpec::External(p) => p.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BackendSpec::Harmonic(_) => "harmonic",
            BackendSpec::Exemplar(_) => "exemplar",
            BackendSpec::External(_) => "external",
        }
    }
}

/// Codec-encoded heights with per-pixel validity.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightImage {
    pub codes: HeightRaster,
    pub valid: MaskRaster,
    pub codec: HeightCodec,
}

impl HeightImage {
    pub fn decode(&self) -> Grid<f64> {
        self.codes.map(|&c| self.codec.decode(c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InpaintImage {
    Color(ColorRaster),
    Height(HeightImage),
}

impl InpaintImage {
    pub fn pass(&self) -> Pass {
        match self {
            InpaintImage::Color(_) => Pass::Color,
            InpaintImage::Height(_) => Pass::Height,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            InpaintImage::Color(c) => c.dims(),
            InpaintImage::Height(h) => h.codes.dims(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InpaintRequest<'a> {
    pub image: &'a InpaintImage,
    pub mask: &'a MaskRaster,
    pub backend: &'a BackendSpec,
}

impl InpaintRequest<'_> {
    pub fn validate(&self) -> Result<()> {
        self.backend.validate()?;
        let dims = self.image.dims();
        if dims != self.mask.dims() {
            return Err(Error::InvalidArgument(format!(
                "image is {}x{} but mask is {}x{}",
                dims.0,
                dims.1,
                self.mask.width(),
                self.mask.height()
            )));
        }
        if let InpaintImage::Height(h) = self.image {
            if h.valid.dims() != dims {
                return Err(Error::InvalidArgument("height validity raster has wrong dimensions".into()));
            }
            if let Some(i) = (0..h.valid.len()).find(|&i| self.mask.data()[i] && !h.valid.data()[i]) {
                return Err(Error::Inpaint(format!(
                    "masked pixel ({}, {}) has no elevation data",
                    i % dims.0,
                    i / dims.0
                )));
            }
        }
        Ok(())
    }
}

/// Runs one inpainting pass. Heights are filled in decoded meters and
/// re-encoded; masked height pixels become valid.
pub fn inpaint(req: &InpaintRequest) -> Result<InpaintImage> {
    req.validate()?;
    let mask = req.mask;
    if !mask.any() {
        return Ok(req.image.clone());
    }
    let filled = match (req.image, req.backend) {
        (InpaintImage::Color(img), BackendSpec::Harmonic(p)) => InpaintImage::Color(harmonic_color(img, mask, p)?),
        (InpaintImage::Height(img), BackendSpec::Harmonic(p)) => {
            let meters = img.decode();
            let tol = p.tolerance * img.codec.quantum();
            let out = harmonic_fill_with_validity(&meters, mask, Some(&img.valid), tol, p.max_iterations)?;
            InpaintImage::Height(encode_filled(img, &out.image))
        }
        (InpaintImage::Color(img), BackendSpec::Exemplar(p)) => InpaintImage::Color(exemplar_fill(img, mask, p)?),
        (InpaintImage::Height(img), BackendSpec::Exemplar(p)) => {
            let out = exemplar_fill_scalar(&img.decode(), mask, Some(&img.valid), p)?;
            InpaintImage::Height(encode_filled(img, &out))
        }
        (image, BackendSpec::External(p)) => external_pass(image, mask, p)?,
    };
    Ok(composite(req.image, filled, mask))
}

fn harmonic_color(img: &ColorRaster, mask: &MaskRaster, p: &HarmonicParams) -> Result<ColorRaster> {
    let channels = crate::par::map_range(3, |c| {
        let plane = img.map(|px| px[c] as f64);
        harmonic_fill(&plane, mask, p.tolerance, p.max_iterations)
    });
    let channels = channels.into_iter().collect::<Result<Vec<_>>>()?;
    let (w, h) = img.dims();
    Ok(Grid::from_fn(w, h, |x, y| {
        std::array::from_fn(|c| channels[c].image.get(x, y).round().clamp(0.0, 255.0) as u8)
    }))
}

fn encode_filled(img: &HeightImage, meters: &Grid<f64>) -> HeightImage {
    HeightImage {
        codes: meters.map(|&z| img.codec.encode(z)),
        valid: img.valid.clone(),
        codec: img.codec,
    }
}

fn external_pass(image: &InpaintImage, mask: &MaskRaster, p: &ExternalParams) -> Result<InpaintImage> {
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let (w, h) = image.dims();
    let (img_path, mask_path, out_path) = (
        dir.path().join("image.png"),
        dir.path().join("mask.png"),
        dir.path().join("out.png"),
    );
    grid::save_mask_png(mask, &mask_path)?;
    let expected = match image {
        InpaintImage::Color(c) => {
            grid::save_color_png(c, &img_path)?;
            ExpectedOutput::Rgb8 { width: w, height: h }
        }
        InpaintImage::Height(hi) => {
            grid::save_height_png(&hi.codes, &img_path)?;
            ExpectedOutput::L16 { width: w, height: h }
        }
    };
    Ok(match (run_external_backend(p, &img_path, &mask_path, &out_path, expected)?, image) {
        (ExternalImage::Color(c), _) => InpaintImage::Color(c),
        (ExternalImage::Height(codes), InpaintImage::Height(hi)) => InpaintImage::Height(HeightImage {
            codes,
            valid: hi.valid.clone(),
            codec: hi.codec,
        }),
        (ExternalImage::Height(_), InpaintImage::Color(_)) => unreachable!("expected RGB output"),
    })
}

/// Restores every unmasked pixel from `original`.
fn composite(original: &InpaintImage, filled: InpaintImage, mask: &MaskRaster) -> InpaintImage {
    fn keep<T: Copy>(orig: &Grid<T>, mut out: Grid<T>, mask: &MaskRaster) -> Grid<T> {
        for ((o, &src), &m) in out.data_mut().iter_mut().zip(orig.data()).zip(mask.data()) {
            if !m {
                *o = src;
            }
        }
        out
    }
    match (original, filled) {
        (InpaintImage::Color(o), InpaintImage::Color(f)) => InpaintImage::Color(keep(o, f, mask)),
        (InpaintImage::Height(o), InpaintImage::Height(f)) => InpaintImage::Height(HeightImage {
            codes: keep(&o.codes, f.codes, mask),
            valid: o.valid.clone(),
            codec: o.codec,
        }),
        _ => unreachable!("backends preserve the pass"),
    }
}
