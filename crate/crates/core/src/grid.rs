//! Row-major pixel grids and their PNG encodings.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use image::{ImageBuffer, ImageEncoder, Luma, Rgb};

use crate::error::{Error, Result};

/// A dense row-major 2D grid. Index `(x, y)` with `x` to the east (column)
/// and `y` to the south (row).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type ColorRaster = Grid<[u8; 3]>;
pub type HeightRaster = Grid<u16>;
pub type TriIdRaster = Grid<u32>;
pub type MaskRaster = Grid<bool>;
pub type ClassRaster = Grid<u8>;

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Self {
        assert!(x0 + width <= self.width && y0 + height <= self.height);
        let mut data = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            let row = y * self.width;
            data.extend_from_slice(&self.data[row + x0..row + x0 + width]);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn map<U, F: Fn(&T) -> U>(&self, f: F) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "grid data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn<F: FnMut(usize, usize) -> T>(width: usize, height: usize, mut f: F) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.width.max(1))
    }
}

impl Grid<bool> {
    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(())
}

fn write_png(path: &Path, bytes: &[u8], width: usize, height: usize, color: image::ExtendedColorType) -> Result<()> {
    ensure_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let encoder = image::codecs::png::PngEncoder::new(BufWriter::new(file));
    encoder
        .write_image(bytes, width as u32, height as u32, color)
        .map_err(|e| Error::image(path, e))
}

pub fn save_color_png(raster: &ColorRaster, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = raster.data.iter().flatten().copied().collect();
    write_png(path, &bytes, raster.width, raster.height, image::ExtendedColorType::Rgb8)
}

pub fn save_height_png(raster: &HeightRaster, path: &Path) -> Result<()> {
    // PNG stores 16-bit samples big-endian; the encoder expects native-endian input.
    let bytes: Vec<u8> = raster.data.iter().flat_map(|v| v.to_ne_bytes()).collect();
    write_png(path, &bytes, raster.width, raster.height, image::ExtendedColorType::L16)
}

pub fn save_gray_png(raster: &Grid<u8>, path: &Path) -> Result<()> {
    write_png(path, &raster.data, raster.width, raster.height, image::ExtendedColorType::L8)
}

/// Writes a binary mask as 0/255 grayscale.
pub fn save_mask_png(mask: &MaskRaster, path: &Path) -> Result<()> {
    save_gray_png(&mask.map(|&b| if b { 255 } else { 0 }), path)
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| Error::image(path, e))
}

/// Loads an 8-bit RGB PNG. Any other pixel layout is rejected.
pub fn load_color_png(path: &Path) -> Result<ColorRaster> {
    match open_image(path)? {
        image::DynamicImage::ImageRgb8(img) => Ok(rgb_image_to_raster(&img)),
        other => Err(Error::image(
            path,
            format!("expected 8-bit RGB, found {:?}", other.color()),
        )),
    }
}

/// Loads a 16-bit grayscale PNG. Any other pixel layout is rejected.
pub fn load_height_png(path: &Path) -> Result<HeightRaster> {
    match open_image(path)? {
        image::DynamicImage::ImageLuma16(img) => {
            let (w, h) = img.dimensions();
            Grid::from_vec(w as usize, h as usize, img.into_raw())
        }
        other => Err(Error::image(
            path,
            format!("expected 16-bit grayscale, found {:?}", other.color()),
        )),
    }
}

/// Loads an 8-bit single channel PNG.
pub fn load_gray_png(path: &Path) -> Result<Grid<u8>> {
    match open_image(path)? {
        image::DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            Grid::from_vec(w as usize, h as usize, img.into_raw())
        }
        other => Err(Error::image(
            path,
            format!("expected 8-bit grayscale, found {:?}", other.color()),
        )),
    }
}

/// Loads a 0/255 mask; any non-zero sample counts as set.
pub fn load_mask_png(path: &Path) -> Result<MaskRaster> {
    Ok(load_gray_png(path)?.map(|&v| v != 0))
}

pub fn rgb_image_to_raster(img: &ImageBuffer<Rgb<u8>, Vec<u8>>) -> ColorRaster {
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0).collect();
    Grid {
        width: w as usize,
        height: h as usize,
        data,
    }
}

pub fn raster_to_rgb_image(raster: &ColorRaster) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
    let bytes: Vec<u8> = raster.data.iter().flatten().copied().collect();
    ImageBuffer::from_raw(raster.width as u32, raster.height as u32, bytes)
        .expect("raster length matches dimensions")
}

pub fn gray_to_image(raster: &Grid<u8>) -> ImageBuffer<Luma<u8>, Vec<u8>> {
    ImageBuffer::from_raw(raster.width as u32, raster.height as u32, raster.data.clone())
        .expect("raster length matches dimensions")
}

/// Tri-id grid file: 8-byte little-endian header (width, height as u32)
/// followed by `width * height` little-endian u32 samples.
pub fn save_tri_id(raster: &TriIdRaster, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let mut bytes = Vec::with_capacity(8 + raster.len() * 4);
    bytes.extend_from_slice(&(raster.width as u32).to_le_bytes());
    bytes.extend_from_slice(&(raster.height as u32).to_le_bytes());
    for v in &raster.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_tri_id(path: &Path) -> Result<TriIdRaster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!("{}: truncated tri-id header", path.display()),
        });
    }
    let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let expected = 8 + width * height * 4;
    if bytes.len() != expected {
        return Err(Error::Parse {
            offset: bytes.len().min(expected),
            message: format!(
                "{}: expected {expected} bytes for {width}x{height} tri-id grid, found {}",
                path.display(),
                bytes.len()
            ),
        });
    }
    let data = bytes[8..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Grid {
        width,
        height,
        data,
    })
}
