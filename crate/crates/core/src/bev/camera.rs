use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::WorldBounds;

/// Linear 16-bit quantization of elevation over a fixed z-range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightCodec {
    pub z_min: f64,
    pub z_max: f64,
}

impl HeightCodec {
    pub const LEVELS: f64 = 65535.0;

    pub fn new(z_min: f64, z_max: f64) -> Result<Self> {
        if !(z_min.is_finite() && z_max.is_finite()) || z_max <= z_min {
            return Err(Error::InvalidArgument(format!(
                "height codec needs z_max > z_min, got [{z_min}, {z_max}]"
            )));
        }
        Ok(Self { z_min, z_max })
    }

    /// Codec over `[lo, hi]` widened by one quantum on each side. A flat
    /// range is widened to one meter first.
    pub fn padded(lo: f64, hi: f64) -> Result<Self> {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let q = (hi - lo) / (Self::LEVELS - 2.0);
        Self::new(lo - q, hi + q)
    }

    /// Size of one code step in meters.
    #[inline]
    pub fn quantum(&self) -> f64 {
        (self.z_max - self.z_min) / Self::LEVELS
    }

    #[inline]
    pub fn encode(&self, z: f64) -> u16 {
        let t = (z - self.z_min) / (self.z_max - self.z_min) * Self::LEVELS;
        t.clamp(0.0, Self::LEVELS).round() as u16
    }

    #[inline]
    pub fn decode(&self, code: u16) -> f64 {
        self.z_min + code as f64 * (self.z_max - self.z_min) / Self::LEVELS
    }
}

/// Orthographic top-down camera. `(origin_x, origin_y)` is the world
/// position of the north-west corner of pixel (0, 0); pixel `(i, j)` has its
/// center at continuous coordinate `(i + 0.5, j + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthoCamera {
    pub origin_x: f64,
    pub origin_y: f64,
    pub gsd: f64,
    pub mosaic_width: usize,
    pub mosaic_height: usize,
    pub height_codec: HeightCodec,
}

impl OrthoCamera {
    /// Continuous pixel coordinate of a world point.
    #[inline]
    pub fn world_to_pixel(&self, x: f64, y: f64) -> [f64; 2] {
        [(x - self.origin_x) / self.gsd, (self.origin_y - y) / self.gsd]
    }

    #[inline]
    pub fn pixel_to_world(&self, u: f64, v: f64) -> [f64; 2] {
        [self.origin_x + u * self.gsd, self.origin_y - v * self.gsd]
    }

    /// World position of the center of pixel `(i, j)`.
    #[inline]
    pub fn pixel_center(&self, i: usize, j: usize) -> [f64; 2] {
        self.pixel_to_world(i as f64 + 0.5, j as f64 + 0.5)
    }

    /// Integer pixel containing a continuous coordinate, clamped to the mosaic.
    #[inline]
    pub fn pixel_index(&self, uv: [f64; 2]) -> (usize, usize) {
        let clamp = |c: f64, n: usize| (c.floor().max(0.0) as usize).min(n - 1);
        (clamp(uv[0], self.mosaic_width), clamp(uv[1], self.mosaic_height))
    }

    pub fn contains_pixel(&self, uv: [f64; 2]) -> bool {
        uv[0] >= 0.0
            && uv[1] >= 0.0
            && uv[0] <= self.mosaic_width as f64
            && uv[1] <= self.mosaic_height as f64
    }
}

/// Projects a vertex into the camera frame: `((x - x0) / gsd, (y0 - y) / gsd)`.
#[inline]
pub fn project_vertex(camera: &OrthoCamera, vertex: [f64; 3]) -> [f64; 2] {
    camera.world_to_pixel(vertex[0], vertex[1])
}

pub fn unproject(camera: &OrthoCamera, uv: [f64; 2]) -> [f64; 2] {
    camera.pixel_to_world(uv[0], uv[1])
}

/// Places the camera over `bounds`; the codec spans the bounds' z-range
/// padded by one quantum.
pub fn make_camera(bounds: &WorldBounds, gsd: f64) -> Result<OrthoCamera> {
    make_camera_with_z_range(bounds, gsd, None)
}

/// Like [`make_camera`] but with an explicit codec range, used as given.
pub fn make_camera_with_z_range(
    bounds: &WorldBounds,
    gsd: f64,
    z_range: Option<[f64; 2]>,
) -> Result<OrthoCamera> {
    if !(gsd > 0.0 && gsd.is_finite()) {
        return Err(Error::InvalidArgument(format!("gsd must be positive, got {gsd}")));
    }
    let (w, h) = (bounds.width(), bounds.depth());
    if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "degenerate bounds: {w} x {h} m footprint"
        )));
    }
    let pixels = |extent: f64| ((extent / gsd - 1e-9).ceil() as usize).max(1);
    let height_codec = match z_range {
        Some([lo, hi]) => {
            if bounds.min_z < lo - WorldBounds::EPSILON || bounds.max_z > hi + WorldBounds::EPSILON {
                log::warn!(
                    "mesh z-range [{}, {}] exceeds the configured codec range [{lo}, {hi}]; heights will clamp",
                    bounds.min_z,
                    bounds.max_z
                );
            }
            HeightCodec::new(lo, hi)?
        }
        None => HeightCodec::padded(bounds.min_z, bounds.max_z)?,
    };
    Ok(OrthoCamera {
        origin_x: bounds.min_x,
        origin_y: bounds.max_y,
        gsd,
        mosaic_width: pixels(w),
        mosaic_height: pixels(h),
        height_codec,
    })
}
