//! Synthetic scenes with known ground truth: a gridded ground surface, box
//! occluders on top, and the exact per-pixel occluder classes.

use image::{DynamicImage, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bev::{make_camera_with_z_range, BevRasterizer, OrthoCamera, PatchRect, NO_COVERAGE};
use crate::error::{Error, Result};
use crate::grid::ClassRaster;
use crate::mask::ClassTable;
use crate::mesh::{compute_bounds, Material, TexturedMesh, BASE_TEXTURE};

const MAX_VERTICES: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Ground {
    Flat { z: f64 },
    /// `z = z0 + slope_x * x + slope_y * y`.
    Ramp { z0: f64, slope_x: f64, slope_y: f64 },
    /// `z = z0 + amplitude * sin(2 pi x / wavelength) * cos(2 pi y / wavelength)`.
    Sine { z0: f64, amplitude: f64, wavelength: f64 },
}

impl Ground {
    pub fn z(&self, x: f64, y: f64) -> f64 {
        match *self {
            Ground::Flat { z } => z,
            Ground::Ramp { z0, slope_x, slope_y } => z0 + slope_x * x + slope_y * y,
            Ground::Sine {
                z0,
                amplitude,
                wavelength,
            } => {
                let k = std::f64::consts::TAU / wavelength;
                z0 + amplitude * (k * x).sin() * (k * y).cos()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TextureSpec {
    /// Two-tone checkerboard with squares of `period` meters.
    Checker { period: f64 },
    /// Vertical stripes `period` meters wide.
    Stripes { period: f64 },
    /// Independent uniform RGB per texel.
    Noise { seed: u64 },
    /// Gentle diagonal color gradient.
    Smooth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Occluder {
    pub class: String,
    /// Footprint `[x0, y0, x1, y1]` in meters.
    pub rect: [f64; 4],
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    /// Size in meters; the scene spans `[0, extent[0]] x [0, extent[1]]`.
    pub extent: [f64; 2],
    pub ground: Ground,
    pub occluders: Vec<Occluder>,
    pub ground_texture: TextureSpec,
    pub occluder_texture: TextureSpec,
    /// Side length of each half of the texture atlas.
    pub texture_px: usize,
    /// Codec range for the camera; padded from the scene bounds when unset.
    pub z_range: Option<[f64; 2]>,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            extent: [32.0, 32.0],
            ground: Ground::Flat { z: 0.0 },
            occluders: Vec::new(),
            ground_texture: TextureSpec::Smooth,
            occluder_texture: TextureSpec::Noise { seed: 7 },
            texture_px: 512,
            z_range: Some([0.0, 10.0]),
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// Flat scene with `count` non-overlapping boxes 2-5 m tall, placed at
    /// random with a margin to the edges and to each other. Classes
    /// alternate between vehicle and vessel.
    pub fn with_random_boxes(extent: [f64; 2], count: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let margin = 1.5;
        let mut occluders: Vec<Occluder> = Vec::new();
        let mut attempts = 0;
        while occluders.len() < count {
            attempts += 1;
            if attempts > 10_000 {
                return Err(Error::InvalidArgument(format!(
                    "cannot place {count} boxes in a {} x {} m scene",
                    extent[0], extent[1]
                )));
            }
            let (w, d) = (rng.random_range(2.0..5.0), rng.random_range(1.5..3.0));
            let x0 = rng.random_range(margin..(extent[0] - margin - w).max(margin + 1e-9));
            let y0 = rng.random_range(margin..(extent[1] - margin - d).max(margin + 1e-9));
            let rect = [x0, y0, x0 + w, y0 + d];
            if rect[2] > extent[0] - margin || rect[3] > extent[1] - margin {
                continue;
            }
            let clear = occluders.iter().all(|o| {
                rect[0] > o.rect[2] + margin
                    || o.rect[0] > rect[2] + margin
                    || rect[1] > o.rect[3] + margin
                    || o.rect[1] > rect[3] + margin
            });
            if clear {
                let class = if occluders.len().is_multiple_of(2) { "vehicle" } else { "vessel" };
                occluders.push(Occluder {
                    class: class.into(),
                    rect,
                    height: rng.random_range(2.0..5.0),
                });
            }
        }
        Ok(Self {
            extent,
            occluders,
            seed,
            ..Default::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let [ex, ey] = self.extent;
        if !(ex > 0.0 && ey > 0.0 && ex.is_finite() && ey.is_finite()) {
            return Err(Error::InvalidArgument(format!("scene extent must be positive, got {ex} x {ey}")));
        }
        if self.texture_px < 2 {
            return Err(Error::InvalidArgument("texture_px must be >= 2".into()));
        }
        for (i, o) in self.occluders.iter().enumerate() {
            let [x0, y0, x1, y1] = o.rect;
            if !(0.0 <= x0 && x0 < x1 && x1 <= ex && 0.0 <= y0 && y0 < y1 && y1 <= ey) {
                return Err(Error::InvalidArgument(format!(
                    "occluder {i} footprint {:?} is empty or outside the {ex} x {ey} m extent",
                    o.rect
                )));
            }
            if !(o.height > 0.0 && o.height.is_finite()) {
                return Err(Error::InvalidArgument(format!("occluder {i} height must be > 0")));
            }
        }
        for t in [self.ground_texture, self.occluder_texture] {
            if let TextureSpec::Checker { period } | TextureSpec::Stripes { period } = t {
                if !(period > 0.0) {
                    return Err(Error::InvalidArgument("texture period must be > 0".into()));
                }
            }
        }
        Ok(())
    }
}

/// Generated scene and the camera it is meant to be viewed with.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub occluded: TexturedMesh,
    pub clean: TexturedMesh,
    pub camera: OrthoCamera,
    /// Triangles `[0, ground_triangles)` are ground in both meshes.
    pub ground_triangles: usize,
    /// Class id of each occluder, in the order of `SceneSpec::occluders`.
    pub class_ids: Vec<u8>,
}

fn texture(spec: TextureSpec, n: usize, extent: [f64; 2], salt: u64) -> RgbImage {
    match spec {
        TextureSpec::Noise { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.rotate_left(17));
            RgbImage::from_fn(n as u32, n as u32, |_, _| image::Rgb([rng.random(), rng.random(), rng.random()]))
        }
        TextureSpec::Smooth => RgbImage::from_fn(n as u32, n as u32, |x, y| {
            let (s, t) = (x as f64 / n as f64, y as f64 / n as f64);
            image::Rgb([
                (90.0 + 40.0 * s) as u8,
                (110.0 + 30.0 * t) as u8,
                (80.0 + 20.0 * (s + t) / 2.0) as u8,
            ])
        }),
        TextureSpec::Checker { period } => RgbImage::from_fn(n as u32, n as u32, |x, y| {
            let (wx, wy) = (x as f64 / n as f64 * extent[0], y as f64 / n as f64 * extent[1]);
            let on = ((wx / period).floor() as i64 + (wy / period).floor() as i64) % 2 == 0;
            if on {
                image::Rgb([200, 200, 190])
            } else {
                image::Rgb([60, 70, 60])
            }
        }),
        TextureSpec::Stripes { period } => RgbImage::from_fn(n as u32, n as u32, |x, _| {
            let wx = x as f64 / n as f64 * extent[0];
            if (wx / period).floor() as i64 % 2 == 0 {
                image::Rgb([180, 170, 150])
            } else {
                image::Rgb([70, 60, 50])
            }
        }),
    }
}

/// Maps `t` in [0, 1] onto texel centers of atlas half `half` (0 = ground,
/// 1 = occluders), so bilinear sampling never reads the other half.
fn atlas_u(t: f64, half: usize, n: usize) -> f32 {
    ((half * n) as f64 + 0.5 + t.clamp(0.0, 1.0) * (n - 1) as f64) as f32 / (2 * n) as f32
}

fn atlas_v(t: f64, n: usize) -> f32 {
    (0.5 + t.clamp(0.0, 1.0) * (n - 1) as f64) as f32 / n as f32
}

/// Builds the clean and occluded meshes for `spec`, with ground vertices
/// roughly `gsd` apart.
pub fn generate_scene(spec: &SceneSpec, gsd: f64, classes: &ClassTable) -> Result<SyntheticScene> {
    spec.validate()?;
    if !(gsd > 0.0 && gsd.is_finite()) {
        return Err(Error::InvalidArgument(format!("gsd must be positive, got {gsd}")));
    }
    let [ex, ey] = spec.extent;
    let (nx, ny) = (((ex / gsd).round() as usize).max(1), ((ey / gsd).round() as usize).max(1));
    let vertex_count = (nx as f64 + 1.0) * (ny as f64 + 1.0) + 8.0 * spec.occluders.len() as f64;
    if vertex_count > MAX_VERTICES {
        return Err(Error::InvalidArgument(format!(
            "scene would have {vertex_count:.0} vertices (limit {MAX_VERTICES:.0}); increase gsd"
        )));
    }
    let class_ids = spec
        .occluders
        .iter()
        .map(|o| {
            classes.id_of(&o.class).ok_or_else(|| {
                Error::InvalidArgument(format!("occluder class `{}` is not in the class table", o.class))
            })
        })
        .collect::<Result<Vec<u8>>>()?;

    let n = spec.texture_px;
    let mut atlas = RgbImage::new(2 * n as u32, n as u32);
    image::imageops::replace(&mut atlas, &texture(spec.ground_texture, n, spec.extent, spec.seed), 0, 0);
    image::imageops::replace(
        &mut atlas,
        &texture(spec.occluder_texture, n, spec.extent, spec.seed.wrapping_add(1)),
        n as i64,
        0,
    );

    let (dx, dy) = (ex / nx as f64, ey / ny as f64);
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut uv0 = Vec::with_capacity(vertices.capacity());
    for j in 0..=ny {
        for i in 0..=nx {
            let (x, y) = (i as f64 * dx, j as f64 * dy);
            vertices.push([x as f32, y as f32, spec.ground.z(x, y) as f32]);
            uv0.push([atlas_u(x / ex, 0, n), atlas_v(1.0 - y / ey, n)]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    let id = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let textures = [(BASE_TEXTURE.to_string(), DynamicImage::ImageRgb8(atlas))].into();
    let material = Material {
        base_texture: Some(BASE_TEXTURE.into()),
        ..Default::default()
    };
    let clean = TexturedMesh {
        vertices,
        triangles,
        uv0,
        uv1: None,
        textures,
        material,
    };
    let ground_triangles = clean.triangle_count();

    let mut occluded = clean.clone();
    for o in &spec.occluders {
        add_box(&mut occluded, o, &spec.ground, n);
    }

    let bounds = compute_bounds(&occluded)?;
    let camera = make_camera_with_z_range(&bounds, gsd, spec.z_range)?;
    Ok(SyntheticScene {
        spec: spec.clone(),
        occluded,
        clean,
        camera,
        ground_triangles,
        class_ids,
    })
}

/// Appends an axis-aligned box: 8 vertices, 2 top and 8 wall triangles.
fn add_box(mesh: &mut TexturedMesh, o: &Occluder, ground: &Ground, n: usize) {
    let [x0, y0, x1, y1] = o.rect;
    let base = mesh.vertices.len() as u32;
    let top = ground.z((x0 + x1) / 2.0, (y0 + y1) / 2.0) + o.height;
    let corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)];
    for &(x, y) in &corners {
        mesh.vertices.push([x as f32, y as f32, ground.z(x, y) as f32]);
    }
    for &(x, y) in &corners {
        mesh.vertices.push([x as f32, y as f32, top as f32]);
    }
    let uv = [(0.0, 1.0), (1.0, 1.0), (1.0, 0.0), (0.0, 0.0)];
    for _ in 0..2 {
        for &(s, t) in &uv {
            mesh.uv0.push([atlas_u(s, 1, n), atlas_v(t, n)]);
        }
    }
    let (b, t) = (base, base + 4);
    mesh.triangles.push([t, t + 1, t + 2]);
    mesh.triangles.push([t, t + 2, t + 3]);
    for k in 0..4u32 {
        let k1 = (k + 1) % 4;
        mesh.triangles.push([b + k, b + k1, t + k1]);
        mesh.triangles.push([b + k, t + k1, t + k]);
    }
}

impl SyntheticScene {
    /// Class id per pixel of `rect`: the occluder whose surface is visible
    /// from above, or 0 for ground and uncovered pixels.
    pub fn truth_classes(&self, rect: &PatchRect) -> ClassRaster {
        self.truth_classes_for(std::slice::from_ref(rect)).remove(0)
    }

    /// [`Self::truth_classes`] for many rectangles, sharing one rasterizer.
    pub fn truth_classes_for(&self, rects: &[PatchRect]) -> Vec<ClassRaster> {
        let r = BevRasterizer::new(&self.occluded, &self.camera);
        crate::par::map_slice(rects, |rect| {
            r.rasterize(rect).tri_id.map(|&t| {
                if t == NO_COVERAGE || (t as usize) < self.ground_triangles {
                    0
                } else {
                    self.class_ids[(t as usize - self.ground_triangles) / 10]
                }
            })
        })
    }

    /// Analytic ground elevation.
    pub fn ground_z(&self, x: f64, y: f64) -> f64 {
        self.spec.ground.z(x, y)
    }
}
