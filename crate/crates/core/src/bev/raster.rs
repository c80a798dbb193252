use crate::fill;
use crate::grid::{ColorRaster, Grid, HeightRaster, MaskRaster, TriIdRaster};
use crate::mesh::TexturedMesh;
use crate::sample::bilinear_rgb;

use super::{OrthoCamera, PatchRect};

/// Tri-id value of pixels no triangle covers.
pub const NO_COVERAGE: u32 = u32::MAX;

/// Color used where the mesh has no base texture.
const UNTEXTURED: [u8; 3] = [128, 128, 128];

#[derive(Debug, Clone, PartialEq)]
pub struct BevPatch {
    pub rect: PatchRect,
    pub color: ColorRaster,
    /// Codec-encoded heights; 0 where uncovered.
    pub height: HeightRaster,
    pub tri_id: TriIdRaster,
}

impl BevPatch {
    pub fn coverage(&self) -> MaskRaster {
        self.tri_id.map(|&t| t != NO_COVERAGE)
    }
}

/// Mesh projected into the camera frame once, reusable across patches.
pub struct BevRasterizer<'a> {
    mesh: &'a TexturedMesh,
    camera: &'a OrthoCamera,
    projected: Vec<[f64; 2]>,
    snapped: Vec<[i64; 2]>,
    bounds: Vec<Option<[i64; 4]>>,
    texture: Option<ColorRaster>,
}

impl<'a> BevRasterizer<'a> {
    pub fn new(mesh: &'a TexturedMesh, camera: &'a OrthoCamera) -> Self {
        let projected: Vec<[f64; 2]> = (0..mesh.vertex_count())
            .map(|i| super::project_vertex(camera, mesh.position(i)))
            .collect();
        let snapped: Vec<[i64; 2]> = projected.iter().map(|&p| fill::snap(p)).collect();
        let bounds = mesh
            .triangles
            .iter()
            .map(|t| fill::pixel_bounds(&t.map(|i| snapped[i as usize])))
            .collect();
        let texture = mesh
            .base_texture()
            .map(|img| crate::grid::rgb_image_to_raster(&img.to_rgb8()));
        Self {
            mesh,
            camera,
            projected,
            snapped,
            bounds,
            texture,
        }
    }

    pub fn camera(&self) -> &OrthoCamera {
        self.camera
    }

    /// Triangle indices whose coverage box intersects the rect.
    fn candidates(&self, rect: &PatchRect) -> impl Iterator<Item = usize> + '_ {
        let (x0, y0) = (rect.x0 as i64, rect.y0 as i64);
        let (x1, y1) = (x0 + rect.width as i64 - 1, y0 + rect.height as i64 - 1);
        self.bounds.iter().enumerate().filter_map(move |(t, b)| {
            let b = (*b)?;
            (b[0] <= x1 && b[2] >= x0 && b[1] <= y1 && b[3] >= y0).then_some(t)
        })
    }

    /// Renders color, height and tri-id for one patch. Per pixel the highest
    /// surface wins; equal heights go to the lower triangle index.
    pub fn rasterize(&self, rect: &PatchRect) -> BevPatch {
        self.rasterize_in_order(rect, self.candidates(rect))
    }

    /// Same as [`Self::rasterize`] with an explicit triangle submission order.
    pub(crate) fn rasterize_in_order<I: IntoIterator<Item = usize>>(&self, rect: &PatchRect, order: I) -> BevPatch {
        let (w, h) = (rect.width, rect.height);
        let mut depth = Grid::filled(w, h, f64::NEG_INFINITY);
        let mut tri_id = Grid::filled(w, h, NO_COVERAGE);
        let clip = [rect.x0, rect.y0, rect.x0 + w, rect.y0 + h];

        for t in order {
            let idx = self.mesh.triangles[t];
            let tri_f = idx.map(|i| self.projected[i as usize]);
            let tri_s = idx.map(|i| self.snapped[i as usize]);
            let z = idx.map(|i| self.mesh.vertices[i as usize][2] as f64);
            let t32 = t as u32;
            fill::scan_triangle(tri_s, clip, |x, y| {
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                let Some(l) = fill::barycentric(&tri_f, p) else {
                    return;
                };
                let zi = l[0] * z[0] + l[1] * z[1] + l[2] * z[2];
                let (lx, ly) = (x - rect.x0, y - rect.y0);
                let best = *depth.get(lx, ly);
                let cur = *tri_id.get(lx, ly);
                if zi > best || (zi == best && t32 < cur) {
                    depth.set(lx, ly, zi);
                    tri_id.set(lx, ly, t32);
                }
            });
        }

        let codec = self.camera.height_codec;
        let mut color = Grid::filled(w, h, [0u8; 3]);
        let mut height = Grid::filled(w, h, 0u16);
        for ly in 0..h {
            for lx in 0..w {
                let t = *tri_id.get(lx, ly);
                if t == NO_COVERAGE {
                    continue;
                }
                height.set(lx, ly, codec.encode(*depth.get(lx, ly)));
                color.set(lx, ly, self.shade(t as usize, rect.x0 + lx, rect.y0 + ly));
            }
        }
        BevPatch {
            rect: *rect,
            color,
            height,
            tri_id,
        }
    }

    fn shade(&self, t: usize, x: usize, y: usize) -> [u8; 3] {
        let Some(tex) = &self.texture else {
            return UNTEXTURED;
        };
        let idx = self.mesh.triangles[t];
        let tri_f = idx.map(|i| self.projected[i as usize]);
        let Some(l) = fill::barycentric(&tri_f, [x as f64 + 0.5, y as f64 + 0.5]) else {
            return UNTEXTURED;
        };
        let uv = idx.map(|i| self.mesh.uv0[i as usize]);
        let u = l[0] * uv[0][0] as f64 + l[1] * uv[1][0] as f64 + l[2] * uv[2][0] as f64;
        let v = l[0] * uv[0][1] as f64 + l[1] * uv[1][1] as f64 + l[2] * uv[2][1] as f64;
        bilinear_rgb(tex, u * tex.width() as f64, v * tex.height() as f64)
    }
}

/// Rasterizes one patch of the mesh as seen by the BEV camera.
pub fn rasterize_patch(mesh: &TexturedMesh, camera: &OrthoCamera, rect: &PatchRect) -> BevPatch {
    BevRasterizer::new(mesh, camera).rasterize(rect)
}
