//! Textured triangle meshes and their glTF-subset interchange files.
//!
//! Coordinates are local meters with x east, y north and z up. Positions are
//! stored as `f32` so that save/load round-trips are bit-exact; geometry code
//! widens to `f64` internally.

mod gltf;

use std::collections::BTreeMap;

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::gltf::{load_mesh, referenced_files, save_mesh, save_mesh_with, sidecar_files, SaveOptions};

/// Texture names used by the retexture stage.
pub const BASE_TEXTURE: &str = "base";
pub const INPAINT_TEXTURE: &str = "inpaint";
pub const BLEND_TEXTURE: &str = "blend";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Material {
    pub base_texture: Option<String>,
    pub inpaint_texture: Option<String>,
    pub blend_mask_texture: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TexturedMesh {
    pub vertices: Vec<[f32; 3]>,
    pub triangles: Vec<[u32; 3]>,
    pub uv0: Vec<[f32; 2]>,
    pub uv1: Option<Vec<[f32; 2]>>,
    pub textures: BTreeMap<String, DynamicImage>,
    pub material: Material,
}

impl TexturedMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    #[inline]
    pub fn position(&self, i: usize) -> [f64; 3] {
        let v = self.vertices[i];
        [v[0] as f64, v[1] as f64, v[2] as f64]
    }

    pub fn base_texture(&self) -> Option<&DynamicImage> {
        self.material
            .base_texture
            .as_ref()
            .and_then(|name| self.textures.get(name))
    }

    /// Checks the structural invariants: index range, attribute lengths,
    /// no repeated index inside a triangle, material references.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if self.uv0.len() != n {
            return Err(Error::Validation(format!(
                "uv0 has {} entries for {n} vertices",
                self.uv0.len()
            )));
        }
        if let Some(uv1) = &self.uv1 {
            if uv1.len() != n {
                return Err(Error::Validation(format!(
                    "uv1 has {} entries for {n} vertices",
                    uv1.len()
                )));
            }
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i as usize >= n) {
                return Err(Error::Validation(format!(
                    "triangle {t} references vertex {bad} but the mesh has {n} vertices"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Validation(format!(
                    "triangle {t} repeats a vertex index: {tri:?}"
                )));
            }
        }
        for v in &self.vertices {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::Validation(format!("non-finite vertex {v:?}")));
            }
        }
        for name in [
            &self.material.base_texture,
            &self.material.inpaint_texture,
            &self.material.blend_mask_texture,
        ]
        .into_iter()
        .flatten()
        {
            if !self.textures.contains_key(name) {
                return Err(Error::Validation(format!(
                    "material references missing texture `{name}`"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldBounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
    pub min_z: f64,
    pub max_z: f64,
}

impl WorldBounds {
    pub const EPSILON: f64 = 1e-6;

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let e = Self::EPSILON;
        p[0] >= self.min_x - e
            && p[0] <= self.max_x + e
            && p[1] >= self.min_y - e
            && p[1] <= self.max_y + e
            && p[2] >= self.min_z - e
            && p[2] <= self.max_z + e
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn depth(&self) -> f64 {
        self.max_y - self.min_y
    }
}

/// Componentwise min/max over all vertices.
pub fn compute_bounds(mesh: &TexturedMesh) -> Result<WorldBounds> {
    let first = mesh
        .vertices
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot compute bounds of an empty mesh".into()))?;
    let f = |c: f32| c as f64;
    let mut b = WorldBounds {
        min_x: f(first[0]),
        min_y: f(first[1]),
        max_x: f(first[0]),
        max_y: f(first[1]),
        min_z: f(first[2]),
        max_z: f(first[2]),
    };
    for v in &mesh.vertices[1..] {
        b.min_x = b.min_x.min(f(v[0]));
        b.max_x = b.max_x.max(f(v[0]));
        b.min_y = b.min_y.min(f(v[1]));
        b.max_y = b.max_y.max(f(v[1]));
        b.min_z = b.min_z.min(f(v[2]));
        b.max_z = b.max_z.max(f(v[2]));
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: &[[f32; 3]]) -> TexturedMesh {
        TexturedMesh {
            vertices: points.to_vec(),
            uv0: vec![[0.0; 2]; points.len()],
            ..Default::default()
        }
    }

    #[test]
    fn bounds_of_single_vertex() {
        let b = compute_bounds(&cloud(&[[1.0, 2.0, 3.0]])).unwrap();
        assert_eq!((b.min_x, b.max_x, b.min_y, b.max_y), (1.0, 1.0, 2.0, 2.0));
        assert_eq!((b.min_z, b.max_z), (3.0, 3.0));
    }

    #[test]
    fn bounds_of_unit_cube() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push([(i & 1) as f32, ((i >> 1) & 1) as f32, ((i >> 2) & 1) as f32]);
        }
        let b = compute_bounds(&cloud(&pts)).unwrap();
        assert_eq!((b.min_x, b.min_y, b.max_x, b.max_y), (0.0, 0.0, 1.0, 1.0));
        assert_eq!((b.min_z, b.max_z), (0.0, 1.0));
    }

    #[test]
    fn bounds_match_linear_scan_and_are_tight() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<[f32; 3]> = (0..1000)
            .map(|_| {
                [
                    rng.random_range(-50.0..50.0),
                    rng.random_range(0.0..10.0),
                    rng.random_range(-3.0..3.0),
                ]
            })
            .collect();
        let mesh = cloud(&pts);
        let b = compute_bounds(&mesh).unwrap();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &pts {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k] as f64);
                hi[k] = hi[k].max(p[k] as f64);
            }
        }
        assert_eq!([b.min_x, b.min_y, b.min_z], lo);
        assert_eq!([b.max_x, b.max_y, b.max_z], hi);
        assert!((0..pts.len()).all(|i| b.contains(mesh.position(i))));
        let shrunk = WorldBounds {
            max_x: b.max_x - 2.0 * WorldBounds::EPSILON,
            ..b
        };
        assert!((0..pts.len()).any(|i| !shrunk.contains(mesh.position(i))));
    }

    #[test]
    fn empty_mesh_has_no_bounds() {
        assert!(compute_bounds(&TexturedMesh::default()).is_err());
    }

    #[test]
    fn validate_rejects_out_of_range_and_repeated_indices() {
        let mut m = cloud(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]);
        m.triangles = vec![[0, 1, 2], [1, 7, 2]];
        let err = m.validate().unwrap_err().to_string();
        assert!(err.contains("triangle 1"), "{err}");
        m.triangles = vec![[0, 1, 1]];
        assert!(m.validate().is_err());
        m.triangles = vec![[0, 1, 2], [1, 3, 2]];
        m.validate().unwrap();
    }
}
