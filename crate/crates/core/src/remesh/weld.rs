use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::mesh::TexturedMesh;
use crate::par;

/// Counts before and after welding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeReport {
    pub vertices_before: usize,
    pub vertices_after: usize,
    pub triangles_before: usize,
    pub triangles_after: usize,
    pub degenerate_dropped: usize,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    /// Keeps the smaller root so roots are lowest members.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

#[inline]
fn within(a: &[f64; 3], b: &[f64; 3], eps: f64) -> bool {
    let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
    d2 <= eps * eps
}

/// Clusters points by the transitive closure of "distance <= eps". Returns,
/// per point, the index of the lowest point in its cluster. Points with
/// `eligible[i] == false` stay alone.
pub fn cluster_points(points: &[[f64; 3]], eps: f64, eligible: Option<&[bool]>) -> Vec<usize> {
    let n = points.len();
    let ok = |i: usize| eligible.is_none_or(|e| e[i]);
    let mut uf = UnionFind::new(n);
    if eps <= 0.0 {
        // Only exact coincidence merges.
        let mut seen: HashMap<[u64; 3], usize> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            if !ok(i) {
                continue;
            }
            let key = p.map(|c| if c == 0.0 { 0 } else { c.to_bits() });
            match seen.get(&key) {
                Some(&j) => uf.union(i, j),
                None => {
                    seen.insert(key, i);
                }
            }
        }
    } else {
        // Slightly larger than eps so rounding in the division can never put
        // two points within eps more than one cell apart.
        let cell = eps * (1.0 + 1e-6);
        let key = |p: &[f64; 3]| p.map(|c| (c / cell).floor() as i64);
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            if ok(i) {
                buckets.entry(key(p)).or_default().push(i);
            }
        }
        let edges: Vec<Vec<usize>> = par::map_range(n, |i| {
            if !ok(i) {
                return Vec::new();
            }
            let k = key(&points[i]);
            let mut out = Vec::new();
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if let Some(b) = buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                            out.extend(b.iter().copied().filter(|&j| j > i && within(&points[i], &points[j], eps)));
                        }
                    }
                }
            }
            out
        });
        for (i, js) in edges.into_iter().enumerate() {
            for j in js {
                uf.union(i, j);
            }
        }
    }
    (0..n).map(|i| uf.find(i)).collect()
}

/// Welds all vertices within `merge_distance` of each other.
pub fn merge_vertices(mesh: &TexturedMesh, merge_distance: f64, degenerate_area_epsilon: f64) -> (TexturedMesh, MergeReport) {
    merge_vertices_where(mesh, merge_distance, degenerate_area_epsilon, None)
}

/// As [`merge_vertices`], restricted to vertices flagged in `eligible`.
/// Each cluster collapses to its centroid and takes the texture coordinates
/// of its lowest-index member; output vertices are ordered by that member.
/// Triangles with repeated indices are dropped, as are triangles touching
/// a merged vertex whose area falls below `degenerate_area_epsilon`.
/// Unreferenced vertices are kept.
pub fn merge_vertices_where(
    mesh: &TexturedMesh,
    merge_distance: f64,
    degenerate_area_epsilon: f64,
    eligible: Option<&[bool]>,
) -> (TexturedMesh, MergeReport) {
    let points: Vec<[f64; 3]> = (0..mesh.vertex_count()).map(|i| mesh.position(i)).collect();
    let label = cluster_points(&points, merge_distance, eligible);

    let mut new_index = vec![usize::MAX; points.len()];
    let mut reps = Vec::new();
    for i in 0..points.len() {
        if label[i] == i {
            new_index[i] = reps.len();
            reps.push(i);
        }
    }
    let mut sums = vec![([0.0f64; 3], 0usize); reps.len()];
    for i in 0..points.len() {
        let k = new_index[label[i]];
        new_index[i] = k;
        for c in 0..3 {
            sums[k].0[c] += points[i][c];
        }
        sums[k].1 += 1;
    }
    let vertices: Vec<[f32; 3]> = reps
        .iter()
        .zip(&sums)
        .map(|(&r, (s, n))| {
            if *n == 1 {
                mesh.vertices[r]
            } else {
                s.map(|c| (c / *n as f64) as f32)
            }
        })
        .collect();
    let uv0 = reps.iter().map(|&r| mesh.uv0[r]).collect();
    let uv1 = mesh.uv1.as_ref().map(|uv| reps.iter().map(|&r| uv[r]).collect());

    let mut degenerate = 0;
    let triangles: Vec<[u32; 3]> = mesh
        .triangles
        .iter()
        .filter_map(|t| {
            let m = t.map(|i| new_index[i as usize] as u32);
            if m[0] == m[1] || m[1] == m[2] || m[0] == m[2] {
                return None;
            }
            if m.iter().all(|&k| sums[k as usize].1 == 1) {
                return Some(m);
            }
            let p = m.map(|i| vertices[i as usize].map(f64::from));
            if triangle_area(&p) < degenerate_area_epsilon {
                degenerate += 1;
                return None;
            }
            Some(m)
        })
        .collect();

    let report = MergeReport {
        vertices_before: mesh.vertex_count(),
        vertices_after: vertices.len(),
        triangles_before: mesh.triangle_count(),
        triangles_after: triangles.len(),
        degenerate_dropped: degenerate,
    };
    let out = TexturedMesh {
        vertices,
        triangles,
        uv0,
        uv1,
        textures: mesh.textures.clone(),
        material: mesh.material.clone(),
    };
    (out, report)
}

pub(crate) fn triangle_area(p: &[[f64; 3]; 3]) -> f64 {
    let u = [p[1][0] - p[0][0], p[1][1] - p[0][1], p[1][2] - p[0][2]];
    let v = [p[2][0] - p[0][0], p[2][1] - p[0][1], p[2][2] - p[0][2]];
    let c = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    0.5 * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Material;
    use rand::{Rng, SeedableRng};

    fn brute_partition(points: &[[f64; 3]], eps: f64) -> Vec<usize> {
        let n = points.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn root(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                i = p[i];
            }
            i
        }
        for i in 0..n {
            for j in 0..n {
                let d = ((points[i][0] - points[j][0]).powi(2)
                    + (points[i][1] - points[j][1]).powi(2)
                    + (points[i][2] - points[j][2]).powi(2))
                .sqrt();
                if d <= eps {
                    let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        (0..n).map(|i| root(&mut parent, i)).collect()
    }

    fn mesh_of(points: &[[f32; 3]], tris: &[[u32; 3]]) -> TexturedMesh {
        TexturedMesh {
            vertices: points.to_vec(),
            triangles: tris.to_vec(),
            uv0: (0..points.len()).map(|i| [i as f32, 0.0]).collect(),
            uv1: None,
            textures: Default::default(),
            material: Material::default(),
        }
    }

    #[test]
    fn pair_and_far_point() {
        let m = mesh_of(&[[0.0, 0.0, 0.0], [0.3, 0.0, 0.0], [10.0, 0.0, 0.0]], &[]);
        let (out, report) = merge_vertices(&m, 0.4, 1e-8);
        assert_eq!(report.vertices_after, 2);
        assert!((out.vertices[0][0] - 0.15).abs() < 1e-6);
        assert_eq!(out.vertices[1], [10.0, 0.0, 0.0]);
        assert_eq!(out.uv0, vec![[0.0, 0.0], [2.0, 0.0]]);
    }

    #[test]
    fn chains_merge_transitively() {
        let m = mesh_of(&[[0.0, 0.0, 0.0], [0.3, 0.0, 0.0], [0.6, 0.0, 0.0]], &[]);
        let (out, _) = merge_vertices(&m, 0.4, 1e-8);
        assert_eq!(out.vertices.len(), 1);
        assert!((out.vertices[0][0] - 0.3).abs() < 1e-6);
    }

    #[test]
    fn zero_distance_merges_only_coincident() {
        let m = mesh_of(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0, 3.0001]], &[[0, 1, 2]]);
        let (out, report) = merge_vertices(&m, 0.0, 1e-8);
        assert_eq!(out.vertices.len(), 2);
        assert!(out.triangles.is_empty());
        assert_eq!(report.triangles_after, 0);
    }

    #[test]
    fn matches_quadratic_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for eps in [0.0, 0.1, 0.4, 1.0] {
            for _ in 0..5 {
                let mut pts: Vec<[f64; 3]> = (0..300)
                    .map(|_| [rng.random_range(0.0..6.0), rng.random_range(0.0..6.0), rng.random_range(0.0..2.0)])
                    .collect();
                // A few exact duplicates so eps = 0 has work to do.
                for k in 0..10 {
                    pts[k + 100] = pts[k];
                }
                assert_eq!(cluster_points(&pts, eps, None), brute_partition(&pts, eps));
            }
        }
    }

    #[test]
    fn ineligible_vertices_stay_put() {
        let pts = [[0.0f32, 0.0, 0.0], [0.1, 0.0, 0.0], [0.2, 0.0, 0.0], [0.3, 0.0, 0.0]];
        let m = mesh_of(&pts, &[]);
        let (out, _) = merge_vertices_where(&m, 0.15, 1e-8, Some(&[false, true, true, false]));
        assert_eq!(out.vertices.len(), 3);
        assert_eq!(out.vertices[0], pts[0]);
        assert_eq!(out.vertices[2], pts[3]);
    }

    #[test]
    fn degenerate_triangles_are_dropped() {
        // Welding 3 and 4 onto (2, 0) flattens [0, 1, 3]; [1, 4, 2] collapses.
        let pts = [
            [0.0f32, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [2.0, 0.1, 0.0],
            [2.0, -0.1, 0.0],
            [5.0, 5.0, 0.0],
        ];
        let m = mesh_of(&pts, &[[0, 1, 2], [0, 1, 3], [3, 4, 5], [1, 5, 2]]);
        let (out, report) = merge_vertices(&m, 0.3, 1e-8);
        assert_eq!(out.triangles, vec![[0, 1, 2], [1, 4, 2]]);
        assert_eq!(report.degenerate_dropped, 1);
    }

    #[test]
    fn untouched_zero_area_triangles_are_kept() {
        let pts = [[0.0f32, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let m = mesh_of(&pts, &[[0, 1, 2]]);
        let (out, report) = merge_vertices(&m, 0.1, 1e-8);
        assert_eq!(out, m);
        assert_eq!(report.degenerate_dropped, 0);
    }

    #[test]
    fn counts_never_increase_and_merging_is_idempotent() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        // Well-separated pairs: every cluster centroid is far from the rest.
        let mut pts = Vec::new();
        for gx in 0..6 {
            for gy in 0..6 {
                let base = [gx as f32 * 3.0, gy as f32 * 3.0, 0.0];
                pts.push(base);
                pts.push([base[0] + rng.random_range(0.0..0.2), base[1], 0.0]);
            }
        }
        let tris: Vec<[u32; 3]> = (0..pts.len() as u32 - 2).map(|i| [i, i + 1, i + 2]).collect();
        let m = mesh_of(&pts, &tris);
        let (once, r) = merge_vertices(&m, 0.4, 1e-8);
        assert!(r.vertices_after <= r.vertices_before && r.triangles_after <= r.triangles_before);
        let (twice, _) = merge_vertices(&once, 0.4, 1e-8);
        assert_eq!(once, twice);
        for t in &once.triangles {
            assert!(t[0] != t[1] && t[1] != t[2] && t[0] != t[2]);
        }
    }
}
