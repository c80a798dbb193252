//! Fixed-point triangle scan conversion with a top-left fill rule.
//!
//! Vertices are snapped to 1/256 pixel. A pixel is covered when its center
//! `(x + 0.5, y + 0.5)` lies strictly inside the triangle, or on an edge that
//! is a top or left edge. Two triangles sharing an edge therefore never both
//! cover a pixel on it, and never both miss it.

pub const SUBPIXEL_BITS: u32 = 8;
const ONE: i64 = 1 << SUBPIXEL_BITS;
const HALF: i64 = ONE / 2;
/// Beyond this magnitude edge products could overflow `i64`.
const LIMIT: i64 = 1 << 30;

#[inline]
pub fn to_fixed(c: f64) -> i64 {
    (c * ONE as f64).round() as i64
}

#[inline]
pub fn snap(p: [f64; 2]) -> [i64; 2] {
    [to_fixed(p[0]), to_fixed(p[1])]
}

/// Pixel-index bounding box `[x_lo, y_lo, x_hi, y_hi]` (inclusive) of pixel
/// centers that can be covered, or `None` if no center can be.
pub fn pixel_bounds(tri: &[[i64; 2]; 3]) -> Option<[i64; 4]> {
    let (mut lo, mut hi) = ([i64::MAX; 2], [i64::MIN; 2]);
    for v in tri {
        for k in 0..2 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    // Centers at i*ONE + HALF.
    let first = |l: i64| (l - HALF).div_euclid(ONE) + i64::from((l - HALF).rem_euclid(ONE) != 0);
    let last = |h: i64| (h - HALF).div_euclid(ONE);
    let b = [first(lo[0]), first(lo[1]), last(hi[0]), last(hi[1])];
    (b[0] <= b[2] && b[1] <= b[3]).then_some(b)
}

#[inline]
fn edge(a: [i64; 2], b: [i64; 2], p: [i64; 2]) -> i64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

#[inline]
fn is_top_left(a: [i64; 2], b: [i64; 2]) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    (dy == 0 && dx > 0) || dy < 0
}

/// Visits every covered pixel `(x, y)` with `clip[0] <= x < clip[2]` and
/// `clip[1] <= y < clip[3]`. Degenerate (zero snapped area) triangles cover
/// nothing. Returns false if the triangle was skipped.
pub fn scan_triangle<F: FnMut(usize, usize)>(tri: [[i64; 2]; 3], clip: [usize; 4], mut visit: F) -> bool {
    if tri.iter().flatten().any(|c| c.abs() >= LIMIT) {
        return false;
    }
    let [a, mut b, mut c] = tri;
    let area = edge(a, b, c);
    if area == 0 {
        return false;
    }
    if area < 0 {
        std::mem::swap(&mut b, &mut c);
    }
    let Some(bb) = pixel_bounds(&[a, b, c]) else {
        return true;
    };
    let x_lo = bb[0].max(clip[0] as i64);
    let y_lo = bb[1].max(clip[1] as i64);
    let x_hi = bb[2].min(clip[2] as i64 - 1);
    let y_hi = bb[3].min(clip[3] as i64 - 1);
    if x_lo > x_hi || y_lo > y_hi {
        return true;
    }

    let edges = [(b, c), (c, a), (a, b)];
    let bias: [i64; 3] = edges.map(|(p, q)| if is_top_left(p, q) { 0 } else { -1 });
    let step_x: [i64; 3] = edges.map(|(p, q)| -(q[1] - p[1]) * ONE);
    let step_y: [i64; 3] = edges.map(|(p, q)| (q[0] - p[0]) * ONE);
    let start = [x_lo * ONE + HALF, y_lo * ONE + HALF];
    let mut row: [i64; 3] = [0, 1, 2].map(|k| edge(edges[k].0, edges[k].1, start) + bias[k]);

    for y in y_lo..=y_hi {
        let mut w = row;
        for x in x_lo..=x_hi {
            if w[0] >= 0 && w[1] >= 0 && w[2] >= 0 {
                visit(x as usize, y as usize);
            }
            for k in 0..3 {
                w[k] += step_x[k];
            }
        }
        for k in 0..3 {
            row[k] += step_y[k];
        }
    }
    true
}

/// Barycentric weights of `p` in the (unsnapped) triangle, or `None` if the
/// triangle is degenerate.
#[inline]
pub fn barycentric(tri: &[[f64; 2]; 3], p: [f64; 2]) -> Option<[f64; 3]> {
    let [a, b, c] = tri;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    if det == 0.0 {
        return None;
    }
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
    Some([1.0 - l1 - l2, l1, l2])
}
