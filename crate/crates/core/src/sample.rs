//! Bilinear sampling with pixel centers at `i + 0.5` and clamp-to-edge.

use crate::grid::{ColorRaster, Grid};

#[inline]
fn taps(c: f64, n: usize) -> (usize, usize, f64) {
    let t = (c - 0.5).clamp(0.0, (n - 1) as f64);
    let i0 = t.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, t - i0 as f64)
}

pub fn bilinear_rgb(img: &ColorRaster, x: f64, y: f64) -> [u8; 3] {
    let (x0, x1, fx) = taps(x, img.width());
    let (y0, y1, fy) = taps(y, img.height());
    let (a, b, c, d) = (img.get(x0, y0), img.get(x1, y0), img.get(x0, y1), img.get(x1, y1));
    let mut out = [0u8; 3];
    for k in 0..3 {
        let top = a[k] as f64 * (1.0 - fx) + b[k] as f64 * fx;
        let bottom = c[k] as f64 * (1.0 - fx) + d[k] as f64 * fx;
        out[k] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Bilinear sample of a float grid honouring a validity grid: invalid taps
/// are dropped and the remaining weights renormalized. Returns `None` when no
/// tap with positive weight is valid.
pub fn bilinear_valid(values: &Grid<f64>, valid: &Grid<bool>, x: f64, y: f64) -> Option<f64> {
    let (x0, x1, fx) = taps(x, values.width());
    let (y0, y1, fy) = taps(y, values.height());
    let taps = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ];
    let (mut sum, mut weight) = (0.0, 0.0);
    for (x, y, w) in taps {
        if w > 0.0 && *valid.get(x, y) {
            sum += w * values.get(x, y);
            weight += w;
        }
    }
    if weight > 0.0 {
        Some(sum / weight)
    } else {
        // Exactly on a tap whose weight is 1 but invalid, or all invalid.
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_ramp() {
        let g = Grid::from_fn(4, 4, |x, _| x as f64);
        let v = Grid::filled(4, 4, true);
        assert_eq!(bilinear_valid(&g, &v, 1.5, 2.5), Some(1.0));
        assert_eq!(bilinear_valid(&g, &v, 2.0, 2.5), Some(1.5));
        assert_eq!(bilinear_valid(&g, &v, 0.0, 0.0), Some(0.0));
        let c = Grid::filled(3, 3, [10, 20, 30]);
        assert_eq!(bilinear_rgb(&c, 1.7, 0.2), [10, 20, 30]);
    }

    #[test]
    fn invalid_taps_are_skipped() {
        let g = Grid::from_fn(2, 1, |x, _| x as f64 * 10.0);
        let v = Grid::from_fn(2, 1, |x, _| x == 1);
        assert_eq!(bilinear_valid(&g, &v, 1.0, 0.5), Some(10.0));
        assert_eq!(bilinear_valid(&g, &v, 0.5, 0.5), None);
    }
}
