//! Polygon geometry on the pixel lattice.
//!
//! Pixel `(px, py)` is inside a polygon when its center `(px + 0.5, py + 0.5)`
//! is inside under the even-odd rule. Vertices sit on integer coordinates, so
//! a horizontal scanline through pixel centers never touches a vertex and
//! all arithmetic below is exact.

use super::{BBox, Vertex};

fn orient(a: (i64, i64), b: (i64, i64), c: (i64, i64)) -> i64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: (i64, i64), b: (i64, i64), p: (i64, i64)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

fn segments_touch(a: (i64, i64), b: (i64, i64), c: (i64, i64), d: (i64, i64)) -> bool {
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if o1.signum() * o2.signum() < 0 && o3.signum() * o4.signum() < 0 {
        return true;
    }
    (o1 == 0 && on_segment(a, b, c))
        || (o2 == 0 && on_segment(a, b, d))
        || (o3 == 0 && on_segment(c, d, a))
        || (o4 == 0 && on_segment(c, d, b))
}

/// True when the closed polygon has no zero-length edges, no folded-back
/// adjacent edges and no other edge contacts.
pub fn is_simple(polygon: &[Vertex]) -> bool {
    let n = polygon.len();
    if n < 3 {
        return false;
    }
    let p: Vec<(i64, i64)> = polygon.iter().map(|&(x, y)| (x as i64, y as i64)).collect();
    for i in 0..n {
        let (a, b, c) = (p[i], p[(i + 1) % n], p[(i + 2) % n]);
        if a == b {
            return false;
        }
        // Adjacent edges a-b and b-c overlap when collinear and doubling back.
        if orient(a, b, c) == 0 && (a.0 - b.0) * (c.0 - b.0) + (a.1 - b.1) * (c.1 - b.1) > 0 {
            return false;
        }
    }
    if n == 3 {
        return orient(p[0], p[1], p[2]) != 0;
    }
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_touch(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Even-odd mask of `polygon` over the pixels of `bbox`, row-major in the box.
pub fn polygon_mask(polygon: &[Vertex], bbox: BBox) -> Vec<bool> {
    let (w, h) = (bbox.w as usize, bbox.h as usize);
    let mut mask = vec![false; w * h];
    let n = polygon.len();
    if n < 3 {
        return mask;
    }
    let mut cuts: Vec<i64> = Vec::new();
    for row in 0..h {
        // Doubled coordinates: pixel center row is 2y + 1.
        let cy = 2 * (bbox.y as i64 + row as i64) + 1;
        cuts.clear();
        for i in 0..n {
            let (x1, y1) = (2 * polygon[i].0 as i64, 2 * polygon[i].1 as i64);
            let (x2, y2) = (2 * polygon[(i + 1) % n].0 as i64, 2 * polygon[(i + 1) % n].1 as i64);
            if (y1 < cy) == (y2 < cy) {
                continue;
            }
            // Crossing at x = x1 + (cy - y1)(x2 - x1)/(y2 - y1) = num/den with den > 0.
            let (mut num, mut den) = (x1 * (y2 - y1) + (cy - y1) * (x2 - x1), y2 - y1);
            if den < 0 {
                num = -num;
                den = -den;
            }
            // Count of pixels px >= 0 whose center 2px + 1 lies strictly left of the crossing.
            let t_num = num - den;
            let t_den = 2 * den;
            let left = if t_num <= 0 { 0 } else { (t_num + t_den - 1) / t_den };
            cuts.push(left);
        }
        cuts.sort_unstable();
        let x0 = bbox.x as i64;
        for pair in cuts.chunks_exact(2) {
            let start = (pair[0] - x0).clamp(0, w as i64) as usize;
            let end = (pair[1] - x0).clamp(0, w as i64) as usize;
            for cell in &mut mask[row * w + start..row * w + end] {
                *cell = true;
            }
        }
    }
    mask
}

/// Writes `value` into the cells of a row-major `grid` covered by `polygon`,
/// restricted to `bbox`.
pub fn paint_polygon(grid: &mut [u8], grid_width: u16, polygon: &[Vertex], bbox: BBox, value: u8) {
    let mask = polygon_mask(polygon, bbox);
    for (i, &inside) in mask.iter().enumerate() {
        if inside {
            let x = bbox.x as usize + i % bbox.w as usize;
            let y = bbox.y as usize + i / bbox.w as usize;
            grid[y * grid_width as usize + x] = value;
        }
    }
}
