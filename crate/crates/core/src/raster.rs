//! Scanline polygon fill.
//!
//! A pixel is filled when its center lies inside the polygon or on its
//! boundary. Edge crossings use the half-open span `[y_min, y_max)`, which
//! makes boundaries shared with horizontal edges top-inclusive and
//! bottom-exclusive. Overlapping parts of self-intersecting outlines follow
//! the even-odd rule.

use crate::geometry::Point;
use crate::mask::BinaryMask;

/// Rasterizes a closed polygon (the last point connects back to the first)
/// onto a `width × height` canvas. Parts outside the canvas are clipped.
pub fn fill_polygon(points: &[Point], width: usize, height: usize) -> BinaryMask {
    let mut mask = BinaryMask::new(width, height);
    fill_polygon_into(points, &mut mask);
    mask
}

/// Sets every pixel covered by the polygon in `mask`.
pub fn fill_polygon_into(points: &[Point], mask: &mut BinaryMask) {
    let n = points.len();
    if n < 3 || mask.width() == 0 || mask.height() == 0 {
        return;
    }
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        ymin = ymin.min(p.y);
        ymax = ymax.max(p.y);
    }
    if !ymin.is_finite() || !ymax.is_finite() {
        return;
    }
    // Rows whose center c = y + 0.5 can satisfy ymin <= c < ymax.
    let row_start = (ymin - 0.5).ceil().max(0.0);
    let row_end = (ymax - 0.5).ceil().min(mask.height() as f64);
    if row_start >= row_end {
        return;
    }
    let max_x = mask.width() as f64 - 1.0;
    let mut xs: Vec<f64> = Vec::with_capacity(8);
    for row in row_start as usize..row_end as usize {
        let cy = row as f64 + 0.5;
        xs.clear();
        for i in 0..n {
            let a = points[i];
            let b = points[(i + 1) % n];
            if a.y == b.y {
                continue;
            }
            let (lo, hi) = if a.y < b.y { (a, b) } else { (b, a) };
            if cy >= lo.y && cy < hi.y {
                xs.push(lo.x + (cy - lo.y) * (hi.x - lo.x) / (hi.y - lo.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            // Pixel centers x + 0.5 inside [pair[0], pair[1]].
            let first = (pair[0] - 0.5).ceil().max(0.0);
            let last = (pair[1] - 0.5).floor().min(max_x);
            if first > last {
                continue;
            }
            for x in first as usize..=last as usize {
                mask.set(x, row, true);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    #[test]
    fn unit_square_on_pixel_grid() {
        let m = fill_polygon(&pts(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]), 4, 4);
        let got: Vec<_> = m.foreground().collect();
        assert_eq!(got, vec![(0, 0), (1, 0), (0, 1), (1, 1)]);
    }

    #[test]
    fn horizontal_edges_through_centers_are_top_inclusive() {
        // Rectangle whose top and bottom edges pass exactly through pixel centers.
        let m = fill_polygon(&pts(&[(0.5, 0.5), (2.5, 0.5), (2.5, 2.5), (0.5, 2.5)]), 4, 4);
        let got: Vec<_> = m.foreground().collect();
        assert_eq!(got, vec![(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1)]);
    }

    #[test]
    fn clipping_keeps_in_canvas_part() {
        let m = fill_polygon(&pts(&[(-10.0, -10.0), (2.0, -10.0), (2.0, 2.0), (-10.0, 2.0)]), 4, 4);
        assert_eq!(m.count(), 4);
        let outside = fill_polygon(&pts(&[(10.0, 10.0), (12.0, 10.0), (12.0, 12.0)]), 4, 4);
        assert!(outside.is_empty());
    }

    #[test]
    fn winding_direction_does_not_matter() {
        let cw = pts(&[(1.2, 0.3), (7.7, 2.1), (5.5, 6.9), (0.4, 4.4)]);
        let mut ccw = cw.clone();
        ccw.reverse();
        assert_eq!(fill_polygon(&cw, 9, 9), fill_polygon(&ccw, 9, 9));
    }
}
