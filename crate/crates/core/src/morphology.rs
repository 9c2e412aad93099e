//! Binary morphology with square structuring elements and 8-connected
//! component labelling. Pixels outside the canvas count as background.

use std::collections::VecDeque;

use crate::mask::BinaryMask;

/// Erosion by a `k × k` square (k odd) centered on each pixel.
pub fn erode(mask: &BinaryMask, k: usize) -> BinaryMask {
    assert!(k % 2 == 1, "structuring element size must be odd");
    if k == 1 {
        return mask.clone();
    }
    let r = (k / 2) as isize;
    // Separable: a pixel survives iff the whole horizontal run, then the whole
    // vertical run of the intermediate result, is foreground.
    let (w, h) = (mask.width(), mask.height());
    let horiz = BinaryMask::from_fn(w, h, |x, y| (-r..=r).all(|d| mask.get_signed(x as isize + d, y as isize)));
    BinaryMask::from_fn(w, h, |x, y| (-r..=r).all(|d| horiz.get_signed(x as isize, y as isize + d)))
}

/// Dilation by a `k × k` square (k odd), clipped to the canvas.
pub fn dilate(mask: &BinaryMask, k: usize) -> BinaryMask {
    assert!(k % 2 == 1, "structuring element size must be odd");
    if k == 1 {
        return mask.clone();
    }
    let r = (k / 2) as isize;
    let (w, h) = (mask.width(), mask.height());
    let horiz = BinaryMask::from_fn(w, h, |x, y| (-r..=r).any(|d| mask.get_signed(x as isize + d, y as isize)));
    BinaryMask::from_fn(w, h, |x, y| (-r..=r).any(|d| horiz.get_signed(x as isize, y as isize + d)))
}

/// Erosion followed by dilation.
pub fn open(mask: &BinaryMask, k: usize) -> BinaryMask {
    dilate(&erode(mask, k), k)
}

pub const NEIGHBORS_8: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// 8-connected components, numbered `1..` in raster order of their first
/// pixel. Returns the per-pixel label image (0 = background) and each
/// component's pixel list.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, Vec<Vec<(usize, usize)>>) {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut comps: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || labels[y * w + x] != 0 {
                continue;
            }
            let id = comps.len() as u32 + 1;
            let mut pixels = Vec::new();
            labels[y * w + x] = id;
            queue.push_back((x, y));
            while let Some((cx, cy)) = queue.pop_front() {
                pixels.push((cx, cy));
                for (dx, dy) in NEIGHBORS_8 {
                    let (nx, ny) = (cx as isize + dx, cy as isize + dy);
                    if mask.get_signed(nx, ny) {
                        let idx = ny as usize * w + nx as usize;
                        if labels[idx] == 0 {
                            labels[idx] = id;
                            queue.push_back((nx as usize, ny as usize));
                        }
                    }
                }
            }
            comps.push(pixels);
        }
    }
    (labels, comps)
}

/// The largest 8-connected component (first in raster order on ties).
pub fn largest_component(mask: &BinaryMask) -> BinaryMask {
    let (_, comps) = label_components(mask);
    let mut out = BinaryMask::new(mask.width(), mask.height());
    if let Some(best) = comps.iter().reduce(|a, b| if b.len() > a.len() { b } else { a }) {
        for &(x, y) in best {
            out.set(x, y, true);
        }
    }
    out
}
