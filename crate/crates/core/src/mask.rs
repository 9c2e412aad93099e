//! Raster mask types and the instance-to-binary merge.

use thiserror::Error;

use crate::geometry::Point;

#[derive(Debug, Error, PartialEq)]
pub enum MaskError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("data length {got} does not match {width}x{height}")]
    BadLength { width: usize, height: usize, got: usize },
    #[error("instance {0} has an empty mask")]
    EmptyInstance(u32),
    #[error("duplicate instance id {0}")]
    DuplicateId(u32),
    #[error("class index {0} is invalid for an instance")]
    BadClass(u8),
    #[error("score {0} outside [0, 1]")]
    BadScore(f64),
}

/// Inclusive-exclusive pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        let b = BBox {
            x0: self.x0.max(other.x0),
            y0: self.y0.max(other.y0),
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
        };
        (b.x0 < b.x1 && b.y0 < b.y1).then_some(b)
    }

    /// Grows by `margin` on every side, clamped to a `width × height` canvas.
    pub fn expand(&self, margin: usize, width: usize, height: usize) -> BBox {
        BBox {
            x0: self.x0.saturating_sub(margin),
            y0: self.y0.saturating_sub(margin),
            x1: (self.x1 + margin).min(width),
            y1: (self.y1 + margin).min(height),
        }
    }
}

/// Row-major foreground/background raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0; width * height] }
    }

    /// Any nonzero byte counts as foreground.
    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self, MaskError> {
        if data.len() != width * height {
            return Err(MaskError::BadLength { width, height, got: data.len() });
        }
        let data = data.into_iter().map(|v| u8::from(v != 0)).collect();
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(x, y)));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    /// Like [`get`](Self::get) but treats out-of-canvas coordinates as background.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = u8::from(value);
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn same_dims(&self, other: &BinaryMask) -> Result<(), MaskError> {
        if self.width != other.width || self.height != other.height {
            return Err(MaskError::DimensionMismatch(self.width, self.height, other.width, other.height));
        }
        Ok(())
    }

    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data.iter().enumerate().filter(|(_, &v)| v != 0).map(move |(i, _)| (i % w, i / w))
    }

    pub fn bbox(&self) -> Option<BBox> {
        let mut b: Option<BBox> = None;
        for (x, y) in self.foreground() {
            b = Some(match b {
                None => BBox { x0: x, y0: y, x1: x + 1, y1: y + 1 },
                Some(b) => BBox { x0: b.x0.min(x), y0: b.y0.min(y), x1: b.x1.max(x + 1), y1: b.y1.max(y + 1) },
            });
        }
        b
    }

    pub fn crop(&self, b: &BBox) -> BinaryMask {
        BinaryMask::from_fn(b.width(), b.height(), |x, y| self.get(x + b.x0, y + b.y0))
    }

    /// Places `sub` with its origin at `(x0, y0)` on a fresh canvas.
    pub fn embed(sub: &BinaryMask, x0: usize, y0: usize, width: usize, height: usize) -> BinaryMask {
        let mut out = BinaryMask::new(width, height);
        for (x, y) in sub.foreground() {
            out.set(x + x0, y + y0, true);
        }
        out
    }

    pub fn union_with(&mut self, other: &BinaryMask) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a |= b;
        }
    }

    pub fn subtract(&self, other: &BinaryMask) -> BinaryMask {
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a & !b & 1).collect();
        BinaryMask { width: self.width, height: self.height, data }
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> usize {
        self.data.iter().zip(&other.data).filter(|(&a, &b)| a & b != 0).count()
    }

    /// Mean of foreground pixel centers.
    pub fn centroid(&self) -> Option<Point> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (x, y) in self.foreground() {
            sx += x as f64 + 0.5;
            sy += y as f64 + 0.5;
            n += 1;
        }
        (n > 0).then(|| Point::new(sx / n as f64, sy / n as f64))
    }

    /// Central second moments `(mu_xx, mu_xy, mu_yy)` of the pixel centers.
    pub fn second_moments(&self) -> Option<(f64, f64, f64)> {
        let c = self.centroid()?;
        let (mut xx, mut xy, mut yy, mut n) = (0.0, 0.0, 0.0, 0usize);
        for (x, y) in self.foreground() {
            let dx = x as f64 + 0.5 - c.x;
            let dy = y as f64 + 0.5 - c.y;
            xx += dx * dx;
            xy += dx * dy;
            yy += dy * dy;
            n += 1;
        }
        let n = n as f64;
        Some((xx / n, xy / n, yy / n))
    }

    /// Extent along the minor principal axis, `sqrt(12 * lambda_min)`; exact
    /// for a solid rectangle in the continuum limit.
    pub fn minor_extent(&self) -> Option<f64> {
        let (xx, xy, yy) = self.second_moments()?;
        let tr = xx + yy;
        let disc = ((xx - yy).powi(2) / 4.0 + xy * xy).sqrt();
        let lambda_min = (tr / 2.0 - disc).max(0.0);
        Some((12.0 * lambda_min).sqrt())
    }
}

/// Row-major per-pixel class indices; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self, MaskError> {
        if data.len() != width * height {
            return Err(MaskError::BadLength { width, height, got: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, class: u8) {
        self.data[y * self.width + x] = class;
    }

    /// Paints every foreground pixel of `mask` with `class`.
    pub fn paint(&mut self, mask: &BinaryMask, class: u8) {
        for (dst, &m) in self.data.iter_mut().zip(mask.data()) {
            if m != 0 {
                *dst = class;
            }
        }
    }

    /// Foreground where the class is nonzero.
    pub fn to_binary(&self) -> BinaryMask {
        BinaryMask { width: self.width, height: self.height, data: self.data.iter().map(|&v| u8::from(v != 0)).collect() }
    }

    pub fn class_mask(&self, class: u8) -> BinaryMask {
        BinaryMask { width: self.width, height: self.height, data: self.data.iter().map(|&v| u8::from(v == class)).collect() }
    }

    pub fn max_value(&self) -> u8 {
        self.data.iter().copied().max().unwrap_or(0)
    }
}

/// One predicted or annotated object.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: u32,
    pub class_index: u8,
    /// Prediction confidence; `None` for annotations and semantic-derived instances.
    pub score: Option<f64>,
    pub mask: BinaryMask,
}

impl Instance {
    pub fn new(id: u32, class_index: u8, score: Option<f64>, mask: BinaryMask) -> Result<Self, MaskError> {
        if class_index == 0 {
            return Err(MaskError::BadClass(class_index));
        }
        if let Some(s) = score {
            if !(0.0..=1.0).contains(&s) {
                return Err(MaskError::BadScore(s));
            }
        }
        if mask.is_empty() {
            return Err(MaskError::EmptyInstance(id));
        }
        Ok(Self { id, class_index, score, mask })
    }

    /// Score used for ranking; scoreless instances rank as 1.0.
    pub fn effective_score(&self) -> f64 {
        self.score.unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSet {
    width: usize,
    height: usize,
    instances: Vec<Instance>,
}

impl InstanceSet {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, instances: Vec::new() }
    }

    pub fn from_instances(width: usize, height: usize, instances: Vec<Instance>) -> Result<Self, MaskError> {
        let mut set = Self::new(width, height);
        for inst in instances {
            set.push(inst)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, inst: Instance) -> Result<(), MaskError> {
        if inst.mask.width() != self.width || inst.mask.height() != self.height {
            return Err(MaskError::DimensionMismatch(self.width, self.height, inst.mask.width(), inst.mask.height()));
        }
        if self.instances.iter().any(|i| i.id == inst.id) {
            return Err(MaskError::DuplicateId(inst.id));
        }
        self.instances.push(inst);
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn into_instances(self) -> Vec<Instance> {
        self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    pub fn next_id(&self) -> u32 {
        self.instances.iter().map(|i| i.id + 1).max().unwrap_or(1)
    }

    /// Reassigns ids `1..=n` in current order.
    pub fn renumbered(mut self) -> Self {
        for (i, inst) in self.instances.iter_mut().enumerate() {
            inst.id = i as u32 + 1;
        }
        self
    }

    /// Paints instances into a semantic mask; later instances overwrite earlier ones.
    pub fn paint_in_order(&self) -> LabelMask {
        let mut out = LabelMask::new(self.width, self.height);
        for inst in &self.instances {
            out.paint(&inst.mask, inst.class_index);
        }
        out
    }

    /// Paints so that higher-priority instances win overlaps: priority is
    /// descending score (scoreless = 1.0), then ascending id.
    pub fn paint_by_priority(&self) -> LabelMask {
        let mut order: Vec<&Instance> = self.instances.iter().collect();
        order.sort_by(|a, b| b.effective_score().total_cmp(&a.effective_score()).then(a.id.cmp(&b.id)));
        let mut out = LabelMask::new(self.width, self.height);
        for inst in order.into_iter().rev() {
            out.paint(&inst.mask, inst.class_index);
        }
        out
    }
}

/// Union of all instance masks. An empty set yields an all-background mask.
pub fn merge_to_binary(set: &InstanceSet) -> BinaryMask {
    let mut out = BinaryMask::new(set.width, set.height);
    for inst in &set.instances {
        out.union_with(&inst.mask);
    }
    out
}

/// Intersection over union. Two empty masks score 1.0.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MaskError> {
    a.same_dims(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.data.iter().zip(&b.data) {
        inter += (p & q) as usize;
        union += (p | q) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| (x0..x1).contains(&x) && (y0..y1).contains(&y))
    }

    #[test]
    fn merge_of_empty_set_is_blank() {
        let set = InstanceSet::new(8, 8);
        let m = merge_to_binary(&set);
        assert_eq!((m.width(), m.height(), m.count()), (8, 8, 0));
    }

    #[test]
    fn merge_of_single_instance_is_identity() {
        let m = rect(8, 8, 1, 1, 4, 5);
        let set = InstanceSet::from_instances(8, 8, vec![Instance::new(1, 1, None, m.clone()).unwrap()]).unwrap();
        assert_eq!(merge_to_binary(&set), m);
    }

    #[test]
    fn merge_counts_overlap_once() {
        // 2x4 at x=0..2 and 2x4 at x=1..3, both rows 0..4: overlap is 1x4.
        let a = rect(8, 8, 0, 0, 2, 4);
        let b = rect(8, 8, 1, 0, 3, 4);
        assert_eq!((a.count(), b.count(), a.intersection_count(&b)), (8, 8, 4));
        let set = InstanceSet::from_instances(
            8,
            8,
            vec![Instance::new(1, 1, None, a.clone()).unwrap(), Instance::new(2, 1, None, b.clone()).unwrap()],
        )
        .unwrap();
        let merged = merge_to_binary(&set);
        let brute = (0..8).flat_map(|y| (0..8).map(move |x| (x, y))).filter(|&(x, y)| a.get(x, y) || b.get(x, y)).count();
        assert_eq!(brute, 12);
        assert_eq!(merged.count(), brute);
    }

    #[test]
    fn iou_examples() {
        let a = rect(4, 4, 0, 0, 2, 4);
        let b = rect(4, 4, 0, 0, 4, 2);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(mask_iou(&rect(4, 4, 0, 0, 1, 1), &rect(4, 4, 3, 3, 4, 4)).unwrap(), 0.0);
        assert!((mask_iou(&a, &b).unwrap() - 4.0 / 12.0).abs() < 1e-15);
        assert_eq!(mask_iou(&BinaryMask::new(4, 4), &BinaryMask::new(4, 4)).unwrap(), 1.0);
        assert!(matches!(mask_iou(&a, &BinaryMask::new(3, 4)), Err(MaskError::DimensionMismatch(..))));
    }

    #[test]
    fn instance_invariants() {
        assert_eq!(Instance::new(3, 1, None, BinaryMask::new(2, 2)), Err(MaskError::EmptyInstance(3)));
        assert!(Instance::new(1, 0, None, rect(2, 2, 0, 0, 1, 1)).is_err());
        assert!(Instance::new(1, 1, Some(1.5), rect(2, 2, 0, 0, 1, 1)).is_err());
        let mut set = InstanceSet::new(2, 2);
        set.push(Instance::new(1, 1, None, rect(2, 2, 0, 0, 1, 1)).unwrap()).unwrap();
        assert_eq!(set.push(Instance::new(1, 1, None, rect(2, 2, 0, 0, 1, 1)).unwrap()), Err(MaskError::DuplicateId(1)));
        assert!(set.push(Instance::new(2, 1, None, rect(3, 2, 0, 0, 1, 1)).unwrap()).is_err());
    }

    #[test]
    fn priority_paint_prefers_high_score() {
        let a = Instance::new(1, 1, Some(0.4), rect(4, 4, 0, 0, 3, 3)).unwrap();
        let b = Instance::new(2, 3, Some(0.9), rect(4, 4, 1, 1, 4, 4)).unwrap();
        let set = InstanceSet::from_instances(4, 4, vec![a, b]).unwrap();
        let m = set.paint_by_priority();
        assert_eq!(m.get(1, 1), 3);
        assert_eq!(m.get(0, 0), 1);
    }

    #[test]
    fn rectangle_minor_extent() {
        let m = rect(64, 64, 10, 10, 50, 30);
        let e = m.minor_extent().unwrap();
        // sqrt(h^2 - 1) for a discrete h-row stack.
        assert!((e - (399.0f64).sqrt()).abs() < 1e-9, "{e}");
    }
}
