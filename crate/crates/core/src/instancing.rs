//! From raw predictions to labelled vertebrae.
//!
//! Instance-model output goes through [`nms`]; semantic output is cut into
//! instances by [`connected_components`] and [`split_fused`]. Either way
//! [`label_chain`] then names the vertebrae by walking cranially from the
//! sacrum.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::mask::{BBox, BinaryMask, Instance, InstanceSet};
use crate::morphology::{erode, label_components, NEIGHBORS_8};
use crate::taxonomy::LabelTaxonomy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstancingParams {
    pub iou_threshold: f64,
    pub min_area: usize,
    pub max_erosions: usize,
    /// Largest allowed step of the labelling walk, as a multiple of the median
    /// vertebra height.
    pub max_gap_factor: f64,
}

impl Default for InstancingParams {
    fn default() -> Self {
        Self { iou_threshold: 0.5, min_area: 32, max_erosions: 10, max_gap_factor: 2.0 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum InstancingError {
    #[error("no sacral instance to anchor the chain")]
    NoSacralAnchor,
    #[error("{0} sacral instances; expected exactly one")]
    MultipleSacralAnchors(usize),
    #[error("chain broken after {after}: next vertebra is {distance:.1} px away, limit {limit:.1} px")]
    BrokenChain { after: AnatomicalLabel, distance: f64, limit: f64 },
}

/// Vertebral level. Lumbar and thoracic levels carry their number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum AnatomicalLabel {
    S1,
    Lumbar(u8),
    Thoracic(u8),
    Unknown,
}

impl AnatomicalLabel {
    /// Label for the `n`-th vertebra of the chain, counting the sacrum as 0.
    pub fn from_chain_position(n: usize) -> Self {
        match n {
            0 => Self::S1,
            1..=5 => Self::Lumbar(6 - n as u8),
            6..=17 => Self::Thoracic(18 - n as u8),
            _ => Self::Unknown,
        }
    }

    /// Inverse of [`from_chain_position`](Self::from_chain_position).
    pub fn chain_position(self) -> Option<usize> {
        match self {
            Self::S1 => Some(0),
            Self::Lumbar(n @ 1..=5) => Some(6 - n as usize),
            Self::Thoracic(n @ 1..=12) => Some(18 - n as usize),
            _ => None,
        }
    }
}

impl fmt::Display for AnatomicalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::S1 => f.write_str("S1"),
            Self::Lumbar(n) => write!(f, "L{n}"),
            Self::Thoracic(n) => write!(f, "Th{n}"),
            Self::Unknown => f.write_str("Unknown"),
        }
    }
}

impl FromStr for AnatomicalLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |rest: &str, max: u8| rest.parse::<u8>().ok().filter(|n| (1..=max).contains(n));
        if s == "S1" {
            Ok(Self::S1)
        } else if s == "Unknown" {
            Ok(Self::Unknown)
        } else if let Some(n) = s.strip_prefix("Th").and_then(|r| num(r, 12)) {
            Ok(Self::Thoracic(n))
        } else if let Some(n) = s.strip_prefix('L').and_then(|r| num(r, 5)) {
            Ok(Self::Lumbar(n))
        } else {
            Err(format!("unknown anatomical label `{s}`"))
        }
    }
}

impl From<AnatomicalLabel> for String {
    fn from(l: AnatomicalLabel) -> Self {
        l.to_string()
    }
}

impl TryFrom<String> for AnatomicalLabel {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainEntry {
    pub instance: Instance,
    pub label: AnatomicalLabel,
    pub centroid: Point,
}

/// Labelled vertebrae ordered caudal to cranial, starting at S1.
#[derive(Debug, Clone, PartialEq)]
pub struct VertebraChain {
    pub entries: Vec<ChainEntry>,
}

impl VertebraChain {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn find(&self, label: AnatomicalLabel) -> Option<&ChainEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    pub fn labels(&self) -> Vec<AnatomicalLabel> {
        self.entries.iter().map(|e| e.label).collect()
    }
}

struct Ranked<'a> {
    inst: &'a Instance,
    bbox: BBox,
    area: usize,
}

fn iou_with_bbox(a: &Ranked<'_>, b: &Ranked<'_>) -> f64 {
    let Some(overlap) = a.bbox.intersect(&b.bbox) else {
        return 0.0;
    };
    let mut inter = 0usize;
    for y in overlap.y0..overlap.y1 {
        for x in overlap.x0..overlap.x1 {
            if a.inst.mask.get(x, y) && b.inst.mask.get(x, y) {
                inter += 1;
            }
        }
    }
    inter as f64 / (a.area + b.area - inter) as f64
}

/// Greedy non-maximum suppression. Instances are visited by descending score
/// (scoreless ones rank as 1.0 and ahead of scored ones at equal score, then
/// by ascending id); each is dropped when its IoU with an already kept
/// instance exceeds `iou_threshold`. Survivors keep their ids and input order.
pub fn nms(set: &InstanceSet, iou_threshold: f64, class_aware: bool) -> InstanceSet {
    let mut ranked: Vec<Ranked<'_>> = set
        .instances()
        .iter()
        .map(|inst| Ranked { inst, bbox: inst.mask.bbox().expect("instances are non-empty"), area: inst.mask.count() })
        .collect();
    ranked.sort_by(|a, b| {
        b.inst
            .effective_score()
            .total_cmp(&a.inst.effective_score())
            .then(b.inst.score.is_none().cmp(&a.inst.score.is_none()))
            .then(a.inst.id.cmp(&b.inst.id))
    });
    let mut kept: Vec<&Ranked<'_>> = Vec::new();
    for cand in &ranked {
        let suppressed = kept.iter().any(|k| {
            (!class_aware || k.inst.class_index == cand.inst.class_index) && iou_with_bbox(k, cand) > iou_threshold
        });
        if !suppressed {
            kept.push(cand);
        }
    }
    let keep_ids: Vec<u32> = kept.iter().map(|k| k.inst.id).collect();
    let survivors = set.instances().iter().filter(|i| keep_ids.contains(&i.id)).cloned().collect();
    InstanceSet::from_instances(set.width(), set.height(), survivors).expect("subset of a valid set")
}

/// One scoreless instance per 8-connected foreground component of at least
/// `min_area` pixels, with ids `1..` in raster order of each component's
/// first pixel.
pub fn connected_components(mask: &BinaryMask, class_index: u8, min_area: usize) -> InstanceSet {
    let (w, h) = (mask.width(), mask.height());
    let (_, comps) = label_components(mask);
    let mut set = InstanceSet::new(w, h);
    for pixels in comps.into_iter().filter(|p| p.len() >= min_area.max(1)) {
        let mut m = BinaryMask::new(w, h);
        for (x, y) in pixels {
            m.set(x, y, true);
        }
        let id = set.len() as u32 + 1;
        set.push(Instance::new(id, class_index, None, m).expect("component is non-empty")).expect("fresh id");
    }
    set
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    /// The pieces (ids `1..`), or the untouched input when no split happened.
    pub pieces: Vec<Instance>,
    pub split: bool,
}

/// Separates a blob of merged vertebrae. The mask is eroded with a 3×3
/// square up to `max_erosions` times; at the first step leaving two or more
/// components of at least `min_area` pixels, those components seed a
/// geodesic regrowth inside the original mask. Pixels reached by several
/// seeds at the same step go to the lowest seed id.
pub fn split_fused(inst: &Instance, max_erosions: usize, min_area: usize) -> SplitOutcome {
    let unsplit = || SplitOutcome { pieces: vec![inst.clone()], split: false };
    let Some(bbox) = inst.mask.bbox() else {
        return unsplit();
    };
    let (w, h) = (inst.mask.width(), inst.mask.height());
    let original = inst.mask.crop(&bbox);
    let mut current = original.clone();
    for _ in 0..max_erosions {
        current = erode(&current, 3);
        if current.is_empty() {
            break;
        }
        let (_, comps) = label_components(&current);
        let seeds: Vec<Vec<(usize, usize)>> = comps.into_iter().filter(|c| c.len() >= min_area.max(1)).collect();
        if seeds.len() < 2 {
            continue;
        }
        let owner = regrow(&original, &seeds);
        let pieces = (0..seeds.len())
            .map(|s| {
                let local = BinaryMask::from_vec(
                    original.width(),
                    original.height(),
                    owner.iter().map(|&o| u8::from(o == s as u32 + 1)).collect(),
                )
                .expect("same size");
                let mask = BinaryMask::embed(&local, bbox.x0, bbox.y0, w, h);
                Instance::new(s as u32 + 1, inst.class_index, inst.score, mask).expect("seed pixels are owned")
            })
            .collect();
        return SplitOutcome { pieces, split: true };
    }
    unsplit()
}

/// Multi-source BFS inside `region`. Returns owner ids (1-based seed index)
/// per pixel; pixels the seeds cannot reach go to the seed with the nearest
/// centroid.
fn regrow(region: &BinaryMask, seeds: &[Vec<(usize, usize)>]) -> Vec<u32> {
    let w = region.width();
    let mut owner = vec![0u32; w * region.height()];
    let mut frontier: Vec<(usize, usize)> = Vec::new();
    for (s, pixels) in seeds.iter().enumerate() {
        for &(x, y) in pixels {
            owner[y * w + x] = s as u32 + 1;
            frontier.push((x, y));
        }
    }
    while !frontier.is_empty() {
        // Claim this layer's pixels with the smallest adjacent seed id before
        // any of them can propagate.
        let mut claims: Vec<(usize, u32)> = Vec::new();
        for &(x, y) in &frontier {
            let me = owner[y * w + x];
            for (dx, dy) in NEIGHBORS_8 {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if region.get_signed(nx, ny) {
                    let idx = ny as usize * w + nx as usize;
                    if owner[idx] == 0 {
                        claims.push((idx, me));
                    }
                }
            }
        }
        claims.sort_unstable();
        claims.dedup_by_key(|c| c.0);
        frontier.clear();
        for (idx, s) in claims {
            owner[idx] = s;
            frontier.push((idx % w, idx / w));
        }
    }

    let leftovers: Vec<usize> = region.foreground().map(|(x, y)| y * w + x).filter(|&i| owner[i] == 0).collect();
    if !leftovers.is_empty() {
        let centroids: Vec<Point> = seeds
            .iter()
            .map(|p| {
                let n = p.len() as f64;
                let (sx, sy) = p.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x as f64, b + y as f64));
                Point::new(sx / n, sy / n)
            })
            .collect();
        for i in leftovers {
            let p = Point::new((i % w) as f64, (i / w) as f64);
            let best = (0..centroids.len())
                .min_by(|&a, &b| p.distance(centroids[a]).total_cmp(&p.distance(centroids[b])))
                .expect("at least two seeds");
            owner[i] = best as u32 + 1;
        }
    }
    owner
}

/// Runs components plus fused-blob splitting over every class of a semantic
/// mask. Vertebra classes are split; other classes only separated into
/// components. Ids are renumbered `1..` in class then raster order.
pub fn instances_from_semantic(
    semantic: &crate::mask::LabelMask,
    taxonomy: &LabelTaxonomy,
    params: &InstancingParams,
) -> InstanceSet {
    let mut out = InstanceSet::new(semantic.width(), semantic.height());
    for class in 1..taxonomy.n_classes() as u8 {
        let comps = connected_components(&semantic.class_mask(class), class, params.min_area);
        for inst in comps.into_instances() {
            let pieces = if taxonomy.is_vertebra(class) {
                split_fused(&inst, params.max_erosions, params.min_area).pieces
            } else {
                vec![inst]
            };
            for mut piece in pieces {
                piece.id = out.len() as u32 + 1;
                out.push(piece).expect("fresh id");
            }
        }
    }
    out
}

/// Names the vertebrae of one image. The single sacral instance becomes S1;
/// from there a nearest-neighbour walk over centroids visits the lumbar-class
/// instances, labelling them L5..L1 and then Th12, Th11, ... Non-vertebra
/// classes are ignored.
pub fn label_chain(set: &InstanceSet, taxonomy: &LabelTaxonomy, max_gap_factor: f64) -> Result<VertebraChain, InstancingError> {
    let sacral = taxonomy.sacral();
    let lumbar = taxonomy.lumbar();
    let anchors: Vec<&Instance> = set.instances().iter().filter(|i| i.class_index == sacral).collect();
    let anchor = match anchors.as_slice() {
        [] => return Err(InstancingError::NoSacralAnchor),
        [one] => *one,
        many => return Err(InstancingError::MultipleSacralAnchors(many.len())),
    };
    let mut rest: Vec<(&Instance, Point)> = set
        .instances()
        .iter()
        .filter(|i| i.class_index == lumbar)
        .map(|i| (i, i.mask.centroid().expect("non-empty")))
        .collect();

    let mut heights: Vec<f64> = std::iter::once(anchor)
        .chain(rest.iter().map(|(i, _)| *i))
        .map(|i| i.mask.minor_extent().expect("non-empty"))
        .collect();
    heights.sort_by(f64::total_cmp);
    let median = if heights.len() % 2 == 1 {
        heights[heights.len() / 2]
    } else {
        (heights[heights.len() / 2 - 1] + heights[heights.len() / 2]) / 2.0
    };
    let limit = max_gap_factor * median;

    let mut current = anchor.mask.centroid().expect("non-empty");
    let mut entries = vec![ChainEntry { instance: anchor.clone(), label: AnatomicalLabel::S1, centroid: current }];
    while !rest.is_empty() {
        let next = (0..rest.len())
            .min_by(|&a, &b| {
                let (pa, pb) = (rest[a].1, rest[b].1);
                current
                    .distance(pa)
                    .total_cmp(&current.distance(pb))
                    .then(pa.y.total_cmp(&pb.y))
                    .then(pa.x.total_cmp(&pb.x))
                    .then(rest[a].0.id.cmp(&rest[b].0.id))
            })
            .expect("non-empty");
        let (inst, centroid) = rest.swap_remove(next);
        let distance = current.distance(centroid);
        if distance > limit {
            let after = entries.last().expect("anchor present").label;
            return Err(InstancingError::BrokenChain { after, distance, limit });
        }
        let label = AnatomicalLabel::from_chain_position(entries.len());
        entries.push(ChainEntry { instance: inst.clone(), label, centroid });
        current = centroid;
    }
    Ok(VertebraChain { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::mask_iou;

    fn rect(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| (x0..x1).contains(&x) && (y0..y1).contains(&y))
    }

    #[test]
    fn label_names_round_trip() {
        for n in 0..18 {
            let l = AnatomicalLabel::from_chain_position(n);
            assert_eq!(l.chain_position(), Some(n));
            assert_eq!(l.to_string().parse::<AnatomicalLabel>().unwrap(), l);
        }
        assert_eq!(AnatomicalLabel::from_chain_position(6).to_string(), "Th12");
        assert_eq!(AnatomicalLabel::from_chain_position(18), AnatomicalLabel::Unknown);
        assert!("L6".parse::<AnatomicalLabel>().is_err());
    }

    #[test]
    fn nms_keeps_higher_score() {
        // 10x10 boxes offset by 2 columns: IoU = 80 / 120 ~ 0.67
        let a = Instance::new(1, 1, Some(0.8), rect(20, 20, 0, 0, 10, 10)).unwrap();
        let b = Instance::new(2, 1, Some(0.9), rect(20, 20, 2, 0, 12, 10)).unwrap();
        assert!(mask_iou(&a.mask, &b.mask).unwrap() > 0.5);
        let set = InstanceSet::from_instances(20, 20, vec![a, b]).unwrap();
        let out = nms(&set, 0.5, true);
        assert_eq!(out.instances().iter().map(|i| i.id).collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn nms_direct_iou_seventy_percent() {
        // |a| = |b| = 17, overlap 14 -> IoU 14/20 = 0.7
        let a = rect(20, 1, 0, 0, 17, 1);
        let b = rect(20, 1, 3, 0, 20, 1);
        assert!((mask_iou(&a, &b).unwrap() - 0.7).abs() < 1e-12);
        let set = InstanceSet::from_instances(
            20,
            1,
            vec![Instance::new(1, 1, Some(0.9), a).unwrap(), Instance::new(2, 1, Some(0.8), b).unwrap()],
        )
        .unwrap();
        let out = nms(&set, 0.5, true);
        assert_eq!(out.len(), 1);
        assert_eq!(out.instances()[0].score, Some(0.9));
    }

    #[test]
    fn nms_disjoint_and_class_aware() {
        let a = Instance::new(1, 1, Some(0.9), rect(20, 20, 0, 0, 5, 5)).unwrap();
        let b = Instance::new(2, 1, Some(0.8), rect(20, 20, 10, 10, 15, 15)).unwrap();
        let set = InstanceSet::from_instances(20, 20, vec![a.clone(), b]).unwrap();
        assert_eq!(nms(&set, 0.5, true), set);
        let c = Instance::new(3, 3, Some(0.5), rect(20, 20, 0, 0, 5, 5)).unwrap();
        let mixed = InstanceSet::from_instances(20, 20, vec![a, c]).unwrap();
        assert_eq!(nms(&mixed, 0.5, true).len(), 2);
        assert_eq!(nms(&mixed, 0.5, false).len(), 1);
    }

    #[test]
    fn nms_scoreless_beats_equal_scored() {
        let m = rect(8, 8, 0, 0, 4, 4);
        let scored = Instance::new(1, 1, Some(1.0), m.clone()).unwrap();
        let bare = Instance::new(2, 1, None, m).unwrap();
        let set = InstanceSet::from_instances(8, 8, vec![scored, bare]).unwrap();
        let out = nms(&set, 0.5, true);
        assert_eq!(out.instances()[0].id, 2);
    }

    #[test]
    fn components_examples() {
        let two = BinaryMask::from_fn(8, 8, |x, y| (x < 2 && y < 2) || ((5..7).contains(&x) && (5..7).contains(&y)));
        let set = connected_components(&two, 1, 1);
        assert_eq!(set.len(), 2);
        assert!(set.instances().iter().all(|i| i.mask.count() == 4 && i.score.is_none()));
        assert_eq!(set.instances()[0].mask.bbox().unwrap().x0, 0);
        assert!(connected_components(&BinaryMask::new(8, 8), 1, 1).is_empty());
        let full = connected_components(&BinaryMask::from_fn(8, 8, |_, _| true), 2, 1);
        assert_eq!(full.len(), 1);
        assert_eq!(full.instances()[0].mask.count(), 64);
        // min_area drops the small component
        let mixed = BinaryMask::from_fn(20, 20, |x, y| (x < 2 && y < 2) || (x > 10 && y > 10));
        assert_eq!(connected_components(&mixed, 1, 32).len(), 1);
    }

    fn dumbbell() -> BinaryMask {
        // Two 10x10 squares joined by a 1-pixel-wide, 3-pixel-long neck.
        BinaryMask::from_fn(30, 14, |x, y| {
            let left = (2..12).contains(&x) && (2..12).contains(&y);
            let right = (15..25).contains(&x) && (2..12).contains(&y);
            let neck = (12..15).contains(&x) && y == 6;
            left || right || neck
        })
    }

    #[test]
    fn dumbbell_splits_into_partition() {
        let m = dumbbell();
        assert_eq!(label_components(&erode(&m, 3)).1.len(), 2);
        let inst = Instance::new(7, 1, None, m.clone()).unwrap();
        let out = split_fused(&inst, 10, 32);
        assert!(out.split);
        assert_eq!(out.pieces.len(), 2);
        let (a, b) = (&out.pieces[0].mask, &out.pieces[1].mask);
        assert_eq!(a.intersection_count(b), 0);
        let mut union = a.clone();
        union.union_with(b);
        assert_eq!(union, m);
        // the squares stay whole
        assert!(a.count() >= 100 && b.count() >= 100);
    }

    #[test]
    fn rectangle_is_never_split() {
        let inst = Instance::new(1, 1, None, rect(30, 30, 3, 3, 25, 15)).unwrap();
        let out = split_fused(&inst, 10, 32);
        assert!(!out.split);
        assert_eq!(out.pieces, vec![inst.clone()]);
        let tiny = Instance::new(1, 1, None, rect(30, 30, 3, 3, 6, 6)).unwrap();
        assert!(!split_fused(&tiny, 10, 1).split);
    }

    #[test]
    fn contested_pixels_go_to_lower_seed() {
        // symmetric bridge: the middle column is equidistant from both seeds
        let m = BinaryMask::from_fn(31, 12, |x, y| {
            let left = (1..11).contains(&x) && (1..11).contains(&y);
            let right = (20..30).contains(&x) && (1..11).contains(&y);
            let bridge = (11..20).contains(&x) && (5..6).contains(&y);
            left || right || bridge
        });
        let out = split_fused(&Instance::new(1, 1, None, m).unwrap(), 10, 32);
        assert!(out.split);
        assert!(out.pieces[0].mask.get(15, 5));
        assert!(!out.pieces[1].mask.get(15, 5));
    }

    fn stacked(n_lumbar: usize, with_sacrum: bool) -> InstanceSet {
        let (w, h) = (60, 40 + 30 * n_lumbar);
        let mut set = InstanceSet::new(w, h);
        let mut y = h - 30;
        if with_sacrum {
            set.push(Instance::new(100, 2, None, rect(w, h, 10, y, 50, y + 24)).unwrap()).unwrap();
        }
        for k in 0..n_lumbar {
            y -= 30;
            set.push(Instance::new(k as u32 + 1, 1, None, rect(w, h, 12, y + 4, 48, y + 24)).unwrap()).unwrap();
        }
        set
    }

    #[test]
    fn five_lumbar_labels() {
        let chain = label_chain(&stacked(5, true), &LabelTaxonomy::default(), 2.0).unwrap();
        let names: Vec<String> = chain.labels().iter().map(ToString::to_string).collect();
        assert_eq!(names, ["S1", "L5", "L4", "L3", "L2", "L1"]);
    }

    #[test]
    fn sixth_lumbar_class_becomes_th12() {
        let chain = label_chain(&stacked(6, true), &LabelTaxonomy::default(), 2.0).unwrap();
        assert_eq!(chain.entries.last().unwrap().label, AnatomicalLabel::Thoracic(12));
    }

    #[test]
    fn anchor_errors() {
        let t = LabelTaxonomy::default();
        assert_eq!(label_chain(&stacked(3, false), &t, 2.0), Err(InstancingError::NoSacralAnchor));
        let mut two = stacked(1, true);
        two.push(Instance::new(200, 2, None, rect(two.width(), two.height(), 0, 0, 3, 3)).unwrap()).unwrap();
        assert_eq!(label_chain(&two, &t, 2.0), Err(InstancingError::MultipleSacralAnchors(2)));
    }

    #[test]
    fn far_vertebra_breaks_chain() {
        let t = LabelTaxonomy::default();
        let mut set = InstanceSet::new(60, 400);
        set.push(Instance::new(1, 2, None, rect(60, 400, 10, 370, 50, 394)).unwrap()).unwrap();
        set.push(Instance::new(2, 1, None, rect(60, 400, 10, 10, 50, 30)).unwrap()).unwrap();
        assert!(matches!(label_chain(&set, &t, 2.0), Err(InstancingError::BrokenChain { after: AnatomicalLabel::S1, .. })));
    }

    #[test]
    fn labelling_ignores_input_order_and_implants() {
        let t = LabelTaxonomy::default();
        let set = stacked(5, true);
        let mut shuffled: Vec<Instance> = set.instances().to_vec();
        shuffled.reverse();
        shuffled.swap(1, 3);
        shuffled.push(Instance::new(999, t.index_of("cage").unwrap(), None, rect(set.width(), set.height(), 0, 0, 4, 4)).unwrap());
        let other = InstanceSet::from_instances(set.width(), set.height(), shuffled).unwrap();
        let a = label_chain(&set, &t, 2.0).unwrap();
        let b = label_chain(&other, &t, 2.0).unwrap();
        let ids = |c: &VertebraChain| c.entries.iter().map(|e| (e.instance.id, e.label)).collect::<Vec<_>>();
        assert_eq!(ids(&a), ids(&b));
    }
}
