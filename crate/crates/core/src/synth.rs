//! Seeded synthetic lateral lumbar spines and simulated prediction errors.
//!
//! Vertebrae are rounded convex quadrilaterals stacked from the sacrum
//! upward. Superior endplate angles advance by `lordosis_curve / 5` per
//! level, centered on the middle of the chain, so the L1 and S1 superior
//! endplates differ by exactly the requested curve. Half of each step is
//! taken up by the disc wedge and half by the vertebral body wedge.
//! Alongside the masks the generator returns the exact construction geometry,
//! which is what measurements are checked against.
//!
//! Every random draw comes from a ChaCha8 stream seeded by the caller.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{direction, normalize_line_angle, upward_normal, Point};
use crate::instancing::{AnatomicalLabel, ChainEntry, VertebraChain};
use crate::mask::{merge_to_binary, BinaryMask, Instance, InstanceSet, LabelMask};
use crate::morphometry::{
    disc_space, trace_boundary, Endplate, EndplateKind, MorphometryRecord, OsteophyteCandidate, VertebraMeasurement,
};
use crate::raster::{fill_polygon, fill_polygon_into};
use crate::taxonomy::{LabelTaxonomy, CAGE, SCREW};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("layout needs {need_w:.0}x{need_h:.0} px but the canvas is {width}x{height}")]
    InfeasibleLayout { need_w: f64, need_h: f64, width: usize, height: usize },
}

pub type Range = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    /// 3 to 6 lumbar-class vertebrae above the sacrum.
    pub lumbar_count: usize,
    pub include_sacrum: bool,
    /// Adds one more lumbar-class vertebra on top, labelled Th12 (or Th11
    /// when there are six lumbar vertebrae).
    pub include_th12: bool,
    /// Degrees between the L1 and S1 superior endplates.
    pub lordosis_curve: f64,
    pub vertebra_width: Range,
    pub vertebra_height: Range,
    /// Disc height at the endplate midpoints.
    pub gap: Range,
    /// Vertical overlap of adjacent vertebrae as a fraction of the lower
    /// vertebra's height; subtracted from the gap.
    pub overlap_fraction: Range,
    /// Extra random disc wedge, degrees.
    pub endplate_slant: Range,
    pub corner_radius: Range,
    pub cages: bool,
    pub screws: bool,
    pub spur_probability: f64,
    pub spur_length: Range,
    pub spur_width: f64,
    pub margin: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 256,
            height: 448,
            lumbar_count: 5,
            include_sacrum: true,
            include_th12: false,
            lordosis_curve: 40.0,
            vertebra_width: (40.0, 50.0),
            vertebra_height: (24.0, 30.0),
            gap: (6.0, 12.0),
            overlap_fraction: (0.0, 0.0),
            endplate_slant: (-2.0, 2.0),
            corner_radius: (2.0, 4.0),
            cages: false,
            screws: false,
            spur_probability: 0.0,
            spur_length: (4.0, 9.0),
            spur_width: 2.0,
            margin: 8.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if !(3..=6).contains(&self.lumbar_count) {
            return bad(format!("lumbar_count {} outside 3..=6", self.lumbar_count));
        }
        let ranges = [
            ("vertebra_width", self.vertebra_width, 4.0),
            ("vertebra_height", self.vertebra_height, 4.0),
            ("gap", self.gap, 0.0),
            ("overlap_fraction", self.overlap_fraction, 0.0),
            ("corner_radius", self.corner_radius, 0.0),
            ("spur_length", self.spur_length, 0.0),
        ];
        for (name, (lo, hi), min) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= min) {
                return bad(format!("{name} range ({lo}, {hi}) must be finite, ordered and >= {min}"));
            }
        }
        let (slo, shi) = self.endplate_slant;
        if !(slo <= shi && slo.abs() <= 20.0 && shi.abs() <= 20.0) {
            return bad(format!("endplate_slant ({slo}, {shi}) must be ordered within +-20 degrees"));
        }
        if self.overlap_fraction.1 >= 1.0 {
            return bad("overlap_fraction must stay below 1".into());
        }
        if self.vertebra_width.0 <= self.vertebra_height.1 {
            return bad("vertebrae must be wider than tall".into());
        }
        if 2.0 * self.corner_radius.1 >= self.vertebra_height.0 {
            return bad("corner radius too large for the vertebra height".into());
        }
        if !(0.0..=1.0).contains(&self.spur_probability) {
            return bad(format!("spur_probability {} outside [0, 1]", self.spur_probability));
        }
        if !(self.spur_width > 0.0) || !(self.margin >= 0.0) {
            return bad("spur_width must be positive and margin non-negative".into());
        }
        if !self.lordosis_curve.is_finite() || self.lordosis_curve.abs() > 90.0 {
            return bad(format!("lordosis_curve {} outside +-90", self.lordosis_curve));
        }
        if self.width == 0 || self.height == 0 {
            return bad("canvas must be non-empty".into());
        }
        Ok(())
    }
}

/// Exact construction geometry of one vertebra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertebraGeometry {
    pub label: AnatomicalLabel,
    pub inferior_angle: f64,
    pub superior_angle: f64,
    /// Unrounded corners: inferior-anterior, inferior-posterior,
    /// superior-posterior, superior-anterior.
    pub corners: [Point; 4],
    pub corner_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpine {
    pub gt: InstanceSet,
    pub semantic: LabelMask,
    /// `None` when the sacrum is left out.
    pub chain_truth: Option<VertebraChain>,
    pub construction: MorphometryRecord,
    pub geometry: Vec<VertebraGeometry>,
    /// Spur pixels protruding past the unrounded vertebral outline, by
    /// instance id.
    pub spur_masks: BTreeMap<u32, BinaryMask>,
}

pub(crate) fn sample(rng: &mut ChaCha8Rng, (lo, hi): Range) -> f64 {
    if lo >= hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Outline of a convex polygon with every corner replaced by a quadratic
/// curve cut back `radius` along both edges.
pub fn rounded_polygon(corners: &[Point], radius: f64) -> Vec<Point> {
    if radius <= 0.0 {
        return corners.to_vec();
    }
    let n = corners.len();
    let mut out = Vec::with_capacity(n * 5);
    for i in 0..n {
        let p = corners[i];
        let prev = corners[(i + n - 1) % n];
        let next = corners[(i + 1) % n];
        let toward = |q: Point| {
            let d = q.sub(p);
            let len = d.norm();
            p.add(d.scale((radius.min(len / 2.0)) / len))
        };
        let (a, b) = (toward(prev), toward(next));
        for k in 0..5 {
            let t = k as f64 / 4.0;
            let s = 1.0 - t;
            out.push(a.scale(s * s).add(p.scale(2.0 * s * t)).add(b.scale(t * t)));
        }
    }
    out
}

/// Corners of a vertebra given its inferior midpoint, edge angles, width and
/// height along the mid-axis. Order: inferior-anterior, inferior-posterior,
/// superior-posterior, superior-anterior.
pub fn vertebra_corners(bottom_mid: Point, inferior_angle: f64, superior_angle: f64, width: f64, height: f64) -> [Point; 4] {
    let u_inf = direction(inferior_angle);
    let u_sup = direction(superior_angle);
    let top_mid = bottom_mid.add(upward_normal((inferior_angle + superior_angle) / 2.0).scale(height));
    [
        bottom_mid.sub(u_inf.scale(width / 2.0)),
        bottom_mid.add(u_inf.scale(width / 2.0)),
        top_mid.add(u_sup.scale(width / 2.0)),
        top_mid.sub(u_sup.scale(width / 2.0)),
    ]
}

fn construction_endplates(c: &[Point; 4], inferior_angle: f64, superior_angle: f64) -> (Endplate, Endplate) {
    let sup = Endplate { kind: EndplateKind::Superior, anterior: c[3], posterior: c[2], angle: normalize_line_angle(superior_angle) };
    let inf = Endplate { kind: EndplateKind::Inferior, anterior: c[0], posterior: c[1], angle: normalize_line_angle(inferior_angle) };
    (sup, inf)
}

/// Spur polygon lying along the endplate at `corner` (index into the corner
/// array), flush with the endplate line and protruding `length` beyond the
/// corner, `width` thick toward the body.
fn spur_polygon(c: &[Point; 4], corner: usize, length: f64, width: f64, radius: f64) -> Vec<Point> {
    let (p, along_body, into_body) = match corner {
        0 => (c[0], c[1].sub(c[0]), c[3].sub(c[0])),
        1 => (c[1], c[0].sub(c[1]), c[2].sub(c[1])),
        2 => (c[2], c[3].sub(c[2]), c[1].sub(c[2])),
        _ => (c[3], c[2].sub(c[3]), c[0].sub(c[3])),
    };
    let e = along_body.scale(1.0 / along_body.norm());
    // inward normal of the endplate, on the body side
    let mut nrm = Point::new(-e.y, e.x);
    if nrm.dot(into_body) < 0.0 {
        nrm = nrm.scale(-1.0);
    }
    let start = p.add(e.scale(radius + 2.0));
    let end = p.sub(e.scale(length));
    vec![start, end, end.add(nrm.scale(width)), start.add(nrm.scale(width))]
}

pub fn generate_spine(spec: &SynthSpec, taxonomy: &LabelTaxonomy, seed: u64) -> Result<SynthSpine, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Chain positions: 0 = sacrum (even when omitted), then lumbar-class levels.
    let n_upper = spec.lumbar_count + usize::from(spec.include_th12);
    let first = usize::from(!spec.include_sacrum);
    let positions: Vec<usize> = (first..=n_upper).collect();
    let step = spec.lordosis_curve / 5.0;
    let base = -step * n_upper as f64 / 2.0;

    struct Draft {
        pos: usize,
        corners: [Point; 4],
        inf: f64,
        sup: f64,
        radius: f64,
        spur: Option<(usize, f64)>,
    }
    let mut drafts: Vec<Draft> = Vec::new();
    let mut bottom = Point::new(0.0, 0.0);
    let mut inf = 0.0;
    for (k, &pos) in positions.iter().enumerate() {
        let sup = base + step * pos as f64;
        let mut w = sample(&mut rng, spec.vertebra_width);
        let mut h = sample(&mut rng, spec.vertebra_height);
        if pos == 0 {
            w *= 1.1;
            h *= 1.15;
        }
        if k == 0 {
            inf = if pos == 0 { sup + 5.0 } else { sup - step / 2.0 };
        }
        let radius = sample(&mut rng, spec.corner_radius);
        let corners = vertebra_corners(bottom, inf, sup, w, h);
        let spur = (spec.spur_probability > 0.0 && rng.random_bool(spec.spur_probability))
            .then(|| (rng.random_range(0..4usize), sample(&mut rng, spec.spur_length)));
        let axis = (inf + sup) / 2.0;
        if axis.abs() > 40.0 {
            return Err(SynthError::InvalidSpec(format!("vertebra axis {axis:.1} deg is too steep; reduce lordosis_curve")));
        }
        drafts.push(Draft { pos, corners, inf, sup, radius, spur });

        let gap = sample(&mut rng, spec.gap) - sample(&mut rng, spec.overlap_fraction) * h;
        let top_mid = corners[2].add(corners[3]).scale(0.5);
        bottom = top_mid.add(upward_normal(sup).scale(gap));
        inf = sup + step / 2.0 + sample(&mut rng, spec.endplate_slant);
    }

    // Center the layout on the canvas.
    let all: Vec<Point> = drafts.iter().flat_map(|d| d.corners).collect();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &all {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let spur_room = if spec.spur_probability > 0.0 { spec.spur_length.1 } else { 0.0 };
    let need_w = x1 - x0 + 2.0 * (spec.margin + spur_room);
    let need_h = y1 - y0 + 2.0 * (spec.margin + spur_room);
    if need_w > spec.width as f64 || need_h > spec.height as f64 {
        return Err(SynthError::InfeasibleLayout { need_w, need_h, width: spec.width, height: spec.height });
    }
    // Integer shift keeps the construction exactly reproducible on the grid.
    let shift = Point::new(
        ((spec.width as f64 - (x1 - x0)) / 2.0 - x0).round(),
        ((spec.height as f64 - (y1 - y0)) / 2.0 - y0).round(),
    );
    for d in &mut drafts {
        for c in &mut d.corners {
            *c = c.add(shift);
        }
    }

    let (w, h) = (spec.width, spec.height);
    let lumbar = taxonomy.lumbar();
    let sacral = taxonomy.sacral();
    let mut gt = InstanceSet::new(w, h);
    let mut geometry = Vec::new();
    let mut spur_masks = BTreeMap::new();
    let mut measurements = Vec::new();
    for (i, d) in drafts.iter().enumerate() {
        let id = i as u32 + 1;
        let label = AnatomicalLabel::from_chain_position(d.pos);
        let body = fill_polygon(&rounded_polygon(&d.corners, d.radius), w, h);
        let mut mask = body.clone();
        let mut osteophytes = Vec::new();
        if let Some((corner, length)) = d.spur {
            let mut spur = BinaryMask::new(w, h);
            fill_polygon_into(&spur_polygon(&d.corners, corner, length, spec.spur_width, d.radius), &mut spur);
            mask.union_with(&spur.subtract(&body));
            // Truth is what protrudes past the unrounded outline; the part of
            // the spur base that only squares off the rounded corner is body.
            let outside = spur.subtract(&fill_polygon(&d.corners, w, h));
            if let Some(c) = outside.centroid() {
                osteophytes.push(OsteophyteCandidate { centroid: c, area: outside.count() });
            }
            spur_masks.insert(id, outside);
        }
        let class = if d.pos == 0 { sacral } else { lumbar };
        gt.push(Instance::new(id, class, None, mask).map_err(|e| SynthError::InvalidSpec(e.to_string()))?)
            .expect("fresh id");
        let (superior, inferior) = construction_endplates(&d.corners, d.inf, d.sup);
        measurements.push(VertebraMeasurement { id, label, superior, inferior, osteophytes, kernel: None });
        geometry.push(VertebraGeometry {
            label,
            inferior_angle: d.inf,
            superior_angle: d.sup,
            corners: d.corners,
            corner_radius: d.radius,
        });
    }

    // Implants, painted after the vertebrae.
    if spec.cages && drafts.len() >= 2 {
        let k = rng.random_range(0..drafts.len() - 1);
        let (lo, hi) = (&drafts[k].corners, &drafts[k + 1].corners);
        let lower_mid = lo[2].add(lo[3]).scale(0.5);
        let upper_mid = hi[0].add(hi[1]).scale(0.5);
        let center = lower_mid.add(upper_mid).scale(0.5);
        let angle = (drafts[k].sup + drafts[k + 1].inf) / 2.0;
        let thick = upper_mid.distance(lower_mid) + 4.0;
        let len = lo[2].distance(lo[3]) * 0.4;
        push_implant(&mut gt, taxonomy.index_of(CAGE).expect("required class"), center, angle, len, thick);
    }
    if spec.screws {
        let candidates: Vec<usize> = drafts.iter().enumerate().filter(|(_, d)| d.pos > 0).map(|(i, _)| i).collect();
        let k = candidates[rng.random_range(0..candidates.len())];
        let c = &drafts[k].corners;
        let center = c.iter().fold(Point::default(), |a, &b| a.add(b.scale(0.25)));
        let axis = (drafts[k].inf + drafts[k].sup) / 2.0;
        let len = c[0].distance(c[1]) * 0.8;
        // posterior entry: shift the screw toward larger x along the axis
        let center = center.add(direction(axis).scale(len * 0.35));
        push_implant(&mut gt, taxonomy.index_of(SCREW).expect("required class"), center, axis - 8.0, len, 4.0);
    }

    let semantic = gt.paint_in_order();
    let chain_truth = spec.include_sacrum.then(|| VertebraChain {
        entries: gt
            .instances()
            .iter()
            .zip(&measurements)
            .map(|(inst, m)| ChainEntry { instance: inst.clone(), label: m.label, centroid: inst.mask.centroid().expect("non-empty") })
            .collect(),
    });
    let find = |l: AnatomicalLabel| measurements.iter().find(|m| m.label == l);
    let lordosis_angle = match (find(AnatomicalLabel::Lumbar(1)), find(AnatomicalLabel::S1)) {
        (Some(l1), Some(s1)) => Some(l1.superior.angle - s1.superior.angle),
        _ => None,
    };
    let gaps = measurements.windows(2).map(|m| disc_space(m[0].label, &m[0].superior, m[1].label, &m[1].inferior)).collect();
    let construction = MorphometryRecord { vertebrae: measurements, lordosis_angle, gaps };
    Ok(SynthSpine { gt, semantic, chain_truth, construction, geometry, spur_masks })
}

fn push_implant(set: &mut InstanceSet, class: u8, center: Point, angle: f64, length: f64, thickness: f64) {
    let u = direction(angle).scale(length / 2.0);
    let n = upward_normal(angle).scale(thickness / 2.0);
    let poly = [center.sub(u).sub(n), center.add(u).sub(n), center.add(u).add(n), center.sub(u).add(n)];
    let mask = fill_polygon(&poly, set.width(), set.height());
    if let Ok(inst) = Instance::new(set.next_id(), class, None, mask) {
        set.push(inst).expect("fresh id");
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbSpec {
    /// Largest radial displacement of the outline, pixels.
    pub jitter: f64,
    /// Contour points between independent jitter draws; displacements are
    /// interpolated in between.
    pub jitter_spacing: usize,
    pub drop_probability: f64,
    pub fuse_adjacent_probability: f64,
    pub bridge_width: f64,
    pub extra_instance_count: usize,
    pub extra_width: Range,
    pub extra_height: Range,
    pub extra_rotation: Range,
    pub extra_class: u8,
    /// Uniform score range; `None` keeps existing scores.
    pub score_range: Option<Range>,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        Self::identity()
    }
}

impl PerturbSpec {
    pub fn identity() -> Self {
        Self {
            jitter: 0.0,
            jitter_spacing: 6,
            drop_probability: 0.0,
            fuse_adjacent_probability: 0.0,
            bridge_width: 3.0,
            extra_instance_count: 0,
            extra_width: (36.0, 48.0),
            extra_height: (22.0, 30.0),
            extra_rotation: (-15.0, 15.0),
            extra_class: 1,
            score_range: None,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(SynthError::InvalidSpec(format!("{name} {p} outside [0, 1]")))
            }
        };
        prob("drop_probability", self.drop_probability)?;
        prob("fuse_adjacent_probability", self.fuse_adjacent_probability)?;
        if !(self.jitter >= 0.0) || self.jitter_spacing == 0 {
            return Err(SynthError::InvalidSpec("jitter must be >= 0 and jitter_spacing >= 1".into()));
        }
        if let Some((lo, hi)) = self.score_range {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(SynthError::InvalidSpec(format!("score range ({lo}, {hi}) outside [0, 1]")));
            }
        }
        if self.extra_class == 0 {
            return Err(SynthError::InvalidSpec("extra_class must be a foreground class".into()));
        }
        for (name, (lo, hi)) in [("extra_width", self.extra_width), ("extra_height", self.extra_height)] {
            if !(lo <= hi && lo >= 1.0) {
                return Err(SynthError::InvalidSpec(format!("{name} ({lo}, {hi}) must be ordered and >= 1")));
            }
        }
        Ok(())
    }
}

/// Moves each outline point radially from the centroid and refills. The
/// displacement is drawn every `spacing` points and interpolated between.
fn jitter_instance(mask: &BinaryMask, amplitude: f64, spacing: usize, rng: &mut ChaCha8Rng) -> BinaryMask {
    let contour = trace_boundary(mask);
    let Some(center) = mask.centroid() else {
        return mask.clone();
    };
    let pts: Vec<Point> = contour.centers().collect();
    if pts.len() < 3 {
        return mask.clone();
    }
    let knots = pts.len().div_ceil(spacing);
    let draws: Vec<f64> = (0..knots).map(|_| rng.random_range(-amplitude..=amplitude)).collect();
    let poly: Vec<Point> = pts
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let k = i / spacing;
            let t = (i % spacing) as f64 / spacing as f64;
            let d = draws[k] * (1.0 - t) + draws[(k + 1) % knots] * t;
            let radial = p.sub(center);
            let len = radial.norm();
            if len < 1e-9 {
                p
            } else {
                // +0.5 moves pixel centers out onto the pixel edges
                p.add(radial.scale((d + 0.5) / len))
            }
        })
        .collect();
    fill_polygon(&poly, mask.width(), mask.height())
}

/// Union of two instances plus a `bridge_width` band between their centroids,
/// the way overlapping or bridged vertebrae come out of a semantic model.
/// The result keeps `a`'s id, class and score.
pub fn fuse_pair(a: &Instance, b: &Instance, bridge_width: f64) -> Instance {
    let mut mask = a.mask.clone();
    mask.union_with(&b.mask);
    if bridge_width > 0.0 {
        let (ca, cb) = (a.mask.centroid().expect("non-empty"), b.mask.centroid().expect("non-empty"));
        let d = cb.sub(ca);
        let len = d.norm();
        if len > 0.0 {
            let n = Point::new(-d.y / len, d.x / len).scale(bridge_width / 2.0);
            fill_polygon_into(&[ca.add(n), cb.add(n), cb.sub(n), ca.sub(n)], &mut mask);
        }
    }
    Instance { id: a.id, class_index: a.class_index, score: a.score, mask }
}

/// Simulated prediction. Applies, in order: boundary jitter, random drops,
/// fusion of vertically adjacent same-class pairs, spurious extra instances,
/// and score assignment. The identity spec returns `gt` unchanged.
pub fn perturb(gt: &InstanceSet, spec: &PerturbSpec, seed: u64) -> Result<InstanceSet, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (gt.width(), gt.height());
    let mut work: Vec<Instance> = Vec::with_capacity(gt.len());
    for inst in gt.instances() {
        if spec.jitter > 0.0 {
            let mask = jitter_instance(&inst.mask, spec.jitter, spec.jitter_spacing, &mut rng);
            if !mask.is_empty() {
                work.push(Instance { mask, ..inst.clone() });
            }
        } else {
            work.push(inst.clone());
        }
    }

    if spec.drop_probability > 0.0 {
        work.retain(|_| !rng.random_bool(spec.drop_probability));
    }

    if spec.fuse_adjacent_probability > 0.0 && work.len() >= 2 {
        // caudal first
        let mut order: Vec<(f64, usize)> = work.iter().enumerate().map(|(i, inst)| (-inst.mask.centroid().expect("non-empty").y, i)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut fused: Vec<Instance> = Vec::with_capacity(work.len());
        let mut k = 0;
        while k < order.len() {
            let a = &work[order[k].1];
            if k + 1 < order.len() {
                let b = &work[order[k + 1].1];
                if a.class_index == b.class_index && rng.random_bool(spec.fuse_adjacent_probability) {
                    fused.push(fuse_pair(a, b, spec.bridge_width));
                    k += 2;
                    continue;
                }
            }
            fused.push(a.clone());
            k += 1;
        }
        fused.sort_by_key(|i| i.id);
        work = fused;
    }

    let mut out = InstanceSet::from_instances(w, h, work).expect("ids come from a valid set");
    for _ in 0..spec.extra_instance_count {
        let occupied = merge_to_binary(&out);
        let mut placed: Option<BinaryMask> = None;
        for attempt in 0..100 {
            let ew = sample(&mut rng, spec.extra_width).round().max(1.0);
            let eh = sample(&mut rng, spec.extra_height).round().max(1.0);
            let rot = sample(&mut rng, spec.extra_rotation);
            if ew > w as f64 || eh > h as f64 {
                break;
            }
            let x = rng.random_range(0..=(w - ew as usize)) as f64;
            let y = rng.random_range(0..=(h - eh as usize)) as f64;
            let center = Point::new(x + ew / 2.0, y + eh / 2.0);
            let quad: Vec<Point> = [Point::new(x, y), Point::new(x + ew, y), Point::new(x + ew, y + eh), Point::new(x, y + eh)]
                .iter()
                .map(|p| p.rotate_about(center, rot))
                .collect();
            let m = fill_polygon(&quad, w, h);
            if m.is_empty() {
                continue;
            }
            let clear = m.intersection_count(&occupied) == 0;
            if clear || attempt == 99 {
                placed = Some(m);
                break;
            }
        }
        if let Some(mask) = placed {
            let id = out.next_id();
            out.push(Instance::new(id, spec.extra_class, None, mask).expect("non-empty")).expect("fresh id");
        }
    }

    if let Some(range) = spec.score_range {
        let instances = out
            .into_instances()
            .into_iter()
            .map(|i| Instance { score: Some(sample(&mut rng, range).clamp(0.0, 1.0)), ..i })
            .collect();
        out = InstanceSet::from_instances(w, h, instances).expect("unchanged ids");
    }
    Ok(out)
}
