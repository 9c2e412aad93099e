//! Measurements on labelled vertebrae.
//!
//! Angles are in degrees in the image frame (y down): a line's angle is
//! `atan2(dy, dx)` folded into `(-90, 90]`, so an endplate whose posterior
//! (right) end sits higher than its anterior (left) end has a negative angle.
//! Anterior is toward smaller `x`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{direction, normalize_line_angle, upward_normal, Point};
use crate::instancing::{AnatomicalLabel, ChainEntry, VertebraChain};
use crate::mask::{BinaryMask, Instance};
use crate::morphology::{label_components, largest_component, open};

#[derive(Debug, Error, PartialEq)]
pub enum MorphometryError {
    #[error("kernel size {0} must be odd and at least 1")]
    InvalidKernel(usize),
    #[error("kernel size {kernel} exceeds the instance extent {extent}")]
    KernelTooLarge { kernel: usize, extent: usize },
    #[error("degenerate shape: {0}")]
    DegenerateShape(String),
    #[error("chain has no {0}")]
    MissingLevel(AnatomicalLabel),
    #[error("cannot fit endplates of {label}: {reason}")]
    DegenerateEndplate { label: AnatomicalLabel, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MorphometryParams {
    /// Side of the square opening element used for osteophyte residue.
    pub kernel: usize,
    pub min_osteophyte_area: usize,
    pub min_area: usize,
}

impl Default for MorphometryParams {
    fn default() -> Self {
        Self { kernel: 5, min_osteophyte_area: 6, min_area: 32 }
    }
}

/// Closed clockwise (on screen) boundary trace, pixel coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<(usize, usize)>,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centers(&self) -> impl Iterator<Item = Point> + '_ {
        self.points.iter().map(|&(x, y)| Point::pixel_center(x, y))
    }
}

// Clockwise on screen, starting west.
const MOORE: [(isize, isize); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

fn moore_index(dx: isize, dy: isize) -> usize {
    MOORE.iter().position(|&d| d == (dx, dy)).expect("8-adjacent offset")
}

/// Moore-neighbour trace of the largest component, starting at its topmost,
/// then leftmost pixel. A one-pixel region yields a one-point contour.
pub fn extract_contour(inst: &Instance) -> Contour {
    trace_boundary(&inst.mask)
}

pub fn trace_boundary(mask: &BinaryMask) -> Contour {
    let region = largest_component(mask);
    let Some(start) = region.foreground().next() else {
        return Contour { points: Vec::new() };
    };
    let fg = |p: (usize, usize), d: usize| {
        let (x, y) = (p.0 as isize + MOORE[d].0, p.1 as isize + MOORE[d].1);
        region.get_signed(x, y).then(|| (x as usize, y as usize))
    };
    let step = |p: (usize, usize), back: usize| -> Option<((usize, usize), usize)> {
        (1..=8).find_map(|k| {
            let d = (back + k) % 8;
            fg(p, d).map(|q| {
                let prev = MOORE[(d + 7) % 8];
                let rel = (p.0 as isize + prev.0 - q.0 as isize, p.1 as isize + prev.1 - q.1 as isize);
                (q, moore_index(rel.0, rel.1))
            })
        })
    };

    let mut points = vec![start];
    // The pixel west of the start is background: it is the leftmost of the top row.
    let Some((first, mut back)) = step(start, 0) else {
        return Contour { points };
    };
    let mut p = first;
    points.push(first);
    let limit = 4 * region.width() * region.height() + 16;
    while points.len() <= limit {
        let (q, b) = step(p, back).expect("traced pixel has a neighbour");
        if p == start && q == first {
            break;
        }
        points.push(q);
        p = q;
        back = b;
    }
    if points.len() > 1 && points.last() == Some(&start) {
        points.pop();
    }
    Contour { points }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsteophyteCandidate {
    pub centroid: Point,
    pub area: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OsteophyteReport {
    pub residue: BinaryMask,
    pub candidates: Vec<OsteophyteCandidate>,
    pub kernel: usize,
}

/// Morphological residue `mask − open(mask, k)`: the parts of the outline
/// narrower than a `k × k` square, such as corner spurs. Residue components of
/// at least `min_area` pixels are reported as candidates.
pub fn detect_osteophytes(inst: &Instance, kernel: usize, min_area: usize) -> Result<OsteophyteReport, MorphometryError> {
    if kernel == 0 || kernel % 2 == 0 {
        return Err(MorphometryError::InvalidKernel(kernel));
    }
    let bbox = inst.mask.bbox().ok_or_else(|| MorphometryError::DegenerateShape("empty mask".into()))?;
    let extent = bbox.width().min(bbox.height());
    if kernel > extent {
        return Err(MorphometryError::KernelTooLarge { kernel, extent });
    }
    let local = inst.mask.crop(&bbox);
    let residue_local = local.subtract(&open(&local, kernel));
    let (_, comps) = label_components(&residue_local);
    let candidates = comps
        .iter()
        .filter(|c| c.len() >= min_area.max(1))
        .map(|c| {
            let n = c.len() as f64;
            let (sx, sy) = c.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x as f64 + 0.5, b + y as f64 + 0.5));
            OsteophyteCandidate { centroid: Point::new(bbox.x0 as f64 + sx / n, bbox.y0 as f64 + sy / n), area: c.len() }
        })
        .collect();
    let residue = BinaryMask::embed(&residue_local, bbox.x0, bbox.y0, inst.mask.width(), inst.mask.height());
    Ok(OsteophyteReport { residue, candidates, kernel })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndplateKind {
    Superior,
    Inferior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endplate {
    pub kind: EndplateKind,
    pub anterior: Point,
    pub posterior: Point,
    /// Degrees against the image horizontal, in `(-90, 90]`.
    pub angle: f64,
}

impl Endplate {
    /// Unit normal pointing cranially (toward smaller y).
    pub fn upward_normal(&self) -> Point {
        upward_normal(self.angle)
    }
}

/// Fits straight superior and inferior endplates.
///
/// The body axis is the principal axis of the pixel distribution closest to
/// horizontal. Contour points above/below the centroid along that axis form
/// the superior/inferior bands. Each endplate is the least-squares line
/// through its band restricted to the middle 80% of the body length, moved
/// half a pixel outward onto the pixel edges. The endpoints are the band's
/// extreme projections onto that line.
pub fn approximate_endplates(inst: &Instance, min_area: usize) -> Result<(Endplate, Endplate), MorphometryError> {
    let region = largest_component(&inst.mask);
    let area = region.count();
    if area < min_area.max(3) {
        return Err(MorphometryError::DegenerateShape(format!("{area} pixels, need {min_area}")));
    }
    let centroid = region.centroid().expect("non-empty");
    let (xx, xy, yy) = region.second_moments().expect("non-empty");
    let disc = ((xx - yy).powi(2) / 4.0 + xy * xy).sqrt();
    if (xx + yy) / 2.0 - disc < 1e-9 {
        return Err(MorphometryError::DegenerateShape("pixels are collinear".into()));
    }
    let major = 0.5 * (2.0 * xy).atan2(xx - yy).to_degrees();
    let axis = if normalize_line_angle(major).abs() <= 45.0 { major } else { major + 90.0 };
    let axis = normalize_line_angle(axis);
    let u = direction(axis);
    let n = upward_normal(axis);

    let contour = trace_boundary(&region);
    let local: Vec<(f64, f64)> = contour
        .centers()
        .map(|p| {
            let d = p.sub(centroid);
            (d.dot(u), d.dot(n))
        })
        .collect();
    let (tmin, tmax) = local.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(t, _)| (a.min(t), b.max(t)));
    let margin = 0.1 * (tmax - tmin);
    let (lo, hi) = (tmin + margin, tmax - margin);

    let fit = |kind: EndplateKind| -> Result<Endplate, MorphometryError> {
        let sign = match kind {
            EndplateKind::Superior => 1.0,
            EndplateKind::Inferior => -1.0,
        };
        let band: Vec<(f64, f64)> = local.iter().copied().filter(|&(_, s)| s * sign > 0.0).collect();
        let core: Vec<(f64, f64)> = band.iter().copied().filter(|&(t, _)| t >= lo && t <= hi).collect();
        let (intercept, slope) = least_squares(&core)
            .ok_or_else(|| MorphometryError::DegenerateShape(format!("{kind:?} band has too few points")))?;
        let (bmin, bmax) = band.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(t, _)| (a.min(t), b.max(t)));
        let along = u.add(n.scale(slope));
        let angle = normalize_line_angle(along.y.atan2(along.x).to_degrees());
        let outward = upward_normal(angle).scale(0.5 * sign);
        let at = |t: f64| centroid.add(u.scale(t)).add(n.scale(intercept + slope * t)).add(outward);
        let (a, b) = (at(bmin), at(bmax));
        let (anterior, posterior) = if a.x <= b.x { (a, b) } else { (b, a) };
        Ok(Endplate { kind, anterior, posterior, angle })
    };
    Ok((fit(EndplateKind::Superior)?, fit(EndplateKind::Inferior)?))
}

/// Ordinary least squares `s = a + b·t`; `None` with fewer than two distinct `t`.
fn least_squares(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ms = points.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = points.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if stt < 1e-12 {
        return None;
    }
    let sts: f64 = points.iter().map(|p| (p.0 - mt) * (p.1 - ms)).sum();
    let b = sts / stt;
    Some((ms - b * mt, b))
}

fn entry_endplates(entry: &ChainEntry, min_area: usize) -> Result<(Endplate, Endplate), MorphometryError> {
    approximate_endplates(&entry.instance, min_area)
        .map_err(|e| MorphometryError::DegenerateEndplate { label: entry.label, reason: e.to_string() })
}

/// Cobb-style angle between the superior endplates of L1 and S1:
/// `angle(L1) − angle(S1)`, positive for a lordotic curve.
pub fn lordosis_angle(chain: &VertebraChain, min_area: usize) -> Result<f64, MorphometryError> {
    let l1 = chain.find(AnatomicalLabel::Lumbar(1)).ok_or(MorphometryError::MissingLevel(AnatomicalLabel::Lumbar(1)))?;
    let s1 = chain.find(AnatomicalLabel::S1).ok_or(MorphometryError::MissingLevel(AnatomicalLabel::S1))?;
    let (l1_sup, _) = entry_endplates(l1, min_area)?;
    let (s1_sup, _) = entry_endplates(s1, min_area)?;
    Ok(lordosis_from_endplates(&l1_sup, &s1_sup))
}

pub fn lordosis_from_endplates(l1_superior: &Endplate, s1_superior: &Endplate) -> f64 {
    l1_superior.angle - s1_superior.angle
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscSpace {
    pub lower: AnatomicalLabel,
    pub upper: AnatomicalLabel,
    /// Signed pixels; negative when the vertebrae overlap.
    pub anterior: f64,
    pub posterior: f64,
}

/// Gap between the lower vertebra's superior endplate and the upper
/// vertebra's inferior endplate, at both ends, measured along the lower
/// endplate's cranial normal.
pub fn disc_space(lower: AnatomicalLabel, lower_sup: &Endplate, upper: AnatomicalLabel, upper_inf: &Endplate) -> DiscSpace {
    let n = lower_sup.upward_normal();
    DiscSpace {
        lower,
        upper,
        anterior: upper_inf.anterior.sub(lower_sup.anterior).dot(n),
        posterior: upper_inf.posterior.sub(lower_sup.posterior).dot(n),
    }
}

pub fn intervertebral_spaces(chain: &VertebraChain, min_area: usize) -> Result<Vec<DiscSpace>, MorphometryError> {
    let plates: Vec<(Endplate, Endplate)> = chain.entries.iter().map(|e| entry_endplates(e, min_area)).collect::<Result<_, _>>()?;
    Ok(chain
        .entries
        .windows(2)
        .zip(plates.windows(2))
        .map(|(e, p)| disc_space(e[0].label, &p[0].0, e[1].label, &p[1].1))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertebraMeasurement {
    pub id: u32,
    pub label: AnatomicalLabel,
    pub superior: Endplate,
    pub inferior: Endplate,
    pub osteophytes: Vec<OsteophyteCandidate>,
    /// `None` when the kernel did not fit the instance.
    pub kernel: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphometryRecord {
    pub vertebrae: Vec<VertebraMeasurement>,
    /// `None` when L1 or S1 is absent.
    pub lordosis_angle: Option<f64>,
    pub gaps: Vec<DiscSpace>,
}

/// Runs every measurement over a chain.
pub fn measure_chain(chain: &VertebraChain, params: &MorphometryParams) -> Result<MorphometryRecord, MorphometryError> {
    let mut vertebrae = Vec::with_capacity(chain.len());
    for entry in &chain.entries {
        let (superior, inferior) = entry_endplates(entry, params.min_area)?;
        let (osteophytes, kernel) = match detect_osteophytes(&entry.instance, params.kernel, params.min_osteophyte_area) {
            Ok(r) => (r.candidates, Some(r.kernel)),
            Err(MorphometryError::KernelTooLarge { .. }) => (Vec::new(), None),
            Err(e) => return Err(e),
        };
        vertebrae.push(VertebraMeasurement { id: entry.instance.id, label: entry.label, superior, inferior, osteophytes, kernel });
    }
    let find = |l: AnatomicalLabel| vertebrae.iter().find(|v| v.label == l);
    let lordosis_angle = match (find(AnatomicalLabel::Lumbar(1)), find(AnatomicalLabel::S1)) {
        (Some(l1), Some(s1)) => Some(lordosis_from_endplates(&l1.superior, &s1.superior)),
        _ => None,
    };
    let gaps = vertebrae.windows(2).map(|w| disc_space(w[0].label, &w[0].superior, w[1].label, &w[1].inferior)).collect();
    Ok(MorphometryRecord { vertebrae, lordosis_angle, gaps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::fill_polygon;

    fn inst(mask: BinaryMask) -> Instance {
        Instance::new(1, 1, None, mask).unwrap()
    }

    fn rect(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| (x0..x1).contains(&x) && (y0..y1).contains(&y))
    }

    #[test]
    fn single_pixel_contour() {
        let c = extract_contour(&inst(rect(5, 5, 2, 2, 3, 3)));
        assert_eq!(c.points, vec![(2, 2)]);
    }

    #[test]
    fn rectangle_contour_lengths() {
        for (w, h) in [(2, 2), (2, 5), (7, 3), (10, 10), (13, 4)] {
            let c = extract_contour(&inst(rect(20, 20, 3, 4, 3 + w, 4 + h)));
            assert_eq!(c.len(), 2 * (w + h) - 4, "{w}x{h}");
            assert_eq!(c.points[0], (3, 4));
            // clockwise on screen: the first move goes east
            assert_eq!(c.points[1], (4, 4));
            for pair in c.points.windows(2) {
                let (dx, dy) = (pair[0].0 as isize - pair[1].0 as isize, pair[0].1 as isize - pair[1].1 as isize);
                assert!(dx.abs() <= 1 && dy.abs() <= 1 && (dx, dy) != (0, 0));
            }
        }
    }

    #[test]
    fn contour_follows_largest_component() {
        let m = BinaryMask::from_fn(20, 20, |x, y| (x < 2 && y < 2) || ((5..15).contains(&x) && (5..10).contains(&y)));
        let c = extract_contour(&inst(m));
        assert_eq!(c.points[0], (5, 5));
        assert_eq!(c.len(), 2 * (10 + 5) - 4);
    }

    #[test]
    fn contour_of_touching_corners_visits_cut_pixel_twice() {
        // two squares joined diagonally through the single pixel (2,2)
        let m = BinaryMask::from_fn(6, 6, |x, y| (x < 2 && y < 2) || (x == 2 && y == 2) || ((3..5).contains(&x) && (3..5).contains(&y)));
        let c = extract_contour(&inst(m));
        assert_eq!(c.points.iter().filter(|&&p| p == (2, 2)).count(), 2);
    }

    #[test]
    fn osteophyte_residue_cases() {
        let body = rect(40, 30, 5, 5, 30, 20);
        let r = detect_osteophytes(&inst(body.clone()), 3, 6).unwrap();
        assert_eq!(r.residue.count(), 0);
        assert!(r.candidates.is_empty());

        // 2 px wide, 5 px long spur off the right side
        let spur = rect(40, 30, 30, 8, 35, 10);
        let mut with_spur = body.clone();
        with_spur.union_with(&spur);
        let r = detect_osteophytes(&inst(with_spur), 5, 6).unwrap();
        assert_eq!(r.residue, spur);
        assert_eq!(r.candidates.len(), 1);
        assert_eq!(r.candidates[0].area, 10);

        // a spur as wide as the kernel survives the opening
        let wide = rect(40, 30, 30, 8, 35, 13);
        let mut with_wide = body;
        with_wide.union_with(&wide);
        assert_eq!(detect_osteophytes(&inst(with_wide), 5, 6).unwrap().residue.count(), 0);
    }

    #[test]
    fn osteophyte_kernel_checks() {
        let m = rect(20, 20, 0, 0, 4, 10);
        assert_eq!(detect_osteophytes(&inst(m.clone()), 5, 6).unwrap_err(), MorphometryError::KernelTooLarge { kernel: 5, extent: 4 });
        assert_eq!(detect_osteophytes(&inst(m.clone()), 4, 6).unwrap_err(), MorphometryError::InvalidKernel(4));
        assert_eq!(detect_osteophytes(&inst(m), 1, 1).unwrap().residue.count(), 0);
    }

    #[test]
    fn axis_aligned_rectangle_endplates() {
        let (sup, inf) = approximate_endplates(&inst(rect(80, 60, 10, 20, 50, 44)), 32).unwrap();
        assert!(sup.angle.abs() < 1e-9 && inf.angle.abs() < 1e-9);
        assert!(sup.anterior.distance(Point::new(10.0, 20.0)) <= 1.0, "{:?}", sup.anterior);
        assert!(sup.posterior.distance(Point::new(50.0, 20.0)) <= 1.0, "{:?}", sup.posterior);
        assert!((inf.anterior.y - 44.0).abs() < 1e-9);
    }

    fn rotated_rect(cx: f64, cy: f64, w: f64, h: f64, deg: f64) -> Vec<Point> {
        let c = Point::new(cx, cy);
        [(-w / 2.0, -h / 2.0), (w / 2.0, -h / 2.0), (w / 2.0, h / 2.0), (-w / 2.0, h / 2.0)]
            .iter()
            .map(|&(x, y)| Point::new(cx + x, cy + y).rotate_about(c, deg))
            .collect()
    }

    #[test]
    fn rotated_rectangle_angle() {
        let m = fill_polygon(&rotated_rect(50.0, 50.0, 48.0, 30.0, 15.0), 100, 100);
        let (sup, inf) = approximate_endplates(&inst(m), 32).unwrap();
        assert!((sup.angle - 15.0).abs() <= 1.5, "{}", sup.angle);
        assert!((inf.angle - 15.0).abs() <= 1.5, "{}", inf.angle);
    }

    #[test]
    fn trapezoid_top_slant() {
        // bottom edge horizontal, top edge rising by 8 degrees to the left
        let w = 50.0;
        let rise = w * 8f64.to_radians().tan();
        let poly = vec![Point::new(20.0, 70.0), Point::new(70.0, 70.0), Point::new(70.0, 40.0), Point::new(20.0, 40.0 - rise)];
        let m = fill_polygon(&poly, 100, 100);
        let (sup, inf) = approximate_endplates(&inst(m), 32).unwrap();
        assert!(((sup.angle - inf.angle) - 8.0).abs() <= 1.5, "{} {}", sup.angle, inf.angle);
    }

    #[test]
    fn collinear_pixels_are_degenerate() {
        let m = rect(60, 10, 5, 5, 55, 6);
        assert!(matches!(approximate_endplates(&inst(m), 32), Err(MorphometryError::DegenerateShape(_))));
    }
}
