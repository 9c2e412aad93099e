//! Model comparison tables (one column per model, one row per metric), and colour
//! overlays of instance sets.

use thiserror::Error;

use crate::instancing::{AnatomicalLabel, VertebraChain};
use crate::mask::InstanceSet;
use crate::metrics::{DatasetSummary, MetricMeans};
use crate::morphometry::trace_boundary;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("nothing to report")]
    EmptyInput,
    #[error("{names} model names for {summaries} summaries")]
    NameCountMismatch { names: usize, summaries: usize },
    #[error("image is {0}x{1} but the instances are {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

pub const REPORT_ROWS: [&str; 4] =
    ["Pixel Accuracy Average", "Mean IoU Average", "Mean Accuracy Average", "Frequency Weighted IoU Average"];

fn row_values(m: &MetricMeans) -> [f64; 4] {
    [m.pixel_accuracy, m.mean_iou, m.mean_accuracy, m.fw_iou]
}

fn percent(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub text: String,
    pub csv: String,
}

/// Four rows (the metric averages) by one column per model, as percentages
/// with two decimals.
pub fn render_report<S: AsRef<str>>(summaries: &[DatasetSummary], model_names: &[S]) -> Result<Report, ReportError> {
    if summaries.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    if summaries.len() != model_names.len() {
        return Err(ReportError::NameCountMismatch { names: model_names.len(), summaries: summaries.len() });
    }
    let cells: Vec<[String; 4]> = summaries.iter().map(|s| row_values(&s.means).map(percent)).collect();

    let label_w = REPORT_ROWS.iter().map(|r| r.len()).max().unwrap_or(0);
    let col_w: Vec<usize> = model_names.iter().zip(&cells).map(|(n, c)| n.as_ref().len().max(c.iter().map(String::len).max().unwrap_or(0))).collect();
    let mut text = format!("{:<label_w$}", "");
    for (name, w) in model_names.iter().zip(&col_w) {
        text.push_str(&format!("  {:>w$}", name.as_ref()));
    }
    text.push('\n');
    for (r, label) in REPORT_ROWS.iter().enumerate() {
        text.push_str(&format!("{label:<label_w$}"));
        for (c, w) in cells.iter().zip(&col_w) {
            text.push_str(&format!("  {:>w$}", c[r]));
        }
        text.push('\n');
    }

    let mut wtr = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once("metric").chain(model_names.iter().map(AsRef::as_ref));
    wtr.write_record(header).expect("in-memory write");
    for (r, label) in REPORT_ROWS.iter().enumerate() {
        wtr.write_record(std::iter::once(*label).chain(cells.iter().map(|c| c[r].as_str()))).expect("in-memory write");
    }
    let csv = String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8 input");
    Ok(Report { text, csv })
}

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

/// 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![[0; 3]; width * height] }
    }

    pub fn from_gray(g: &GrayImage) -> Self {
        Self { width: g.width, height: g.height, data: g.data.iter().map(|&v| [v; 3]).collect() }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.data[y * self.width + x]
    }

    fn put(&mut self, x: isize, y: isize, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.data[y as usize * self.width + x as usize] = c;
        }
    }

    /// Interleaved bytes, three per pixel.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().flatten().copied().collect()
    }
}

/// Fixed colours in chain order: S1, L5, L4, L3, L2, L1, Th12, Th11.
const CHAIN_PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];
const HIGHER_THORACIC: [u8; 3] = [210, 245, 60];
const UNKNOWN: [u8; 3] = [250, 190, 212];
const CLASS_PALETTE: [[u8; 3]; 5] = [[170, 110, 40], [128, 0, 0], [0, 128, 128], [128, 128, 0], [0, 0, 128]];
pub const TEXT_COLOR: [u8; 3] = [255, 255, 255];

pub fn label_color(label: AnatomicalLabel) -> [u8; 3] {
    match label {
        AnatomicalLabel::Unknown => UNKNOWN,
        l => l.chain_position().and_then(|p| CHAIN_PALETTE.get(p).copied()).unwrap_or(HIGHER_THORACIC),
    }
}

/// Colour for instances outside a labelled chain.
pub fn class_color(class_index: u8) -> [u8; 3] {
    CLASS_PALETTE.get(usize::from(class_index).wrapping_sub(1)).copied().unwrap_or([255, 255, 255])
}

/// 3×5 glyphs, one row per entry, high bit on the left.
fn glyph(c: char) -> [u8; 5] {
    match c {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b001, 0b001, 0b001],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        'S' => [0b011, 0b100, 0b010, 0b001, 0b110],
        'L' => [0b100, 0b100, 0b100, 0b100, 0b111],
        'T' => [0b111, 0b010, 0b010, 0b010, 0b010],
        'h' => [0b100, 0b100, 0b111, 0b101, 0b101],
        _ => [0b111, 0b001, 0b011, 0b000, 0b010],
    }
}

fn draw_text(img: &mut RgbImage, text: &str, cx: f64, cy: f64) {
    let n = text.chars().count() as isize;
    let x0 = cx.floor() as isize - (4 * n - 1) / 2;
    let y0 = cy.floor() as isize - 2;
    for (i, ch) in text.chars().enumerate() {
        for (row, bits) in glyph(ch).iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) != 0 {
                    img.put(x0 + 4 * i as isize + col, y0 + row as isize, TEXT_COLOR);
                }
            }
        }
    }
}

/// Draws every instance as a half-transparent fill, an opaque outline and a
/// short text tag at its centroid. Chain members are coloured and tagged by
/// anatomical label; other instances by class, tagged with their id. Without
/// a base image the canvas is black.
pub fn render_overlay(image: Option<&GrayImage>, set: &InstanceSet, chain: Option<&VertebraChain>) -> Result<RgbImage, ReportError> {
    let mut out = match image {
        Some(g) => {
            if (g.width, g.height) != (set.width(), set.height()) {
                return Err(ReportError::DimensionMismatch(g.width, g.height, set.width(), set.height()));
            }
            RgbImage::from_gray(g)
        }
        None => RgbImage::new(set.width(), set.height()),
    };
    let label_of = |id: u32| chain.and_then(|c| c.entries.iter().find(|e| e.instance.id == id)).map(|e| e.label);

    let mut tags = Vec::new();
    for inst in set.instances() {
        let label = label_of(inst.id);
        let color = label.map_or_else(|| class_color(inst.class_index), label_color);
        for (x, y) in inst.mask.foreground() {
            let px = &mut out.data[y * set.width() + x];
            for k in 0..3 {
                px[k] = ((u16::from(px[k]) + u16::from(color[k])) / 2) as u8;
            }
        }
        for (x, y) in trace_boundary(&inst.mask).points {
            out.put(x as isize, y as isize, color);
        }
        if let Some(c) = inst.mask.centroid() {
            tags.push((label.map_or_else(|| inst.id.to_string(), |l| l.to_string()), c));
        }
    }
    // Text goes on last so later fills never cover it.
    for (text, c) in tags {
        let text = if text == "Unknown" { "?".to_string() } else { text };
        draw_text(&mut out, &text, c.x - 0.5, c.y - 0.5);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricMeans;
    use crate::synth::{generate_spine, SynthSpec};
    use crate::taxonomy::LabelTaxonomy;
    use std::collections::BTreeSet;

    fn means(pa: f64, miou: f64, ma: f64, fw: f64) -> DatasetSummary {
        DatasetSummary::from_means(MetricMeans { pixel_accuracy: pa, mean_iou: miou, mean_accuracy: ma, fw_iou: fw })
    }

    #[test]
    fn published_comparison_table() {
        let models = ["U-Net", "Mask R-CNN", "PSPNet", "DeepLabV3", "YOLACT"];
        let s = [
            means(0.9817, 0.8864, 0.9265, 0.9648),
            means(0.9658, 0.8678, 0.9025, 0.9347),
            means(0.9788, 0.8650, 0.9091, 0.9593),
            means(0.9800, 0.8814, 0.9225, 0.9616),
            means(0.9784, 0.9164, 0.9443, 0.9584),
        ];
        let r = render_report(&s, &models).unwrap();
        let expected = [
            "                                U-Net  Mask R-CNN  PSPNet  DeepLabV3  YOLACT",
            "Pixel Accuracy Average          98.17       96.58   97.88      98.00   97.84",
            "Mean IoU Average                88.64       86.78   86.50      88.14   91.64",
            "Mean Accuracy Average           92.65       90.25   90.91      92.25   94.43",
            "Frequency Weighted IoU Average  96.48       93.47   95.93      96.16   95.84",
        ];
        assert_eq!(r.text.lines().collect::<Vec<_>>(), expected);
        assert_eq!(r.csv.lines().next().unwrap(), "metric,U-Net,Mask R-CNN,PSPNet,DeepLabV3,YOLACT");
        assert_eq!(r.csv.lines().nth(2).unwrap(), "Mean IoU Average,88.64,86.78,86.50,88.14,91.64");
    }

    #[test]
    fn single_and_identical_columns() {
        let one = render_report(&[means(1.0, 0.5, 0.25, 0.125)], &["m"]).unwrap();
        assert_eq!(one.csv.lines().nth(1).unwrap(), "Pixel Accuracy Average,100.00");
        assert!(one.text.lines().all(|l| l.split_whitespace().count() <= 5));
        let two = render_report(&[means(0.9, 0.8, 0.7, 0.6), means(0.9, 0.8, 0.7, 0.6)], &["a", "b"]).unwrap();
        for line in two.csv.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f[1], f[2]);
        }
        assert_eq!(render_report::<&str>(&[], &[]), Err(ReportError::EmptyInput));
        assert!(matches!(render_report(&[means(1.0, 1.0, 1.0, 1.0)], &["a", "b"]), Err(ReportError::NameCountMismatch { .. })));
    }

    #[test]
    fn empty_overlay_is_the_image_in_colour() {
        let g = GrayImage { width: 3, height: 2, data: vec![0, 10, 20, 30, 40, 255] };
        let out = render_overlay(Some(&g), &InstanceSet::new(3, 2), None).unwrap();
        assert_eq!(out.data, vec![[0; 3], [10; 3], [20; 3], [30; 3], [40; 3], [255; 3]]);
        assert!(render_overlay(Some(&g), &InstanceSet::new(4, 2), None).is_err());
    }

    #[test]
    fn labelled_chain_gets_six_fill_colours() {
        let t = LabelTaxonomy::default();
        let s = generate_spine(&SynthSpec::default(), &t, 11).unwrap();
        let chain = s.chain_truth.as_ref().unwrap();
        let a = render_overlay(None, &s.gt, Some(chain)).unwrap();
        let b = render_overlay(None, &s.gt, Some(chain)).unwrap();
        assert_eq!(a, b);

        let mut fills = BTreeSet::new();
        let mut edge = vec![false; a.width * a.height];
        for inst in s.gt.instances() {
            for (x, y) in trace_boundary(&inst.mask).points {
                edge[y * a.width + x] = true;
            }
        }
        for inst in s.gt.instances() {
            for (x, y) in inst.mask.foreground() {
                let c = a.get(x, y);
                if !edge[y * a.width + x] && c != TEXT_COLOR {
                    fills.insert(c);
                }
            }
        }
        assert_eq!(fills.len(), 6);
        let expected: BTreeSet<[u8; 3]> = CHAIN_PALETTE[..6].iter().map(|c| c.map(|v| v / 2)).collect();
        assert_eq!(fills, expected);
        // S1 is drawn in the first palette entry
        let s1 = &chain.entries[0].instance;
        let (x, y) = s1.mask.foreground().nth(s1.mask.count() / 3).unwrap();
        assert_eq!(a.get(x, y), CHAIN_PALETTE[0].map(|v| v / 2));
    }
}
