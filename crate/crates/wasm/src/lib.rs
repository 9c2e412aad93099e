//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each exported function builds a synthetic spine from a seed and returns a
//! [`Frame`]: an RGBA image ready for a canvas plus the numbers shown next to
//! it. Errors come back as JS exceptions carrying the message.

use spineseg::instancing::label_chain;
use spineseg::metrics::{evaluate_pair, EvalMode, MaskInput};
use spineseg::morphometry::{detect_osteophytes, lordosis_angle};
use spineseg::report::{render_overlay, RgbImage};
use spineseg::synth::{generate_spine, perturb, PerturbSpec, SynthSpec};
use spineseg::LabelTaxonomy;
use wasm_bindgen::prelude::*;

#[wasm_bindgen]
pub struct Frame {
    width: u32,
    height: u32,
    rgba: Vec<u8>,
    summary: String,
    /// NaN when the value could not be measured.
    pub measured: f64,
    pub expected: f64,
}

#[wasm_bindgen]
impl Frame {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row-major RGBA bytes, for `ImageData`.
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    /// One line per reported value.
    #[wasm_bindgen(getter)]
    pub fn summary(&self) -> String {
        self.summary.clone()
    }
}

fn frame(img: &RgbImage, summary: String, measured: f64, expected: f64) -> Frame {
    let rgba = img.data.iter().flat_map(|&[r, g, b]| [r, g, b, 255]).collect();
    Frame { width: img.width as u32, height: img.height as u32, rgba, summary, measured, expected }
}

fn spec(lumbar_count: u32, lordosis: f64, th12: bool) -> SynthSpec {
    SynthSpec { lumbar_count: lumbar_count as usize, lordosis_curve: lordosis, include_th12: th12, ..SynthSpec::default() }
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// A labelled synthetic spine. `measured` is the lordosis recovered from the
/// masks, `expected` the angle it was built with.
#[wasm_bindgen]
pub fn synthetic_spine(seed: u64, lumbar_count: u32, lordosis: f64, th12: bool) -> Result<Frame, JsError> {
    let t = LabelTaxonomy::default();
    let s = generate_spine(&spec(lumbar_count, lordosis, th12), &t, seed).map_err(js_err)?;
    let chain = label_chain(&s.gt, &t, 2.0).map_err(js_err)?;
    let measured = lordosis_angle(&chain, 32).unwrap_or(f64::NAN);
    let expected = s.construction.lordosis_angle.unwrap_or(f64::NAN);
    let labels: Vec<String> = chain.labels().iter().map(ToString::to_string).collect();
    let img = render_overlay(None, &s.gt, Some(&chain)).map_err(js_err)?;
    let summary = format!(
        "chain: {}\nlordosis measured: {measured:.2}°\nlordosis constructed: {expected:.2}°",
        labels.join(" ")
    );
    Ok(frame(&img, summary, measured, expected))
}

/// A simulated prediction drawn over the spine, scored against it in binary
/// mode. `measured` is the mean IoU.
#[wasm_bindgen]
pub fn simulated_prediction(
    seed: u64,
    lordosis: f64,
    jitter: f64,
    drop_probability: f64,
    fuse_probability: f64,
    extra_instances: u32,
) -> Result<Frame, JsError> {
    let t = LabelTaxonomy::default();
    let s = generate_spine(&spec(5, lordosis, false), &t, seed).map_err(js_err)?;
    let p = PerturbSpec {
        jitter,
        drop_probability,
        fuse_adjacent_probability: fuse_probability,
        extra_instance_count: extra_instances as usize,
        ..PerturbSpec::identity()
    };
    let pred = perturb(&s.gt, &p, seed.wrapping_add(1)).map_err(js_err)?;
    let r = evaluate_pair(MaskInput::Instances(&s.gt), MaskInput::Instances(&pred), EvalMode::Binary, 2).map_err(js_err)?;
    let img = render_overlay(None, &pred, None).map_err(js_err)?;
    let summary = format!(
        "instances: {} truth, {} predicted\npixel accuracy: {:.2}%\nmean IoU: {:.2}%\nmean accuracy: {:.2}%\nfrequency weighted IoU: {:.2}%",
        s.gt.len(),
        pred.len(),
        100.0 * r.pixel_accuracy,
        100.0 * r.mean_iou,
        100.0 * r.mean_accuracy,
        100.0 * r.fw_iou
    );
    Ok(frame(&img, summary, r.mean_iou, 1.0))
}

/// Spurred spine with the opening residue painted white. `measured` counts
/// candidates found, `expected` the spurs that were drawn.
#[wasm_bindgen]
pub fn osteophyte_residue(seed: u64, kernel: u32, spur_probability: f64) -> Result<Frame, JsError> {
    let t = LabelTaxonomy::default();
    let spec = SynthSpec { spur_probability, ..SynthSpec::default() };
    let s = generate_spine(&spec, &t, seed).map_err(js_err)?;
    let mut img = render_overlay(None, &s.gt, s.chain_truth.as_ref()).map_err(js_err)?;
    let mut found = 0usize;
    let mut skipped = 0usize;
    for inst in s.gt.instances() {
        match detect_osteophytes(inst, kernel as usize, 6) {
            Ok(r) => {
                found += r.candidates.len();
                for (x, y) in r.residue.foreground() {
                    img.data[y * img.width + x] = [255, 255, 255];
                }
            }
            Err(spineseg::morphometry::MorphometryError::KernelTooLarge { .. }) => skipped += 1,
            Err(e) => return Err(js_err(e)),
        }
    }
    let drawn = s.spur_masks.len();
    let mut summary = format!("spurs drawn: {drawn}\ncandidates found: {found}\nkernel: {kernel}×{kernel}");
    if skipped > 0 {
        summary.push_str(&format!("\nkernel larger than {skipped} vertebrae"));
    }
    Ok(frame(&img, summary, found as f64, drawn as f64))
}
