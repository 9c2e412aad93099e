//! One function per subcommand. Each returns the per-image failures instead
//! of stopping at the first one; the caller decides the exit code.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use spineseg::annotation::{parse_via_with_dims, rasterize as rasterize_annotation};
use spineseg::instancing::{instances_from_semantic, label_chain, nms, AnatomicalLabel, ChainEntry, VertebraChain};
use spineseg::metrics::{aggregate, evaluate_pair, DatasetSummary, MaskInput, MetricsRecord};
use spineseg::morphometry::{measure_chain, MorphometryRecord};
use spineseg::report::{render_overlay, render_report};
use spineseg::sidecar::{self, LabeledSet};
use spineseg::synth::{generate_spine, perturb};
use spineseg::{InstanceSet, LabelMask};

use crate::config::RunConfig;
use crate::io::{
    image_id, list_inputs, read_gray, read_label_png, read_sidecar, write_atomic, write_binary_png, write_label_png, write_rgb_png,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub image_id: String,
    pub reason: String,
}

/// Per-image failures of one command, sorted by image id.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub processed: usize,
    pub failures: Vec<Failure>,
}

impl Outcome {
    fn from_results<T>(results: &[(String, Result<T>)]) -> Self {
        let mut failures: Vec<Failure> = results
            .iter()
            .filter_map(|(id, r)| r.as_ref().err().map(|e| Failure { image_id: id.clone(), reason: format!("{e:#}") }))
            .collect();
        failures.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        Outcome { processed: results.len(), failures }
    }

    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }
}

fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().context("starting worker pool")
}

/// Runs `f` over `items` on the configured pool; results come back sorted
/// by image id no matter which worker finished first.
fn run_pooled<T, R, F>(cfg: &RunConfig, items: Vec<(String, T)>, f: F) -> Result<Vec<(String, Result<R>)>>
where
    T: Send + Sync,
    R: Send,
    F: Fn(&str, &T) -> Result<R> + Send + Sync,
{
    let mut out: Vec<(String, Result<R>)> = pool(cfg)?.install(|| items.par_iter().map(|(id, item)| (id.clone(), f(id, item))).collect());
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

// ---------------------------------------------------------------- rasterize

pub struct RasterizeArgs<'a> {
    pub via: &'a Path,
    pub out: &'a Path,
    /// Directory holding the annotated images, used for their dimensions.
    pub images: Option<&'a Path>,
    pub dims: Option<(usize, usize)>,
    pub instance_pngs: bool,
}

/// VIA export → `<id>.png` semantic mask and `<id>.json` sidecar per image.
pub fn rasterize(cfg: &RunConfig, args: &RasterizeArgs<'_>) -> Result<Outcome> {
    let text = std::fs::read_to_string(args.via).with_context(|| format!("reading {}", args.via.display()))?;
    let doc: serde_json::Value = serde_json::from_str(&text).context("VIA export is not JSON")?;
    let root = doc.as_object().ok_or_else(|| anyhow!("VIA export is not a JSON object"))?;
    let (records, wrapped) = match root.get("_via_img_metadata").and_then(|v| v.as_object()) {
        Some(m) => (m, true),
        None => (root, false),
    };
    let mut results = Vec::new();
    for (key, record) in records {
        let filename = record.get("filename").and_then(|f| f.as_str()).unwrap_or(key);
        let id = image_id(Path::new(filename));
        let r = (|| -> Result<()> {
            let dims = match args.images {
                Some(dir) => {
                    let (w, h) = image::image_dimensions(dir.join(filename)).with_context(|| format!("reading size of {filename}"))?;
                    Some((w as usize, h as usize))
                }
                None => args.dims,
            };
            let single = serde_json::json!({ key.clone(): record });
            let single = if wrapped { serde_json::json!({ "_via_img_metadata": single }) } else { single };
            let sets = parse_via_with_dims(&single.to_string(), &cfg.taxonomy, dims)?;
            let (semantic, instances) = rasterize_annotation(&sets[0], &cfg.taxonomy)?;
            write_label_png(&args.out.join(format!("{id}.png")), &semantic)?;
            write_atomic(&args.out.join(format!("{id}.json")), sidecar::to_json(&instances, &cfg.taxonomy, &BTreeMap::new()).as_bytes())?;
            if args.instance_pngs {
                for inst in instances.instances() {
                    write_binary_png(&args.out.join(format!("{id}.instance{}.png", inst.id)), &inst.mask)?;
                }
            }
            Ok(())
        })();
        results.push((id, r));
    }
    Ok(Outcome::from_results(&results))
}

// --------------------------------------------------------------------- eval

enum Loaded {
    Semantic(LabelMask),
    Instances(InstanceSet),
}

impl Loaded {
    fn input(&self) -> MaskInput<'_> {
        match self {
            Loaded::Semantic(m) => MaskInput::Semantic(m),
            Loaded::Instances(s) => MaskInput::Instances(s),
        }
    }

    fn dims(&self) -> (usize, usize) {
        match self {
            Loaded::Semantic(m) => (m.width(), m.height()),
            Loaded::Instances(s) => (s.width(), s.height()),
        }
    }
}

fn load_any(path: &Path, cfg: &RunConfig, fallback: Option<(usize, usize)>) -> Result<Loaded> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        Ok(Loaded::Instances(read_sidecar(path, &cfg.taxonomy, fallback)?.set))
    } else {
        Ok(Loaded::Semantic(read_label_png(path, &cfg.taxonomy)?))
    }
}

/// For each image id: the sidecar if there is one, else the PNG.
fn index_dir(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut map = BTreeMap::new();
    for p in list_inputs(dir, &["png", "json"])? {
        let id = image_id(&p);
        let is_json = p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json || !map.contains_key(&id) {
            map.insert(id, p);
        }
    }
    Ok(map)
}

fn fmt_metric(v: f64) -> String {
    format!("{v}")
}

/// Per-image metrics CSV. Undefined class IoUs are empty cells.
pub fn metrics_csv(records: &BTreeMap<String, MetricsRecord>, class_columns: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["image_id".to_string(), "pixel_accuracy".into(), "mean_accuracy".into(), "mean_iou".into(), "fw_iou".into()];
    header.extend(class_columns.iter().map(|c| format!("iou_{c}")));
    w.write_record(&header)?;
    for (id, r) in records {
        let mut row = vec![id.clone(), fmt_metric(r.pixel_accuracy), fmt_metric(r.mean_accuracy), fmt_metric(r.mean_iou), fmt_metric(r.fw_iou)];
        for c in 0..class_columns.len() {
            row.push(r.per_class_iou.get(c).copied().flatten().map(fmt_metric).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Reads the four headline metrics back from a per-image metrics CSV.
pub fn read_metrics_csv(path: &Path) -> Result<BTreeMap<String, MetricsRecord>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| anyhow!("{}: missing column {name}", path.display()));
    let (id_c, pa_c, ma_c, mi_c, fw_c) = (col("image_id")?, col("pixel_accuracy")?, col("mean_accuracy")?, col("mean_iou")?, col("fw_iou")?);
    let iou_cols: Vec<usize> = (0..headers.len()).filter(|&i| headers[i].starts_with("iou_")).collect();
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let num = |i: usize| -> Result<f64> { row[i].parse().with_context(|| format!("bad number `{}`", &row[i])) };
        let per_class_iou = iou_cols.iter().map(|&i| if row[i].is_empty() { Ok(None) } else { num(i).map(Some) }).collect::<Result<_>>()?;
        out.insert(
            row[id_c].to_string(),
            MetricsRecord { pixel_accuracy: num(pa_c)?, mean_accuracy: num(ma_c)?, mean_iou: num(mi_c)?, fw_iou: num(fw_c)?, per_class_iou },
        );
    }
    Ok(out)
}

pub struct EvalArgs<'a> {
    pub gt: &'a Path,
    pub pred: &'a Path,
    pub out: &'a Path,
    pub model: &'a str,
}

/// Ground truth vs prediction for every image id in the ground-truth
/// directory. Writes `metrics.csv`, `report.txt` and `report.csv`.
pub fn eval(cfg: &RunConfig, args: &EvalArgs<'_>) -> Result<(Outcome, Option<DatasetSummary>)> {
    let gt = index_dir(args.gt)?;
    let pred = index_dir(args.pred)?;
    let items: Vec<(String, (PathBuf, Option<PathBuf>))> = gt.into_iter().map(|(id, p)| (id.clone(), (p, pred.get(&id).cloned()))).collect();
    let n_cl = cfg.n_classes();
    let results = run_pooled(cfg, items, |_, (g, p)| {
        let p = p.as_ref().ok_or_else(|| anyhow!("no prediction"))?;
        let g = load_any(g, cfg, None)?;
        let p = load_any(p, cfg, Some(g.dims()))?;
        Ok(evaluate_pair(g.input(), p.input(), cfg.mode, n_cl)?)
    })?;
    let outcome = Outcome::from_results(&results);
    let records: BTreeMap<String, MetricsRecord> = results.into_iter().filter_map(|(id, r)| r.ok().map(|r| (id, r))).collect();
    write_atomic(&args.out.join("metrics.csv"), metrics_csv(&records, &cfg.class_columns())?.as_bytes())?;
    let summary = if records.is_empty() {
        None
    } else {
        let summary = aggregate(records)?;
        let report = render_report(std::slice::from_ref(&summary), &[args.model])?;
        write_atomic(&args.out.join("report.txt"), report.text.as_bytes())?;
        write_atomic(&args.out.join("report.csv"), report.csv.as_bytes())?;
        Some(summary)
    };
    Ok((outcome, summary))
}

/// Table over several models' metrics CSVs.
pub fn report(models: &[(String, PathBuf)], out: &Path) -> Result<()> {
    if models.is_empty() {
        bail!("no models given");
    }
    let mut summaries = Vec::new();
    for (name, path) in models {
        let records = read_metrics_csv(path)?;
        summaries.push(aggregate(records).with_context(|| format!("model {name}"))?);
    }
    let names: Vec<&str> = models.iter().map(|(n, _)| n.as_str()).collect();
    let r = render_report(&summaries, &names)?;
    write_atomic(&out.join("report.txt"), r.text.as_bytes())?;
    write_atomic(&out.join("report.csv"), r.csv.as_bytes())?;
    Ok(())
}

// ------------------------------------------------------- instances / label

/// Semantic PNG masks → sidecars, via components and fused-blob splitting.
pub fn instances(cfg: &RunConfig, input: &Path, out: &Path) -> Result<Outcome> {
    let items: Vec<(String, PathBuf)> = list_inputs(input, &["png"])?.into_iter().map(|p| (image_id(&p), p)).collect();
    let results = run_pooled(cfg, items, |id, p| {
        let semantic = read_label_png(p, &cfg.taxonomy)?;
        let set = instances_from_semantic(&semantic, &cfg.taxonomy, &cfg.instancing);
        write_atomic(&out.join(format!("{id}.json")), sidecar::to_json(&set, &cfg.taxonomy, &BTreeMap::new()).as_bytes())
    })?;
    Ok(Outcome::from_results(&results))
}

/// Sidecars → labelled sidecars: NMS, then the sacrum-anchored chain walk.
pub fn label(cfg: &RunConfig, input: &Path, out: &Path) -> Result<Outcome> {
    let items: Vec<(String, PathBuf)> = list_inputs(input, &["json"])?.into_iter().map(|p| (image_id(&p), p)).collect();
    let results = run_pooled(cfg, items, |id, p| {
        let set = read_sidecar(p, &cfg.taxonomy, None)?.set;
        let kept = nms(&set, cfg.instancing.iou_threshold, cfg.class_aware_nms);
        let chain = label_chain(&kept, &cfg.taxonomy, cfg.instancing.max_gap_factor)?;
        write_atomic(&out.join(format!("{id}.json")), sidecar::to_json(&kept, &cfg.taxonomy, &sidecar::chain_labels(&chain)).as_bytes())
    })?;
    Ok(Outcome::from_results(&results))
}

/// Rebuilds the chain of a labelled sidecar, in chain order.
pub fn chain_from_labels(ls: &LabeledSet) -> Result<VertebraChain> {
    let mut entries: Vec<(usize, ChainEntry)> = Vec::new();
    for inst in ls.set.instances() {
        if let Some(&label) = ls.labels.get(&inst.id) {
            let pos = label.chain_position().ok_or_else(|| anyhow!("instance {} is labelled {label}", inst.id))?;
            let centroid = inst.mask.centroid().expect("non-empty");
            entries.push((pos, ChainEntry { instance: inst.clone(), label, centroid }));
        }
    }
    entries.sort_by_key(|e| e.0);
    for (i, (pos, _)) in entries.iter().enumerate() {
        if *pos != i {
            bail!("labels are not a contiguous chain from S1 (missing {})", AnatomicalLabel::from_chain_position(i));
        }
    }
    if entries.is_empty() {
        bail!("no labelled instances");
    }
    Ok(VertebraChain { entries: entries.into_iter().map(|e| e.1).collect() })
}

// -------------------------------------------------------------------- morph

#[derive(Serialize)]
struct VertebraRow<'a> {
    image_id: &'a str,
    id: u32,
    label: String,
    superior_angle: f64,
    inferior_angle: f64,
    osteophyte_count: usize,
    osteophyte_area: usize,
}

#[derive(Serialize)]
struct GapRow<'a> {
    image_id: &'a str,
    lower: String,
    upper: String,
    anterior: f64,
    posterior: f64,
}

/// Labelled sidecars → `<id>.morph.json` each, plus `vertebrae.csv`,
/// `gaps.csv` and `lordosis.csv` over all images.
pub fn morph(cfg: &RunConfig, input: &Path, out: &Path) -> Result<Outcome> {
    let items: Vec<(String, PathBuf)> = list_inputs(input, &["json"])?.into_iter().map(|p| (image_id(&p), p)).collect();
    let results = run_pooled(cfg, items, |id, p| -> Result<MorphometryRecord> {
        let chain = chain_from_labels(&read_sidecar(p, &cfg.taxonomy, None)?)?;
        let record = measure_chain(&chain, &cfg.morphometry)?;
        let mut json = serde_json::to_string_pretty(&record)?;
        json.push('\n');
        write_atomic(&out.join(format!("{id}.morph.json")), json.as_bytes())?;
        Ok(record)
    })?;
    let outcome = Outcome::from_results(&results);

    let mut vert = csv::Writer::from_writer(Vec::new());
    let mut gaps = csv::Writer::from_writer(Vec::new());
    let mut lord = csv::Writer::from_writer(Vec::new());
    lord.write_record(["image_id", "lordosis_angle"])?;
    for (id, r) in &results {
        let Ok(rec) = r else { continue };
        for v in &rec.vertebrae {
            vert.serialize(VertebraRow {
                image_id: id,
                id: v.id,
                label: v.label.to_string(),
                superior_angle: v.superior.angle,
                inferior_angle: v.inferior.angle,
                osteophyte_count: v.osteophytes.len(),
                osteophyte_area: v.osteophytes.iter().map(|o| o.area).sum(),
            })?;
        }
        for g in &rec.gaps {
            gaps.serialize(GapRow { image_id: id, lower: g.lower.to_string(), upper: g.upper.to_string(), anterior: g.anterior, posterior: g.posterior })?;
        }
        lord.write_record([id.clone(), rec.lordosis_angle.map(|a| a.to_string()).unwrap_or_default()])?;
    }
    write_atomic(&out.join("vertebrae.csv"), &vert.into_inner()?)?;
    write_atomic(&out.join("gaps.csv"), &gaps.into_inner()?)?;
    write_atomic(&out.join("lordosis.csv"), &lord.into_inner()?)?;
    Ok(outcome)
}

// -------------------------------------------------------------------- synth

/// Writes `count` synthetic cases under `out`: `gt/<id>.png` and
/// `gt/<id>.json` (labelled), `pred/<id>.json` (perturbed), and
/// `truth/<id>.json` with the construction measurements. Case `i` uses
/// seed `cfg.seed + i`.
pub fn synth(cfg: &RunConfig, out: &Path, count: usize) -> Result<Outcome> {
    let items: Vec<(String, u64)> = (0..count).map(|i| (format!("synth_{i:04}"), cfg.seed.wrapping_add(i as u64))).collect();
    let results = run_pooled(cfg, items, |id, &seed| {
        let s = generate_spine(&cfg.synth, &cfg.taxonomy, seed)?;
        let labels = s.chain_truth.as_ref().map(sidecar::chain_labels).unwrap_or_default();
        write_label_png(&out.join("gt").join(format!("{id}.png")), &s.semantic)?;
        write_atomic(&out.join("gt").join(format!("{id}.json")), sidecar::to_json(&s.gt, &cfg.taxonomy, &labels).as_bytes())?;
        let pred = perturb(&s.gt, &cfg.perturb, seed ^ 0x9E37_79B9_7F4A_7C15)?;
        write_atomic(&out.join("pred").join(format!("{id}.json")), sidecar::to_json(&pred, &cfg.taxonomy, &BTreeMap::new()).as_bytes())?;
        let mut truth = serde_json::to_string_pretty(&s.construction)?;
        truth.push('\n');
        write_atomic(&out.join("truth").join(format!("{id}.json")), truth.as_bytes())
    })?;
    Ok(Outcome::from_results(&results))
}

// ------------------------------------------------------------------ overlay

/// Colour overlay of one sidecar; labels in the sidecar pick the colours.
pub fn overlay(cfg: &RunConfig, input: &Path, image: Option<&Path>, out: &Path) -> Result<()> {
    let base = image.map(read_gray).transpose()?;
    let ls = read_sidecar(input, &cfg.taxonomy, base.as_ref().map(|b| (b.width, b.height)))?;
    let chain = if ls.labels.is_empty() { None } else { Some(chain_from_labels(&ls)?) };
    let img = render_overlay(base.as_ref(), &ls.set, chain.as_ref())?;
    write_rgb_png(out, &img)
}
