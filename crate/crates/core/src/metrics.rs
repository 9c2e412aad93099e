//! Confusion matrices and the four segmentation metrics: pixel accuracy, mean
//! accuracy, mean IoU and frequency weighted IoU, with `n_ij` the number of
//! pixels of true class `i` predicted as `j` and `t_i = Σ_j n_ij`.
//!
//! Classes that never occur in the ground truth (`t_i = 0`) have no defined
//! accuracy or IoU and are left out of the class means. Pixels predicted as
//! such a class still count against pixel accuracy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{merge_to_binary, InstanceSet, LabelMask};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("class index {index} out of range for {n_cl} classes")]
    ClassIndexOutOfRange { index: u8, n_cl: usize },
    #[error("confusion matrix holds no pixels")]
    EmptyMatrix,
    #[error("no records to aggregate")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_cl: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(n_cl: usize) -> Self {
        Self { n_cl, counts: vec![0; n_cl * n_cl] }
    }

    /// Builds from row-major `counts[true][predicted]`.
    pub fn from_rows(rows: &[Vec<u64>]) -> Self {
        let n_cl = rows.len();
        assert!(rows.iter().all(|r| r.len() == n_cl), "confusion matrix must be square");
        Self { n_cl, counts: rows.concat() }
    }

    pub fn n_cl(&self) -> usize {
        self.n_cl
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n_cl + pred]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n_cl.max(1)).map(<[u64]>::to_vec).collect()
    }

    /// `t_i`: ground-truth pixel count of class `i`.
    pub fn truth_total(&self, i: usize) -> u64 {
        (0..self.n_cl).map(|j| self.get(i, j)).sum()
    }

    pub fn predicted_total(&self, j: usize) -> u64 {
        (0..self.n_cl).map(|i| self.get(i, j)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.n_cl, other.n_cl);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

pub fn confusion_matrix(gt: &LabelMask, pred: &LabelMask, n_cl: usize) -> Result<ConfusionMatrix, MetricsError> {
    if gt.width() != pred.width() || gt.height() != pred.height() {
        return Err(MetricsError::DimensionMismatch(gt.width(), gt.height(), pred.width(), pred.height()));
    }
    let mut cm = ConfusionMatrix::zeros(n_cl);
    for (&g, &p) in gt.data().iter().zip(pred.data()) {
        for v in [g, p] {
            if v as usize >= n_cl {
                return Err(MetricsError::ClassIndexOutOfRange { index: v, n_cl });
            }
        }
        cm.counts[g as usize * n_cl + p as usize] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub pixel_accuracy: f64,
    pub mean_accuracy: f64,
    pub mean_iou: f64,
    pub fw_iou: f64,
    /// Indexed by class; `None` where the class is absent from the ground truth.
    pub per_class_iou: Vec<Option<f64>>,
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsRecord, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let n = cm.n_cl();
    let mut correct = 0u64;
    let mut acc_sum = 0.0;
    let mut iou_sum = 0.0;
    let mut fw_sum = 0.0;
    let mut present = 0usize;
    let mut per_class_iou = Vec::with_capacity(n);
    for i in 0..n {
        let n_ii = cm.get(i, i);
        let t_i = cm.truth_total(i);
        correct += n_ii;
        if t_i == 0 {
            per_class_iou.push(None);
            continue;
        }
        present += 1;
        let iou = n_ii as f64 / (t_i + cm.predicted_total(i) - n_ii) as f64;
        acc_sum += n_ii as f64 / t_i as f64;
        iou_sum += iou;
        fw_sum += t_i as f64 * iou;
        per_class_iou.push(Some(iou));
    }
    Ok(MetricsRecord {
        pixel_accuracy: correct as f64 / total as f64,
        mean_accuracy: acc_sum / present as f64,
        mean_iou: iou_sum / present as f64,
        fw_iou: fw_sum / total as f64,
        per_class_iou,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Foreground vs background after merging every instance/class.
    Binary,
    /// Full taxonomy.
    PerClass,
}

impl std::str::FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(Self::Binary),
            "per_class" | "per-class" => Ok(Self::PerClass),
            other => Err(format!("unknown mode `{other}` (expected binary or per_class)")),
        }
    }
}

/// Either side of an evaluation.
#[derive(Debug, Clone, Copy)]
pub enum MaskInput<'a> {
    Instances(&'a InstanceSet),
    Semantic(&'a LabelMask),
}

impl MaskInput<'_> {
    fn dims(&self) -> (usize, usize) {
        match self {
            MaskInput::Instances(s) => (s.width(), s.height()),
            MaskInput::Semantic(m) => (m.width(), m.height()),
        }
    }

    fn to_label_mask(self, mode: EvalMode) -> LabelMask {
        match (self, mode) {
            (MaskInput::Instances(s), EvalMode::Binary) => binary_as_labels(&merge_to_binary(s)),
            (MaskInput::Semantic(m), EvalMode::Binary) => binary_as_labels(&m.to_binary()),
            (MaskInput::Instances(s), EvalMode::PerClass) => s.paint_by_priority(),
            (MaskInput::Semantic(m), EvalMode::PerClass) => m.clone(),
        }
    }
}

fn binary_as_labels(m: &crate::mask::BinaryMask) -> LabelMask {
    LabelMask::from_vec(m.width(), m.height(), m.data().to_vec()).expect("same length")
}

/// Compares a prediction to ground truth. `n_cl` (including background) is
/// only used in per-class mode; binary mode always uses two classes.
pub fn evaluate_pair(gt: MaskInput<'_>, pred: MaskInput<'_>, mode: EvalMode, n_cl: usize) -> Result<MetricsRecord, MetricsError> {
    let (gw, gh) = gt.dims();
    let (pw, ph) = pred.dims();
    if (gw, gh) != (pw, ph) {
        return Err(MetricsError::DimensionMismatch(gw, gh, pw, ph));
    }
    let classes = match mode {
        EvalMode::Binary => 2,
        EvalMode::PerClass => n_cl,
    };
    let cm = confusion_matrix(&gt.to_label_mask(mode), &pred.to_label_mask(mode), classes)?;
    compute_metrics(&cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub pixel_accuracy: f64,
    pub mean_iou: f64,
    pub mean_accuracy: f64,
    pub fw_iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub records: BTreeMap<String, MetricsRecord>,
    pub means: MetricMeans,
    /// Mean of each class IoU over the images where it is defined.
    pub per_class_iou_means: Vec<Option<f64>>,
}

impl DatasetSummary {
    /// A summary carrying only published averages, with no per-image records.
    pub fn from_means(means: MetricMeans) -> Self {
        Self { records: BTreeMap::new(), means, per_class_iou_means: Vec::new() }
    }
}

/// Unweighted per-image averages.
pub fn aggregate<I, S>(records: I) -> Result<DatasetSummary, MetricsError>
where
    I: IntoIterator<Item = (S, MetricsRecord)>,
    S: Into<String>,
{
    let records: BTreeMap<String, MetricsRecord> = records.into_iter().map(|(k, v)| (k.into(), v)).collect();
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = records.len() as f64;
    let mean = |f: fn(&MetricsRecord) -> f64| records.values().map(f).sum::<f64>() / n;
    let means = MetricMeans {
        pixel_accuracy: mean(|r| r.pixel_accuracy),
        mean_iou: mean(|r| r.mean_iou),
        mean_accuracy: mean(|r| r.mean_accuracy),
        fw_iou: mean(|r| r.fw_iou),
    };
    let width = records.values().map(|r| r.per_class_iou.len()).max().unwrap_or(0);
    let per_class_iou_means = (0..width)
        .map(|c| {
            let vals: Vec<f64> = records.values().filter_map(|r| r.per_class_iou.get(c).copied().flatten()).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    Ok(DatasetSummary { records, means, per_class_iou_means })
}
