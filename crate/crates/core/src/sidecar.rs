//! Instance sidecar documents: a JSON list of
//! `{id, class_name, score, rle: {width, height, runs}}` records, optionally
//! with an `anatomical_label` once a chain has been labelled.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instancing::{AnatomicalLabel, VertebraChain};
use crate::mask::{Instance, InstanceSet, MaskError};
use crate::rle::{RleError, RleMask};
use crate::taxonomy::LabelTaxonomy;

#[derive(Debug, Error)]
pub enum SidecarError {
    #[error("sidecar is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("record {id}: {source}")]
    Rle { id: u32, source: RleError },
    #[error("record {id}: unknown class `{class}`")]
    UnknownClass { id: u32, class: String },
    #[error("record {id}: {source}")]
    Mask { id: u32, source: MaskError },
    #[error("empty sidecar and no fallback dimensions")]
    NoDimensions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarRecord {
    pub id: u32,
    pub class_name: String,
    pub score: Option<f64>,
    pub rle: RleMask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anatomical_label: Option<AnatomicalLabel>,
}

/// An instance set together with any anatomical labels keyed by instance id.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub set: InstanceSet,
    pub labels: BTreeMap<u32, AnatomicalLabel>,
}

pub fn records(set: &InstanceSet, taxonomy: &LabelTaxonomy, labels: &BTreeMap<u32, AnatomicalLabel>) -> Vec<SidecarRecord> {
    set.instances()
        .iter()
        .map(|i| SidecarRecord {
            id: i.id,
            class_name: taxonomy.name_of(i.class_index).unwrap_or("unknown").to_string(),
            score: i.score,
            rle: RleMask::encode(&i.mask),
            anatomical_label: labels.get(&i.id).copied(),
        })
        .collect()
}

/// A JSON array with one compact record per line.
pub fn to_json(set: &InstanceSet, taxonomy: &LabelTaxonomy, labels: &BTreeMap<u32, AnatomicalLabel>) -> String {
    let lines: Vec<String> =
        records(set, taxonomy, labels).iter().map(|r| serde_json::to_string(r).expect("records serialize")).collect();
    if lines.is_empty() {
        return "[]\n".to_string();
    }
    format!("[\n{}\n]\n", lines.join(",\n"))
}

/// Labels for every chain member, keyed by instance id.
pub fn chain_labels(chain: &VertebraChain) -> BTreeMap<u32, AnatomicalLabel> {
    chain.entries.iter().map(|e| (e.instance.id, e.label)).collect()
}

/// Parses a sidecar. Dimensions come from the records; `fallback_dims` is
/// used only for an empty list.
pub fn from_json(text: &str, taxonomy: &LabelTaxonomy, fallback_dims: Option<(usize, usize)>) -> Result<LabeledSet, SidecarError> {
    let recs: Vec<SidecarRecord> = serde_json::from_str(text)?;
    let (w, h) = match recs.first() {
        Some(r) => (r.rle.width, r.rle.height),
        None => fallback_dims.ok_or(SidecarError::NoDimensions)?,
    };
    let mut set = InstanceSet::new(w, h);
    let mut labels = BTreeMap::new();
    for r in recs {
        let id = r.id;
        let class = taxonomy.index_of(&r.class_name).ok_or_else(|| SidecarError::UnknownClass { id, class: r.class_name.clone() })?;
        let mask = r.rle.decode().map_err(|source| SidecarError::Rle { id, source })?;
        let inst = Instance::new(id, class, r.score, mask).map_err(|source| SidecarError::Mask { id, source })?;
        set.push(inst).map_err(|source| SidecarError::Mask { id, source })?;
        if let Some(l) = r.anatomical_label {
            labels.insert(id, l);
        }
    }
    Ok(LabeledSet { set, labels })
}
