//! Segmentation evaluation and vertebra morphometry for lateral lumbar spine
//! radiographs.
//!
//! The crate is organised along the processing pipeline:
//!
//! * [`annotation`] parses VIA polygon exports and rasterizes them into
//!   semantic label masks and instance sets.
//! * [`mask`] and [`rle`] hold the raster types and the instance-to-binary merge.
//! * [`metrics`] builds confusion matrices and computes pixel accuracy, mean
//!   accuracy, mean IoU and frequency weighted IoU.
//! * [`instancing`] cleans predictions (NMS, connected components, splitting of
//!   fused blobs) and labels vertebrae starting from the sacrum.
//! * [`morphometry`] traces contours, finds osteophyte candidates and fits
//!   endplates, from which the lordosis angle and disc spaces follow.
//! * [`synth`] generates seeded synthetic spines and simulated prediction errors.
//! * [`report`] renders metric tables and colour overlays.

pub mod annotation;
pub mod geometry;
pub mod instancing;
pub mod mask;
pub mod metrics;
pub mod morphology;
pub mod morphometry;
pub mod raster;
pub mod report;
pub mod rle;
pub mod sidecar;
pub mod synth;
pub mod taxonomy;

pub use geometry::Point;
pub use mask::{merge_to_binary, mask_iou, BinaryMask, Instance, InstanceSet, LabelMask, MaskError};
pub use rle::RleMask;
pub use taxonomy::LabelTaxonomy;
