//! Geometry and evaluation toolkit for directed, uniformly sized objects.
//!
//! Objects are rotated rectangles with a head edge, so a box and its 180°
//! flip are different detections. The crate provides:
//!
//! - [`geometry`]: rotated-box corners, convex clipping, rotated IoU and DirIoU
//! - [`annotations`]: `(x, y, t, θ)` records, the per-class box model, JSONL I/O
//! - [`head`] and [`loss`]: the 16x16 anchor-free grid codec and its losses
//! - [`nms`]: greedy per-class suppression under DirIoU
//! - [`eval`]: DirIoU matching, precision/recall, AP and mAP
//! - [`synth`]: seeded scenes and detection perturbations for end-to-end checks
//!
//! Batch kernels take an [`Execution`] policy; the `parallel` feature backs
//! [`Execution::Parallel`] with rayon and results do not depend on it.

pub mod angle;
pub mod annotations;
pub mod detection;
pub mod error;
pub mod eval;
pub mod exec;
pub mod geometry;
pub mod head;
pub mod loss;
pub mod nms;
pub mod synth;

pub use angle::{wrap_angle, Angle};
pub use annotations::{annotation_to_box, AnnotationRecord, ClassId, ClassSpec, ClassTable, LabeledRecord};
pub use detection::Detection;
pub use error::{Error, Result};
pub use eval::{evaluate, EvalReport, ImageEval};
pub use exec::Execution;
pub use geometry::{box_dir_corr, dir_corr, dir_iou, rotated_iou, ConvexPolygon, DirectedBox, Point};
pub use nms::directed_nms;
