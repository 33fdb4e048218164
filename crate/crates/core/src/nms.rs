//! Greedy per-class non-maximum suppression under DirIoU.

use std::collections::HashMap;

use crate::annotations::ClassId;
use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::geometry::dir_iou;

pub const DEFAULT_DIR_IOU_THRESHOLD: f64 = 0.3;

fn check_threshold(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid(format!("{name} threshold {v} outside [0, 1]")));
    }
    Ok(())
}

/// Keeps detections in descending score order (ties by ascending `source`),
/// dropping any whose DirIoU with an already kept detection of the same
/// class reaches `dir_iou_threshold`. Detections scoring below
/// `score_threshold` are discarded first.
pub fn directed_nms(dets: &[Detection], dir_iou_threshold: f64, score_threshold: f64) -> Result<Vec<Detection>> {
    check_threshold("DirIoU", dir_iou_threshold)?;
    check_threshold("score", score_threshold)?;

    let mut order: Vec<&Detection> = dets.iter().filter(|d| d.score >= score_threshold).collect();
    order.sort_by(|a, b| a.rank_cmp(b));

    let mut kept_by_class: HashMap<ClassId, Vec<&Detection>> = HashMap::new();
    let mut kept = Vec::new();
    for d in order {
        let same_class = kept_by_class.entry(d.class).or_default();
        if same_class
            .iter()
            .any(|k| dir_iou(&k.bbox, &d.bbox) >= dir_iou_threshold)
        {
            continue;
        }
        same_class.push(d);
        kept.push(*d);
    }
    Ok(kept)
}

/// Runs [`directed_nms`] independently on each image.
pub fn directed_nms_batch(
    images: &[Vec<Detection>],
    dir_iou_threshold: f64,
    score_threshold: f64,
    exec: Execution,
) -> Result<Vec<Vec<Detection>>> {
    exec::map(exec, images, |dets| {
        directed_nms(dets, dir_iou_threshold, score_threshold)
    })
    .into_iter()
    .collect()
}
