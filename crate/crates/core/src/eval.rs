//! DirIoU matching, precision/recall, per-class AP and mAP.
//!
//! Matching is greedy in score order: each detection takes the unmatched
//! same-class target with the highest DirIoU, provided it reaches the
//! threshold. AP integrates the monotone precision envelope over every
//! distinct recall value (all-points interpolation).

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::annotations::{AnnotationRecord, ClassId, ClassTable, LabeledRecord};
use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::geometry::{dir_iou, DirectedBox};

pub const MATCHING_RULE: &str = "greedy score-ordered, best-DirIoU unmatched same-class target";
pub const AP_INTERPOLATION: &str = "all-points";

pub type GroundTruth = (DirectedBox, ClassId);

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DetectionMatch {
    /// Index into the image's targets.
    pub target: Option<usize>,
    /// DirIoU with the matched target, or the best value seen when unmatched.
    pub dir_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MatchResult {
    /// Parallel to the input detections.
    pub detections: Vec<DetectionMatch>,
    /// Parallel to the input targets.
    pub target_matched: Vec<bool>,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.detections.iter().filter(|m| m.target.is_some()).count()
    }
}

/// Matches one image's detections to its targets. Detections are visited in
/// rank order regardless of input order.
pub fn match_image(dets: &[Detection], gts: &[GroundTruth], threshold: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[a].rank_cmp(&dets[b]));

    let mut result = MatchResult {
        detections: vec![DetectionMatch::default(); dets.len()],
        target_matched: vec![false; gts.len()],
    };
    for i in order {
        let d = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, (gbox, gclass)) in gts.iter().enumerate() {
            if *gclass != d.class || result.target_matched[j] {
                continue;
            }
            let v = dir_iou(&d.bbox, gbox);
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((j, v));
            }
        }
        let m = &mut result.detections[i];
        if let Some((j, v)) = best {
            m.dir_iou = v;
            if v >= threshold {
                m.target = Some(j);
                result.target_matched[j] = true;
            }
        }
    }
    result
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
}

/// One ranked detection outcome, pooled across images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedOutcome {
    pub score: f64,
    pub image: usize,
    pub source: usize,
    pub true_positive: bool,
}

fn outcome_cmp(a: &RankedOutcome, b: &RankedOutcome) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.image.cmp(&b.image))
        .then(a.source.cmp(&b.source))
}

/// Cumulative precision/recall after each detection in rank order.
/// `None` when the class has no labels.
pub fn pr_curve(outcomes: &[RankedOutcome], labels: usize) -> Option<Vec<PrPoint>> {
    if labels == 0 {
        return None;
    }
    let mut sorted = outcomes.to_vec();
    sorted.sort_by(outcome_cmp);
    let (mut tp, mut fp) = (0usize, 0usize);
    Some(
        sorted
            .iter()
            .map(|o| {
                if o.true_positive {
                    tp += 1;
                } else {
                    fp += 1;
                }
                PrPoint {
                    precision: tp as f64 / (tp + fp) as f64,
                    recall: tp as f64 / labels as f64,
                }
            })
            .collect(),
    )
}

/// Area under the precision envelope, in percent.
pub fn average_precision(curve: &[PrPoint]) -> f64 {
    let mut envelope: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (p, env) in curve.iter().zip(&envelope) {
        if p.recall > prev_recall {
            area += (p.recall - prev_recall) * env;
            prev_recall = p.recall;
        }
    }
    100.0 * area
}

/// Targets and detections of one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageEval {
    pub image: String,
    pub gts: Vec<GroundTruth>,
    pub dets: Vec<Detection>,
}

/// Pairs records by image id (sorted). An image known to only one side gets
/// an empty list on the other. Detection `source` is the position in `dets`.
pub fn build_images(
    gts: &[(String, AnnotationRecord)],
    dets: &[LabeledRecord],
    table: &ClassTable,
) -> Result<Vec<ImageEval>> {
    let mut map: BTreeMap<&str, ImageEval> = BTreeMap::new();
    for (image, rec) in gts {
        let b = table.make_box(rec.class, rec.x, rec.y, rec.theta)?;
        map.entry(image)
            .or_insert_with(|| ImageEval {
                image: image.clone(),
                ..Default::default()
            })
            .gts
            .push((b, rec.class));
    }
    for (i, rec) in dets.iter().enumerate() {
        let d = Detection::from_record(rec, table, i)?;
        map.entry(&rec.image)
            .or_insert_with(|| ImageEval {
                image: rec.image.clone(),
                ..Default::default()
            })
            .dets
            .push(d);
    }
    Ok(map.into_values().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub class: ClassId,
    pub name: String,
    pub labels: usize,
    pub detections: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Percent, at the all-detections operating point.
    pub precision: f64,
    pub recall: f64,
    /// Percent; `None` for a class without labels.
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub dir_iou_threshold: f64,
    pub matching: String,
    pub interpolation: String,
    pub classes: Vec<ClassReport>,
    /// Mean AP over classes with labels.
    pub map: Option<f64>,
}

/// Evaluates a dataset. Image order in the input is irrelevant to the result.
pub fn evaluate(images: &[ImageEval], threshold: f64, table: &ClassTable, exec: Execution) -> Result<EvalReport> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!("DirIoU threshold {threshold} outside [0, 1]")));
    }
    for im in images {
        for class in im.gts.iter().map(|g| g.1).chain(im.dets.iter().map(|d| d.class)) {
            table.require(class)?;
        }
    }

    // rank images by id so pooled tie-breaking does not depend on input order
    let mut by_id: Vec<usize> = (0..images.len()).collect();
    by_id.sort_by(|&a, &b| images[a].image.cmp(&images[b].image));
    let mut image_rank = vec![0; images.len()];
    for (rank, &i) in by_id.iter().enumerate() {
        image_rank[i] = rank;
    }

    let matches = exec::map(exec, images, |im| match_image(&im.dets, &im.gts, threshold));

    let mut classes = Vec::new();
    for spec in table.specs() {
        let mut outcomes = Vec::new();
        let mut labels = 0;
        for (i, (im, m)) in images.iter().zip(&matches).enumerate() {
            labels += im.gts.iter().filter(|g| g.1 == spec.id).count();
            for (d, dm) in im.dets.iter().zip(&m.detections) {
                if d.class == spec.id {
                    outcomes.push(RankedOutcome {
                        score: d.score,
                        image: image_rank[i],
                        source: d.source,
                        true_positive: dm.target.is_some(),
                    });
                }
            }
        }
        if labels == 0 && outcomes.is_empty() {
            continue;
        }
        let tp = outcomes.iter().filter(|o| o.true_positive).count();
        let fp = outcomes.len() - tp;
        let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        classes.push(ClassReport {
            class: spec.id,
            name: spec.name.clone(),
            labels,
            detections: outcomes.len(),
            true_positives: tp,
            false_positives: fp,
            false_negatives: labels - tp,
            precision: pct(tp, tp + fp),
            recall: pct(tp, labels),
            ap: pr_curve(&outcomes, labels).map(|c| average_precision(&c)),
        });
    }

    let aps: Vec<f64> = classes.iter().filter_map(|c| c.ap).collect();
    let map = (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64);
    Ok(EvalReport {
        dir_iou_threshold: threshold,
        matching: MATCHING_RULE.into(),
        interpolation: AP_INTERPOLATION.into(),
        classes,
        map,
    })
}

impl EvalReport {
    fn ap_label(&self) -> String {
        format!("AP{}", (self.dir_iou_threshold * 100.0).round())
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# DirIoU >= {:.2}; matching: {}; AP: {}",
            self.dir_iou_threshold, self.matching, self.interpolation
        );
        let ap = self.ap_label();
        let _ = writeln!(
            s,
            "{:<12} {:>8} {:>10} {:>8} {:>8}",
            "class", "Labels", "Precision", "Recall", ap
        );
        for c in &self.classes {
            let ap = c.ap.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));
            let _ = writeln!(
                s,
                "{:<12} {:>8} {:>10.1} {:>8.1} {:>8}",
                c.name, c.labels, c.precision, c.recall, ap
            );
        }
        let map = self.map.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));
        let _ = writeln!(s, "m{ap} {map}");
        s
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_table())
    }
}
