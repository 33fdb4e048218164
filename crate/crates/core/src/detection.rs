use serde::{Deserialize, Serialize};

use crate::annotations::{AnnotationRecord, ClassId, ClassTable, LabeledRecord};
use crate::error::{Error, Result};
use crate::geometry::DirectedBox;

/// A scored box. `source` is a stable identity (input position) used for
/// deterministic tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: DirectedBox,
    pub class: ClassId,
    pub score: f64,
    pub source: usize,
}

impl Detection {
    pub fn new(bbox: DirectedBox, class: ClassId, score: f64, source: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid(format!("score {score} outside [0, 1]")));
        }
        Ok(Self {
            bbox,
            class,
            score,
            source,
        })
    }

    pub fn from_record(rec: &LabeledRecord, table: &ClassTable, source: usize) -> Result<Self> {
        let score = rec
            .score
            .ok_or_else(|| Error::validation(format!("detection {source} has no score")))?;
        let r = &rec.record;
        Self::new(table.make_box(r.class, r.x, r.y, r.theta)?, r.class, score, source)
    }

    pub fn to_record(&self, image: &str) -> LabeledRecord {
        LabeledRecord {
            image: image.to_string(),
            record: AnnotationRecord {
                x: self.bbox.cx(),
                y: self.bbox.cy(),
                class: self.class,
                theta: self.bbox.theta(),
            },
            score: Some(self.score),
        }
    }

    /// Descending score, ascending source on ties.
    pub fn rank_cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.score.total_cmp(&self.score).then(self.source.cmp(&other.source))
    }
}
