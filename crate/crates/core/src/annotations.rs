//! Ground-truth and detection records, the per-class uniform box model, and
//! the JSON Lines wire format.
//!
//! One record per line:
//!
//! ```text
//! {"image": "a.png", "x": 100.0, "y": 200.0, "t": 1, "theta": 0.0}
//! {"image": "a.png", "x": 50.0, "y": 60.0, "t": 2, "score": 0.83}
//! ```
//!
//! `theta` is present exactly for directed classes; `score` only for detections.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::angle::{wrap_angle, Angle};
use crate::error::{Error, Result};
use crate::geometry::DirectedBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

impl ClassId {
    pub const BEE: ClassId = ClassId(1);
    pub const ABDOMEN: ClassId = ClassId(2);
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Fixed box size for every instance of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub id: ClassId,
    pub name: String,
    pub w: f64,
    pub h: f64,
    pub directed: bool,
}

/// Class configuration. The default holds the two honeybee classes: a
/// directed 40x70 body box (tight around a 20/35 px ellipse) and a
/// direction-free 40x40 abdomen box (around an r = 20 px circle).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTable {
    specs: Vec<ClassSpec>,
}

impl Default for ClassTable {
    fn default() -> Self {
        Self {
            specs: vec![
                ClassSpec {
                    id: ClassId::BEE,
                    name: "bee".into(),
                    w: 40.0,
                    h: 70.0,
                    directed: true,
                },
                ClassSpec {
                    id: ClassId::ABDOMEN,
                    name: "abdomen".into(),
                    w: 40.0,
                    h: 40.0,
                    directed: false,
                },
            ],
        }
    }
}

impl ClassTable {
    pub fn new(specs: Vec<ClassSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Config("class table is empty".into()));
        }
        for (i, s) in specs.iter().enumerate() {
            if !(s.w > 0.0 && s.h > 0.0 && s.w.is_finite() && s.h.is_finite()) {
                return Err(Error::Config(format!(
                    "class {} ({}) has non-positive size {}x{}",
                    s.id, s.name, s.w, s.h
                )));
            }
            if specs[..i].iter().any(|o| o.id == s.id) {
                return Err(Error::Config(format!("duplicate class id {}", s.id)));
            }
        }
        Ok(Self { specs })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let specs: Vec<ClassSpec> =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("class spec: {e}")))?;
        Self::new(specs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, id: ClassId) -> Option<&ClassSpec> {
        self.specs.iter().find(|s| s.id == id)
    }

    pub fn require(&self, id: ClassId) -> Result<&ClassSpec> {
        self.get(id)
            .ok_or_else(|| Error::validation(format!("unknown class id {id}")))
    }

    pub fn specs(&self) -> &[ClassSpec] {
        &self.specs
    }

    /// Uniform box for an instance of `class` centered at `(x, y)`.
    pub fn make_box(&self, class: ClassId, x: f64, y: f64, theta: Option<Angle>) -> Result<DirectedBox> {
        let spec = self.require(class)?;
        let theta = if spec.directed { theta } else { None };
        DirectedBox::new(x, y, spec.w, spec.h, theta)
    }
}

/// One annotated object: center, class id `t`, and direction for directed classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotationRecord {
    pub x: f64,
    pub y: f64,
    pub class: ClassId,
    pub theta: Option<Angle>,
}

/// A record tagged with its image id, plus a score when it is a detection.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecord {
    pub image: String,
    pub record: AnnotationRecord,
    pub score: Option<f64>,
}

pub fn annotation_to_box(rec: &AnnotationRecord, specs: &ClassTable) -> Result<DirectedBox> {
    specs.make_box(rec.class, rec.x, rec.y, rec.theta)
}

#[derive(Debug, Serialize, Deserialize)]
struct WireRecord {
    image: String,
    x: f64,
    y: f64,
    t: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Drop a `theta` given for a direction-free class instead of failing.
    pub lenient: bool,
    /// Every line must carry a `score` in `[0, 1]`.
    pub require_score: bool,
}

fn validate_line(wire: WireRecord, line: usize, table: &ClassTable, opts: ParseOptions) -> Result<LabeledRecord> {
    let invalid = |message: String| Error::Validation {
        line: Some(line),
        message,
    };
    if !(wire.x.is_finite() && wire.y.is_finite()) {
        return Err(invalid(format!("non-finite center ({}, {})", wire.x, wire.y)));
    }
    let class = u32::try_from(wire.t)
        .ok()
        .map(ClassId)
        .filter(|id| table.get(*id).is_some())
        .ok_or_else(|| invalid(format!("unknown class t={}", wire.t)))?;
    let spec = table.require(class)?;

    let theta = match (spec.directed, wire.theta) {
        (true, Some(t)) => Some(wrap_angle(t).map_err(|e| invalid(e.to_string()))?),
        (true, None) => return Err(invalid(format!("class {class} requires theta"))),
        (false, None) => None,
        (false, Some(_)) if opts.lenient => {
            log::warn!("line {line}: dropping theta for direction-free class {class}");
            None
        }
        (false, Some(_)) => return Err(invalid(format!("theta given for direction-free class {class}"))),
    };

    let score = match wire.score {
        Some(s) if !(0.0..=1.0).contains(&s) => return Err(invalid(format!("score {s} outside [0, 1]"))),
        None if opts.require_score => return Err(invalid("missing score".into())),
        s => s,
    };

    Ok(LabeledRecord {
        image: wire.image,
        record: AnnotationRecord {
            x: wire.x,
            y: wire.y,
            class,
            theta,
        },
        score,
    })
}

/// Parses a JSONL stream. Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_records<R: BufRead>(reader: R, table: &ClassTable, opts: ParseOptions) -> Result<Vec<LabeledRecord>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(validate_line(wire, line_no, table, opts)?);
    }
    Ok(out)
}

/// Parses ground truth into `(image id, record)` pairs.
pub fn parse_annotations<R: BufRead>(
    reader: R,
    table: &ClassTable,
    lenient: bool,
) -> Result<Vec<(String, AnnotationRecord)>> {
    let opts = ParseOptions {
        lenient,
        require_score: false,
    };
    Ok(parse_records(reader, table, opts)?
        .into_iter()
        .map(|r| (r.image, r.record))
        .collect())
}

/// Parses detections; every line needs a score.
pub fn parse_detections<R: BufRead>(reader: R, table: &ClassTable, lenient: bool) -> Result<Vec<LabeledRecord>> {
    let opts = ParseOptions {
        lenient,
        require_score: true,
    };
    parse_records(reader, table, opts)
}

pub fn write_record<W: Write + ?Sized>(w: &mut W, rec: &LabeledRecord) -> Result<()> {
    let wire = WireRecord {
        image: rec.image.clone(),
        x: rec.record.x,
        y: rec.record.y,
        t: i64::from(rec.record.class.0),
        theta: rec.record.theta.map(Angle::radians),
        score: rec.score,
    };
    serde_json::to_writer(&mut *w, &wire)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_records<'a, W: Write + ?Sized>(
    w: &mut W,
    records: impl IntoIterator<Item = &'a LabeledRecord>,
) -> Result<()> {
    for r in records {
        write_record(w, r)?;
    }
    Ok(())
}

/// Groups records by image id, keeping file order within each image.
pub fn group_by_image(records: &[LabeledRecord]) -> BTreeMap<&str, Vec<(usize, &LabeledRecord)>> {
    let mut map: BTreeMap<&str, Vec<(usize, &LabeledRecord)>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        map.entry(r.image.as_str()).or_default().push((i, r));
    }
    map
}
