//! Anchor-free 16x16 detection head: activations, target assignment, and the
//! codec between grid cells and absolute boxes.
//!
//! Each cell emits one vector `(x, y, θ, obj, abd_cls, bee_cls)`. Offsets are
//! plain sigmoids over the cell, `θ` is ReLU followed by mod 2π, and the
//! objectness and class nodes are independent logistic units.

use std::f64::consts::TAU;

use crate::angle::{wrap_angle, Angle};
use crate::annotations::{ClassId, ClassTable};
use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::geometry::DirectedBox;

pub const GRID_SIZE: usize = 16;
pub const GRID_CELLS: usize = GRID_SIZE * GRID_SIZE;
pub const CHANNELS: usize = 6;
pub const DEFAULT_IMAGE_SIZE: u32 = 512;

/// Class carried by each of the two class channels, in channel order.
pub const CLASS_CHANNELS: [ClassId; 2] = [ClassId::ABDOMEN, ClassId::BEE];

/// Raw logit used by [`encode`] for "certainly yes" / "certainly no".
pub const ENCODE_CONFIDENT_LOGIT: f64 = 10.0;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse sigmoid; defined on the open interval (0, 1).
pub fn logit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("logit undefined at {p}")));
    }
    Ok((p / (1.0 - p)).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellOutput {
    pub raw_x: f64,
    pub raw_y: f64,
    pub raw_theta: f64,
    pub raw_obj: f64,
    pub raw_abd: f64,
    pub raw_bee: f64,
}

impl CellOutput {
    pub fn to_array(self) -> [f64; CHANNELS] {
        [
            self.raw_x,
            self.raw_y,
            self.raw_theta,
            self.raw_obj,
            self.raw_abd,
            self.raw_bee,
        ]
    }

    pub fn from_array(a: [f64; CHANNELS]) -> Self {
        Self {
            raw_x: a[0],
            raw_y: a[1],
            raw_theta: a[2],
            raw_obj: a[3],
            raw_abd: a[4],
            raw_bee: a[5],
        }
    }

    fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivatedCell {
    pub ox: f64,
    pub oy: f64,
    pub theta: Angle,
    pub obj: f64,
    pub abd: f64,
    pub bee: f64,
}

impl ActivatedCell {
    /// Most probable class (ties go to the first channel) and its probability.
    pub fn best_class(&self) -> (ClassId, f64) {
        if self.bee > self.abd {
            (CLASS_CHANNELS[1], self.bee)
        } else {
            (CLASS_CHANNELS[0], self.abd)
        }
    }

    pub fn class_prob(&self, class: ClassId) -> Option<f64> {
        match CLASS_CHANNELS.iter().position(|c| *c == class)? {
            0 => Some(self.abd),
            _ => Some(self.bee),
        }
    }
}

pub fn activate(cell: &CellOutput) -> ActivatedCell {
    let theta = wrap_angle(cell.raw_theta.max(0.0)).unwrap_or(Angle::ZERO);
    ActivatedCell {
        ox: sigmoid(cell.raw_x),
        oy: sigmoid(cell.raw_y),
        theta,
        obj: sigmoid(cell.raw_obj),
        abd: sigmoid(cell.raw_abd),
        bee: sigmoid(cell.raw_bee),
    }
}

fn check_image_size(image_size: u32) -> Result<()> {
    if image_size == 0 || !(image_size as usize).is_multiple_of(GRID_SIZE) {
        return Err(Error::invalid(format!(
            "image size {image_size} is not a positive multiple of {GRID_SIZE}"
        )));
    }
    Ok(())
}

/// Raw head output, row-major over cells.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOutput {
    image_size: u32,
    cells: Vec<CellOutput>,
}

impl GridOutput {
    pub fn zeros(image_size: u32) -> Result<Self> {
        check_image_size(image_size)?;
        Ok(Self {
            image_size,
            cells: vec![CellOutput::default(); GRID_CELLS],
        })
    }

    pub fn from_cells(image_size: u32, cells: Vec<CellOutput>) -> Result<Self> {
        check_image_size(image_size)?;
        if cells.len() != GRID_CELLS {
            return Err(Error::invalid(format!(
                "grid needs {GRID_CELLS} cells, got {}",
                cells.len()
            )));
        }
        if let Some(i) = cells.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("cell {i} has a non-finite value")));
        }
        Ok(Self { image_size, cells })
    }

    pub fn image_size(&self) -> u32 {
        self.image_size
    }

    pub fn cell_size(&self) -> f64 {
        f64::from(self.image_size) / GRID_SIZE as f64
    }

    pub fn cells(&self) -> &[CellOutput] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [CellOutput] {
        &mut self.cells
    }

    pub fn cell(&self, row: usize, col: usize) -> &CellOutput {
        &self.cells[row * GRID_SIZE + col]
    }

    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut CellOutput {
        &mut self.cells[row * GRID_SIZE + col]
    }

    /// Flat 16x16x6 tensor, channel-fastest.
    pub fn to_flat(&self) -> Vec<f64> {
        self.cells.iter().flat_map(|c| c.to_array()).collect()
    }

    pub fn from_flat(image_size: u32, data: &[f64]) -> Result<Self> {
        if data.len() != GRID_CELLS * CHANNELS {
            return Err(Error::invalid(format!(
                "grid tensor needs {} values, got {}",
                GRID_CELLS * CHANNELS,
                data.len()
            )));
        }
        let cells = data
            .chunks_exact(CHANNELS)
            .map(|c| CellOutput::from_array(c.try_into().expect("chunk of CHANNELS")))
            .collect();
        Self::from_cells(image_size, cells)
    }

    /// Little-endian f64 values in row-major 16x16x6 order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.to_flat().iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(image_size: u32, bytes: &[u8]) -> Result<Self> {
        if !bytes.len().is_multiple_of(8) {
            return Err(Error::invalid("grid byte length is not a multiple of 8"));
        }
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        Self::from_flat(image_size, &data)
    }

    /// Nested `[16][16][6]` JSON array.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<[f64; CHANNELS]>> = self
            .cells
            .chunks_exact(GRID_SIZE)
            .map(|row| row.iter().map(|c| c.to_array()).collect())
            .collect();
        serde_json::json!(rows)
    }

    pub fn from_json(image_size: u32, value: &serde_json::Value) -> Result<Self> {
        let rows: Vec<Vec<[f64; CHANNELS]>> = serde_json::from_value(value.clone())?;
        if rows.len() != GRID_SIZE || rows.iter().any(|r| r.len() != GRID_SIZE) {
            return Err(Error::invalid("grid JSON must have shape [16][16][6]"));
        }
        let cells = rows.into_iter().flatten().map(CellOutput::from_array).collect();
        Self::from_cells(image_size, cells)
    }
}

/// Ground truth assigned to one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellTarget {
    pub row: usize,
    pub col: usize,
    pub offset_x: f64,
    pub offset_y: f64,
    pub theta: Option<Angle>,
    pub class: ClassId,
}

/// Two ground truths fell into the same cell; the first (by input index) was kept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Collision {
    pub row: usize,
    pub col: usize,
    pub kept: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetField {
    image_size: u32,
    cells: Vec<Option<CellTarget>>,
    collisions: Vec<Collision>,
}

impl TargetField {
    pub fn empty(image_size: u32) -> Result<Self> {
        check_image_size(image_size)?;
        Ok(Self {
            image_size,
            cells: vec![None; GRID_CELLS],
            collisions: Vec::new(),
        })
    }

    pub fn image_size(&self) -> u32 {
        self.image_size
    }

    pub fn cell_size(&self) -> f64 {
        f64::from(self.image_size) / GRID_SIZE as f64
    }

    pub fn cells(&self) -> &[Option<CellTarget>] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> Option<&CellTarget> {
        self.cells[row * GRID_SIZE + col].as_ref()
    }

    pub fn present(&self) -> impl Iterator<Item = &CellTarget> {
        self.cells.iter().flatten()
    }

    pub fn collisions(&self) -> &[Collision] {
        &self.collisions
    }

    /// Sets a cell directly. Offsets must lie in `[0, 1]`.
    pub fn set(&mut self, target: CellTarget) -> Result<()> {
        if target.row >= GRID_SIZE || target.col >= GRID_SIZE {
            return Err(Error::invalid(format!(
                "cell ({}, {}) outside the grid",
                target.row, target.col
            )));
        }
        let unit = 0.0..=1.0;
        if !(unit.contains(&target.offset_x) && unit.contains(&target.offset_y)) {
            return Err(Error::invalid(format!(
                "offsets ({}, {}) outside [0, 1]",
                target.offset_x, target.offset_y
            )));
        }
        self.cells[target.row * GRID_SIZE + target.col] = Some(target);
        Ok(())
    }

    /// Moves offsets that sit exactly on a cell border `eps` inside, so
    /// [`encode`] can take their logit.
    pub fn nudge_offsets(&mut self, eps: f64) {
        for t in self.cells.iter_mut().flatten() {
            t.offset_x = t.offset_x.clamp(eps, 1.0 - eps);
            t.offset_y = t.offset_y.clamp(eps, 1.0 - eps);
        }
    }
}

/// Assigns each ground-truth center to the cell containing it.
pub fn assign_targets(gts: &[(DirectedBox, ClassId)], image_size: u32) -> Result<TargetField> {
    let mut field = TargetField::empty(image_size)?;
    let size = f64::from(image_size);
    let cell = field.cell_size();
    let mut owner = [usize::MAX; GRID_CELLS];

    for (i, (b, class)) in gts.iter().enumerate() {
        let (cx, cy) = (b.cx(), b.cy());
        if !(0.0..size).contains(&cx) || !(0.0..size).contains(&cy) {
            return Err(Error::invalid(format!(
                "ground truth {i} center ({cx}, {cy}) outside [0, {image_size})"
            )));
        }
        let (gx, gy) = (cx / cell, cy / cell);
        let col = (gx.floor() as usize).min(GRID_SIZE - 1);
        let row = (gy.floor() as usize).min(GRID_SIZE - 1);
        let idx = row * GRID_SIZE + col;
        if owner[idx] != usize::MAX {
            let collision = Collision {
                row,
                col,
                kept: owner[idx],
                dropped: i,
            };
            log::warn!(
                "cell ({row}, {col}) already holds ground truth {} ({:?}); dropping {i} ({:?})",
                owner[idx],
                gts[owner[idx]].0,
                b
            );
            field.collisions.push(collision);
            continue;
        }
        owner[idx] = i;
        field.cells[idx] = Some(CellTarget {
            row,
            col,
            offset_x: (gx - col as f64).clamp(0.0, 1.0),
            offset_y: (gy - row as f64).clamp(0.0, 1.0),
            theta: b.theta(),
            class: *class,
        });
    }
    Ok(field)
}

/// Turns every cell scoring at least `conf_threshold` into a detection.
/// Score is `obj * max class probability`; `source` is the cell index.
pub fn decode(grid: &GridOutput, conf_threshold: f64, table: &ClassTable) -> Result<Vec<Detection>> {
    let cell = grid.cell_size();
    let mut out = Vec::new();
    for (idx, raw) in grid.cells.iter().enumerate() {
        let a = activate(raw);
        let (class, p) = a.best_class();
        let score = a.obj * p;
        if score < conf_threshold {
            continue;
        }
        let (row, col) = (idx / GRID_SIZE, idx % GRID_SIZE);
        let cx = (col as f64 + a.ox) * cell;
        let cy = (row as f64 + a.oy) * cell;
        let bbox = table.make_box(class, cx, cy, Some(a.theta))?;
        out.push(Detection::new(bbox, class, score, idx)?);
    }
    Ok(out)
}

/// Raw outputs that activate back to `field`. Present cells get confident
/// objectness and class logits, absent cells confident negatives.
pub fn encode(field: &TargetField) -> Result<GridOutput> {
    let mut grid = GridOutput::zeros(field.image_size)?;
    let no = -ENCODE_CONFIDENT_LOGIT;
    for (raw, target) in grid.cells.iter_mut().zip(&field.cells) {
        *raw = match target {
            None => CellOutput {
                raw_obj: no,
                raw_abd: no,
                raw_bee: no,
                ..CellOutput::default()
            },
            Some(t) => {
                let channel = CLASS_CHANNELS
                    .iter()
                    .position(|c| *c == t.class)
                    .ok_or_else(|| Error::invalid(format!("class {} has no head channel", t.class)))?;
                let theta = t.theta.map_or(0.0, Angle::radians);
                debug_assert!(theta < TAU);
                let class_logit = |ch: usize| if ch == channel { -no } else { no };
                CellOutput {
                    raw_x: logit(t.offset_x)?,
                    raw_y: logit(t.offset_y)?,
                    raw_theta: theta,
                    raw_obj: -no,
                    raw_abd: class_logit(0),
                    raw_bee: class_logit(1),
                }
            }
        };
    }
    Ok(grid)
}
