//! Training losses for the grid head, each with its analytic gradient.
//!
//! - center: mean squared offset error over assigned cells
//! - direction: mean cosine distance `1 - cos(θ̂ - θ)` over directed cells,
//!   which stays continuous across the 0 / 2π seam
//! - objectness and classification: mean binary cross-entropy
//!
//! The total is the weighted sum of the four terms. All reductions use
//! [`pairwise_sum`] over per-item terms, so parallel and sequential
//! evaluation agree bit for bit.

use crate::error::{Error, Result};
use crate::exec::{self, pairwise_sum, Execution};
use crate::head::{activate, GridOutput, TargetField, CHANNELS, CLASS_CHANNELS, GRID_CELLS};

/// Probabilities are clamped into `[BCE_EPS, 1 - BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub xy: f64,
    pub theta: f64,
    pub cls: f64,
    pub obj: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            xy: 0.1,
            theta: 0.1,
            cls: 0.3,
            obj: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(xy: f64, theta: f64, cls: f64, obj: f64) -> Result<Self> {
        let w = Self { xy, theta, cls, obj };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("xy", self.xy),
            ("theta", self.theta),
            ("cls", self.cls),
            ("obj", self.obj),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("loss weight {name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    pub xy: f64,
    pub theta: f64,
    pub cls: f64,
    pub obj: f64,
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("prediction/target length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Mean over boxes of the squared center-offset error, and its gradient with
/// respect to each predicted offset. No boxes gives 0.
pub fn loss_xy(pred: &[[f64; 2]], target: &[[f64; 2]]) -> Result<(f64, Vec<[f64; 2]>)> {
    check_len(pred.len(), target.len())?;
    if pred.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = pred.len() as f64;
    let terms: Vec<f64> = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2))
        .collect();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| [2.0 * (p[0] - t[0]) / n, 2.0 * (p[1] - t[1]) / n])
        .collect();
    Ok((pairwise_sum(&terms) / n, grad))
}

/// Mean cosine distance between predicted and target angles, in `[0, 2]`.
pub fn loss_theta(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len(pred.len(), target.len())?;
    if pred.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = pred.len() as f64;
    let terms: Vec<f64> = pred.iter().zip(target).map(|(p, t)| 1.0 - (p - t).cos()).collect();
    let grad = pred.iter().zip(target).map(|(p, t)| (p - t).sin() / n).collect();
    Ok((pairwise_sum(&terms) / n, grad))
}

#[inline]
fn bce_term(p: f64, t: f64) -> f64 {
    let q = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(t * q.ln() + (1.0 - t) * (1.0 - q).ln())
}

/// Derivative of [`bce_term`] with respect to `p`; zero where the clamp is active.
#[inline]
fn bce_dp(p: f64, t: f64) -> f64 {
    if !(BCE_EPS..=1.0 - BCE_EPS).contains(&p) {
        return 0.0;
    }
    -t / p + (1.0 - t) / (1.0 - p)
}

/// Derivative of [`bce_term`]`(σ(z), t)` with respect to the logit `z`.
#[inline]
fn bce_dlogit(p: f64, t: f64) -> f64 {
    if !(BCE_EPS..=1.0 - BCE_EPS).contains(&p) {
        return 0.0;
    }
    p - t
}

/// Mean binary cross-entropy and its gradient with respect to each probability.
pub fn bce(probs: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len(probs.len(), targets.len())?;
    if probs.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = probs.len() as f64;
    let terms: Vec<f64> = probs.iter().zip(targets).map(|(p, t)| bce_term(*p, *t)).collect();
    let grad = probs.iter().zip(targets).map(|(p, t)| bce_dp(*p, *t) / n).collect();
    Ok((pairwise_sum(&terms) / n, grad))
}

/// Weighted sum of the four components.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    for (name, v) in [("xy", c.xy), ("theta", c.theta), ("cls", c.cls), ("obj", c.obj)] {
        if v < 0.0 || v.is_nan() {
            return Err(Error::invalid(format!("loss component {name} is negative: {v}")));
        }
    }
    Ok(w.xy * c.xy + w.theta * c.theta + w.cls * c.cls + w.obj * c.obj)
}

/// Loss of a whole grid against its targets, with the gradient of the
/// weighted total with respect to every raw output.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadLoss {
    pub components: LossComponents,
    pub total: f64,
    /// Per cell, in channel order `(x, y, θ, obj, abd, bee)`.
    pub grad: Vec<[f64; CHANNELS]>,
}

#[derive(Default)]
struct CellTerms {
    xy: f64,
    theta: f64,
    obj: f64,
    cls: f64,
    // unscaled partials of each per-cell term
    d_xy: [f64; 2],
    d_theta: f64,
    d_obj: f64,
    d_cls: [f64; 2],
}

pub fn head_loss(grid: &GridOutput, targets: &TargetField, weights: &LossWeights, exec: Execution) -> Result<HeadLoss> {
    weights.validate()?;
    if grid.image_size() != targets.image_size() {
        return Err(Error::invalid(format!(
            "grid is for {} px images, targets for {} px",
            grid.image_size(),
            targets.image_size()
        )));
    }

    let terms: Vec<CellTerms> = exec::map_range(exec, GRID_CELLS, |i| {
        let raw = &grid.cells()[i];
        let a = activate(raw);
        let mut t = CellTerms::default();
        let target = targets.cells()[i].as_ref();

        let obj_t = if target.is_some() { 1.0 } else { 0.0 };
        t.obj = bce_term(a.obj, obj_t);
        t.d_obj = bce_dlogit(a.obj, obj_t);

        if let Some(tg) = target {
            let (ex, ey) = (a.ox - tg.offset_x, a.oy - tg.offset_y);
            t.xy = ex * ex + ey * ey;
            t.d_xy = [2.0 * ex * a.ox * (1.0 - a.ox), 2.0 * ey * a.oy * (1.0 - a.oy)];

            if let Some(theta) = tg.theta {
                let diff = a.theta.radians() - theta.radians();
                t.theta = 1.0 - diff.cos();
                // ReLU passes the gradient only for positive raw values
                t.d_theta = if raw.raw_theta > 0.0 { diff.sin() } else { 0.0 };
            }

            for (k, (class, p)) in CLASS_CHANNELS.iter().zip([a.abd, a.bee]).enumerate() {
                let ct = if *class == tg.class { 1.0 } else { 0.0 };
                t.cls += bce_term(p, ct);
                t.d_cls[k] = bce_dlogit(p, ct);
            }
        }
        t
    });

    let n_assigned = targets.present().count();
    let n_directed = targets.present().filter(|t| t.theta.is_some()).count();
    let n_cls = n_assigned * CLASS_CHANNELS.len();
    let inv = |n: usize| if n == 0 { 0.0 } else { 1.0 / n as f64 };
    let (inv_xy, inv_theta, inv_cls, inv_obj) = (inv(n_assigned), inv(n_directed), inv(n_cls), inv(GRID_CELLS));

    let sum = |f: fn(&CellTerms) -> f64| pairwise_sum(&terms.iter().map(f).collect::<Vec<_>>());
    let components = LossComponents {
        xy: sum(|t| t.xy) * inv_xy,
        theta: sum(|t| t.theta) * inv_theta,
        cls: sum(|t| t.cls) * inv_cls,
        obj: sum(|t| t.obj) * inv_obj,
    };
    let total = total_loss(&components, weights)?;

    let (gx, gt, gc, go) = (
        weights.xy * inv_xy,
        weights.theta * inv_theta,
        weights.cls * inv_cls,
        weights.obj * inv_obj,
    );
    let grad = terms
        .iter()
        .map(|t| {
            [
                gx * t.d_xy[0],
                gx * t.d_xy[1],
                gt * t.d_theta,
                go * t.d_obj,
                gc * t.d_cls[0],
                gc * t.d_cls[1],
            ]
        })
        .collect();

    Ok(HeadLoss {
        components,
        total,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn xy_examples() {
        assert_eq!(loss_xy(&[[0.3, 0.4]], &[[0.3, 0.4]]).unwrap().0, 0.0);
        let (l, g) = loss_xy(&[[0.6, 0.7]], &[[0.5, 0.5]]).unwrap();
        assert!((l - 0.05).abs() < 1e-15);
        assert!((g[0][0] - 0.2).abs() < 1e-15 && (g[0][1] - 0.4).abs() < 1e-15);
        let (l, _) = loss_xy(&[[0.6, 0.7], [0.1, 0.1]], &[[0.5, 0.5], [0.1, 0.1]]).unwrap();
        assert!((l - 0.025).abs() < 1e-15);
        assert_eq!(loss_xy(&[], &[]).unwrap(), (0.0, vec![]));
        assert!(loss_xy(&[[0.0, 0.0]], &[]).is_err());
    }

    #[test]
    fn theta_examples() {
        assert_eq!(loss_theta(&[1.3], &[1.3]).unwrap().0, 0.0);
        assert_eq!(loss_theta(&[PI + 0.5], &[0.5]).unwrap().0, 2.0);
        let (l, _) = loss_theta(&[TAU - 0.01], &[0.01]).unwrap();
        assert!((l - (1.0 - 0.02f64.cos())).abs() < 1e-15);
        assert!(l < 2.1e-4);
    }

    #[test]
    fn bce_examples() {
        assert!((bce(&[0.5], &[1.0]).unwrap().0 - 2f64.ln()).abs() < 1e-15);
        assert!((bce(&[0.9], &[1.0]).unwrap().0 - 0.105_360_515_657_826_3).abs() < 1e-12);
        let (l, _) = bce(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]).unwrap();
        assert!(l <= 1e-6);
        assert!(bce(&[0.0], &[1.0]).unwrap().0.is_finite());
    }

    #[test]
    fn total_examples() {
        let w = LossWeights::default();
        assert_eq!(total_loss(&LossComponents::default(), &w).unwrap(), 0.0);
        let c = LossComponents {
            xy: 0.05,
            theta: 0.5,
            cls: 0.2,
            obj: 0.3,
        };
        assert!((total_loss(&c, &w).unwrap() - 0.415).abs() < 1e-12);
        assert!(LossWeights::new(0.1, -0.1, 0.3, 1.0).is_err());
        let bad = LossWeights { obj: -1.0, ..w };
        assert!(total_loss(&c, &bad).is_err());
    }

    #[test]
    fn empty_targets_only_score_objectness() {
        let grid = GridOutput::zeros(512).unwrap();
        let targets = TargetField::empty(512).unwrap();
        let hl = head_loss(&grid, &targets, &LossWeights::default(), Execution::Sequential).unwrap();
        assert_eq!(hl.components.xy, 0.0);
        assert_eq!(hl.components.theta, 0.0);
        assert_eq!(hl.components.cls, 0.0);
        assert!((hl.components.obj - 2f64.ln()).abs() < 1e-12);
    }
}
