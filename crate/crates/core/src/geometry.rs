//! Rotated-rectangle geometry in image coordinates (x right, y down).
//!
//! A [`DirectedBox`] points along `d = (sin θ, -cos θ)`: at `θ = 0` the head
//! edge faces up the image, and increasing `θ` turns the box clockwise on
//! screen. `h` is measured along `d`, `w` across it.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::angle::Angle;
use crate::error::{Error, Result};

/// Vertices closer than this are merged and points this far outside a clip
/// edge still count as inside.
pub const CLIP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    #[inline]
    fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    fn lerp(self, o: Point, t: f64) -> Point {
        Point::new(self.x + (o.x - self.x) * t, self.y + (o.y - self.y) * t)
    }

    #[inline]
    fn dist(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

/// Convex polygon with counter-clockwise vertices (positive shoelace area).
/// An empty vertex list is the empty polygon.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl ConvexPolygon {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a polygon from vertices in either winding; clockwise input is
    /// reversed. Fails for 1 or 2 vertices or a non-convex outline.
    pub fn new(mut vertices: Vec<Point>) -> Result<Self> {
        if vertices.is_empty() {
            return Ok(Self::empty());
        }
        if vertices.len() < 3 {
            return Err(Error::invalid(format!(
                "polygon needs 0 or at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if b.sub(a).cross(c.sub(b)) < -CLIP_TOLERANCE {
                return Err(Error::invalid("polygon is not convex"));
            }
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        polygon_area(self)
    }
}

fn signed_area(v: &[Point]) -> f64 {
    let n = v.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        s += v[i].cross(v[(i + 1) % n]);
    }
    0.5 * s
}

/// Shoelace area, independent of winding.
pub fn polygon_area(poly: &ConvexPolygon) -> f64 {
    signed_area(&poly.vertices).abs()
}

/// Center, size and optional direction of an object box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectedBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    theta: Option<Angle>,
}

impl DirectedBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, theta: Option<Angle>) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::invalid(format!("box center must be finite, got ({cx}, {cy})")));
        }
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(Error::invalid(format!("box size must be positive, got {w}x{h}")));
        }
        Ok(Self { cx, cy, w, h, theta })
    }

    /// Convenience constructor for a directed box; wraps `theta` into `[0, 2π)`.
    pub fn directed(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Result<Self> {
        Self::new(cx, cy, w, h, Some(Angle::new(theta)?))
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn theta(&self) -> Option<Angle> {
        self.theta
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Radius of the circumscribed circle.
    pub fn circumradius(&self) -> f64 {
        0.5 * self.w.hypot(self.h)
    }

    pub fn with_center(self, cx: f64, cy: f64) -> Result<Self> {
        Self::new(cx, cy, self.w, self.h, self.theta)
    }

    pub fn with_theta(self, theta: Option<Angle>) -> Self {
        Self { theta, ..self }
    }

    pub fn corners(&self) -> ConvexPolygon {
        box_corners(self)
    }

    fn total_cmp(&self, o: &Self) -> Ordering {
        let t = |b: &Self| b.theta.map_or(-1.0, Angle::radians);
        self.cx
            .total_cmp(&o.cx)
            .then(self.cy.total_cmp(&o.cy))
            .then(self.w.total_cmp(&o.w))
            .then(self.h.total_cmp(&o.h))
            .then(t(self).total_cmp(&t(o)))
    }
}

/// The four rectangle corners, counter-clockwise in the mathematical sense.
/// A missing direction is treated as `θ = 0`.
pub fn box_corners(b: &DirectedBox) -> ConvexPolygon {
    let theta = b.theta.map_or(0.0, Angle::radians);
    let (s, c) = theta.sin_cos();
    let (hh, hw) = (0.5 * b.h, 0.5 * b.w);
    // along = hh * (sin, -cos), across = hw * (cos, sin)
    let (ax, ay) = (hh * s, -hh * c);
    let (px, py) = (hw * c, hw * s);
    let (x, y) = (b.cx, b.cy);
    // det[along, across] < 0, so this ordering has positive shoelace area
    ConvexPolygon {
        vertices: vec![
            Point::new(x + ax + px, y + ay + py),
            Point::new(x - ax + px, y - ay + py),
            Point::new(x - ax - px, y - ay - py),
            Point::new(x + ax - px, y + ay - py),
        ],
    }
}

/// Intersection of two convex polygons by successive half-plane clipping of
/// `a` against every edge of `b`. Zero-area contact may produce a degenerate
/// polygon whose area is 0.
pub fn intersect_convex(a: &ConvexPolygon, b: &ConvexPolygon) -> ConvexPolygon {
    if a.is_empty() || b.is_empty() {
        return ConvexPolygon::empty();
    }
    let clip = &b.vertices;
    let mut output = a.vertices.clone();
    let mut input = Vec::with_capacity(output.len() + clip.len());
    let mut dists = Vec::with_capacity(output.len() + clip.len());

    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let p = clip[i];
        let q = clip[(i + 1) % clip.len()];
        let edge = q.sub(p);
        let len = edge.x.hypot(edge.y);
        if len <= CLIP_TOLERANCE {
            continue;
        }

        std::mem::swap(&mut input, &mut output);
        output.clear();
        dists.clear();
        dists.extend(input.iter().map(|v| edge.cross(v.sub(p)) / len));

        let n = input.len();
        for j in 0..n {
            let k = (j + n - 1) % n;
            let (cur, prev) = (input[j], input[k]);
            let (dc, dp) = (dists[j], dists[k]);
            let cur_in = dc >= -CLIP_TOLERANCE;
            let prev_in = dp >= -CLIP_TOLERANCE;
            if cur_in != prev_in {
                output.push(prev.lerp(cur, dp / (dp - dc)));
            }
            if cur_in {
                output.push(cur);
            }
        }
    }

    dedup_ring(&mut output);
    if output.len() < 3 {
        return ConvexPolygon::empty();
    }
    ConvexPolygon { vertices: output }
}

fn dedup_ring(v: &mut Vec<Point>) {
    v.dedup_by(|b, a| a.dist(*b) <= CLIP_TOLERANCE);
    while v.len() > 1 && v[0].dist(v[v.len() - 1]) <= CLIP_TOLERANCE {
        v.pop();
    }
}

/// Skew IoU of two rotated rectangles. Exactly symmetric: the pair is put in
/// a canonical order before clipping.
pub fn rotated_iou(a: &DirectedBox, b: &DirectedBox) -> f64 {
    let (first, second) = match a.total_cmp(b) {
        Ordering::Greater => (b, a),
        _ => (a, b),
    };
    if first.center().dist(second.center()) > first.circumradius() + second.circumradius() {
        return 0.0;
    }
    let inter = polygon_area(&intersect_convex(&first.corners(), &second.corners()))
        .min(first.area())
        .min(second.area());
    if inter <= 0.0 {
        return 0.0;
    }
    let union = first.area() + second.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Direction correction `(1 + cos Δθ) / 2`.
#[inline]
pub fn dir_corr(delta_theta: f64) -> f64 {
    0.5 * (1.0 + delta_theta.cos())
}

/// Direction correction between two boxes; 1 when either has no direction.
pub fn box_dir_corr(a: &DirectedBox, b: &DirectedBox) -> f64 {
    match (a.theta, b.theta) {
        (Some(ta), Some(tb)) => dir_corr(ta.radians() - tb.radians()),
        _ => 1.0,
    }
}

/// Rotated IoU scaled by the direction correction.
pub fn dir_iou(a: &DirectedBox, b: &DirectedBox) -> f64 {
    let iou = rotated_iou(a, b);
    if iou == 0.0 {
        return 0.0;
    }
    iou * box_dir_corr(a, b)
}
