//! Independent reference implementations used only by tests.
#![allow(dead_code)]

use std::f64::consts::TAU;

use dirdet::eval::GroundTruth;
use dirdet::{dir_iou, ClassId, Detection, DirectedBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Closed x-interval of row `y` covered by the box, from the four
/// half-plane constraints `|u| <= h/2`, `|v| <= w/2` in box coordinates.
fn row_interval(b: &DirectedBox, y: f64) -> Option<(f64, f64)> {
    let theta = b.theta().map_or(0.0, |t| t.radians());
    let (s, c) = theta.sin_cos();
    // u = (x-cx)*s + (y-cy)*(-c), v = (x-cx)*c + (y-cy)*s
    let dy = y - b.cy();
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (k, offset, half) in [(s, -dy * c, b.h() / 2.0), (c, dy * s, b.w() / 2.0)] {
        // -half <= k*(x-cx) + offset <= half
        if k.abs() < 1e-15 {
            if offset.abs() > half {
                return None;
            }
            continue;
        }
        let a = (-half - offset) / k;
        let bnd = (half - offset) / k;
        let (l, h) = if a < bnd { (a, bnd) } else { (bnd, a) };
        lo = lo.max(l + b.cx());
        hi = hi.min(h + b.cx());
    }
    (lo <= hi).then_some((lo, hi))
}

/// Number of sample abscissae `(j + 0.5) * step` inside `[lo, hi]`.
fn count_samples(lo: f64, hi: f64, step: f64) -> i64 {
    let first = (lo / step - 0.5).ceil() as i64;
    let last = (hi / step - 0.5).floor() as i64;
    (last - first + 1).max(0)
}

/// IoU by counting sample points on a `step`-spaced pixel-center lattice.
pub fn raster_iou(a: &DirectedBox, b: &DirectedBox, step: f64) -> f64 {
    let reach = |x: &DirectedBox| 0.5 * x.w().hypot(x.h());
    let y_min = (a.cy() - reach(a)).min(b.cy() - reach(b));
    let y_max = (a.cy() + reach(a)).max(b.cy() + reach(b));
    let k0 = (y_min / step - 0.5).floor() as i64;
    let k1 = (y_max / step - 0.5).ceil() as i64;
    let (mut na, mut nb, mut ni) = (0i64, 0i64, 0i64);
    for k in k0..=k1 {
        let y = (k as f64 + 0.5) * step;
        let ia = row_interval(a, y);
        let ib = row_interval(b, y);
        if let Some((l, h)) = ia {
            na += count_samples(l, h, step);
        }
        if let Some((l, h)) = ib {
            nb += count_samples(l, h, step);
        }
        if let (Some((la, ha)), Some((lb, hb))) = (ia, ib) {
            ni += count_samples(la.max(lb), ha.min(hb), step);
        }
    }
    let union = na + nb - ni;
    if union == 0 {
        0.0
    } else {
        ni as f64 / union as f64
    }
}

pub fn random_box(r: &mut ChaCha8Rng, center_range: f64, size: (f64, f64)) -> DirectedBox {
    DirectedBox::directed(
        r.random_range(0.0..center_range),
        r.random_range(0.0..center_range),
        r.random_range(size.0..size.1),
        r.random_range(size.0..size.1),
        r.random_range(0.0..TAU),
    )
    .unwrap()
}

/// Suppression-flag formulation of greedy NMS, O(n²).
pub fn brute_nms(dets: &[Detection], thr: f64, score_thr: f64) -> Vec<Detection> {
    let mut cand: Vec<Detection> = dets.iter().copied().filter(|d| d.score >= score_thr).collect();
    // insertion sort by (score desc, source asc)
    for i in 1..cand.len() {
        let mut j = i;
        while j > 0 {
            let (p, q) = (&cand[j - 1], &cand[j]);
            let out_of_order = p.score < q.score || (p.score == q.score && p.source > q.source);
            if !out_of_order {
                break;
            }
            cand.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut suppressed = vec![false; cand.len()];
    let mut kept = Vec::new();
    for i in 0..cand.len() {
        if suppressed[i] {
            continue;
        }
        kept.push(cand[i]);
        for j in i + 1..cand.len() {
            if cand[j].class == cand[i].class && dir_iou(&cand[i].bbox, &cand[j].bbox) >= thr {
                suppressed[j] = true;
            }
        }
    }
    kept
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteClass {
    pub class: ClassId,
    pub labels: usize,
    pub tp: usize,
    pub fp: usize,
    pub ap: Option<f64>,
}

/// Per-detection TP flags for one image: full DirIoU matrix first, then the
/// greedy one-to-one assignment in rank order.
pub fn brute_match(dets: &[Detection], gts: &[GroundTruth], thr: f64) -> Vec<bool> {
    let m: Vec<Vec<f64>> = dets
        .iter()
        .map(|d| {
            gts.iter()
                .map(|g| {
                    if g.1 == d.class {
                        dir_iou(&d.bbox, &g.0)
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect()
        })
        .collect();
    let mut rank: Vec<usize> = (0..dets.len()).collect();
    rank.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap()
            .then(dets[a].source.cmp(&dets[b].source))
    });
    let mut taken = vec![false; gts.len()];
    let mut tp = vec![false; dets.len()];
    for i in rank {
        let mut best = None;
        let mut best_v = f64::NEG_INFINITY;
        for j in 0..gts.len() {
            if !taken[j] && m[i][j] > best_v {
                best_v = m[i][j];
                best = Some(j);
            }
        }
        if let Some(j) = best {
            if best_v >= thr {
                taken[j] = true;
                tp[i] = true;
            }
        }
    }
    tp
}

/// AP as a sum over true positives of `(1/labels) * max precision at or
/// below that rank`, in percent.
pub fn brute_ap(ranked_tp: &[bool], labels: usize) -> f64 {
    let n = ranked_tp.len();
    let mut prec = vec![0.0; n];
    let mut tp = 0;
    for (k, &t) in ranked_tp.iter().enumerate() {
        if t {
            tp += 1;
        }
        prec[k] = tp as f64 / (k + 1) as f64;
    }
    let mut ap = 0.0;
    for k in 0..n {
        if ranked_tp[k] {
            let best = prec[k..].iter().cloned().fold(0.0, f64::max);
            ap += best / labels as f64;
        }
    }
    100.0 * ap
}

/// Brute-force evaluation over images given as `(image id, gts, dets)`.
pub fn brute_evaluate(
    images: &[(String, Vec<GroundTruth>, Vec<Detection>)],
    thr: f64,
    classes: &[ClassId],
) -> Vec<BruteClass> {
    let tps: Vec<Vec<bool>> = images.iter().map(|(_, g, d)| brute_match(d, g, thr)).collect();
    let mut out = Vec::new();
    for &class in classes {
        let labels: usize = images
            .iter()
            .map(|(_, g, _)| g.iter().filter(|x| x.1 == class).count())
            .sum();
        let mut pooled: Vec<(f64, &str, usize, bool)> = Vec::new();
        for ((id, _, dets), tp) in images.iter().zip(&tps) {
            for (d, &t) in dets.iter().zip(tp) {
                if d.class == class {
                    pooled.push((d.score, id.as_str(), d.source, t));
                }
            }
        }
        if labels == 0 && pooled.is_empty() {
            continue;
        }
        pooled.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)).then(a.2.cmp(&b.2)));
        let ranked: Vec<bool> = pooled.iter().map(|p| p.3).collect();
        let tp = ranked.iter().filter(|t| **t).count();
        out.push(BruteClass {
            class,
            labels,
            tp,
            fp: ranked.len() - tp,
            ap: (labels > 0).then(|| brute_ap(&ranked, labels)),
        });
    }
    out
}

/// Central finite difference of `f` at `x` along coordinate `i`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, step: f64) -> f64 {
    let mut p = x.to_vec();
    let mut m = x.to_vec();
    p[i] += step;
    m[i] -= step;
    (f(&p) - f(&m)) / (2.0 * step)
}

/// Relative error with an absolute floor for near-zero derivatives.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-6 {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// A cluttered single-image detection set: clusters of jittered copies
/// around random centers, mixed classes, scores quantized to force ties.
pub fn random_detections(r: &mut ChaCha8Rng, max: usize) -> Vec<Detection> {
    let n = r.random_range(0..=max);
    let mut out = Vec::with_capacity(n);
    let mut anchor = (0.0, 0.0, 0.0, ClassId::BEE);
    for i in 0..n {
        if i == 0 || r.random::<f64>() < 0.25 {
            let class = if r.random::<f64>() < 0.7 {
                ClassId::BEE
            } else {
                ClassId::ABDOMEN
            };
            anchor = (
                r.random_range(0.0..512.0),
                r.random_range(0.0..512.0),
                r.random_range(0.0..TAU),
                class,
            );
        }
        let (x, y, t, class) = anchor;
        let theta = (class == ClassId::BEE).then(|| dirdet::Angle::new(t + r.random_range(-2.0..2.0)).unwrap());
        let (w, h) = if class == ClassId::BEE {
            (40.0, 70.0)
        } else {
            (40.0, 40.0)
        };
        let b = DirectedBox::new(
            x + r.random_range(-25.0..25.0),
            y + r.random_range(-25.0..25.0),
            w,
            h,
            theta,
        )
        .unwrap();
        let score = (r.random_range(0.0..1.0f64) * 20.0).round() / 20.0;
        out.push(Detection::new(b, class, score, i).unwrap());
    }
    // shuffle input order so the implementation has to sort
    for i in (1..out.len()).rev() {
        let j = r.random_range(0..=i);
        out.swap(i, j);
    }
    out
}

/// Ground truths for an image, plus detections derived from them with
/// jitter, misses and clutter.
pub fn random_eval_image(r: &mut ChaCha8Rng, id: &str) -> (String, Vec<GroundTruth>, Vec<Detection>) {
    let n_gt = r.random_range(0..25);
    let mut gts = Vec::with_capacity(n_gt);
    for _ in 0..n_gt {
        let bee = r.random::<f64>() < 0.7;
        let b = if bee {
            DirectedBox::directed(
                r.random_range(0.0..512.0),
                r.random_range(0.0..512.0),
                40.0,
                70.0,
                r.random_range(0.0..TAU),
            )
        } else {
            DirectedBox::new(r.random_range(0.0..512.0), r.random_range(0.0..512.0), 40.0, 40.0, None)
        };
        gts.push((b.unwrap(), if bee { ClassId::BEE } else { ClassId::ABDOMEN }));
    }
    let mut dets = Vec::new();
    let mut source = 0;
    for (g, class) in &gts {
        for _ in 0..r.random_range(0..3) {
            let theta = g
                .theta()
                .map(|t| dirdet::Angle::new(t.radians() + r.random_range(-2.5..2.5)).unwrap());
            let b = DirectedBox::new(
                g.cx() + r.random_range(-20.0..20.0),
                g.cy() + r.random_range(-20.0..20.0),
                g.w(),
                g.h(),
                theta,
            )
            .unwrap();
            let score = (r.random::<f64>() * 50.0).round() / 50.0;
            dets.push(Detection::new(b, *class, score, source).unwrap());
            source += 1;
        }
    }
    for _ in 0..r.random_range(0..8) {
        let bee = r.random::<bool>();
        let b = if bee {
            DirectedBox::directed(
                r.random_range(0.0..512.0),
                r.random_range(0.0..512.0),
                40.0,
                70.0,
                r.random_range(0.0..TAU),
            )
        } else {
            DirectedBox::new(r.random_range(0.0..512.0), r.random_range(0.0..512.0), 40.0, 40.0, None)
        };
        let class = if bee { ClassId::BEE } else { ClassId::ABDOMEN };
        dets.push(Detection::new(b.unwrap(), class, (r.random::<f64>() * 50.0).round() / 50.0, source).unwrap());
        source += 1;
    }
    (id.to_string(), gts, dets)
}
