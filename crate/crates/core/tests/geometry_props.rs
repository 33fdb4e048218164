mod common;

use std::f64::consts::{PI, TAU};

use common::{random_box, raster_iou, rng};
use dirdet::geometry::{box_corners, intersect_convex, polygon_area};
use dirdet::{dir_iou, rotated_iou, DirectedBox};
use proptest::prelude::*;

fn arb_box() -> impl Strategy<Value = DirectedBox> {
    (0.0f64..200.0, 0.0f64..200.0, 5.0f64..100.0, 5.0f64..100.0, 0.0f64..TAU)
        .prop_map(|(x, y, w, h, t)| DirectedBox::directed(x, y, w, h, t).unwrap())
}

/// Rotates a directed box clockwise on screen by `phi` about `(px, py)`.
fn rotate_about(b: &DirectedBox, px: f64, py: f64, phi: f64) -> DirectedBox {
    let (s, c) = phi.sin_cos();
    let (dx, dy) = (b.cx() - px, b.cy() - py);
    let theta = b.theta().unwrap().radians() + phi;
    DirectedBox::directed(px + c * dx - s * dy, py + s * dx + c * dy, b.w(), b.h(), theta).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn metrics_are_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let (i1, i2) = (rotated_iou(&a, &b), rotated_iou(&b, &a));
        let (d1, d2) = (dir_iou(&a, &b), dir_iou(&b, &a));
        prop_assert!((i1 - i2).abs() <= 1e-12);
        prop_assert!((d1 - d2).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&i1));
        prop_assert!((0.0..=1.0).contains(&d1));
        prop_assert!(d1 <= i1);
    }

    #[test]
    fn rigid_motion_invariance(a in arb_box(), b in arb_box(), tx in -500.0f64..500.0, ty in -500.0f64..500.0,
                               phi in 0.0f64..TAU, px in -100.0f64..300.0, py in -100.0f64..300.0) {
        let moved = |x: &DirectedBox| x.with_center(x.cx() + tx, x.cy() + ty).unwrap();
        let (ta, tb) = (moved(&a), moved(&b));
        prop_assert!((rotated_iou(&a, &b) - rotated_iou(&ta, &tb)).abs() <= 1e-9);
        prop_assert!((dir_iou(&a, &b) - dir_iou(&ta, &tb)).abs() <= 1e-9);
        let (ra, rb) = (rotate_about(&a, px, py, phi), rotate_about(&b, px, py, phi));
        prop_assert!((rotated_iou(&a, &b) - rotated_iou(&ra, &rb)).abs() <= 1e-9);
        prop_assert!((dir_iou(&a, &b) - dir_iou(&ra, &rb)).abs() <= 1e-9);
    }

    #[test]
    fn dir_iou_equals_iou_only_for_aligned_directions(a in arb_box(), b in arb_box()) {
        let iou = rotated_iou(&a, &b);
        let d = dir_iou(&a, &b);
        let dt = a.theta().unwrap().radians() - b.theta().unwrap().radians();
        if iou > 0.0 && dt.cos() < 1.0 - 1e-12 {
            prop_assert!(d < iou);
        }
        let aligned = b.with_theta(a.theta());
        prop_assert_eq!(dir_iou(&a, &aligned), rotated_iou(&a, &aligned));
    }

    #[test]
    fn self_intersection_and_area_bound(a in arb_box(), b in arb_box()) {
        let pa = box_corners(&a);
        let pb = box_corners(&b);
        prop_assert!((polygon_area(&intersect_convex(&pa, &pa)) - polygon_area(&pa)).abs() <= 1e-9 * a.area().max(1.0));
        let inter = polygon_area(&intersect_convex(&pa, &pb));
        prop_assert!(inter <= polygon_area(&pa).min(polygon_area(&pb)) + 1e-9);
        let vs = intersect_convex(&pa, &pb);
        prop_assert!(vs.is_empty() || vs.vertices().len() >= 3);
    }

    #[test]
    fn dir_corr_periodic_and_even(dt in -20.0f64..20.0, k in -5i32..5) {
        let base = dirdet::dir_corr(dt);
        prop_assert!((base - dirdet::dir_corr(-dt)).abs() <= 1e-15);
        prop_assert!((base - dirdet::dir_corr(dt + TAU * f64::from(k))).abs() <= 1e-12);
    }
}

#[test]
fn raster_oracle_self_check() {
    let a = DirectedBox::directed(0.0, 0.0, 40.0, 70.0, 0.0).unwrap();
    let b = DirectedBox::directed(0.0, 0.0, 40.0, 70.0, PI / 2.0).unwrap();
    assert!((raster_iou(&a, &a, 0.1) - 1.0).abs() < 1e-12);
    assert!((raster_iou(&a, &b, 0.1) - 0.4).abs() < 1e-3);
}

#[test]
fn clipping_agrees_with_rasterization_on_small_boxes() {
    let mut r = rng(99);
    for _ in 0..200 {
        let a = random_box(&mut r, 30.0, (3.0, 20.0));
        let b = random_box(&mut r, 30.0, (3.0, 20.0));
        let err = (rotated_iou(&a, &b) - raster_iou(&a, &b, 0.05)).abs();
        assert!(err <= 5e-3, "{a:?} {b:?} err {err}");
    }
}
