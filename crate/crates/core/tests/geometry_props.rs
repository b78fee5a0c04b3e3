use anchorlab::geometry::{apply_delta, clip_box, compute_delta, context_window, iou, nms_indices};
use anchorlab::{Box2D, ImageDims};
use proptest::prelude::*;

fn arb_box() -> impl Strategy<Value = Box2D> {
    (0.0..500.0f64, 0.0..300.0f64, 1.0..200.0f64, 1.0..150.0f64).prop_map(|(l, t, w, h)| Box2D::new(l, t, l + w, t + h))
}

/// Reference suppression: take the best remaining box, delete everything it
/// overlaps beyond the threshold, repeat.
fn brute_force_nms(boxes: &[Box2D], scores: &[f64], thr: f64) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..boxes.len()).collect();
    let mut kept = Vec::new();
    while !remaining.is_empty() {
        let mut best_pos = 0;
        for (pos, &i) in remaining.iter().enumerate() {
            let b = remaining[best_pos];
            if scores[i] > scores[b] || (scores[i] == scores[b] && i < b) {
                best_pos = pos;
            }
        }
        let best = remaining.remove(best_pos);
        kept.push(best);
        remaining.retain(|&i| iou(&boxes[i], &boxes[best]) <= thr);
    }
    kept
}

proptest! {
    #[test]
    fn iou_symmetric_bounded(a in arb_box(), b in arb_box()) {
        let ab = iou(&a, &b);
        prop_assert_eq!(ab, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(iou(&a, &a), 1.0);
        if a != b {
            prop_assert!(ab < 1.0);
        }
    }

    #[test]
    fn iou_scale_invariant(a in arb_box(), b in arb_box(), s in 0.01..100.0f64) {
        let base = iou(&a, &b);
        let scaled = iou(&a.scaled(s), &b.scaled(s));
        prop_assert!((base - scaled).abs() <= 1e-12 * base.max(1e-300) || (base - scaled).abs() < 1e-14);
    }

    #[test]
    fn delta_round_trip(a in arb_box(), g in arb_box()) {
        let d = compute_delta(&a, &g).unwrap();
        let back = apply_delta(&a, &d).unwrap();
        for (x, y) in [(back.left, g.left), (back.top, g.top), (back.right, g.right), (back.bottom, g.bottom)] {
            prop_assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
        }
    }

    #[test]
    fn context_window_scales_about_center(b in arb_box(), f in 0.1..4.0f64) {
        let huge = ImageDims::new(1_000_000, 1_000_000);
        let shifted = Box2D::new(b.left + 5e5, b.top + 5e5, b.right + 5e5, b.bottom + 5e5);
        let out = context_window(&shifted, f, huge).unwrap();
        prop_assert!((out.width() - f * shifted.width()).abs() <= 1e-9 * shifted.width() * f);
        prop_assert!((out.height() - f * shifted.height()).abs() <= 1e-9 * shifted.height() * f);
        let (cx, cy) = shifted.center();
        let (ox, oy) = out.center();
        prop_assert!((cx - ox).abs() < 1e-6 && (cy - oy).abs() < 1e-6);
    }

    #[test]
    fn clip_stays_inside(b in arb_box()) {
        let img = ImageDims::new(400, 250);
        let c = clip_box(&b, img);
        prop_assert!(c.left >= 0.0 && c.right <= 400.0 && c.top >= 0.0 && c.bottom <= 250.0);
        prop_assert!(c.is_valid());
        prop_assert!(c.area() <= b.area());
    }

    #[test]
    fn nms_matches_brute_force(
        items in prop::collection::vec((arb_box(), 0u32..20), 0..50),
        thr in 0.0..1.0f64,
    ) {
        let boxes: Vec<Box2D> = items.iter().map(|p| p.0).collect();
        let scores: Vec<f64> = items.iter().map(|p| f64::from(p.1) / 20.0).collect();
        let kept = nms_indices(&boxes, &scores, thr);
        prop_assert_eq!(&kept, &brute_force_nms(&boxes, &scores, thr));
        for (i, &a) in kept.iter().enumerate() {
            for &b in &kept[i + 1..] {
                prop_assert!(iou(&boxes[a], &boxes[b]) <= thr);
                prop_assert!(scores[a] >= scores[b]);
            }
        }
    }
}
