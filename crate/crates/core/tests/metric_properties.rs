use std::collections::BTreeMap;

use milpf::metrics::{auc, map_at_iou, spec_at_sens, BBox, ScoredBox, SizeBuckets};
use milpf::tilegeom::{coverage_count, tile_grid, GridSpec};
use proptest::prelude::*;

fn scores_and_labels() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..40)
        .prop_flat_map(|n| (prop::collection::vec(-5i32..5, n), prop::collection::vec(0u8..2, n)))
        .prop_filter("both classes", |(_, l)| l.contains(&0) && l.contains(&1))
        .prop_map(|(s, l)| (s.into_iter().map(|v| v as f64 / 2.0).collect(), l))
}

fn boxes() -> impl Strategy<Value = (Vec<ScoredBox>, BTreeMap<String, Vec<BBox>>)> {
    let b = (0u32..40, 0u32..40, 1u32..30, 1u32..30);
    let view = prop::sample::select(vec!["a", "b"]);
    let preds = prop::collection::vec((view.clone(), b.clone(), 0u32..5), 0..10).prop_map(|v| {
        v.into_iter()
            .map(|(view, (x, y, w, h), s)| ScoredBox {
                view_id: view.to_string(),
                x0: x as f64,
                y0: y as f64,
                x1: (x + w) as f64,
                y1: (y + h) as f64,
                score: s as f64 / 4.0,
            })
            .collect::<Vec<_>>()
    });
    let gts = prop::collection::vec((view, b), 0..6).prop_map(|v| {
        let mut m: BTreeMap<String, Vec<BBox>> = BTreeMap::new();
        for (view, (x, y, w, h)) in v {
            m.entry(view.to_string())
                .or_default()
                .push(BBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64).unwrap());
        }
        m
    });
    (preds, gts)
}

proptest! {
    #[test]
    fn auc_ignores_increasing_transforms((s, l) in scores_and_labels()) {
        let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() + v).collect();
        prop_assert_eq!(auc(&s, &l).unwrap(), auc(&t, &l).unwrap());
    }

    #[test]
    fn flipping_labels_complements_auc((s, l) in scores_and_labels()) {
        let flipped: Vec<u8> = l.iter().map(|v| 1 - v).collect();
        let a = auc(&s, &l).unwrap();
        let b = auc(&s, &flipped).unwrap();
        prop_assert!((1.0 - a - b).abs() <= f64::EPSILON, "{} + {}", a, b);
    }

    #[test]
    fn spec_at_sens_is_non_increasing((s, l) in scores_and_labels()) {
        let mut prev = f64::INFINITY;
        for k in 1..=20 {
            let (spec, _) = spec_at_sens(&s, &l, k as f64 / 20.0).unwrap();
            prop_assert!(spec <= prev);
            prev = spec;
        }
    }

    #[test]
    fn map_ignores_prediction_order((preds, gts) in boxes(), seed in any::<u64>()) {
        let mut shuffled = preds.clone();
        let n = shuffled.len();
        if n > 1 {
            for i in 0..n {
                shuffled.swap(i, (seed as usize).wrapping_add(i * 7) % n);
            }
        }
        let a = map_at_iou(&preds, &gts, 0.25, SizeBuckets::default());
        let b = map_at_iou(&shuffled, &gts, 0.25, SizeBuckets::default());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn grid_covers_and_stays_inside(w in 1u32..300, h in 1u32..300, t in 1u32..128, o in prop::sample::select(vec![0.0, 0.25, 0.5, 0.75])) {
        let spec = GridSpec::new(w, h, t, o).unwrap();
        let tiles = tile_grid(&spec);
        for r in &tiles {
            prop_assert!(r.is_valid_within(w, h));
        }
        for (x, y) in [(0, 0), (w - 1, h - 1), (w / 2, h / 3), (w - 1, 0)] {
            prop_assert!(coverage_count(&spec, x, y).unwrap() >= 1);
        }
    }
}
