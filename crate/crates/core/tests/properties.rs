//! Randomized invariant checks over the pipeline's pure stages.

use proptest::collection::vec;
use proptest::prelude::*;

use hedgecast_core::encoding::{default_schema, FeatureGroup, FeatureMask};
use hedgecast_core::eval::{compute_metrics, harmonic_f1, stratified_kfold};
use hedgecast_core::explain::{shapley_exact, Player};
use hedgecast_core::models::EncodedInput;
use hedgecast_core::resample::{smote, ResampleConfig};

fn label_vec(min_per_class: usize) -> impl Strategy<Value = Vec<bool>> {
    (min_per_class..40usize, min_per_class..40usize).prop_flat_map(|(p, n)| {
        Just(
            core::iter::repeat(true)
                .take(p)
                .chain(core::iter::repeat(false).take(n))
                .collect::<Vec<bool>>(),
        )
        .prop_shuffle()
    })
}

proptest! {
    #[test]
    fn f1_is_the_harmonic_mean_of_reported_rates(
        pairs in vec((any::<bool>(), any::<bool>()), 1..200)
    ) {
        let preds: Vec<bool> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let m = compute_metrics(&preds, &labels).unwrap();
        prop_assert!((m.f1 - harmonic_f1(m.precision, m.recall)).abs() < 1e-12);
        prop_assert!(m.true_pos + m.false_pos + m.false_neg + m.true_neg == preds.len());
        prop_assert!((0.0..=1.0).contains(&m.precision));
        prop_assert!((0.0..=1.0).contains(&m.recall));
        prop_assert!((0.0..=1.0).contains(&m.f1));
    }

    #[test]
    fn metrics_ignore_pair_order(
        pairs in vec((any::<bool>(), any::<bool>()), 2..100),
        seed in any::<u64>()
    ) {
        let preds: Vec<bool> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let m1 = compute_metrics(&preds, &labels).unwrap();

        // Deterministic permutation from the seed.
        let mut idx: Vec<usize> = (0..pairs.len()).collect();
        let mut s = seed;
        for i in (1..idx.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            idx.swap(i, (s >> 33) as usize % (i + 1));
        }
        let p2: Vec<bool> = idx.iter().map(|&i| preds[i]).collect();
        let l2: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        prop_assert_eq!(m1, compute_metrics(&p2, &l2).unwrap());
    }

    #[test]
    fn stratified_folds_partition_and_balance(
        labels in label_vec(5),
        k in 2usize..6,
        seed in any::<u64>()
    ) {
        let folds = stratified_kfold(&labels, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);

        let mut seen = vec![false; labels.len()];
        let mut pos_counts = Vec::new();
        for fold in &folds {
            for &i in &fold.test {
                prop_assert!(!seen[i], "index {} appears in two test folds", i);
                seen[i] = true;
            }
            for &i in &fold.train {
                prop_assert!(!fold.test.contains(&i));
            }
            prop_assert_eq!(fold.train.len() + fold.test.len(), labels.len());
            pos_counts.push(fold.test.iter().filter(|&&i| labels[i]).count());
        }
        prop_assert!(seen.iter().all(|&s| s));
        let lo = pos_counts.iter().min().unwrap();
        let hi = pos_counts.iter().max().unwrap();
        prop_assert!(hi - lo <= 1, "positive counts {:?}", pos_counts);
    }

    #[test]
    fn folds_are_seed_deterministic(labels in label_vec(4), seed in any::<u64>()) {
        let a = stratified_kfold(&labels, 4, seed).unwrap();
        let b = stratified_kfold(&labels, 4, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn synthetic_points_lie_on_minority_segments(
        minority in vec(vec(0.0f64..1.0, 3), 6..20),
        majority_n in 25usize..60,
        seed in any::<u64>()
    ) {
        let mut x = minority.clone();
        let mut y = vec![true; minority.len()];
        for i in 0..majority_n {
            x.push(vec![2.0 + (i % 7) as f64, 3.0, 4.0]);
            y.push(false);
        }
        let cfg = ResampleConfig { k_neighbors: 3, target_ratio: 1.0, seed };
        let (rx, ry) = smote(&x, &y, &cfg).unwrap();

        // Originals preserved in order.
        prop_assert_eq!(&rx[..x.len()], &x[..]);
        prop_assert_eq!(&ry[..y.len()], &y[..]);

        // Class balance within one point.
        let pos = ry.iter().filter(|&&b| b).count();
        prop_assert!(pos.abs_diff(ry.len() - pos) <= 1);

        // Every synthetic point sits on a segment between two minority points.
        for (v, &lab) in rx[x.len()..].iter().zip(&ry[x.len()..]) {
            prop_assert!(lab, "synthetic points must carry the minority label");
            let mut found = false;
            'outer: for (i, p) in minority.iter().enumerate() {
                for q in minority.iter().skip(i) {
                    let seg: f64 = (0..3).map(|d| q[d] - p[d]).map(|t| t * t).sum::<f64>().sqrt();
                    let dp: f64 = (0..3).map(|d| v[d] - p[d]).map(|t| t * t).sum::<f64>().sqrt();
                    let dq: f64 = (0..3).map(|d| v[d] - q[d]).map(|t| t * t).sum::<f64>().sqrt();
                    if (dp + dq - seg).abs() <= 1e-9 {
                        found = true;
                        break 'outer;
                    }
                }
            }
            prop_assert!(found, "synthetic point off every minority segment: {:?}", v);
        }
    }

    #[test]
    fn exact_attribution_is_efficient_and_symmetric(
        weights in vec(-2.0f64..2.0, 4),
        x_vals in vec(0.0f64..1.0, 4),
        bg_vals in vec(vec(0.0f64..1.0, 4), 1..6)
    ) {
        let score = move |z: &EncodedInput| -> f64 {
            let f = z.flat();
            weights.iter().zip(f).map(|(w, v)| w * v).sum::<f64>() + 0.3 * f[0] * f[1]
        };
        let x = EncodedInput::new(1, 4, x_vals).unwrap();
        let bg: Vec<EncodedInput> = bg_vals
            .into_iter()
            .map(|v| EncodedInput::new(1, 4, v).unwrap())
            .collect();
        let players: Vec<Player> = (0..4)
            .map(|i| Player { name: format!("p{i}"), coords: vec![i] })
            .collect();
        let e = shapley_exact(&score, &x, &bg, &players).unwrap();
        prop_assert!(e.residual.abs() <= 1e-6, "residual {}", e.residual);
        prop_assert!((e.fx - score(&x)).abs() < 1e-12);
    }

    #[test]
    fn duplicated_coordinates_share_attribution(
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
        w in -3.0f64..3.0
    ) {
        // Coordinates 0 and 1 are identical in x and background and enter
        // the model symmetrically.
        let score = move |z: &EncodedInput| w * (z.flat()[0] + z.flat()[1]) + z.flat()[2];
        let x = EncodedInput::new(1, 3, vec![a, a, 0.7]).unwrap();
        let bg = [EncodedInput::new(1, 3, vec![b, b, 0.1]).unwrap()];
        let players: Vec<Player> = (0..3)
            .map(|i| Player { name: format!("p{i}"), coords: vec![i] })
            .collect();
        let e = shapley_exact(&score, &x, &bg, &players).unwrap();
        prop_assert!((e.phi[0] - e.phi[1]).abs() < 1e-9);
    }

    #[test]
    fn mask_width_is_the_sum_of_included_spans(dim in 1usize..16) {
        let schema = default_schema(dim);
        let all = FeatureMask::all();
        prop_assert_eq!(schema.included_width(&all), schema.total_dim());

        for g in FeatureGroup::ALL {
            let (_, width) = schema.group_span(g);
            match all.without(g) {
                Ok(mask) => {
                    prop_assert_eq!(schema.included_width(&mask), schema.total_dim() - width);
                    let idx = schema.included_indices(&mask);
                    prop_assert_eq!(idx.len(), schema.total_dim() - width);
                }
                Err(_) => prop_assert!(false, "removing one group cannot empty the mask"),
            }
        }
    }

    #[test]
    fn fingerprints_separate_masks_and_windows(dim in 1usize..12, window in 1usize..6) {
        let schema = default_schema(dim);
        let all = FeatureMask::all();
        let wo = FeatureMask::from_name("wo_emb").unwrap();
        prop_assert_ne!(schema.fingerprint(&all, window), schema.fingerprint(&wo, window));
        prop_assert_ne!(
            schema.fingerprint(&all, window),
            schema.fingerprint(&all, window + 1)
        );
    }
}
