use invsep::corpus::{inventory_members, InventorySpec, MissingMode};
use invsep::selection::{correlate, joint_weights, select_top2, Embedding};
use invsep::separation::{attention, pit_loss, MaskPair};
use invsep::signal::{istft, stft, FeatureKind, FeatureMatrix, Mask, Waveform};
use ndarray::Array2;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

/// Mixture embedding plus 1 to 6 profiles, all of width `e`.
fn inventory_case() -> impl Strategy<Value = (Embedding, Vec<Embedding>)> {
    (1usize..=8, 1usize..=8).prop_flat_map(|(e, tm)| {
        let profiles = prop::collection::vec((1usize..=8).prop_flat_map(move |t| matrix(t, e, -3.0, 3.0)), 1..=6);
        (matrix(tm, e, -3.0, 3.0), profiles).prop_map(|(m, ps)| {
            (
                Embedding::new(m).unwrap(),
                ps.into_iter().map(|p| Embedding::new(p).unwrap()).collect(),
            )
        })
    })
}

fn pit_case() -> impl Strategy<Value = [Array2<f64>; 5]> {
    (1usize..=8, 1usize..=8).prop_flat_map(|(t, f)| {
        (
            matrix(t, f, 0.0, 1.0),
            matrix(t, f, 0.0, 1.0),
            matrix(t, f, 0.0, 3.0),
            matrix(t, f, 0.0, 2.0),
            matrix(t, f, 0.0, 2.0),
        )
            .prop_map(|(a, b, c, d, e)| [a, b, c, d, e])
    })
}

fn lin(v: &Array2<f64>) -> FeatureMatrix {
    FeatureMatrix::new(v.clone(), FeatureKind::LinearMagnitude)
}

proptest! {
    #[test]
    fn joint_softmax_rows_and_weights_sum_to_one((m, ps) in inventory_case()) {
        let refs: Vec<&Embedding> = ps.iter().collect();
        let joint = joint_weights(&m, &refs).unwrap();
        for row in joint.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-6);
        }
        let inv: Vec<(u32, &Embedding)> = ps.iter().enumerate().map(|(k, p)| (k as u32, p)).collect();
        let r = correlate(&m, &inv).unwrap();
        prop_assert!((r.frame_weighted_sum() - 1.0).abs() < 1e-6);
        prop_assert!(r.weights.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn attention_rows_sum_to_one((m, ps) in inventory_case()) {
        for p in &ps {
            let a = attention(&m, p).unwrap();
            for row in a.rows() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn selection_ignores_inventory_order((m, ps) in inventory_case(), rot in 0usize..6) {
        prop_assume!(ps.len() >= 2);
        let ids: Vec<u32> = (0..ps.len() as u32).map(|k| 3 * k + 1).collect();
        let inv: Vec<(u32, &Embedding)> = ids.iter().copied().zip(ps.iter()).collect();
        let mut rotated = inv.clone();
        rotated.rotate_left(rot % inv.len());
        let a = correlate(&m, &inv).unwrap();
        let b = correlate(&m, &rotated).unwrap();
        for (id, w) in a.ids.iter().zip(&a.weights) {
            prop_assert!((b.weight(*id).unwrap() - w).abs() < 1e-12);
        }
        // top-2 of the exact same weights is order-free
        let mut w2 = a.weights.clone();
        let mut ids2 = a.ids.clone();
        w2.rotate_left(rot % ids2.len());
        ids2.rotate_left(rot % a.ids.len());
        prop_assert_eq!(select_top2(&a.ids, &a.weights).unwrap(), select_top2(&ids2, &w2).unwrap());
    }

    #[test]
    fn pit_is_exactly_symmetric([m1, m2, x, y1, y2] in pit_case()) {
        let masks = MaskPair { masks: [Mask::new(m1).unwrap(), Mask::new(m2).unwrap()] };
        let (x, y1, y2) = (lin(&x), lin(&y1), lin(&y2));
        let base = pit_loss(&masks, &x, [&y1, &y2]).unwrap();
        let targets_swapped = pit_loss(&masks, &x, [&y2, &y1]).unwrap();
        let outputs_swapped = pit_loss(&masks.swapped(), &x, [&y1, &y2]).unwrap();
        prop_assert_eq!(base.loss, targets_swapped.loss);
        prop_assert_eq!(base.loss, outputs_swapped.loss);
        prop_assert!(base.loss <= base.pairs[0][0] + base.pairs[1][1]);
        prop_assert!(base.loss <= base.pairs[0][1] + base.pairs[1][0]);
    }

    #[test]
    fn stft_round_trip(samples in prop::collection::vec(-1.0f64..1.0, 1..3000)) {
        let w = Waveform::new(samples.clone()).unwrap();
        let back = istft(&stft(&w).unwrap()).unwrap();
        prop_assert_eq!(back.len(), samples.len());
        for (a, b) in back.samples().iter().zip(&samples) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn inventory_composition(n_irr in 0usize..10, mode in 0usize..3, seed in any::<u64>()) {
        let missing = [MissingMode::Standard, MissingMode::M1, MissingMode::M2][mode];
        prop_assume!(missing.relevant_present() + n_irr >= 1);
        let pool: Vec<u32> = (0..40).collect();
        let spec = InventorySpec { n_irrelevant: n_irr, missing, profile_secs: 1.0, profile_utterance: 0, shuffle_seed: seed };
        let members = inventory_members([5, 9], &pool, &spec).unwrap();
        let relevant = members.iter().filter(|id| [5, 9].contains(*id)).count();
        prop_assert_eq!(relevant, missing.relevant_present());
        prop_assert_eq!(members.len(), relevant + n_irr);
        let mut sorted = members.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), members.len());
        prop_assert_eq!(inventory_members([5, 9], &pool, &spec).unwrap(), members);
    }
}
