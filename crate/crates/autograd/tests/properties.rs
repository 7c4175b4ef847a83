//! Property tests for the tensor algebra: structural invariants that must
//! hold for arbitrary shapes and values, not just hand-picked examples.

use autograd::Tensor;
use proptest::prelude::*;

fn finite_vals(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, n)
}

proptest! {
    #[test]
    fn softmax_rows_always_sum_to_one(
        rows in 1usize..5,
        cols in 1usize..8,
        seed in any::<u64>(),
    ) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::uniform(rows, cols, -40.0, 40.0, &mut rng);
        let y = x.softmax(1).unwrap();
        let yv = y.to_vec();
        for i in 0..rows {
            let s: f64 = yv[i * cols..(i + 1) * cols].iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            for &p in &yv[i * cols..(i + 1) * cols] {
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn softmax_is_shift_invariant(vals in finite_vals(6), shift in -30.0f64..30.0) {
        let a = Tensor::from_vec(1, 6, vals.clone()).unwrap();
        let shifted: Vec<f64> = vals.iter().map(|v| v + shift).collect();
        let b = Tensor::from_vec(1, 6, shifted).unwrap();
        let ya = a.softmax(1).unwrap().to_vec();
        let yb = b.softmax(1).unwrap().to_vec();
        for (x, y) in ya.iter().zip(&yb) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn transpose_is_an_involution(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::uniform(rows, cols, -10.0, 10.0, &mut rng);
        let back = x.transpose().transpose();
        prop_assert_eq!(x.to_vec(), back.to_vec());
        prop_assert_eq!(x.shape(), back.shape());
    }

    #[test]
    fn topk_keeps_exactly_k_finite_entries(
        cols in 1usize..9,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..=cols);
        let x = Tensor::uniform(2, cols, -5.0, 5.0, &mut rng);
        let y = x.topk_mask(k).unwrap().to_vec();
        for i in 0..2 {
            let finite = y[i * cols..(i + 1) * cols]
                .iter()
                .filter(|v| v.is_finite())
                .count();
            prop_assert_eq!(finite, k);
        }
    }

    #[test]
    fn topk_then_softmax_weights_live_on_selected_entries(
        cols in 2usize..9,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..cols);
        let x = Tensor::uniform(1, cols, -5.0, 5.0, &mut rng);
        let masked = x.topk_mask(k).unwrap();
        let w = masked.softmax(1).unwrap().to_vec();
        let mv = masked.to_vec();
        let mut total = 0.0;
        for (wi, mi) in w.iter().zip(&mv) {
            if mi.is_finite() {
                total += wi;
            } else {
                prop_assert_eq!(*wi, 0.0);
            }
        }
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn slice_rows_inverts_concat_rows(
        r1 in 1usize..4,
        r2 in 1usize..4,
        cols in 1usize..4,
        seed in any::<u64>(),
    ) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor::uniform(r1, cols, -3.0, 3.0, &mut rng);
        let b = Tensor::uniform(r2, cols, -3.0, 3.0, &mut rng);
        let joined = Tensor::concat_rows(&[a.clone(), b.clone()]).unwrap();
        prop_assert_eq!(joined.slice_rows(0, r1).unwrap().to_vec(), a.to_vec());
        prop_assert_eq!(joined.slice_rows(r1, r2).unwrap().to_vec(), b.to_vec());
    }

    #[test]
    fn add_n_equals_fold_of_adds(
        n_parts in 1usize..5,
        len in 1usize..6,
        seed in any::<u64>(),
    ) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let parts: Vec<Tensor> = (0..n_parts)
            .map(|_| Tensor::uniform(1, len, -3.0, 3.0, &mut rng))
            .collect();
        let fast = Tensor::add_n(&parts).unwrap().to_vec();
        let mut slow = parts[0].clone();
        for p in &parts[1..] {
            slow = slow.add(p).unwrap();
        }
        prop_assert_eq!(fast, slow.to_vec());
    }

    #[test]
    fn backward_is_bitwise_deterministic(vals in finite_vals(4), seed in any::<u64>()) {
        use rand::SeedableRng;
        let grads: Vec<Vec<f64>> = (0..2)
            .map(|_| {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let w = Tensor::trainable(2, 2, vals.clone()).unwrap();
                let noise = Tensor::uniform(2, 2, -1.0, 1.0, &mut rng);
                let y = w.mul(&noise).unwrap().softplus().sum();
                y.backward().unwrap();
                w.grad().unwrap()
            })
            .collect();
        for (a, b) in grads[0].iter().zip(&grads[1]) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
