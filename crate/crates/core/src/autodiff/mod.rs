//! Small dense reverse-mode autodiff and the Adam optimizer.

mod adam;
mod check;
mod tape;
mod tensor;

pub use adam::{soft_update, AdamConfig, AdamState, ParamSet};
pub use check::grad_check;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, v.to_vec()).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let i = tape.constant(t(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let x = tape.constant(t(2, 1, &[3.0, 4.0]));
        let y = tape.matmul(i, x).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 4.0]);
    }

    #[test]
    fn tanh_of_zero_and_mean() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::zeros(&[2, 3]));
        let y = tape.tanh(z);
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
        let x = tape.constant(Tensor::row(vec![1.0, 2.0, 3.0, 4.0]));
        let m = tape.mean(x);
        assert_eq!(tape.value(m).item(), 2.5);
    }

    #[test]
    fn matmul_shape_error_names_primitive() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul"), "{err}");
    }

    #[test]
    fn sum_and_square_gradients() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::row(vec![0.2, -1.0, 4.0]));
        let l = tape.sum(w);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[1.0, 1.0, 1.0]);

        let mut tape = Tape::new();
        let w = tape.param(Tensor::row(vec![2.0]));
        let sq = tape.square(w);
        let l = tape.mean(sq);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::row(vec![1.0, 2.0]));
        let y = tape.tanh(w);
        assert!(tape.backward(y).is_err());
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::row(vec![1.0, 2.0]));
        let w = tape.param(Tensor::row(vec![3.0, 4.0]));
        let p = tape.mul(c, w).unwrap();
        let l = tape.sum(p);
        let g = tape.backward(l).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(w).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::row(vec![0.0, 1.0, -1.0]));
        let r = tape.relu(w);
        let l = tape.sum(r);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn linear_model_grad_check_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 5, 3);
        let params = vec![random(&mut rng, 2, 3), random(&mut rng, 1, 2)];
        let err = grad_check(&params, 1e-5, |tape, v| {
            let xv = tape.constant(x.clone());
            let h = tape.matmul_nt(xv, v[0])?;
            let h = tape.add(h, v[1])?;
            Ok(tape.sum(h))
        })
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn two_layer_tanh_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let x = random(&mut rng, 7, 4);
            let y = random(&mut rng, 7, 1);
            let params = vec![
                random(&mut rng, 5, 4),
                random(&mut rng, 1, 5),
                random(&mut rng, 1, 5),
                random(&mut rng, 1, 1),
            ];
            let err = grad_check(&params, 1e-5, |tape, v| {
                let xv = tape.constant(x.clone());
                let yv = tape.constant(y.clone());
                let h = tape.matmul_nt(xv, v[0])?;
                let h = tape.add(h, v[1])?;
                let h = tape.tanh(h);
                let o = tape.matmul_nt(h, v[2])?;
                let o = tape.add(o, v[3])?;
                let d = tape.sub(o, yv)?;
                let s = tape.square(d);
                Ok(tape.mean(s))
            })
            .unwrap();
            assert!(err < 1e-4, "{err}");
        }
    }

    #[test]
    fn relu_mlp_grad_check_away_from_kinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 10 {
            let x = random(&mut rng, 6, 3);
            let w1 = random(&mut rng, 4, 3);
            let b1 = random(&mut rng, 1, 4);
            // Resample draws whose pre-activations sit within 1e-3 of the kink.
            let mut pre = Tape::new();
            let xv = pre.constant(x.clone());
            let wv = pre.constant(w1.clone());
            let bv = pre.constant(b1.clone());
            let h = pre.matmul_nt(xv, wv).unwrap();
            let h = pre.add(h, bv).unwrap();
            if pre.value(h).data().iter().any(|v| v.abs() < 1e-3) {
                continue;
            }
            let params = vec![w1, b1, random(&mut rng, 1, 4)];
            let err = grad_check(&params, 1e-5, |tape, v| {
                let xv = tape.constant(x.clone());
                let h = tape.matmul_nt(xv, v[0])?;
                let h = tape.add(h, v[1])?;
                let h = tape.relu(h);
                let o = tape.matmul_nt(h, v[2])?;
                let s = tape.square(o);
                Ok(tape.mean(s))
            })
            .unwrap();
            assert!(err < 1e-4, "{err}");
            checked += 1;
        }
    }

    #[test]
    fn every_primitive_passes_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random(&mut rng, 4, 3);
        let b = random(&mut rng, 3, 2);
        let pos = Tensor::from_fn(4, 3, |_, _| rng.random_range(0.5..2.0));
        let params = vec![a, b, pos, random(&mut rng, 1, 3)];
        let err = grad_check(&params, 1e-6, |tape, v| {
            let mm = tape.matmul(v[0], v[1])?;
            let e = tape.exp(mm);
            let l = tape.log(v[2]);
            let m = tape.mul(l, v[0])?;
            let bc = tape.sub(m, v[3])?;
            let mn = tape.minimum(bc, v[0])?;
            let cl = tape.clamp(mn, -0.5, 0.5);
            let cat = tape.concat_cols(&[cl, e])?;
            let sl = tape.slice_cols(cat, 1, 4)?;
            let g = tape.gather_rows(sl, &[0, 2, 2, 3])?;
            let sm = tape.segment_mean(g, 2)?;
            let lse = tape.logsumexp_rows(sm);
            let rs = tape.row_sum(cat);
            let rows = tape.concat_rows(&[lse, rs])?;
            let sc = tape.scale(rows, 0.7);
            let sh = tape.add_scalar(sc, 0.1);
            let sq = tape.square(sh);
            let tanh = tape.tanh(sq);
            Ok(tape.sum(tanh))
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn segment_mean_is_row_order_invariant_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, 9, 4);
        let perm = [4usize, 0, 8, 2, 7, 1, 3, 6, 5];
        let mut tape = Tape::new();
        let a = tape.constant(x);
        let p = tape.gather_rows(a, &perm).unwrap();
        let m1 = tape.mean_rows(a).unwrap();
        let m2 = tape.mean_rows(p).unwrap();
        assert_eq!(tape.value(m1).data(), tape.value(m2).data());
    }

    #[test]
    fn identical_inputs_give_identical_gradients() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut tape = Tape::new();
            let w = tape.param(random(&mut rng, 3, 3));
            let x = tape.constant(random(&mut rng, 5, 3));
            let h = tape.matmul_nt(x, w).unwrap();
            let h = tape.tanh(h);
            let l = tape.mean(h);
            let g = tape.backward(l).unwrap();
            (tape.value(l).item().to_bits(), g.get(w).unwrap().clone())
        };
        assert_eq!(run(), run());
    }
}
