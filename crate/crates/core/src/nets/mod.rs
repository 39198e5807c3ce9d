//! Policy, value (VFA) and policy-extended value (PeVFA) networks.

mod mlp;
mod pevfa;
mod policy;
pub mod snapshot;

pub use mlp::{Activation, BoundLayer, BoundMlp, Layer, MlpParams};
pub use pevfa::{BoundPeVFA, PeVFAParams};
pub use policy::{
    gaussian_kl, gaussian_log_prob_tape, log_prob, sample, BoundPolicy, GaussianPolicy,
    LOG_STD_MAX, LOG_STD_MIN,
};

use crate::error::{shape_err, Result};

/// Conventional value network: ReLU hidden layers, linear scalar head.
pub fn init_vfa(state_dim: usize, hidden: &[usize], rng: &mut impl rand::Rng) -> Result<MlpParams> {
    let mut sizes = vec![state_dim];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    MlpParams::init(&sizes, Activation::Relu, Activation::Identity, rng)
}

/// Scalar value estimate `V_φ(s)`.
pub fn value_forward(vfa: &MlpParams, state: &[f64]) -> Result<f64> {
    if vfa.output_dim() != 1 {
        return shape_err("value_forward", format!("head width {} != 1", vfa.output_dim()));
    }
    Ok(vfa.forward_row(state)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, ParamSet, Tape, Tensor};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn tiny_policy() -> GaussianPolicy {
        // 2 -> 2 (relu) -> 1 (tanh)
        let l1 = Layer::new(
            Tensor::matrix(2, 2, vec![1.0, -1.0, 0.5, 2.0]).unwrap(),
            Tensor::vector(vec![0.1, -0.2]),
            Activation::Relu,
        )
        .unwrap();
        let l2 = Layer::new(
            Tensor::matrix(1, 2, vec![0.3, -0.7]).unwrap(),
            Tensor::vector(vec![0.05]),
            Activation::Tanh,
        )
        .unwrap();
        GaussianPolicy::new(MlpParams::new(vec![l1, l2]).unwrap(), vec![-0.5]).unwrap()
    }

    #[test]
    fn zero_policy_has_zero_mean() {
        let mean = MlpParams::zeros(&[3, 4, 2], Activation::Relu, Activation::Tanh).unwrap();
        let p = GaussianPolicy::new(mean, vec![0.0, 0.0]).unwrap();
        let (m, ls) = p.forward(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(m, vec![0.0, 0.0]);
        assert_eq!(ls, vec![0.0, 0.0]);
    }

    #[test]
    fn policy_mean_is_bounded() {
        let p = GaussianPolicy::init(4, &[16, 16], 3, &mut rng(1)).unwrap();
        for k in 0..50 {
            let s: Vec<f64> = (0..4).map(|i| (k * 7 + i) as f64 * 3.1 - 40.0).collect();
            let (m, _) = p.forward(&s).unwrap();
            assert!(m.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn policy_forward_matches_hand_unrolled() {
        let p = tiny_policy();
        let s = [0.4, -0.3];
        let h1 = (1.0 * 0.4 + -1.0 * -0.3 + 0.1f64).max(0.0);
        let h2 = (0.5 * 0.4 + 2.0 * -0.3 - 0.2f64).max(0.0);
        let expected = (0.3 * h1 + -0.7 * h2 + 0.05f64).tanh();
        let (m, ls) = p.forward(&s).unwrap();
        assert!((m[0] - expected).abs() < 1e-15);
        assert_eq!(ls, vec![-0.5]);
        assert!(p.forward(&[1.0]).is_err());
    }

    #[test]
    fn log_prob_examples() {
        assert!((log_prob(&[0.0], &[0.0], &[0.0]) + 0.918_938_533_204_672_7).abs() < 1e-12);
        let near = log_prob(&[0.0], &[0.3], &[0.5]);
        let far = log_prob(&[0.0], &[0.3], &[1.5]);
        assert!(near > far);
        let joint = log_prob(&[0.1, -0.4], &[0.2, -1.0], &[0.5, 0.3]);
        let split = log_prob(&[0.1], &[0.2], &[0.5]) + log_prob(&[-0.4], &[-1.0], &[0.3]);
        assert!((joint - split).abs() < 1e-12);
    }

    #[test]
    fn taped_log_prob_matches_plain() {
        let p = tiny_policy();
        let states = Tensor::matrix(3, 2, vec![0.4, -0.3, 1.0, 2.0, -0.5, 0.2]).unwrap();
        let actions = Tensor::matrix(3, 1, vec![0.3, -0.1, 0.9]).unwrap();
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let s = tape.constant(states.clone());
        let a = tape.constant(actions.clone());
        let lp = bound.log_prob(&mut tape, s, a).unwrap();
        for i in 0..3 {
            let (m, ls) = p.forward(states.row_slice(i)).unwrap();
            let expected = log_prob(&m, &ls, actions.row_slice(i));
            assert!((tape.value(lp).data()[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_limits_and_determinism() {
        let a = sample(&[0.3, -0.2], &[-1e9, -1e9], &mut rng(0));
        assert!((a[0] - 0.3).abs() < 1e-8 && (a[1] + 0.2).abs() < 1e-8);
        assert_eq!(
            sample(&[0.1], &[0.0], &mut rng(5)),
            sample(&[0.1], &[0.0], &mut rng(5))
        );
    }

    #[test]
    fn sample_mean_within_clt_band() {
        let mut r = rng(11);
        let n = 100_000;
        let (mu, ls) = (0.25, -0.3f64);
        let mean: f64 = (0..n).map(|_| sample(&[mu], &[ls], &mut r)[0]).sum::<f64>() / n as f64;
        let band = 3.0 * ls.exp() / (n as f64).sqrt();
        assert!((mean - mu).abs() < band, "{mean} vs {mu} ± {band}");
    }

    #[test]
    fn value_forward_examples() {
        let mut vfa = MlpParams::zeros(&[3, 5, 1], Activation::Relu, Activation::Identity).unwrap();
        vfa.layers_mut()[1].bias = Tensor::vector(vec![1.25]);
        assert_eq!(value_forward(&vfa, &[9.0, -3.0, 2.0]).unwrap(), 1.25);

        let l1 = Layer::new(
            Tensor::matrix(2, 1, vec![2.0, -1.0]).unwrap(),
            Tensor::vector(vec![0.0, 0.5]),
            Activation::Relu,
        )
        .unwrap();
        let l2 = Layer::new(
            Tensor::matrix(1, 2, vec![1.5, 3.0]).unwrap(),
            Tensor::vector(vec![-0.25]),
            Activation::Identity,
        )
        .unwrap();
        let vfa = MlpParams::new(vec![l1, l2]).unwrap();
        // s = 0.2: h = (relu(0.4), relu(0.3)) -> 1.5*0.4 + 3*0.3 - 0.25
        let v = value_forward(&vfa, &[0.2]).unwrap();
        assert!((v - (0.6 + 0.9 - 0.25)).abs() < 1e-15);
        assert!(value_forward(&vfa, &[0.2, 0.1]).is_err());
        let big = init_vfa(4, &[32, 32], &mut rng(2)).unwrap();
        assert!(value_forward(&big, &[1e6, -1e6, 3.0, 0.0]).unwrap().is_finite());
    }

    #[test]
    fn pevfa_with_dead_embedding_stream_ignores_embedding() {
        let mut q = PeVFAParams::init(6, 5, 16, &[16], &mut rng(3)).unwrap();
        q.zero_embedding_stream();
        let s = [0.1, 0.2, -0.3, 0.4, 1.0, -1.0];
        let a = q.forward_row(&s, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let b = q.forward_row(&s, &[-5.0, 0.0, 0.3, 9.0, -1.0]).unwrap();
        assert_eq!(a, b);
        assert!(q.forward_row(&s, &[1.0]).is_err());
    }

    #[test]
    fn pevfa_distinguishes_embeddings() {
        let q = PeVFAParams::init(6, 5, 16, &[16], &mut rng(4)).unwrap();
        let s = [0.1, 0.2, -0.3, 0.4, 1.0, -1.0];
        let a = q.forward_row(&s, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let b = q.forward_row(&s, &[-5.0, 0.0, 0.3, 9.0, -1.0]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn pevfa_zeroed_stream_equals_value_forward_exactly() {
        for seed in 0..10 {
            let mut q = PeVFAParams::init(6, 7, 12, &[10, 9], &mut rng(seed)).unwrap();
            q.zero_embedding_stream();
            let vfa = q.as_vfa().unwrap();
            for k in 0..20 {
                let s: Vec<f64> = (0..6).map(|i| ((k * 6 + i) as f64 * 0.37).sin() * 3.0).collect();
                let chi: Vec<f64> = (0..7).map(|i| (i as f64 + k as f64).cos()).collect();
                assert_eq!(
                    q.forward_row(&s, &chi).unwrap().to_bits(),
                    value_forward(&vfa, &s).unwrap().to_bits()
                );
            }
        }
    }

    #[test]
    fn pevfa_gradient_wrt_embedding_matches_finite_differences() {
        let q = PeVFAParams::init(3, 4, 8, &[8], &mut rng(6)).unwrap();
        let states = Tensor::matrix(2, 3, vec![0.3, -0.2, 0.5, 1.0, 0.1, -0.7]).unwrap();
        let chi = Tensor::row(vec![0.4, -0.8, 0.2, 0.9]);
        let err = grad_check(&[chi], 1e-5, |tape, v| {
            let bound = q.bind(tape);
            let s = tape.constant(states.clone());
            let out = bound.forward_shared(tape, s, v[0])?;
            let sq = tape.square(out);
            Ok(tape.mean(sq))
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn network_gradients_match_finite_differences() {
        let vfa = init_vfa(4, &[8, 8], &mut rng(7)).unwrap();
        let states = Tensor::from_fn(5, 4, |i, j| ((i * 4 + j) as f64 * 0.61).sin());
        let params: Vec<Tensor> = vfa.tensors().into_iter().cloned().collect();
        let sizes = vfa.sizes();
        let err = grad_check(&params, 1e-5, |tape, v| {
            let s = tape.constant(states.clone());
            let mut h = s;
            for (li, pair) in v.chunks(2).enumerate() {
                let act = if li + 2 == sizes.len() { Activation::Identity } else { Activation::Relu };
                h = BoundLayer { weight: pair[0], bias: pair[1], activation: act }.forward(tape, h)?;
            }
            let sq = tape.square(h);
            Ok(tape.mean(sq))
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    proptest! {
        #[test]
        fn snapshot_round_trip_is_lossless(seed in 0u64..1000, hidden in 1usize..6) {
            let mlp = MlpParams::init(&[3, hidden, 2], Activation::Tanh, Activation::Identity, &mut rng(seed)).unwrap();
            let mut buf = Vec::new();
            snapshot::write_mlp(&mut buf, &mlp).unwrap();
            let back = snapshot::read_mlp(buf.as_slice()).unwrap();
            prop_assert_eq!(back, mlp);
        }
    }
}
