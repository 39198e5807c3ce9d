use super::tensor::Tensor;
use crate::error::{shape_err, Error, Result};

/// Something that owns an ordered list of trainable tensors.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction; moment buffers mirror the parameter list.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    timestep: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &dyn ParamSet) -> Self {
        let first: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            config,
            timestep: 0,
            second: first.clone(),
            first,
        }
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    /// One update. Rejects the whole step, leaving parameters and moments
    /// untouched, if any gradient entry is non-finite.
    pub fn step(&mut self, params: &mut dyn ParamSet, grads: &[Tensor]) -> Result<()> {
        let mut tensors = params.tensors_mut();
        if tensors.len() != grads.len() || tensors.len() != self.first.len() {
            return shape_err(
                "adam_step",
                format!(
                    "{} parameter tensors, {} gradients, {} moment buffers",
                    tensors.len(),
                    grads.len(),
                    self.first.len()
                ),
            );
        }
        for (i, (p, g)) in tensors.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.first[i].len() {
                return shape_err(
                    "adam_step",
                    format!("tensor {i}: parameter {:?} vs gradient {:?}", p.shape(), g.shape()),
                );
            }
            if let Some(pos) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of parameter tensor {i} at flat index {pos} (value {})",
                    g.data()[pos]
                )));
            }
        }

        self.timestep += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.timestep as i32);
        let bc2 = 1.0 - beta2.powi(self.timestep as i32);
        for (i, (p, g)) in tensors.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            for (((w, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *w -= lr * mhat / (vhat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Elementwise `target <- (1 - m) * target + m * online`.
pub fn soft_update(target: &mut dyn ParamSet, online: &dyn ParamSet, m: f64) -> Result<()> {
    let src = online.tensors();
    let mut dst = target.tensors_mut();
    if src.len() != dst.len() {
        return shape_err("momentum_update", format!("{} vs {} tensors", dst.len(), src.len()));
    }
    for (d, s) in dst.iter().zip(&src) {
        if d.shape() != s.shape() {
            return shape_err("momentum_update", format!("{:?} vs {:?}", d.shape(), s.shape()));
        }
    }
    for (d, s) in dst.iter_mut().zip(src) {
        for (x, &y) in d.data_mut().iter_mut().zip(s.data()) {
            *x = (1.0 - m) * *x + m * y;
        }
    }
    Ok(())
}

impl ParamSet for Vec<Tensor> {
    fn tensors(&self) -> Vec<&Tensor> {
        self.iter().collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.iter_mut().collect()
    }
}

impl ParamSet for Tensor {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![self]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![self]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut w = Tensor::vector(vec![1.0, -1.0]);
        let mut adam = AdamState::new(AdamConfig::with_lr(1e-3), &w);
        adam.step(&mut w, &[Tensor::vector(vec![0.5, -0.5])]).unwrap();
        assert!((w.data()[0] - (1.0 - 1e-3)).abs() < 1e-10);
        assert!((w.data()[1] - (-1.0 + 1e-3)).abs() < 1e-10);
        assert_eq!(adam.timestep(), 1);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut w = Tensor::vector(vec![0.3, -2.0, 7.5]);
        let before = w.clone();
        let mut adam = AdamState::new(AdamConfig::default(), &w);
        for k in 1..=5 {
            adam.step(&mut w, &[Tensor::vector(vec![0.0; 3])]).unwrap();
            assert_eq!(adam.timestep(), k);
        }
        assert_eq!(w, before);
    }

    #[test]
    fn quadratic_unroll_converges() {
        // f(w) = w², gradient 2w.
        let mut w = Tensor::vector(vec![1.0]);
        let mut adam = AdamState::new(AdamConfig::with_lr(0.1), &w);
        for _ in 0..100 {
            let g = Tensor::vector(vec![2.0 * w.data()[0]]);
            adam.step(&mut w, &[g]).unwrap();
        }
        assert!(w.data()[0].abs() < 0.1, "w = {}", w.data()[0]);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_mutation() {
        let mut w = Tensor::vector(vec![1.0, 2.0]);
        let mut adam = AdamState::new(AdamConfig::default(), &w);
        let err = adam
            .step(&mut w, &[Tensor::vector(vec![0.1, f64::NAN])])
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(w.data(), &[1.0, 2.0]);
        assert_eq!(adam.timestep(), 0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut w = Tensor::vector(vec![1.0, 2.0]);
        let mut adam = AdamState::new(AdamConfig::default(), &w);
        assert!(adam.step(&mut w, &[Tensor::vector(vec![0.1])]).is_err());
    }

    #[test]
    fn soft_update_extremes() {
        let online = Tensor::vector(vec![1.0, 2.0]);
        let mut target = Tensor::vector(vec![5.0, 5.0]);
        soft_update(&mut target, &online, 0.0).unwrap();
        assert_eq!(target.data(), &[5.0, 5.0]);
        soft_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target.data(), &[1.0, 2.0]);
    }
}
