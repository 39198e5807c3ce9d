use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{invalid, Result};

/// Largest relative disagreement between reverse-mode gradients and central
/// finite differences, `|analytic - numeric| / max(1e-8, |numeric|)`, over
/// every entry of every parameter.
///
/// `build` records the loss on a fresh tape given the parameter handles.
pub fn grad_check<F>(params: &[Tensor], eps: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if eps <= 0.0 {
        return invalid(format!("grad_check step must be positive, got {eps}"));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let analytic = tape.backward(loss)?.collect(&tape, &vars);

    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = ps.iter().map(|p| t.constant(p.clone())).collect();
        let l = build(&mut t, &vs)?;
        Ok(t.value(l).item())
    };

    let mut work = params.to_vec();
    let mut worst: f64 = 0.0;
    for ti in 0..params.len() {
        for k in 0..params[ti].len() {
            let orig = work[ti].data()[k];
            work[ti].data_mut()[k] = orig + eps;
            let up = eval(&work)?;
            work[ti].data_mut()[k] = orig - eps;
            let down = eval(&work)?;
            work[ti].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let err = (analytic[ti].data()[k] - numeric).abs() / numeric.abs().max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
