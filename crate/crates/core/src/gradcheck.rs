//! Central finite-difference verification of reverse-mode gradients.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Compares the tape gradient of `f` at `theta` with central differences
/// and returns the worst coordinate-wise relative error, using
/// `max(|analytic|, |numeric|, 1e-8)` as the denominator.
pub fn grad_check<F>(mut f: F, theta: &Tensor<f64>, h: f64) -> Result<f64>
where
    F: FnMut(&mut Tape<f64>, Var) -> Result<Var>,
{
    grad_check_many(|tape, vars| f(tape, vars[0]), core::slice::from_ref(theta), h)
}

/// [`grad_check`] over several parameter tensors at once. `f` receives one
/// leaf per entry of `thetas`, in order.
pub fn grad_check_many<F>(mut f: F, thetas: &[Tensor<f64>], h: f64) -> Result<f64>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::domain("grad_check", "step must be positive"));
    }
    let analytic: Vec<Tensor<f64>> = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = thetas.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        if !tape.value(out).item().is_finite() {
            return Err(Error::NonFinite {
                what: "grad_check objective".into(),
            });
        }
        let grads = tape.backward(out)?;
        vars.iter().map(|&v| grads.wrt(v)).collect()
    };

    let mut eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out).item();
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: "grad_check objective".into(),
            });
        }
        Ok(v)
    };

    let mut work: Vec<Tensor<f64>> = thetas.to_vec();
    let mut worst = 0.0f64;
    for (ti, theta) in thetas.iter().enumerate() {
        for i in 0..theta.numel() {
            let orig = theta.data()[i];
            work[ti].data_mut()[i] = orig + h;
            let plus = eval(&work)?;
            work[ti].data_mut()[i] = orig - h;
            let minus = eval(&work)?;
            work[ti].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[ti].data()[i];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
