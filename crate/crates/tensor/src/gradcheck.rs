//! Central finite-difference gradient checking.

use crate::array::Array;
use crate::var::Var;

/// Outcome of comparing analytic and numeric gradients.
#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    /// `max |analytic - numeric| / max(max |numeric|, 1e-8)` over all inputs.
    pub rel_err: f64,
    pub max_abs_err: f64,
}

/// Compares the analytic gradient of a scalar function against central
/// differences with step `eps`, perturbing every element of every input.
pub fn check_gradients(f: impl Fn(&[Var]) -> Var, inputs: &[Array], eps: f64) -> GradCheck {
    let vars: Vec<Var> = inputs.iter().cloned().map(Var::parameter).collect();
    let out = f(&vars);
    let grads = out.backward();
    let analytic: Vec<Array> = vars
        .iter()
        .map(|v| {
            grads
                .get(v)
                .cloned()
                .unwrap_or_else(|| Array::zeros(v.shape()))
        })
        .collect();

    let eval = |probe: &[Array]| -> f64 {
        let vs: Vec<Var> = probe.iter().cloned().map(Var::constant).collect();
        f(&vs).item()
    };

    let mut max_abs_err: f64 = 0.0;
    let mut max_numeric: f64 = 0.0;
    let mut probe: Vec<Array> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.len() {
            let orig = input.data()[i];
            probe[k].data_mut()[i] = orig + eps;
            let up = eval(&probe);
            probe[k].data_mut()[i] = orig - eps;
            let down = eval(&probe);
            probe[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            max_numeric = max_numeric.max(numeric.abs());
            max_abs_err = max_abs_err.max((numeric - analytic[k].data()[i]).abs());
        }
    }
    GradCheck {
        rel_err: max_abs_err / max_numeric.max(1e-8),
        max_abs_err,
    }
}
