//! Central-difference gradient checking.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Worst-case comparison between analytic and numeric gradients.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (input index, flat element index) of the worst element.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / 1.0f64.max(a.abs()).max(n.abs())
}

/// Compare analytic gradients against central finite differences for a
/// scalar-valued function of several tensor inputs.
///
/// `f` is called once on a gradient tape to get the analytic gradients, then
/// twice per element on no-grad tapes for the numeric estimate
/// `(f(x + eps) - f(x - eps)) / (2 eps)`. Every element of every input is
/// perturbed; inputs the loss ignores must still produce (zero) gradients.
pub fn grad_check_multi<S, F>(inputs: &[Tensor<S>], eps: f64, f: F) -> Result<GradCheckReport>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, &[Var]) -> Result<Var>,
{
    let eval = |points: &[Tensor<S>]| -> Result<f64> {
        let mut tape: Tape<S> = Tape::no_grad();
        let vars: Vec<Var> = points.iter().map(|p| tape.leaf(p.clone(), false)).collect();
        let y = f(&mut tape, &vars)?;
        let yv = tape.value(y);
        if !yv.shape().is_empty() {
            return Err(Error::Contract(format!(
                "loss must be scalar, got shape {:?}",
                yv.shape()
            )));
        }
        Ok(yv.item().as_f64())
    };

    let mut tape: Tape<S> = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|p| tape.leaf(p.clone(), true)).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor<S>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, x)| {
            grads
                .get(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(x.shape()))
        })
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
    };
    let step = S::from_f64(eps);
    let mut work: Vec<Tensor<S>> = inputs.to_vec();
    for (pi, x) in inputs.iter().enumerate() {
        for ei in 0..x.len() {
            let orig = x.data()[ei];
            work[pi].data_mut()[ei] = orig + step;
            let up = eval(&work)?;
            work[pi].data_mut()[ei] = orig - step;
            let down = eval(&work)?;
            work[pi].data_mut()[ei] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[pi].data()[ei].as_f64();
            let e = rel_err(a, numeric);
            if e > report.max_rel_err {
                report.max_rel_err = e;
                report.worst = (pi, ei);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Single-input convenience wrapper around [`grad_check_multi`].
pub fn grad_check<S, F>(input: &Tensor<S>, eps: f64, f: F) -> Result<GradCheckReport>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, Var) -> Result<Var>,
{
    grad_check_multi(std::slice::from_ref(input), eps, |tape, vars| {
        f(tape, vars[0])
    })
}
