//! Pointwise ops: arithmetic, activations, GLU, dropout.

use rand::Rng;

use crate::ctx::{ForwardCtx, Mode};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Activation functions used by the models. `Identity` exists so module
/// wiring can be exercised with the nonlinearity switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Act {
    Swish,
    Relu,
    Sigmoid,
    Identity,
}

pub fn sigmoid_scalar<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

impl Act {
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Act::Swish => x * sigmoid_scalar(x),
            Act::Relu => {
                if x > S::zero() {
                    x
                } else {
                    S::zero()
                }
            }
            Act::Sigmoid => sigmoid_scalar(x),
            Act::Identity => x,
        }
    }

    /// d(apply)/dx evaluated at `x`.
    pub fn deriv<S: Scalar>(self, x: S) -> S {
        match self {
            Act::Swish => {
                let s = sigmoid_scalar(x);
                s + x * s * (S::one() - s)
            }
            Act::Relu => {
                if x > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Act::Sigmoid => {
                let s = sigmoid_scalar(x);
                s * (S::one() - s)
            }
            Act::Identity => S::one(),
        }
    }
}

fn check_same_shape<S: Scalar>(op: &'static str, a: &Tensor<S>, b: &Tensor<S>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Elementwise sum of two same-shape tensors.
pub fn add<S: Scalar>(tape: &mut Tape<S>, a: Var, b: Var) -> Result<Var> {
    let (av, bv) = (tape.value(a).clone(), tape.value(b).clone());
    check_same_shape("add", &av, &bv)?;
    let out = av.zip_map(&bv, |x, y| x + y)?;
    Ok(tape.push(out, &[a, b], move |g, store| {
        store.accumulate(a.index(), g.clone());
        store.accumulate(b.index(), g.clone());
    }))
}

/// Elementwise product (Hadamard).
pub fn mul<S: Scalar>(tape: &mut Tape<S>, a: Var, b: Var) -> Result<Var> {
    let (av, bv) = (tape.value(a).clone(), tape.value(b).clone());
    check_same_shape("mul", &av, &bv)?;
    let out = av.zip_map(&bv, |x, y| x * y)?;
    let (ac, bc) = (av, bv);
    Ok(tape.push(out, &[a, b], move |g, store| {
        store.accumulate(a.index(), g.zip_map(&bc, |gi, bi| gi * bi).unwrap());
        store.accumulate(b.index(), g.zip_map(&ac, |gi, ai| gi * ai).unwrap());
    }))
}

/// Multiply every element by a constant.
pub fn scale<S: Scalar>(tape: &mut Tape<S>, a: Var, c: S) -> Var {
    let out = tape.value(a).map(|x| x * c);
    tape.push(out, &[a], move |g, store| {
        store.accumulate(a.index(), g.map(|gi| gi * c));
    })
}

/// Add a length-`d` row vector to every row of a `[T, d]` matrix.
pub fn add_row<S: Scalar>(tape: &mut Tape<S>, x: Var, b: Var) -> Result<Var> {
    let xv = tape.value(x).clone();
    let bv = tape.value(b).clone();
    if xv.rank() != 2 || bv.rank() != 1 || xv.dim(1) != bv.dim(0) {
        return Err(Error::ShapeMismatch {
            op: "add_row",
            lhs: xv.shape().to_vec(),
            rhs: bv.shape().to_vec(),
        });
    }
    let (t, d) = (xv.dim(0), xv.dim(1));
    let mut out = xv.clone();
    {
        let data = out.data_mut();
        for ti in 0..t {
            for j in 0..d {
                data[ti * d + j] = data[ti * d + j] + bv.data()[j];
            }
        }
    }
    Ok(tape.push(out, &[x, b], move |g, store| {
        store.accumulate(x.index(), g.clone());
        let mut db = vec![S::zero(); d];
        for ti in 0..t {
            for j in 0..d {
                db[j] = db[j] + g.data()[ti * d + j];
            }
        }
        store.accumulate(b.index(), Tensor::new(vec![d], db).unwrap());
    }))
}

/// Multiply every row of a `[T, d]` matrix elementwise by a length-`d` vector.
pub fn mul_row<S: Scalar>(tape: &mut Tape<S>, x: Var, v: Var) -> Result<Var> {
    let xv = tape.value(x).clone();
    let vv = tape.value(v).clone();
    if xv.rank() != 2 || vv.rank() != 1 || xv.dim(1) != vv.dim(0) {
        return Err(Error::ShapeMismatch {
            op: "mul_row",
            lhs: xv.shape().to_vec(),
            rhs: vv.shape().to_vec(),
        });
    }
    let (t, d) = (xv.dim(0), xv.dim(1));
    let mut out = xv.clone();
    {
        let data = out.data_mut();
        for ti in 0..t {
            for j in 0..d {
                data[ti * d + j] = data[ti * d + j] * vv.data()[j];
            }
        }
    }
    let (xc, vc) = (xv, vv);
    Ok(tape.push(out, &[x, v], move |g, store| {
        let mut dx = vec![S::zero(); t * d];
        let mut dv = vec![S::zero(); d];
        for ti in 0..t {
            for j in 0..d {
                let gi = g.data()[ti * d + j];
                dx[ti * d + j] = gi * vc.data()[j];
                dv[j] = dv[j] + gi * xc.data()[ti * d + j];
            }
        }
        store.accumulate(x.index(), Tensor::new(vec![t, d], dx).unwrap());
        store.accumulate(v.index(), Tensor::new(vec![d], dv).unwrap());
    }))
}

/// Apply an activation function elementwise.
pub fn activation<S: Scalar>(tape: &mut Tape<S>, x: Var, act: Act) -> Var {
    let xv = tape.value(x).clone();
    let out = xv.map(|e| act.apply(e));
    tape.push(out, &[x], move |g, store| {
        let dx = g.zip_map(&xv, |gi, xi| gi * act.deriv(xi)).unwrap();
        store.accumulate(x.index(), dx);
    })
}

/// Gated linear unit over the last axis: split `[.., 2d]` into halves `a`
/// and `b` and return `a * sigmoid(b)` with shape `[.., d]`.
pub fn glu<S: Scalar>(tape: &mut Tape<S>, x: Var) -> Result<Var> {
    let xv = tape.value(x).clone();
    if xv.rank() == 0 {
        return Err(Error::dimension("glu", "input must have rank >= 1"));
    }
    let last = *xv.shape().last().unwrap();
    if last % 2 != 0 {
        return Err(Error::dimension(
            "glu",
            format!("last axis must be even, got {last}"),
        ));
    }
    let half = last / 2;
    let rows = xv.len() / last;
    let mut out_shape = xv.shape().to_vec();
    *out_shape.last_mut().unwrap() = half;
    let mut out = vec![S::zero(); rows * half];
    for r in 0..rows {
        for j in 0..half {
            let a = xv.data()[r * last + j];
            let b = xv.data()[r * last + half + j];
            out[r * half + j] = a * sigmoid_scalar(b);
        }
    }
    let out = Tensor::new(out_shape, out)?;
    Ok(tape.push(out, &[x], move |g, store| {
        let mut dx = vec![S::zero(); rows * last];
        for r in 0..rows {
            for j in 0..half {
                let gi = g.data()[r * half + j];
                let a = xv.data()[r * last + j];
                let b = xv.data()[r * last + half + j];
                let s = sigmoid_scalar(b);
                dx[r * last + j] = gi * s;
                dx[r * last + half + j] = gi * a * s * (S::one() - s);
            }
        }
        store.accumulate(x.index(), Tensor::new(xv.shape().to_vec(), dx).unwrap());
    }))
}

/// Inverted dropout. In infer mode, or with `p == 0`, this is the identity
/// and consumes no randomness. In train mode each element is zeroed with
/// probability `p` and survivors are scaled by `1/(1-p)`.
pub fn dropout<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    p: f64,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!(
            "dropout probability must lie in [0, 1), got {p}"
        )));
    }
    if ctx.mode == Mode::Infer || p == 0.0 {
        return Ok(x);
    }
    let xv = tape.value(x).clone();
    let keep_scale = S::from_f64(1.0 / (1.0 - p));
    let mask: Vec<S> = (0..xv.len())
        .map(|_| {
            if ctx.rng.random::<f64>() < p {
                S::zero()
            } else {
                keep_scale
            }
        })
        .collect();
    let mask = Tensor::new(xv.shape().to_vec(), mask)?;
    let out = xv.zip_map(&mask, |xi, mi| xi * mi)?;
    Ok(tape.push(out, &[x], move |g, store| {
        store.accumulate(x.index(), g.zip_map(&mask, |gi, mi| gi * mi).unwrap());
    }))
}
