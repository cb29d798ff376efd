//! Squeeze-and-excitation: pool over time, pass the summary through a
//! bottleneck, and gate every frame channel-wise.
//!
//! `theta = sigmoid(W2 . Act(W1 . pool(x) + b1) + b2)`, `y[t] = theta * x[t]`
//! with bottleneck width `max(1, d / 8)`. Pooling is either a global mean
//! over time (one gate for the whole sequence) or a centered windowed mean
//! (one gate per frame).

use crate::ctx::ForwardCtx;
use crate::error::{Error, Result};
use crate::ops::{
    activation, add_row, matmul, mean_time, mul, mul_row, reshape, windowed_mean, Act,
};
use crate::params::{MountedParams, SchemaEntry};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SePooling {
    Global,
    Window(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct SeParams {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// Bottleneck width for a model dimension.
pub fn se_bottleneck(d: usize) -> usize {
    (d / 8).max(1)
}

impl SeParams {
    pub fn schema(prefix: &str, d: usize) -> Vec<SchemaEntry> {
        let b = se_bottleneck(d);
        vec![
            SchemaEntry::weight(format!("{prefix}/w1"), vec![d, b], d, b),
            SchemaEntry::zeros(format!("{prefix}/b1"), vec![b]),
            SchemaEntry::weight(format!("{prefix}/w2"), vec![b, d], b, d),
            SchemaEntry::zeros(format!("{prefix}/b2"), vec![d]),
        ]
    }

    pub fn mount<S: Scalar>(m: &MountedParams<S>, prefix: &str) -> Result<Self> {
        Ok(SeParams {
            w1: m.var(&format!("{prefix}/w1"))?,
            b1: m.var(&format!("{prefix}/b1"))?,
            w2: m.var(&format!("{prefix}/w2"))?,
            b2: m.var(&format!("{prefix}/b2"))?,
        })
    }
}

pub fn squeeze_excite<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    p: &SeParams,
    pooling: SePooling,
    act: Act,
    _ctx: &mut ForwardCtx,
) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 2 {
        return Err(Error::dimension("squeeze_excite", "input must have rank 2"));
    }
    let d = shape[1];
    let pooled = match pooling {
        SePooling::Global => {
            let m = mean_time(tape, x)?;
            reshape(tape, m, vec![1, d])?
        }
        SePooling::Window(w) => windowed_mean(tape, x, w)?,
    };
    let h = matmul(tape, pooled, p.w1)?;
    let h = add_row(tape, h, p.b1)?;
    let h = activation(tape, h, act);
    let h = matmul(tape, h, p.w2)?;
    let h = add_row(tape, h, p.b2)?;
    let theta = activation(tape, h, Act::Sigmoid);
    match pooling {
        SePooling::Global => {
            let gate = reshape(tape, theta, vec![d])?;
            mul_row(tape, x, gate)
        }
        SePooling::Window(_) => mul(tape, x, theta),
    }
}
