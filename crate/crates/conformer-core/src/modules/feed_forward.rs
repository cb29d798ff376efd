//! Pre-norm feed-forward module.
//!
//! `y = Dropout(W2 . Dropout(Act(W1 . LN(x) + b1)) + b2)` with an
//! expansion factor on the hidden width. The residual connection and its
//! scaling coefficient belong to the caller.

use crate::ctx::ForwardCtx;
use crate::error::Result;
use crate::ops::{activation, add_row, dropout, layer_norm, matmul, Act};
use crate::params::{MountedParams, SchemaEntry};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct FeedForwardParams {
    pub ln_gamma: Var,
    pub ln_beta: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl FeedForwardParams {
    /// Parameter listing under `prefix` for model width `d` and hidden
    /// width `mult * d`.
    pub fn schema(prefix: &str, d: usize, mult: usize) -> Vec<SchemaEntry> {
        let hidden = mult * d;
        vec![
            SchemaEntry::ones(format!("{prefix}/ln/gamma"), vec![d]),
            SchemaEntry::zeros(format!("{prefix}/ln/beta"), vec![d]),
            SchemaEntry::weight(format!("{prefix}/w1"), vec![d, hidden], d, hidden),
            SchemaEntry::zeros(format!("{prefix}/b1"), vec![hidden]),
            SchemaEntry::weight(format!("{prefix}/w2"), vec![hidden, d], hidden, d),
            SchemaEntry::zeros(format!("{prefix}/b2"), vec![d]),
        ]
    }

    pub fn mount<S: Scalar>(m: &MountedParams<S>, prefix: &str) -> Result<Self> {
        Ok(FeedForwardParams {
            ln_gamma: m.var(&format!("{prefix}/ln/gamma"))?,
            ln_beta: m.var(&format!("{prefix}/ln/beta"))?,
            w1: m.var(&format!("{prefix}/w1"))?,
            b1: m.var(&format!("{prefix}/b1"))?,
            w2: m.var(&format!("{prefix}/w2"))?,
            b2: m.var(&format!("{prefix}/b2"))?,
        })
    }
}

pub fn feed_forward<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    p: &FeedForwardParams,
    act: Act,
    dropout_p: f64,
    ln_eps: f64,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let h = layer_norm(tape, x, p.ln_gamma, p.ln_beta, ln_eps)?;
    let h = matmul(tape, h, p.w1)?;
    let h = add_row(tape, h, p.b1)?;
    let h = activation(tape, h, act);
    let h = dropout(tape, h, dropout_p, ctx)?;
    let h = matmul(tape, h, p.w2)?;
    let h = add_row(tape, h, p.b2)?;
    dropout(tape, h, dropout_p, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check_multi;
    use crate::io::ParamTree;
    use crate::params::{build_params, trainable_tensors};
    use crate::rng::{stream_rng, Stream};
    use crate::tensor::Tensor;

    #[test]
    fn matches_direct_formula_without_dropout() {
        let schema = FeedForwardParams::schema("ffn", 3, 4);
        let tree: ParamTree<f64> =
            build_params(&schema, &mut stream_rng(5, Stream::Params)).unwrap();
        let x = Tensor::from_fn(&[2, 3], |i| 0.3 * i as f64 - 0.4);

        let mut tape = Tape::<f64>::new();
        let m = MountedParams::from_tree(&mut tape, &tree, &schema).unwrap();
        let p = FeedForwardParams::mount(&m, "ffn").unwrap();
        let xv = tape.leaf(x.clone(), false);
        let mut ctx = ForwardCtx::infer();
        let y = feed_forward(&mut tape, xv, &p, Act::Swish, 0.1, 1e-6, &mut ctx).unwrap();
        let yv = tape.value(y);

        // direct recomputation with scalar loops
        let w1 = tree.get("ffn/w1").unwrap();
        let w2 = tree.get("ffn/w2").unwrap();
        for r in 0..2 {
            let row: Vec<f64> = (0..3).map(|c| x.at2(r, c)).collect();
            let mean = row.iter().sum::<f64>() / 3.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
            let normed: Vec<f64> = row.iter().map(|v| (v - mean) / (var + 1e-6).sqrt()).collect();
            let hidden: Vec<f64> = (0..12)
                .map(|j| {
                    let z: f64 = (0..3).map(|i| normed[i] * w1.at2(i, j)).sum();
                    z * (1.0 / (1.0 + (-z).exp()))
                })
                .collect();
            for c in 0..3 {
                let out: f64 = (0..12).map(|j| hidden[j] * w2.at2(j, c)).sum();
                assert!((yv.at2(r, c) - out).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_check_against_finite_differences() {
        let schema = FeedForwardParams::schema("ffn", 3, 4);
        let mut rng = stream_rng(9, Stream::Params);
        let params: Vec<Tensor<f64>> = trainable_tensors(&schema, &mut rng);
        let x = Tensor::from_fn(&[2, 3], |i| 0.2 * (i as f64) - 0.5);
        let mut inputs = vec![x];
        inputs.extend(params);
        let report = grad_check_multi(&inputs, 1e-5, |tape, vars| {
            let m = MountedParams::<f64>::from_vars(&schema, &vars[1..])?;
            let p = FeedForwardParams::mount(&m, "ffn")?;
            let mut ctx = ForwardCtx::infer();
            let y = feed_forward(tape, vars[0], &p, Act::Swish, 0.0, 1e-6, &mut ctx)?;
            Ok(crate::ops::sum_all(tape, y))
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "max err {}", report.max_rel_err);
    }
}
