//! Verification suites: gradient checks for every differentiable op and
//! numerical oracles comparing fast kernels against naive references.
//!
//! The suites are pure library code so both the CLI's `verify` command and
//! the integration tests run exactly the same checks. A deliberate fault
//! can be injected to prove the harness actually detects wrong derivatives.

use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ctx::{ForwardCtx, Mode};
use crate::error::{Error, Result};
use crate::gradcheck::grad_check_multi;
use crate::model::{block_schema, conformer_block, mount_block, ConformerConfig, Preset};
use crate::modules::{
    attention_scores_relpos, se_bottleneck, squeeze_excite, SeParams,
};
use crate::ops::{
    activation, add, add_row, batch_norm, concat_cols, conv1d, conv2d, dropout, expand_groups,
    glu, layer_norm, matmul, mean_time, mul, mul_row, pad_time, rel_shift, reshape, scale,
    sigmoid_scalar, slice_cols, softmax, stride_time, sum_all, transpose, windowed_mean, Act,
    BatchNormState, ConvKind,
};
use crate::params::{trainable_tensors, MountedParams};
use crate::rng::{stream_rng, Stream};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::oracles::{
    brute_force_relpos_scores, naive_conv2d, naive_depthwise_conv1d, naive_glu, naive_matmul,
    naive_pointwise_conv1d, naive_se_global,
};

/// Which checks to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    GradCheck,
    Oracle,
    All,
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradcheck" => Ok(Suite::GradCheck),
            "oracle" => Ok(Suite::Oracle),
            "all" => Ok(Suite::All),
            other => Err(Error::Config(format!(
                "unknown suite {other}, expected gradcheck, oracle, or all"
            ))),
        }
    }
}

/// How hard to run them: `Small` trims seed counts and sweep sizes for a
/// quick signal, `Full` runs the complete sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Small,
    Full,
}

impl FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Scale::Small),
            "full" => Ok(Scale::Full),
            other => Err(Error::Config(format!(
                "unknown scale {other}, expected small or full"
            ))),
        }
    }
}

/// Deliberate defect injected into one check, used to prove the suite
/// fails when a derivative is wrong.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Flip the sign of the swish derivative in the swish gradient check.
    SwishDerivSign,
}

impl FromStr for Fault {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Fault::None),
            "swish-deriv-sign" => Ok(Fault::SwishDerivSign),
            other => Err(Error::Config(format!("unknown fault {other}"))),
        }
    }
}

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub max_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckResult {
    fn new(name: impl Into<String>, max_err: f64, tolerance: f64) -> Self {
        let pass = max_err.is_finite() && max_err < tolerance;
        CheckResult {
            name: name.into(),
            max_err,
            tolerance,
            pass,
        }
    }
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    !results.is_empty() && results.iter().all(|r| r.pass)
}

const GRAD_EPS: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-5;
const ORACLE_TOL: f64 = 1e-12;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Random tensor kept away from zero, for kinked activations.
fn rand_tensor_off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let v: f64 = rng.random_range(-1.0..1.0);
        v + 0.05 * v.signum()
    })
}

/// Weighted sum as the scalar loss: breaks symmetries a plain sum misses.
fn weighted_sum(tape: &mut Tape<f64>, y: Var, seed: u64) -> Var {
    let mut rng = stream_rng(seed ^ 0x5eed, Stream::Input);
    let shape = tape.shape(y).to_vec();
    let w = tape.leaf(rand_tensor(&mut rng, &shape), false);
    let weighted = mul(tape, y, w).expect("weight shape matches");
    sum_all(tape, weighted)
}

/// Swish with a sign-flipped derivative, pushed as a raw tape node. Used
/// only by the fault injection path.
fn faulted_swish(tape: &mut Tape<f64>, x: Var) -> Var {
    let xv = tape.value(x).clone();
    let out = xv.map(|v| v * sigmoid_scalar(v));
    tape.push(out, &[x], move |g, store| {
        let dx = xv.zip_map(g, |v, gi| {
            let s = sigmoid_scalar(v);
            let deriv = s + v * s * (1.0 - s);
            -deriv * gi
        });
        store.accumulate(x.index(), dx.unwrap());
    })
}

type GradFn = fn(u64) -> Result<f64>;

fn gc_add(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[4, 5]), rand_tensor(&mut rng, &[4, 5])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = add(tape, v[0], v[1])?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_mul(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[4, 5]), rand_tensor(&mut rng, &[4, 5])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = mul(tape, v[0], v[1])?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_scale(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[4, 5])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = scale(tape, v[0], -0.37);
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_add_row(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[4, 5]), rand_tensor(&mut rng, &[5])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = add_row(tape, v[0], v[1])?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_mul_row(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[4, 5]), rand_tensor(&mut rng, &[5])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = mul_row(tape, v[0], v[1])?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_matmul(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[3, 4]), rand_tensor(&mut rng, &[4, 5])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = matmul(tape, v[0], v[1])?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_transpose(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[3, 5])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = transpose(tape, v[0])?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_softmax(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[4, 6])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = softmax(tape, v[0], 1)?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_swish(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[4, 5])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = activation(tape, v[0], Act::Swish);
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_swish_faulted(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[4, 5])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = faulted_swish(tape, v[0]);
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_relu(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor_off_zero(&mut rng, &[4, 5])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = activation(tape, v[0], Act::Relu);
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_sigmoid(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[4, 5])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = activation(tape, v[0], Act::Sigmoid);
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_glu(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[4, 6])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = glu(tape, v[0])?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_layer_norm(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [
        rand_tensor(&mut rng, &[4, 6]),
        rand_tensor(&mut rng, &[6]),
        rand_tensor(&mut rng, &[6]),
    ];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = layer_norm(tape, v[0], v[1], v[2], 1e-6)?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_batch_norm(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [
        rand_tensor(&mut rng, &[5, 4]),
        rand_tensor(&mut rng, &[4]),
        rand_tensor(&mut rng, &[4]),
    ];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let state = BatchNormState::identity(4);
        let y = batch_norm(tape, v[0], v[1], v[2], &state, 1e-5, Mode::Train, None)?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_conv1d_depthwise(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [
        rand_tensor(&mut rng, &[6, 3]),
        rand_tensor(&mut rng, &[4, 3]),
        rand_tensor(&mut rng, &[3]),
    ];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = conv1d(tape, v[0], v[1], Some(v[2]), ConvKind::Depthwise, (1, 2))?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_conv1d_pointwise(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [
        rand_tensor(&mut rng, &[5, 3]),
        rand_tensor(&mut rng, &[3, 4]),
        rand_tensor(&mut rng, &[4]),
    ];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = conv1d(tape, v[0], v[1], Some(v[2]), ConvKind::Pointwise, (0, 0))?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_conv2d(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [
        rand_tensor(&mut rng, &[6, 5, 2]),
        rand_tensor(&mut rng, &[3, 3, 2, 3]),
    ];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = conv2d(tape, v[0], v[1], 2)?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_pad_time(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[4, 3])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = pad_time(tape, v[0], 2, 1)?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_stride_time(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[7, 3])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = stride_time(tape, v[0], 2)?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_expand_groups(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[3, 2])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = expand_groups(tape, v[0], 6)?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_mean_time(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[5, 4])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = mean_time(tape, v[0])?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_windowed_mean(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[6, 4])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = windowed_mean(tape, v[0], 3)?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_sum_all(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[4, 5])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| Ok(sum_all(tape, v[0])))?.max_rel_err)
}

fn gc_concat_cols(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[4, 3]), rand_tensor(&mut rng, &[4, 2])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = concat_cols(tape, &[v[0], v[1]])?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_slice_cols(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[4, 6])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = slice_cols(tape, v[0], 2, 3)?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_reshape(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[4, 6])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = reshape(tape, v[0], vec![3, 8])?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_rel_shift(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[4, 7])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        let y = rel_shift(tape, v[0])?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

fn gc_dropout(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Input);
    let inputs = [rand_tensor(&mut rng, &[4, 5])];
    Ok(grad_check_multi(&inputs, GRAD_EPS, move |tape, v| {
        // a fresh context per evaluation keeps the mask identical across
        // the perturbed forward passes
        let mut ctx = ForwardCtx::train(seed);
        let y = dropout(tape, v[0], 0.3, &mut ctx)?;
        Ok(weighted_sum(tape, y, seed))
    })?
    .max_rel_err)
}

/// Full default-wiring block: infer mode, `[4, 16]` input, 2 heads.
fn gc_conformer_block(seed: u64) -> Result<f64> {
    let mut cfg = ConformerConfig::preset(Preset::S);
    cfg.num_layers = 1;
    cfg.d_model = 16;
    cfg.num_heads = 2;
    cfg.conv_kernel = 3;
    cfg.n_mels = 8;
    cfg.dropout = 0.0;
    let schema = block_schema("block0", &cfg);
    let mut rng = stream_rng(seed, Stream::Params);
    let params = trainable_tensors(&schema, &mut rng);
    let mut input_rng = stream_rng(seed, Stream::Input);
    let x = rand_tensor(&mut input_rng, &[4, 16]);
    let mut inputs = vec![x];
    inputs.extend(params);
    let report = grad_check_multi(&inputs, GRAD_EPS, move |tape, vars| {
        let m = MountedParams::<f64>::from_vars(&schema, &vars[1..])?;
        let bp = mount_block(&m, "block0", &cfg)?;
        let mut ctx = ForwardCtx::infer();
        let y = conformer_block(tape, vars[0], &bp, &cfg, Mode::Infer, &mut ctx)?;
        Ok(sum_all(tape, y))
    })?;
    Ok(report.max_rel_err)
}

const GRAD_CASES: &[(&str, GradFn)] = &[
    ("gradcheck/add", gc_add),
    ("gradcheck/mul", gc_mul),
    ("gradcheck/scale", gc_scale),
    ("gradcheck/add_row", gc_add_row),
    ("gradcheck/mul_row", gc_mul_row),
    ("gradcheck/matmul", gc_matmul),
    ("gradcheck/transpose", gc_transpose),
    ("gradcheck/softmax", gc_softmax),
    ("gradcheck/swish", gc_swish),
    ("gradcheck/relu", gc_relu),
    ("gradcheck/sigmoid", gc_sigmoid),
    ("gradcheck/glu", gc_glu),
    ("gradcheck/layer_norm", gc_layer_norm),
    ("gradcheck/batch_norm", gc_batch_norm),
    ("gradcheck/conv1d_depthwise", gc_conv1d_depthwise),
    ("gradcheck/conv1d_pointwise", gc_conv1d_pointwise),
    ("gradcheck/conv2d", gc_conv2d),
    ("gradcheck/pad_time", gc_pad_time),
    ("gradcheck/stride_time", gc_stride_time),
    ("gradcheck/expand_groups", gc_expand_groups),
    ("gradcheck/mean_time", gc_mean_time),
    ("gradcheck/windowed_mean", gc_windowed_mean),
    ("gradcheck/sum_all", gc_sum_all),
    ("gradcheck/concat_cols", gc_concat_cols),
    ("gradcheck/slice_cols", gc_slice_cols),
    ("gradcheck/reshape", gc_reshape),
    ("gradcheck/rel_shift", gc_rel_shift),
    ("gradcheck/dropout", gc_dropout),
    ("gradcheck/conformer_block", gc_conformer_block),
];

fn run_gradcheck(scale: Scale, fault: Fault) -> Result<Vec<CheckResult>> {
    let seeds: u64 = match scale {
        Scale::Small => 3,
        Scale::Full => 20,
    };
    let mut results = Vec::new();
    for &(name, f) in GRAD_CASES {
        let f: GradFn = if name == "gradcheck/swish" && fault == Fault::SwishDerivSign {
            gc_swish_faulted
        } else {
            f
        };
        let mut worst = 0.0f64;
        for seed in 0..seeds {
            worst = worst.max(f(seed)?);
        }
        results.push(CheckResult::new(name, worst, GRAD_TOL));
    }
    Ok(results)
}

fn oracle_matmul(scale: Scale) -> Result<CheckResult> {
    let seeds = match scale {
        Scale::Small => 3,
        Scale::Full => 20,
    };
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = stream_rng(seed, Stream::Input);
        let a = rand_tensor(&mut rng, &[7, 5]);
        let b = rand_tensor(&mut rng, &[5, 6]);
        let mut tape = Tape::<f64>::no_grad();
        let av = tape.leaf(a.clone(), false);
        let bv = tape.leaf(b.clone(), false);
        let y = matmul(&mut tape, av, bv)?;
        worst = worst.max(tape.value(y).max_abs_diff(&naive_matmul(&a, &b))?);
    }
    Ok(CheckResult::new("oracle/matmul", worst, ORACLE_TOL))
}

fn oracle_conv1d_depthwise(scale: Scale) -> Result<CheckResult> {
    let seeds = match scale {
        Scale::Small => 2,
        Scale::Full => 10,
    };
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = stream_rng(seed, Stream::Input);
        for k in [1usize, 3, 4, 5] {
            for pad in [(0usize, 0usize), (1, 1), (1, 2), (2, 2)] {
                let x = rand_tensor(&mut rng, &[9, 4]);
                let kernel = rand_tensor(&mut rng, &[k, 4]);
                let bias = rand_tensor(&mut rng, &[4]);
                if 9 + pad.0 + pad.1 < k {
                    continue;
                }
                let mut tape = Tape::<f64>::no_grad();
                let xv = tape.leaf(x.clone(), false);
                let kv = tape.leaf(kernel.clone(), false);
                let bv = tape.leaf(bias.clone(), false);
                let y = conv1d(&mut tape, xv, kv, Some(bv), ConvKind::Depthwise, pad)?;
                let want = naive_depthwise_conv1d(&x, &kernel, Some(&bias), pad);
                worst = worst.max(tape.value(y).max_abs_diff(&want)?);
            }
        }
    }
    Ok(CheckResult::new("oracle/conv1d_depthwise", worst, ORACLE_TOL))
}

fn oracle_conv1d_pointwise(scale: Scale) -> Result<CheckResult> {
    let seeds = match scale {
        Scale::Small => 3,
        Scale::Full => 20,
    };
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = stream_rng(seed, Stream::Input);
        let x = rand_tensor(&mut rng, &[8, 3]);
        let w = rand_tensor(&mut rng, &[3, 5]);
        let b = rand_tensor(&mut rng, &[5]);
        let mut tape = Tape::<f64>::no_grad();
        let xv = tape.leaf(x.clone(), false);
        let wv = tape.leaf(w.clone(), false);
        let bv = tape.leaf(b.clone(), false);
        let y = conv1d(&mut tape, xv, wv, Some(bv), ConvKind::Pointwise, (0, 0))?;
        let want = naive_pointwise_conv1d(&x, &w, Some(&b));
        worst = worst.max(tape.value(y).max_abs_diff(&want)?);
    }
    Ok(CheckResult::new("oracle/conv1d_pointwise", worst, ORACLE_TOL))
}

fn oracle_conv2d(scale: Scale) -> Result<CheckResult> {
    let seeds = match scale {
        Scale::Small => 2,
        Scale::Full => 10,
    };
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = stream_rng(seed, Stream::Input);
        for stride in [1usize, 2] {
            let x = rand_tensor(&mut rng, &[8, 7, 2]);
            let kernel = rand_tensor(&mut rng, &[3, 3, 2, 4]);
            let mut tape = Tape::<f64>::no_grad();
            let xv = tape.leaf(x.clone(), false);
            let kv = tape.leaf(kernel.clone(), false);
            let y = conv2d(&mut tape, xv, kv, stride)?;
            let want = naive_conv2d(&x, &kernel, stride);
            worst = worst.max(tape.value(y).max_abs_diff(&want)?);
        }
    }
    Ok(CheckResult::new("oracle/conv2d", worst, ORACLE_TOL))
}

fn oracle_glu(scale: Scale) -> Result<CheckResult> {
    let seeds = match scale {
        Scale::Small => 3,
        Scale::Full => 20,
    };
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = stream_rng(seed, Stream::Input);
        let x = rand_tensor(&mut rng, &[6, 8]);
        let mut tape = Tape::<f64>::no_grad();
        let xv = tape.leaf(x.clone(), false);
        let y = glu(&mut tape, xv)?;
        worst = worst.max(tape.value(y).max_abs_diff(&naive_glu(&x))?);
    }
    Ok(CheckResult::new("oracle/glu", worst, ORACLE_TOL))
}

fn oracle_se(scale: Scale) -> Result<CheckResult> {
    let seeds = match scale {
        Scale::Small => 3,
        Scale::Full => 20,
    };
    let d = 8;
    let b = se_bottleneck(d);
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = stream_rng(seed, Stream::Input);
        let x = rand_tensor(&mut rng, &[7, d]);
        let w1 = rand_tensor(&mut rng, &[d, b]);
        let b1 = rand_tensor(&mut rng, &[b]);
        let w2 = rand_tensor(&mut rng, &[b, d]);
        let b2 = rand_tensor(&mut rng, &[d]);
        let mut tape = Tape::<f64>::no_grad();
        let p = SeParams {
            w1: tape.leaf(w1.clone(), false),
            b1: tape.leaf(b1.clone(), false),
            w2: tape.leaf(w2.clone(), false),
            b2: tape.leaf(b2.clone(), false),
        };
        let xv = tape.leaf(x.clone(), false);
        let mut ctx = ForwardCtx::infer();
        let y = squeeze_excite(
            &mut tape,
            xv,
            &p,
            crate::modules::SePooling::Global,
            Act::Swish,
            &mut ctx,
        )?;
        let want = naive_se_global(&x, &w1, &b1, &w2, &b2);
        worst = worst.max(tape.value(y).max_abs_diff(&want)?);
    }
    Ok(CheckResult::new("oracle/se_global", worst, ORACLE_TOL))
}

/// Criterion sweep: the shift-trick scores must match brute-force offset
/// indexing for every length up to 16, heads 1/2/4, head widths 4/8.
fn oracle_relpos(scale: Scale) -> Result<CheckResult> {
    let (ts, seeds): (Vec<usize>, u64) = match scale {
        Scale::Small => (vec![1, 5, 9, 16], 5),
        Scale::Full => ((1..=16).collect(), 50),
    };
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = stream_rng(seed, Stream::Input);
        for &t in &ts {
            for heads in [1usize, 2, 4] {
                for dh in [4usize, 8] {
                    let mut tape = Tape::<f64>::no_grad();
                    let mut qs = Vec::new();
                    let mut ks = Vec::new();
                    let mut rs = Vec::new();
                    let mut us = Vec::new();
                    let mut vs = Vec::new();
                    let mut raw = Vec::new();
                    for _ in 0..heads {
                        let q = rand_tensor(&mut rng, &[t, dh]);
                        let k = rand_tensor(&mut rng, &[t, dh]);
                        let r = rand_tensor(&mut rng, &[2 * t - 1, dh]);
                        let u = rand_tensor(&mut rng, &[dh]);
                        let v = rand_tensor(&mut rng, &[dh]);
                        qs.push(tape.leaf(q.clone(), false));
                        ks.push(tape.leaf(k.clone(), false));
                        rs.push(tape.leaf(r.clone(), false));
                        us.push(tape.leaf(u.clone(), false));
                        vs.push(tape.leaf(v.clone(), false));
                        raw.push((q, k, r, u, v));
                    }
                    let scores = attention_scores_relpos(&mut tape, &qs, &ks, &rs, &us, &vs)?;
                    for (h, s) in scores.iter().enumerate() {
                        let (q, k, r, u, v) = &raw[h];
                        let want = brute_force_relpos_scores(q, k, r, u, v);
                        worst = worst.max(tape.value(*s).max_abs_diff(&want)?);
                    }
                }
            }
        }
    }
    Ok(CheckResult::new("oracle/relpos_shift_trick", worst, ORACLE_TOL))
}

fn run_oracle(scale: Scale) -> Result<Vec<CheckResult>> {
    Ok(vec![
        oracle_matmul(scale)?,
        oracle_conv1d_depthwise(scale)?,
        oracle_conv1d_pointwise(scale)?,
        oracle_conv2d(scale)?,
        oracle_glu(scale)?,
        oracle_se(scale)?,
        oracle_relpos(scale)?,
    ])
}

/// Run the requested suites and return one result row per named check.
pub fn run_verify(suite: Suite, scale: Scale, fault: Fault) -> Result<Vec<CheckResult>> {
    let mut results = Vec::new();
    if matches!(suite, Suite::GradCheck | Suite::All) {
        results.extend(run_gradcheck(scale, fault)?);
    }
    if matches!(suite, Suite::Oracle | Suite::All) {
        results.extend(run_oracle(scale)?);
    }
    Ok(results)
}
