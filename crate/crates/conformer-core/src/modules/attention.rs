//! Multi-head self-attention with relative positional encoding.
//!
//! Relative scores follow the Transformer-XL form: for query i and key j,
//! `score[i][j] = ((q_i + u) . k_j + (q_i + v) . r_{i-j}) / sqrt(d_head)`
//! where `r_o` is the projected sinusoid row for offset `o`, and u, v are
//! learned per-head bias vectors. The position term is computed for all
//! offsets at once and realigned with the rel-shift trick. An absolute
//! variant drops the position term entirely; fixed sinusoids are then
//! added once to the encoder input instead.

use crate::ctx::ForwardCtx;
use crate::error::{Error, Result};
use crate::ops::{
    add, add_row, concat_cols, dropout, layer_norm, matmul, rel_shift, reshape, scale, slice_cols,
    softmax, transpose,
};
use crate::params::{MountedParams, SchemaEntry};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// One sinusoid row for a signed offset: `row[2i] = sin(o / 10000^(2i/d))`
/// and `row[2i+1] = cos` of the same angle.
fn sinusoid_row(offset: f64, d: usize, write: &mut dyn FnMut(usize, f64)) {
    let mut i = 0;
    while 2 * i < d {
        let angle = offset / 10000f64.powf((2 * i) as f64 / d as f64);
        write(2 * i, angle.sin());
        if 2 * i + 1 < d {
            write(2 * i + 1, angle.cos());
        }
        i += 1;
    }
}

/// Sinusoid table for relative offsets, shape `[2t - 1, d]`, rows ordered
/// by descending offset `t-1, t-2, ..., -(t-1)` so that offset `o` lives
/// at row `t - 1 - o`.
pub fn relative_positions<S: Scalar>(t: usize, d: usize) -> Tensor<S> {
    let rows = 2 * t - 1;
    let mut data = vec![S::default(); rows * d];
    for m in 0..rows {
        let offset = (t as i64 - 1 - m as i64) as f64;
        sinusoid_row(offset, d, &mut |c, v| data[m * d + c] = S::from_f64(v));
    }
    Tensor::new(vec![rows, d], data).expect("sinusoid table shape")
}

/// Sinusoid table for absolute positions `0..t`, shape `[t, d]`.
pub fn absolute_positions<S: Scalar>(t: usize, d: usize) -> Tensor<S> {
    let mut data = vec![S::default(); t * d];
    for pos in 0..t {
        sinusoid_row(pos as f64, d, &mut |c, v| data[pos * d + c] = S::from_f64(v));
    }
    Tensor::new(vec![t, d], data).expect("sinusoid table shape")
}

/// Relative attention scores for each head.
///
/// Per head: `q`, `k` are `[t, d_head]`, `r` is the projected sinusoid
/// table `[2t - 1, d_head]`, and `u`, `v` are `[d_head]`. Returns the
/// scaled `[t, t]` score matrix per head.
pub fn attention_scores_relpos<S: Scalar>(
    tape: &mut Tape<S>,
    q: &[Var],
    k: &[Var],
    r: &[Var],
    u: &[Var],
    v: &[Var],
) -> Result<Vec<Var>> {
    let heads = q.len();
    if [k.len(), r.len(), u.len(), v.len()] != [heads; 4] {
        return Err(Error::dimension(
            "attention_scores_relpos",
            "per-head argument lists must have equal length",
        ));
    }
    let mut scores = Vec::with_capacity(heads);
    for h in 0..heads {
        let dh = tape.shape(q[h])[1];
        let qu = add_row(tape, q[h], u[h])?;
        let kt = transpose(tape, k[h])?;
        let content = matmul(tape, qu, kt)?;
        let qv = add_row(tape, q[h], v[h])?;
        let rt = transpose(tape, r[h])?;
        let pos = matmul(tape, qv, rt)?;
        let shifted = rel_shift(tape, pos)?;
        let sum = add(tape, content, shifted)?;
        scores.push(scale(tape, sum, S::from_f64(1.0 / (dh as f64).sqrt())));
    }
    Ok(scores)
}

#[derive(Debug, Clone, Copy)]
pub struct RelParams {
    pub wr: Var,
    pub u: Var,
    pub v: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct MhsaParams {
    pub ln_gamma: Var,
    pub ln_beta: Var,
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    /// Relative-position parameters; `None` selects the absolute variant
    /// (plain scaled dot-product).
    pub rel: Option<RelParams>,
    pub heads: usize,
}

impl MhsaParams {
    pub fn schema(prefix: &str, d: usize, relative: bool) -> Vec<SchemaEntry> {
        let mut entries = vec![
            SchemaEntry::ones(format!("{prefix}/ln/gamma"), vec![d]),
            SchemaEntry::zeros(format!("{prefix}/ln/beta"), vec![d]),
            SchemaEntry::weight(format!("{prefix}/wq"), vec![d, d], d, d),
            SchemaEntry::weight(format!("{prefix}/wk"), vec![d, d], d, d),
            SchemaEntry::weight(format!("{prefix}/wv"), vec![d, d], d, d),
            SchemaEntry::weight(format!("{prefix}/wo"), vec![d, d], d, d),
        ];
        if relative {
            entries.push(SchemaEntry::weight(format!("{prefix}/wr"), vec![d, d], d, d));
            entries.push(SchemaEntry::zeros(format!("{prefix}/u"), vec![d]));
            entries.push(SchemaEntry::zeros(format!("{prefix}/v"), vec![d]));
        }
        entries
    }

    pub fn mount<S: Scalar>(
        m: &MountedParams<S>,
        prefix: &str,
        heads: usize,
        relative: bool,
    ) -> Result<Self> {
        let rel = if relative {
            Some(RelParams {
                wr: m.var(&format!("{prefix}/wr"))?,
                u: m.var(&format!("{prefix}/u"))?,
                v: m.var(&format!("{prefix}/v"))?,
            })
        } else {
            None
        };
        Ok(MhsaParams {
            ln_gamma: m.var(&format!("{prefix}/ln/gamma"))?,
            ln_beta: m.var(&format!("{prefix}/ln/beta"))?,
            wq: m.var(&format!("{prefix}/wq"))?,
            wk: m.var(&format!("{prefix}/wk"))?,
            wv: m.var(&format!("{prefix}/wv"))?,
            wo: m.var(&format!("{prefix}/wo"))?,
            rel,
            heads,
        })
    }
}

/// Slice head `h` out of a rank-1 packed vector of width `heads * dh`.
fn head_of_vector<S: Scalar>(tape: &mut Tape<S>, packed: Var, h: usize, dh: usize) -> Result<Var> {
    let d = tape.shape(packed)[0];
    let row = reshape(tape, packed, vec![1, d])?;
    let part = slice_cols(tape, row, h * dh, dh)?;
    reshape(tape, part, vec![dh])
}

pub fn mhsa<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    p: &MhsaParams,
    dropout_p: f64,
    ln_eps: f64,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 2 {
        return Err(Error::dimension("mhsa", "input must have rank 2"));
    }
    let (t, d) = (shape[0], shape[1]);
    if d % p.heads != 0 {
        return Err(Error::Config(format!(
            "d_model {d} is not divisible by {} heads",
            p.heads
        )));
    }
    let dh = d / p.heads;

    let xn = layer_norm(tape, x, p.ln_gamma, p.ln_beta, ln_eps)?;
    let q = matmul(tape, xn, p.wq)?;
    let k = matmul(tape, xn, p.wk)?;
    let v = matmul(tape, xn, p.wv)?;

    let mut q_h = Vec::with_capacity(p.heads);
    let mut k_h = Vec::with_capacity(p.heads);
    let mut v_h = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        q_h.push(slice_cols(tape, q, h * dh, dh)?);
        k_h.push(slice_cols(tape, k, h * dh, dh)?);
        v_h.push(slice_cols(tape, v, h * dh, dh)?);
    }

    let scores = match &p.rel {
        Some(rel) => {
            let table = tape.constant(relative_positions::<S>(t, d));
            let r_proj = matmul(tape, table, rel.wr)?;
            let mut r_h = Vec::with_capacity(p.heads);
            let mut u_h = Vec::with_capacity(p.heads);
            let mut vv_h = Vec::with_capacity(p.heads);
            for h in 0..p.heads {
                r_h.push(slice_cols(tape, r_proj, h * dh, dh)?);
                u_h.push(head_of_vector(tape, rel.u, h, dh)?);
                vv_h.push(head_of_vector(tape, rel.v, h, dh)?);
            }
            attention_scores_relpos(tape, &q_h, &k_h, &r_h, &u_h, &vv_h)?
        }
        None => {
            let mut plain = Vec::with_capacity(p.heads);
            for h in 0..p.heads {
                let kt = transpose(tape, k_h[h])?;
                let raw = matmul(tape, q_h[h], kt)?;
                plain.push(scale(tape, raw, S::from_f64(1.0 / (dh as f64).sqrt())));
            }
            plain
        }
    };

    let mut heads_out = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        let attn = softmax(tape, scores[h], 1)?;
        heads_out.push(matmul(tape, attn, v_h[h])?);
    }
    let cat = concat_cols(tape, &heads_out)?;
    let out = matmul(tape, cat, p.wo)?;
    dropout(tape, out, dropout_p, ctx)
}
