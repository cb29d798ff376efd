//! Convolutional subsampling stem: two 3x3 stride-2 convolutions with
//! Swish, flattening to the model width. Reduces both the frame rate and
//! the feature axis by roughly 4x.

use crate::ctx::ForwardCtx;
use crate::error::{Error, Result};
use crate::ops::{activation, add_row, conv2d, dropout, matmul, reshape, Act};
use crate::params::{MountedParams, SchemaEntry};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};

/// Output extent of one valid 3-wide stride-2 convolution.
fn conv_out(n: usize) -> Option<usize> {
    n.checked_sub(3).map(|m| m / 2 + 1)
}

/// Time and feature extents after both convolutions, if the input is large
/// enough (at least 7 in each axis).
pub fn subsample_out_dims(t: usize, f: usize) -> Option<(usize, usize)> {
    let t2 = conv_out(conv_out(t)?)?;
    let f2 = conv_out(conv_out(f)?)?;
    Some((t2, f2))
}

#[derive(Debug, Clone, Copy)]
pub struct SubsampleParams {
    pub k1: Var,
    pub k2: Var,
    pub proj_w: Var,
    pub proj_b: Var,
}

impl SubsampleParams {
    /// Schema for `n_mels` input features and model width `d`. The conv
    /// channel width equals `d`; the convolutions carry no bias.
    pub fn schema(prefix: &str, n_mels: usize, d: usize) -> Result<Vec<SchemaEntry>> {
        let (_, f2) = subsample_out_dims(7, n_mels).ok_or_else(|| {
            Error::Config(format!("subsample needs at least 7 features, got {n_mels}"))
        })?;
        let c = d;
        Ok(vec![
            SchemaEntry::weight(format!("{prefix}/conv1/kernel"), vec![3, 3, 1, c], 9, 9 * c),
            SchemaEntry::weight(
                format!("{prefix}/conv2/kernel"),
                vec![3, 3, c, c],
                9 * c,
                9 * c,
            ),
            SchemaEntry::weight(format!("{prefix}/proj/weight"), vec![f2 * c, d], f2 * c, d),
            SchemaEntry::zeros(format!("{prefix}/proj/bias"), vec![d]),
        ])
    }

    pub fn mount<S: Scalar>(m: &MountedParams<S>, prefix: &str) -> Result<Self> {
        Ok(SubsampleParams {
            k1: m.var(&format!("{prefix}/conv1/kernel"))?,
            k2: m.var(&format!("{prefix}/conv2/kernel"))?,
            proj_w: m.var(&format!("{prefix}/proj/weight"))?,
            proj_b: m.var(&format!("{prefix}/proj/bias"))?,
        })
    }
}

/// Subsample a `[T, F]` feature matrix to `[T'', d]`.
pub fn conv_subsample<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    p: &SubsampleParams,
    dropout_p: f64,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 2 {
        return Err(Error::dimension("conv_subsample", "input must have rank 2"));
    }
    let (t, f) = (shape[0], shape[1]);
    let (t2, f2) = subsample_out_dims(t, f).ok_or_else(|| {
        Error::dimension(
            "conv_subsample",
            format!("input {t}x{f} is too small for two 3x3 stride-2 convolutions"),
        )
    })?;
    let h = reshape(tape, x, vec![t, f, 1])?;
    let h = conv2d(tape, h, p.k1, 2)?;
    let h = activation(tape, h, Act::Swish);
    let h = conv2d(tape, h, p.k2, 2)?;
    let h = activation(tape, h, Act::Swish);
    let c = tape.shape(h)[2];
    let h = reshape(tape, h, vec![t2, f2 * c])?;
    let h = matmul(tape, h, p.proj_w)?;
    let h = add_row(tape, h, p.proj_b)?;
    dropout(tape, h, dropout_p, ctx)
}
