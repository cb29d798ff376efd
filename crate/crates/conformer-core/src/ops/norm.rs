//! Layer and batch normalization.

use crate::ctx::Mode;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Running statistics carried by a batch-norm layer, one entry per channel.
#[derive(Debug, Clone)]
pub struct BatchNormState<S: Scalar> {
    pub mean: Tensor<S>,
    pub var: Tensor<S>,
}

impl<S: Scalar> BatchNormState<S> {
    /// Fresh state: zero mean, unit variance.
    pub fn identity(channels: usize) -> Self {
        BatchNormState {
            mean: Tensor::zeros(&[channels]),
            var: Tensor::ones(&[channels]),
        }
    }
}

/// Normalize over the last axis: `y = gamma * (x - mu) / sqrt(var + eps) + beta`
/// with per-row mean and population variance.
pub fn layer_norm<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    gamma: Var,
    beta: Var,
    eps: f64,
) -> Result<Var> {
    let xv = tape.value(x).clone();
    let gv = tape.value(gamma).clone();
    let bv = tape.value(beta).clone();
    if xv.rank() == 0 {
        return Err(Error::dimension("layer_norm", "input must have rank >= 1"));
    }
    let d = *xv.shape().last().unwrap();
    if gv.shape() != [d] || bv.shape() != [d] {
        return Err(Error::ShapeMismatch {
            op: "layer_norm",
            lhs: xv.shape().to_vec(),
            rhs: gv.shape().to_vec(),
        });
    }
    if eps <= 0.0 {
        return Err(Error::Config(format!(
            "layer_norm eps must be > 0, got {eps}"
        )));
    }
    let rows = xv.len() / d;
    let epss = S::from_f64(eps);
    let dn = S::from_f64(d as f64);
    let mut xhat = vec![S::zero(); rows * d];
    let mut inv_std = vec![S::zero(); rows];
    let mut out = vec![S::zero(); rows * d];
    for r in 0..rows {
        let row = &xv.data()[r * d..(r + 1) * d];
        let mut mean = S::zero();
        for &v in row {
            mean = mean + v;
        }
        mean = mean / dn;
        let mut var = S::zero();
        for &v in row {
            var = var + (v - mean) * (v - mean);
        }
        var = var / dn;
        let is = S::one() / (var + epss).sqrt();
        inv_std[r] = is;
        for j in 0..d {
            let xh = (row[j] - mean) * is;
            xhat[r * d + j] = xh;
            out[r * d + j] = gv.data()[j] * xh + bv.data()[j];
        }
    }
    let out = Tensor::new(xv.shape().to_vec(), out)?;
    let shape = xv.shape().to_vec();
    Ok(tape.push(out, &[x, gamma, beta], move |g, store| {
        let mut dgamma = vec![S::zero(); d];
        let mut dbeta = vec![S::zero(); d];
        let mut dx = vec![S::zero(); rows * d];
        for r in 0..rows {
            let grow = &g.data()[r * d..(r + 1) * d];
            let xh = &xhat[r * d..(r + 1) * d];
            let mut sum_dxh = S::zero();
            let mut sum_dxh_xh = S::zero();
            for j in 0..d {
                let dxh = grow[j] * gv.data()[j];
                sum_dxh = sum_dxh + dxh;
                sum_dxh_xh = sum_dxh_xh + dxh * xh[j];
                dgamma[j] = dgamma[j] + grow[j] * xh[j];
                dbeta[j] = dbeta[j] + grow[j];
            }
            let m1 = sum_dxh / dn;
            let m2 = sum_dxh_xh / dn;
            for j in 0..d {
                let dxh = grow[j] * gv.data()[j];
                dx[r * d + j] = inv_std[r] * (dxh - m1 - xh[j] * m2);
            }
        }
        store.accumulate(x.index(), Tensor::new(shape.clone(), dx).unwrap());
        store.accumulate(gamma.index(), Tensor::new(vec![d], dgamma).unwrap());
        store.accumulate(beta.index(), Tensor::new(vec![d], dbeta).unwrap());
    }))
}

/// Per-channel batch statistics of a `[T, C]` input: mean and population
/// variance over the time axis.
pub fn batch_stats<S: Scalar>(x: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>)> {
    if x.rank() != 2 {
        return Err(Error::dimension("batch_stats", "input must have rank 2"));
    }
    let (t, c) = (x.dim(0), x.dim(1));
    let tn = S::from_f64(t as f64);
    let mut mean = vec![S::zero(); c];
    let mut var = vec![S::zero(); c];
    for ti in 0..t {
        for ci in 0..c {
            mean[ci] = mean[ci] + x.data()[ti * c + ci];
        }
    }
    for m in &mut mean {
        *m = *m / tn;
    }
    for ti in 0..t {
        for ci in 0..c {
            let dlt = x.data()[ti * c + ci] - mean[ci];
            var[ci] = var[ci] + dlt * dlt;
        }
    }
    for v in &mut var {
        *v = *v / tn;
    }
    Ok((Tensor::new(vec![c], mean)?, Tensor::new(vec![c], var)?))
}

/// Batch normalization over the time axis of a `[T, C]` input.
///
/// Train mode normalizes with the current batch statistics; infer mode uses
/// the running statistics in `state`. When `update` is supplied in train
/// mode, the running statistics are refreshed in place as
/// `r <- momentum * r + (1 - momentum) * batch_stat`.
#[allow(clippy::too_many_arguments)]
pub fn batch_norm<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    gamma: Var,
    beta: Var,
    state: &BatchNormState<S>,
    eps: f64,
    mode: Mode,
    update: Option<(&mut BatchNormState<S>, f64)>,
) -> Result<Var> {
    let xv = tape.value(x).clone();
    let gv = tape.value(gamma).clone();
    let bv = tape.value(beta).clone();
    if xv.rank() != 2 {
        return Err(Error::dimension("batch_norm", "input must have rank 2"));
    }
    let (t, c) = (xv.dim(0), xv.dim(1));
    if gv.shape() != [c]
        || bv.shape() != [c]
        || state.mean.shape() != [c]
        || state.var.shape() != [c]
    {
        return Err(Error::ShapeMismatch {
            op: "batch_norm",
            lhs: xv.shape().to_vec(),
            rhs: gv.shape().to_vec(),
        });
    }
    if eps <= 0.0 {
        return Err(Error::Config(format!(
            "batch_norm eps must be > 0, got {eps}"
        )));
    }
    let epss = S::from_f64(eps);
    match mode {
        Mode::Infer => {
            // Running stats are constants: y is an affine map of x per channel.
            let mut sc = vec![S::zero(); c];
            let mut sh = vec![S::zero(); c];
            for ci in 0..c {
                let is = S::one() / (state.var.data()[ci] + epss).sqrt();
                sc[ci] = gv.data()[ci] * is;
                sh[ci] = bv.data()[ci] - state.mean.data()[ci] * sc[ci];
            }
            let rm = state.mean.clone();
            let rv = state.var.clone();
            let scf = sc.clone();
            let out = Tensor::from_fn(&[t, c], |i| xv.data()[i] * sc[i % c] + sh[i % c]);
            Ok(tape.push(out, &[x, gamma, beta], move |g, store| {
                let mut dx = vec![S::zero(); t * c];
                let mut dgamma = vec![S::zero(); c];
                let mut dbeta = vec![S::zero(); c];
                for ti in 0..t {
                    for ci in 0..c {
                        let gi = g.data()[ti * c + ci];
                        let is = S::one() / (rv.data()[ci] + epss).sqrt();
                        dx[ti * c + ci] = gi * scf[ci];
                        dgamma[ci] =
                            dgamma[ci] + gi * (xv.data()[ti * c + ci] - rm.data()[ci]) * is;
                        dbeta[ci] = dbeta[ci] + gi;
                    }
                }
                store.accumulate(x.index(), Tensor::new(vec![t, c], dx).unwrap());
                store.accumulate(gamma.index(), Tensor::new(vec![c], dgamma).unwrap());
                store.accumulate(beta.index(), Tensor::new(vec![c], dbeta).unwrap());
            }))
        }
        Mode::Train => {
            let (bmean, bvar) = batch_stats(&xv)?;
            if let Some((st, momentum)) = update {
                if !(0.0..=1.0).contains(&momentum) {
                    return Err(Error::Config(format!(
                        "batch_norm momentum must lie in [0, 1], got {momentum}"
                    )));
                }
                let m = S::from_f64(momentum);
                let om = S::one() - m;
                st.mean = st.mean.zip_map(&bmean, |r, b| m * r + om * b)?;
                st.var = st.var.zip_map(&bvar, |r, b| m * r + om * b)?;
            }
            let tn = S::from_f64(t as f64);
            let mut inv_std = vec![S::zero(); c];
            let mut xhat = vec![S::zero(); t * c];
            let mut out = vec![S::zero(); t * c];
            for ci in 0..c {
                inv_std[ci] = S::one() / (bvar.data()[ci] + epss).sqrt();
            }
            for ti in 0..t {
                for ci in 0..c {
                    let xh = (xv.data()[ti * c + ci] - bmean.data()[ci]) * inv_std[ci];
                    xhat[ti * c + ci] = xh;
                    out[ti * c + ci] = gv.data()[ci] * xh + bv.data()[ci];
                }
            }
            let out = Tensor::new(vec![t, c], out)?;
            Ok(tape.push(out, &[x, gamma, beta], move |g, store| {
                let mut dgamma = vec![S::zero(); c];
                let mut dbeta = vec![S::zero(); c];
                let mut sum_dxh = vec![S::zero(); c];
                let mut sum_dxh_xh = vec![S::zero(); c];
                for ti in 0..t {
                    for ci in 0..c {
                        let gi = g.data()[ti * c + ci];
                        let dxh = gi * gv.data()[ci];
                        sum_dxh[ci] = sum_dxh[ci] + dxh;
                        sum_dxh_xh[ci] = sum_dxh_xh[ci] + dxh * xhat[ti * c + ci];
                        dgamma[ci] = dgamma[ci] + gi * xhat[ti * c + ci];
                        dbeta[ci] = dbeta[ci] + gi;
                    }
                }
                let mut dx = vec![S::zero(); t * c];
                for ti in 0..t {
                    for ci in 0..c {
                        let dxh = g.data()[ti * c + ci] * gv.data()[ci];
                        dx[ti * c + ci] = inv_std[ci]
                            * (dxh - sum_dxh[ci] / tn - xhat[ti * c + ci] * sum_dxh_xh[ci] / tn);
                    }
                }
                store.accumulate(x.index(), Tensor::new(vec![t, c], dx).unwrap());
                store.accumulate(gamma.index(), Tensor::new(vec![c], dgamma).unwrap());
                store.accumulate(beta.index(), Tensor::new(vec![c], dbeta).unwrap());
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_norm_rows_are_standardized() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(
            Tensor::new(vec![2, 4], vec![1., 2., 3., 4., -2., 0., 2., 4.]).unwrap(),
            true,
        );
        let g = tape.leaf(Tensor::ones(&[4]), true);
        let b = tape.leaf(Tensor::zeros(&[4]), true);
        let y = layer_norm(&mut tape, x, g, b, 1e-12).unwrap();
        let yv = tape.value(y);
        for r in 0..2 {
            let row = &yv.data()[r * 4..(r + 1) * 4];
            let mean: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn layer_norm_affine_params_apply() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1, 2], vec![0., 2.]).unwrap(), true);
        let g = tape.leaf(Tensor::filled(&[2], 3.0), true);
        let b = tape.leaf(Tensor::filled(&[2], 10.0), true);
        let y = layer_norm(&mut tape, x, g, b, 1e-12).unwrap();
        // xhat = [-1, 1]
        assert!((tape.value(y).data()[0] - 7.0).abs() < 1e-9);
        assert!((tape.value(y).data()[1] - 13.0).abs() < 1e-9);
    }

    #[test]
    fn batch_infer_reproduces_affine_formula() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2, 2], vec![1., 2., 3., 4.]).unwrap(), true);
        let g = tape.leaf(Tensor::new(vec![2], vec![2., 1.]).unwrap(), true);
        let b = tape.leaf(Tensor::new(vec![2], vec![0., 5.]).unwrap(), true);
        let state = BatchNormState {
            mean: Tensor::new(vec![2], vec![1., 2.]).unwrap(),
            var: Tensor::new(vec![2], vec![4., 1.]).unwrap(),
        };
        let eps = 1e-5;
        let y = batch_norm(&mut tape, x, g, b, &state, eps, Mode::Infer, None).unwrap();
        let expect = |x: f64, m: f64, v: f64, g: f64, b: f64| (x - m) / (v + eps).sqrt() * g + b;
        let yv = tape.value(y);
        assert!((yv.data()[0] - expect(1., 1., 4., 2., 0.)).abs() < 1e-12);
        assert!((yv.data()[1] - expect(2., 2., 1., 1., 5.)).abs() < 1e-12);
        assert!((yv.data()[2] - expect(3., 1., 4., 2., 0.)).abs() < 1e-12);
        assert!((yv.data()[3] - expect(4., 2., 1., 1., 5.)).abs() < 1e-12);
    }

    #[test]
    fn batch_train_updates_running_stats_with_momentum() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::new(vec![4, 1], vec![0., 2., 4., 6.]).unwrap(), true);
        let g = tape.leaf(Tensor::ones(&[1]), true);
        let b = tape.leaf(Tensor::zeros(&[1]), true);
        let state = BatchNormState::<f64>::identity(1);
        let mut updated = state.clone();
        batch_norm(
            &mut tape,
            x,
            g,
            b,
            &state,
            1e-5,
            Mode::Train,
            Some((&mut updated, 0.9)),
        )
        .unwrap();
        // batch mean 3, population var 5
        assert!((updated.mean.data()[0] - (0.9 * 0.0 + 0.1 * 3.0)).abs() < 1e-12);
        assert!((updated.var.data()[0] - (0.9 * 1.0 + 0.1 * 5.0)).abs() < 1e-12);
    }

    #[test]
    fn batch_train_normalizes_with_batch_stats() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2, 1], vec![-1., 1.]).unwrap(), true);
        let g = tape.leaf(Tensor::ones(&[1]), true);
        let b = tape.leaf(Tensor::zeros(&[1]), true);
        let state = BatchNormState {
            mean: Tensor::filled(&[1], 100.0),
            var: Tensor::filled(&[1], 100.0),
        };
        let y = batch_norm(&mut tape, x, g, b, &state, 1e-12, Mode::Train, None).unwrap();
        // running stats ignored in train mode
        assert!((tape.value(y).data()[0] + 1.0).abs() < 1e-6);
        assert!((tape.value(y).data()[1] - 1.0).abs() < 1e-6);
    }
}
