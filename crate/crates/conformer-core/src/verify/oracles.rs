//! Naive reference implementations used as numerical oracles.
//!
//! Everything here is written as plain scalar loops with no shared code
//! paths into the tensor ops, so agreement between an op and its oracle is
//! meaningful evidence rather than a tautology.

use crate::ops::sigmoid_scalar;
use crate::tensor::Tensor;

/// Triple-loop matrix product.
pub fn naive_matmul(a: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (m, k) = (a.dim(0), a.dim(1));
    let n = b.dim(1);
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a.at2(i, p) * b.at2(p, j);
            }
            out.data_mut()[i * n + j] = acc;
        }
    }
    out
}

/// Depthwise convolution over time with explicit zero padding.
pub fn naive_depthwise_conv1d(
    x: &Tensor<f64>,
    kernel: &Tensor<f64>,
    bias: Option<&Tensor<f64>>,
    padding: (usize, usize),
) -> Tensor<f64> {
    let (t, c) = (x.dim(0), x.dim(1));
    let k = kernel.dim(0);
    let t_out = t + padding.0 + padding.1 - k + 1;
    let mut out = Tensor::zeros(&[t_out, c]);
    for i in 0..t_out {
        for ch in 0..c {
            let mut acc = 0.0;
            for j in 0..k {
                // position in the padded sequence, mapped back to x
                let p = i + j;
                if p >= padding.0 && p - padding.0 < t {
                    acc += x.at2(p - padding.0, ch) * kernel.at2(j, ch);
                }
            }
            if let Some(b) = bias {
                acc += b.data()[ch];
            }
            out.data_mut()[i * c + ch] = acc;
        }
    }
    out
}

/// Pointwise (1x1) convolution: per-frame linear map.
pub fn naive_pointwise_conv1d(
    x: &Tensor<f64>,
    weight: &Tensor<f64>,
    bias: Option<&Tensor<f64>>,
) -> Tensor<f64> {
    let (t, c_in) = (x.dim(0), x.dim(1));
    let c_out = weight.dim(1);
    let mut out = Tensor::zeros(&[t, c_out]);
    for i in 0..t {
        for o in 0..c_out {
            let mut acc = 0.0;
            for ch in 0..c_in {
                acc += x.at2(i, ch) * weight.at2(ch, o);
            }
            if let Some(b) = bias {
                acc += b.data()[o];
            }
            out.data_mut()[i * c_out + o] = acc;
        }
    }
    out
}

/// Valid 2-D convolution with equal stride on both spatial axes.
pub fn naive_conv2d(x: &Tensor<f64>, kernel: &Tensor<f64>, stride: usize) -> Tensor<f64> {
    let (t, f, c) = (x.dim(0), x.dim(1), x.dim(2));
    let (kt, kf, _, o) = (kernel.dim(0), kernel.dim(1), kernel.dim(2), kernel.dim(3));
    let t_out = (t - kt) / stride + 1;
    let f_out = (f - kf) / stride + 1;
    let mut out = Tensor::zeros(&[t_out, f_out, o]);
    for ti in 0..t_out {
        for fi in 0..f_out {
            for oi in 0..o {
                let mut acc = 0.0;
                for dt in 0..kt {
                    for df in 0..kf {
                        for ci in 0..c {
                            acc += x.at3(ti * stride + dt, fi * stride + df, ci)
                                * kernel.data()[((dt * kf + df) * c + ci) * o + oi];
                        }
                    }
                }
                out.data_mut()[(ti * f_out + fi) * o + oi] = acc;
            }
        }
    }
    out
}

/// GLU as an explicit split and multiply: `a * sigmoid(b)` over column halves.
pub fn naive_glu(x: &Tensor<f64>) -> Tensor<f64> {
    let (t, c2) = (x.dim(0), x.dim(1));
    let c = c2 / 2;
    let mut out = Tensor::zeros(&[t, c]);
    for i in 0..t {
        for j in 0..c {
            out.data_mut()[i * c + j] = x.at2(i, j) * sigmoid_scalar(x.at2(i, j + c));
        }
    }
    out
}

fn swish(x: f64) -> f64 {
    x * sigmoid_scalar(x)
}

/// Squeeze-and-excitation with global mean pooling, written directly from
/// the gating formula `y = x * sigmoid(w2 . swish(w1 . pool(x) + b1) + b2)`.
pub fn naive_se_global(
    x: &Tensor<f64>,
    w1: &Tensor<f64>,
    b1: &Tensor<f64>,
    w2: &Tensor<f64>,
    b2: &Tensor<f64>,
) -> Tensor<f64> {
    let (t, d) = (x.dim(0), x.dim(1));
    let bottleneck = w1.dim(1);
    let mut pooled = vec![0.0f64; d];
    for i in 0..t {
        for j in 0..d {
            pooled[j] += x.at2(i, j) / t as f64;
        }
    }
    let mut hidden = vec![0.0f64; bottleneck];
    for h in 0..bottleneck {
        let mut acc = b1.data()[h];
        for j in 0..d {
            acc += pooled[j] * w1.at2(j, h);
        }
        hidden[h] = swish(acc);
    }
    let mut gate = vec![0.0f64; d];
    for (j, g) in gate.iter_mut().enumerate() {
        let mut acc = b2.data()[j];
        for (h, hv) in hidden.iter().enumerate() {
            acc += hv * w2.at2(h, j);
        }
        *g = sigmoid_scalar(acc);
    }
    Tensor::from_fn(&[t, d], |idx| {
        let (i, j) = (idx / d, idx % d);
        x.at2(i, j) * gate[j]
    })
}

/// Relative attention scores by direct offset indexing, one (i, j) pair at
/// a time: `((q_i + u) . k_j + (q_i + v) . r_{i-j}) / sqrt(d_head)`.
///
/// `r_table` holds offsets `t-1 .. -(t-1)` top to bottom, so offset `o`
/// lives at row `t - 1 - o`.
pub fn brute_force_relpos_scores(
    q: &Tensor<f64>,
    k: &Tensor<f64>,
    r_table: &Tensor<f64>,
    u: &Tensor<f64>,
    v: &Tensor<f64>,
) -> Tensor<f64> {
    let (t, dh) = (q.dim(0), q.dim(1));
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Tensor::zeros(&[t, t]);
    for i in 0..t {
        for j in 0..t {
            let offset = i as i64 - j as i64;
            let row = (t as i64 - 1 - offset) as usize;
            let mut content = 0.0;
            let mut pos = 0.0;
            for c in 0..dh {
                content += (q.at2(i, c) + u.data()[c]) * k.at2(j, c);
                pos += (q.at2(i, c) + v.data()[c]) * r_table.at2(row, c);
            }
            out.data_mut()[i * t + j] = (content + pos) * scale;
        }
    }
    out
}
