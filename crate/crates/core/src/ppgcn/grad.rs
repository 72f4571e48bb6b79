//! Pairwise cross-entropy loss and its exact gradients with respect to both
//! layer weights and the meta-path weight logits.

use ndarray::{Array1, Array2, Axis, Zip};

use super::{forward_pass, ModelParams, PairHead, ANGLE_GAIN};
use super::train::{PairLabel, PairSample};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w0: Array2<f64>,
    pub w1: Array2<f64>,
    pub omega_logits: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchLoss {
    /// Mean binary cross-entropy over scored pairs.
    pub loss: f64,
    pub grads: Gradients,
    pub scored: usize,
    /// Pairs skipped because a representation had zero length.
    pub zero_norm: usize,
}

/// `log(1 + e^v)` without overflow.
fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

/// Accumulates `dL/dlogit` for one pair into the rows of `grad_z`.
fn pair_backward(
    head: PairHead,
    z: &Array2<f64>,
    pair: &PairSample,
    c: f64,
    dlogit: f64,
    grad_z: &mut Array2<f64>,
) {
    let (zi, zj) = (z.row(pair.i), z.row(pair.j));
    let ni = zi.dot(&zi).sqrt();
    let nj = zj.dot(&zj).sqrt();
    match head {
        PairHead::Popularity => {
            // logit = -log10(x - 1 + c), x = n_big / n_small
            let (big, small, nb, ns) = if ni >= nj {
                (pair.i, pair.j, ni, nj)
            } else {
                (pair.j, pair.i, nj, ni)
            };
            let x = nb / ns;
            let dx = -dlogit / ((x - 1.0 + c) * std::f64::consts::LN_10);
            let d_nb = dx / ns;
            let d_ns = -dx * nb / (ns * ns);
            let zb = z.row(big).to_owned();
            let zs = z.row(small).to_owned();
            grad_z.row_mut(big).scaled_add(d_nb / nb, &zb);
            grad_z.row_mut(small).scaled_add(d_ns / ns, &zs);
        }
        PairHead::Angle => {
            let cos = zi.dot(&zj) / (ni * nj);
            let dcos = dlogit * ANGLE_GAIN;
            let (zi, zj) = (zi.to_owned(), zj.to_owned());
            let gi = &zj / (ni * nj) - &zi * (cos / (ni * ni));
            let gj = &zi / (ni * nj) - &zj * (cos / (nj * nj));
            grad_z.row_mut(pair.i).scaled_add(dcos, &gi);
            grad_z.row_mut(pair.j).scaled_add(dcos, &gj);
        }
    }
}

/// Mean binary cross-entropy of `sigmoid(logit)` against the pair labels,
/// with gradients backpropagated through the pair head, both convolution
/// layers, the adjacency normalization and the ω softmax.
pub fn loss_and_gradients(
    params: &ModelParams,
    s: &[Array2<f64>],
    x: &Array2<f64>,
    batch: &[PairSample],
    head: PairHead,
) -> Result<BatchLoss> {
    if batch.is_empty() {
        return Err(Error::Empty("pair batch"));
    }
    let fwd = forward_pass(params, s, x)?;
    let n = x.nrows();

    let mut loss = 0.0;
    let mut scored = 0usize;
    let mut zero_norm = 0usize;
    let mut dlogits = Vec::with_capacity(batch.len());
    for pair in batch {
        match head.logit(fwd.z.row(pair.i), fwd.z.row(pair.j), params.c) {
            Ok(logit) => {
                let y = if pair.label == PairLabel::Positive { 1.0 } else { 0.0 };
                loss += softplus(logit) - y * logit;
                dlogits.push(Some(super::sigmoid(logit) - y));
                scored += 1;
            }
            Err(_) => {
                dlogits.push(None);
                zero_norm += 1;
            }
        }
    }

    let mut grad_z = Array2::zeros(fwd.z.dim());
    if scored > 0 {
        loss /= scored as f64;
        for (pair, d) in batch.iter().zip(&dlogits) {
            if let Some(d) = d {
                pair_backward(head, &fwd.z, pair, params.c, d / scored as f64, &mut grad_z);
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::Numeric {
            stage: "loss",
            epoch: 0,
            batch: 0,
        });
    }

    // Z = (Â H) W1
    let grad_w1 = fwd.a_hidden.t().dot(&grad_z);
    let grad_ah = grad_z.dot(&params.w1.t());
    let mut grad_ahat = grad_ah.dot(&fwd.hidden.t());
    // H = relu(P), P = (Â X) W0
    let mut grad_p = fwd.a_hat.t().dot(&grad_ah);
    Zip::from(&mut grad_p)
        .and(&fwd.pre_hidden)
        .for_each(|g, &p| {
            if p <= 0.0 {
                *g = 0.0;
            }
        });
    let grad_w0 = fwd.ax.t().dot(&grad_p);
    let grad_ax = grad_p.dot(&params.w0.t());
    grad_ahat += &grad_ax.dot(&x.t());

    // Â_ij = B_ij / sqrt(d_i d_j), d_i = Σ_j B_ij, B = A + I
    let r = fwd.degree.mapv(|d| 1.0 / d.sqrt());
    let weighted = &grad_ahat * &fwd.a_hat;
    let through = weighted.sum_axis(Axis(1)) + weighted.sum_axis(Axis(0));
    let grad_degree = Array1::from_shape_fn(n, |i| -0.5 * through[i] / fwd.degree[i]);
    let mut grad_a = grad_ahat;
    for ((i, j), g) in grad_a.indexed_iter_mut() {
        *g = *g * r[i] * r[j] + grad_degree[i];
    }

    // A = Σ_m ω_m S_m, ω = softmax(logits)
    let omega = params.omega();
    let grad_omega = Array1::from_iter(s.iter().map(|sm| (&grad_a * sm).sum()));
    let mean = grad_omega.dot(&omega);
    let grad_logits = &omega * &(grad_omega - mean);

    Ok(BatchLoss {
        loss,
        grads: Gradients {
            w0: grad_w0,
            w1: grad_w1,
            omega_logits: grad_logits,
        },
        scored,
        zero_norm,
    })
}
