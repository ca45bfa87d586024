//! Single-head self-attention with a shared query/key projection.
//!
//! `Q = K = F Wp + bp`, `V = F Wv + bv`, `A = softmax_rows(Q Qᵀ / sqrt(d))`,
//! output `A V`. Because queries and keys come from the same map the raw score
//! matrix is symmetric.

use ndarray::{s, Array2, Axis};

use super::dense::Dense;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionLayer {
    /// Shared query/key projection.
    pub wp: Dense,
    pub wv: Dense,
}

impl AttentionLayer {
    pub fn dim(&self) -> usize {
        self.wp.w.nrows()
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            wp: Dense::zeros(d, d),
            wv: Dense::zeros(d, d),
        }
    }
}

/// Intermediates kept for the backward pass.
#[derive(Clone, Debug)]
pub struct AttentionCache {
    pub q: Array2<f64>,
    pub v: Array2<f64>,
    /// Row-stochastic attention matrix.
    pub a: Array2<f64>,
}

/// In-place numerically stable row softmax.
pub fn softmax_rows_inplace(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        row.mapv_inplace(|x| {
            let e = (x - max).exp();
            sum += e;
            e
        });
        row.mapv_inplace(|x| x / sum);
    }
}

pub fn attention_forward(layer: &AttentionLayer, f_in: &Array2<f64>) -> Result<(Array2<f64>, AttentionCache)> {
    let d = layer.dim();
    if f_in.ncols() != d || f_in.nrows() == 0 {
        return Err(Error::shape(
            "attention input",
            format!("n x {d} with n >= 1"),
            format!("{}x{}", f_in.nrows(), f_in.ncols()),
        ));
    }
    let q = layer.wp.forward(f_in);
    let v = layer.wv.forward(f_in);
    let mut a = q.dot(&q.t());
    a *= 1.0 / (d as f64).sqrt();
    softmax_rows_inplace(&mut a);
    let out = a.dot(&v);
    Ok((out, AttentionCache { q, v, a }))
}

/// Forward pass only; see [`attention_forward`].
pub fn attention_layer(f_in: &Array2<f64>, layer: &AttentionLayer) -> Result<Array2<f64>> {
    let (out, _) = attention_forward(layer, f_in)?;
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite attention output".into()));
    }
    Ok(out)
}

/// Inference-only forward that materializes at most `block` score rows at a time.
pub fn attention_blocked(layer: &AttentionLayer, f_in: &Array2<f64>, block: usize) -> Result<Array2<f64>> {
    let d = layer.dim();
    let n = f_in.nrows();
    if f_in.ncols() != d || n == 0 {
        return Err(Error::shape(
            "attention input",
            format!("n x {d} with n >= 1"),
            format!("{}x{}", n, f_in.ncols()),
        ));
    }
    let q = layer.wp.forward(f_in);
    let v = layer.wv.forward(f_in);
    let scale = 1.0 / (d as f64).sqrt();
    let mut out = Array2::zeros((n, d));
    let block = block.max(1);
    for start in (0..n).step_by(block) {
        let end = (start + block).min(n);
        let mut a = q.slice(s![start..end, ..]).dot(&q.t());
        a *= scale;
        softmax_rows_inplace(&mut a);
        out.slice_mut(s![start..end, ..]).assign(&a.dot(&v));
    }
    Ok(out)
}

/// Returns the gradient w.r.t. `f_in`; parameter gradients are added into `grad`.
pub fn attention_backward(
    layer: &AttentionLayer,
    f_in: &Array2<f64>,
    cache: &AttentionCache,
    d_out: &Array2<f64>,
    grad: &mut AttentionLayer,
) -> Array2<f64> {
    let scale = 1.0 / (layer.dim() as f64).sqrt();
    let AttentionCache { q, v, a } = cache;

    let d_v = a.t().dot(d_out);
    let d_a = d_out.dot(&v.t());
    // Softmax Jacobian, row by row: dS = A * (dA - <dA, A>_row).
    let row_dot = (&d_a * a).sum_axis(Axis(1)).insert_axis(Axis(1));
    let d_s = a * &(&d_a - &row_dot);
    // S = scale * Q Qᵀ  =>  dQ = scale * (dS + dSᵀ) Q.
    let sym = &d_s + &d_s.t();
    let d_q = sym.dot(q) * scale;

    let mut d_in = layer.wp.backward(f_in, &d_q, &mut grad.wp);
    d_in += &layer.wv.backward(f_in, &d_v, &mut grad.wv);
    d_in
}
