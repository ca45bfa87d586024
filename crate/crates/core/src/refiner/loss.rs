//! Weighted softmax cross-entropy and the Lovász-Softmax surrogate of the
//! Jaccard loss, each with its analytic gradient.

use ndarray::{Array2, ArrayView1, Axis};

use super::attention::softmax_rows_inplace;
use crate::error::{Error, Result};
use crate::kitti_io::ClassId;

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    softmax_rows_inplace(&mut p);
    p
}

fn check_targets(n: usize, c: usize, targets: &[ClassId]) -> Result<()> {
    if targets.len() != n {
        return Err(Error::shape("targets", n, targets.len()));
    }
    if let Some(&t) = targets.iter().find(|&&t| t as usize >= c) {
        return Err(Error::ClassOutOfRange {
            id: t as u32,
            num_classes: c,
        });
    }
    Ok(())
}

/// Mean over non-ignored rows of `w[y] * -log softmax(z)[y]`, and its gradient
/// w.r.t. the logits.
pub fn wce_loss(
    logits: &Array2<f64>,
    targets: &[ClassId],
    weights: &[f64],
    ignore: Option<ClassId>,
) -> Result<(f64, Array2<f64>)> {
    let (n, c) = logits.dim();
    check_targets(n, c, targets)?;
    if weights.len() != c {
        return Err(Error::shape("class weights", c, weights.len()));
    }
    let count = targets.iter().filter(|&&t| Some(t) != ignore).count();
    if count == 0 {
        return Err(Error::Input("all targets are ignored".into()));
    }
    let probs = softmax_rows(logits);
    let mut grad = Array2::zeros((n, c));
    let mut loss = 0.0;
    let inv = 1.0 / count as f64;
    for (i, &t) in targets.iter().enumerate() {
        if Some(t) == ignore {
            continue;
        }
        let t = t as usize;
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
        loss += weights[t] * (lse - row[t]);
        let mut g = grad.row_mut(i);
        for k in 0..c {
            g[k] = weights[t] * inv * (probs[[i, k]] - if k == t { 1.0 } else { 0.0 });
        }
    }
    Ok((loss * inv, grad))
}

/// Gradient of the Lovász extension of the Jaccard loss w.r.t. sorted errors,
/// given the ground-truth indicator in the same (descending error) order.
pub fn lovasz_grad(gt_sorted: &[bool]) -> Vec<f64> {
    let gts = gt_sorted.iter().filter(|&&g| g).count() as f64;
    let mut out = Vec::with_capacity(gt_sorted.len());
    let mut cum_fg = 0.0;
    let mut cum_bg = 0.0;
    let mut prev = 0.0;
    for &g in gt_sorted {
        if g {
            cum_fg += 1.0;
        } else {
            cum_bg += 1.0;
        }
        let inter = gts - cum_fg;
        let union = gts + cum_bg;
        let jaccard = 1.0 - inter / union;
        out.push(jaccard - prev);
        prev = jaccard;
    }
    out
}

/// Lovász-Softmax over the classes present among non-ignored targets, averaged.
/// Returns the loss and its gradient w.r.t. `probs`.
pub fn lovasz_softmax_loss(
    probs: &Array2<f64>,
    targets: &[ClassId],
    ignore: Option<ClassId>,
) -> Result<(f64, Array2<f64>)> {
    let (n, c) = probs.dim();
    check_targets(n, c, targets)?;
    let rows: Vec<usize> = (0..n).filter(|&i| Some(targets[i]) != ignore).collect();
    let mut present = vec![false; c];
    for &i in &rows {
        present[targets[i] as usize] = true;
    }
    let num_present = present.iter().filter(|&&p| p).count();
    if num_present == 0 {
        return Err(Error::Input("no class present among targets".into()));
    }

    let mut grad = Array2::zeros((n, c));
    let mut total = 0.0;
    let mut order: Vec<usize> = Vec::with_capacity(rows.len());
    let mut errors = vec![0.0; n];
    for class in (0..c).filter(|&k| present[k]) {
        for &i in &rows {
            let fg = if targets[i] as usize == class { 1.0 } else { 0.0 };
            errors[i] = (fg - probs[[i, class]]).abs();
        }
        order.clear();
        order.extend_from_slice(&rows);
        // Stable: equal errors keep ascending row order.
        order.sort_by(|&a, &b| errors[b].total_cmp(&errors[a]));
        let gt_sorted: Vec<bool> = order.iter().map(|&i| targets[i] as usize == class).collect();
        let g = lovasz_grad(&gt_sorted);
        for (rank, &i) in order.iter().enumerate() {
            total += errors[i] * g[rank];
            // d|fg - p| / dp = -1 for foreground rows, +1 otherwise.
            let sign = if gt_sorted[rank] { -1.0 } else { 1.0 };
            grad[[i, class]] += sign * g[rank];
        }
    }
    let inv = 1.0 / num_present as f64;
    grad *= inv;
    Ok((total * inv, grad))
}

/// Back-propagates a gradient w.r.t. row-softmax outputs to the logits.
pub fn softmax_backward(probs: &Array2<f64>, d_probs: &Array2<f64>) -> Array2<f64> {
    let dot = (d_probs * probs).sum_axis(Axis(1)).insert_axis(Axis(1));
    probs * &(d_probs - &dot)
}

/// Per-class weights `1 / ln(1.02 + f_c)` from label counts; the ignore class gets 0.
pub fn class_weights_from_counts(counts: &[u64], ignore: Option<ClassId>) -> Vec<f64> {
    let total: u64 = counts
        .iter()
        .enumerate()
        .filter(|&(c, _)| Some(c as ClassId) != ignore)
        .map(|(_, &n)| n)
        .sum();
    counts
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            if Some(c as ClassId) == ignore {
                0.0
            } else {
                let f = if total > 0 { n as f64 / total as f64 } else { 0.0 };
                1.0 / (1.02 + f).ln()
            }
        })
        .collect()
}

/// Index of the largest entry, ties to the smaller index.
pub fn argmax_row(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}
