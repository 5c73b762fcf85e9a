use crate::error::{Error, Result};
use crate::nn::s;
use crate::nn::tensor::{Scalar, Tensor};

/// Mean negated cross-entropy over the batch with softmax applied to the
/// logits. Returns the loss and the gradient w.r.t. the logits,
/// `(p - q) / B`.
pub fn softmax_cross_entropy<F: Scalar>(
    logits: &Tensor<F>,
    labels: &Tensor<F>,
) -> Result<(F, Tensor<F>)> {
    labels.assert_shape(logits.shape())?;
    let sh = logits.shape();
    if sh.len() != 2 {
        return Err(Error::ShapeMismatch {
            expected: vec![0, 0],
            found: sh.to_vec(),
        });
    }
    let (bsz, k) = (sh[0], sh[1]);
    for (row_i, row) in labels.data().chunks(k).enumerate() {
        let ones = row.iter().filter(|&&v| v == F::one()).count();
        let zeros = row.iter().filter(|&&v| v == F::zero()).count();
        if ones != 1 || zeros != k - 1 {
            return Err(Error::Invalid(format!("label row {row_i} is not one-hot")));
        }
    }
    let bf = s::<F>(bsz as f64);
    let mut grad = Tensor::zeros(logits.shape());
    let mut loss = F::zero();
    for b in 0..bsz {
        let row = &logits.data()[b * k..(b + 1) * k];
        let lab = &labels.data()[b * k..(b + 1) * k];
        let m = row.iter().copied().fold(F::neg_infinity(), F::max);
        let z: F = row.iter().map(|&v| (v - m).exp()).sum();
        let log_z = z.ln();
        let grow = &mut grad.data_mut()[b * k..(b + 1) * k];
        for i in 0..k {
            let log_p = row[i] - m - log_z;
            if lab[i] == F::one() {
                loss = loss - log_p;
            }
            grow[i] = (log_p.exp() - lab[i]) / bf;
        }
    }
    Ok((loss / bf, grad))
}

/// One-hot encode class indices into a [B, K] tensor.
pub fn one_hot<F: Scalar>(labels: &[usize], k: usize) -> Tensor<F> {
    let mut t = Tensor::zeros(&[labels.len(), k]);
    for (b, &c) in labels.iter().enumerate() {
        t.data_mut()[b * k + c] = F::one();
    }
    t
}

/// Mean squared error over all elements; grad = 2(pred - target)/count.
pub fn mse_loss<F: Scalar>(pred: &Tensor<F>, target: &Tensor<F>) -> Result<(F, Tensor<F>)> {
    target.assert_shape(pred.shape())?;
    let n = s::<F>(pred.numel() as f64);
    let mut grad = Tensor::zeros(pred.shape());
    let mut loss = F::zero();
    let two = s::<F>(2.0);
    for ((g, &p), &t) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
    {
        let d = p - t;
        loss = loss + d * d;
        *g = two * d / n;
    }
    Ok((loss / n, grad))
}
