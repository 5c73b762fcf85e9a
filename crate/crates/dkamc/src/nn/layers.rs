use crate::error::{Error, Result};
use crate::nn::optim::Param;
use crate::nn::s;
use crate::nn::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Valid,
    Same,
}

/// Declarative layer description, used for shape bookkeeping and the
/// `describe` table.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv1d {
        in_ch: usize,
        out_ch: usize,
        kernel_len: usize,
        stride: usize,
        padding: Padding,
    },
    FullyConnected {
        in_dim: usize,
        out_dim: usize,
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
    MaxPool1d {
        window: usize,
        stride: usize,
    },
    AdaptiveAvgPool1d {
        out_bins: usize,
    },
    Softmax,
}

fn conv_out_len(
    t: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize)> {
    match padding {
        Padding::Valid => {
            if t < kernel {
                return Err(Error::Invalid(format!(
                    "valid conv needs input length >= kernel ({t} < {kernel})"
                )));
            }
            Ok(((t - kernel) / stride + 1, 0))
        }
        Padding::Same => {
            let t_out = (t + stride - 1) / stride;
            let pad_total = ((t_out - 1) * stride + kernel).saturating_sub(t);
            Ok((t_out, pad_total / 2))
        }
    }
}

/// 1-D cross-correlation over [batch, channels, time] tensors.
#[derive(Debug, Clone)]
pub struct Conv1d<F> {
    pub weight: Param<F>, // [out_ch, in_ch, kernel]
    pub bias: Param<F>,   // [out_ch]
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl<F: Scalar> Conv1d<F> {
    pub fn new(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    ) -> Self {
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                Tensor::zeros(&[out_ch, in_ch, kernel]),
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[out_ch])),
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
        }
    }

    pub fn out_len(&self, t: usize) -> Result<usize> {
        Ok(conv_out_len(t, self.kernel, self.stride, self.padding)?.0)
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<(usize, usize)> {
        let sh = x.shape();
        if sh.len() != 3 || sh[1] != self.in_ch {
            return Err(Error::ShapeMismatch {
                expected: vec![0, self.in_ch, 0],
                found: sh.to_vec(),
            });
        }
        Ok((sh[0], sh[2]))
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let (bsz, t) = self.check_input(x)?;
        let (t_out, pad_left) = conv_out_len(t, self.kernel, self.stride, self.padding)?;
        let mut y = Tensor::zeros(&[bsz, self.out_ch, t_out]);
        let w = self.weight.value.data();
        let bias = self.bias.value.data();
        let xd = x.data();
        let yd = y.data_mut();
        for b in 0..bsz {
            for o in 0..self.out_ch {
                let ybase = (b * self.out_ch + o) * t_out;
                let yo = &mut yd[ybase..ybase + t_out];
                yo.iter_mut().for_each(|v| *v = bias[o]);
                for c in 0..self.in_ch {
                    let xi = &xd[(b * self.in_ch + c) * t..(b * self.in_ch + c + 1) * t];
                    let wrow = &w[(o * self.in_ch + c) * self.kernel..];
                    for kk in 0..self.kernel {
                        let wv = wrow[kk];
                        let (lo, hi) = tap_range(t, t_out, self.stride, pad_left, kk);
                        let off = kk as isize - pad_left as isize;
                        if self.stride == 1 {
                            // contiguous slices vectorize
                            let s = (lo as isize + off) as usize;
                            let xs = &xi[s..s + (hi - lo)];
                            for (yv, &xv) in yo[lo..hi].iter_mut().zip(xs) {
                                *yv = *yv + wv * xv;
                            }
                        } else {
                            for tp in lo..hi {
                                let i = (tp * self.stride) as isize + off;
                                yo[tp] = yo[tp] + wv * xi[i as usize];
                            }
                        }
                    }
                }
            }
        }
        Ok(y)
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor<F>, gy: &Tensor<F>) -> Result<Tensor<F>> {
        let (bsz, t) = self.check_input(x)?;
        let (t_out, pad_left) = conv_out_len(t, self.kernel, self.stride, self.padding)?;
        gy.assert_shape(&[bsz, self.out_ch, t_out])?;
        let mut gx = Tensor::zeros(x.shape());
        let w = self.weight.value.data();
        let xd = x.data();
        let gyd = gy.data();
        {
            let gw = self.weight.grad.data_mut();
            for b in 0..bsz {
                for o in 0..self.out_ch {
                    let go = &gyd[(b * self.out_ch + o) * t_out..(b * self.out_ch + o + 1) * t_out];
                    for c in 0..self.in_ch {
                        let xi = &xd[(b * self.in_ch + c) * t..(b * self.in_ch + c + 1) * t];
                        let gwrow = &mut gw[(o * self.in_ch + c) * self.kernel
                            ..(o * self.in_ch + c + 1) * self.kernel];
                        for kk in 0..self.kernel {
                            let (lo, hi) = tap_range(t, t_out, self.stride, pad_left, kk);
                            let off = kk as isize - pad_left as isize;
                            let mut acc = F::zero();
                            if self.stride == 1 {
                                let s = (lo as isize + off) as usize;
                                let xs = &xi[s..s + (hi - lo)];
                                for (&gv, &xv) in go[lo..hi].iter().zip(xs) {
                                    acc = acc + gv * xv;
                                }
                            } else {
                                for tp in lo..hi {
                                    let i = (tp * self.stride) as isize + off;
                                    acc = acc + go[tp] * xi[i as usize];
                                }
                            }
                            gwrow[kk] = gwrow[kk] + acc;
                        }
                    }
                }
            }
        }
        {
            let gb = self.bias.grad.data_mut();
            for b in 0..bsz {
                for o in 0..self.out_ch {
                    let go = &gyd[(b * self.out_ch + o) * t_out..(b * self.out_ch + o + 1) * t_out];
                    gb[o] = gb[o] + go.iter().copied().sum();
                }
            }
        }
        {
            let gxd = gx.data_mut();
            for b in 0..bsz {
                for o in 0..self.out_ch {
                    let go = &gyd[(b * self.out_ch + o) * t_out..(b * self.out_ch + o + 1) * t_out];
                    for c in 0..self.in_ch {
                        let gxrow =
                            &mut gxd[(b * self.in_ch + c) * t..(b * self.in_ch + c + 1) * t];
                        let wrow = &w[(o * self.in_ch + c) * self.kernel..];
                        for kk in 0..self.kernel {
                            let wv = wrow[kk];
                            let (lo, hi) = tap_range(t, t_out, self.stride, pad_left, kk);
                            let off = kk as isize - pad_left as isize;
                            if self.stride == 1 {
                                let s = (lo as isize + off) as usize;
                                let gs = &mut gxrow[s..s + (hi - lo)];
                                for (gv, &gy) in gs.iter_mut().zip(&go[lo..hi]) {
                                    *gv = *gv + wv * gy;
                                }
                            } else {
                                for tp in lo..hi {
                                    let i = ((tp * self.stride) as isize + off) as usize;
                                    gxrow[i] = gxrow[i] + wv * go[tp];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(gx)
    }
}

/// Range of output positions whose tap `kk` lands inside the input.
fn tap_range(t: usize, t_out: usize, stride: usize, pad_left: usize, kk: usize) -> (usize, usize) {
    let lo = if pad_left > kk {
        (pad_left - kk + stride - 1) / stride
    } else {
        0
    };
    // largest tp with tp*stride + kk - pad_left <= t-1
    let hi = if kk > t - 1 + pad_left {
        0
    } else {
        ((t - 1 + pad_left - kk) / stride + 1).min(t_out)
    };
    (lo, hi.max(lo))
}

/// Fully connected layer over [batch, in_dim] tensors.
#[derive(Debug, Clone)]
pub struct Linear<F> {
    pub weight: Param<F>, // [out_dim, in_dim]
    pub bias: Param<F>,   // [out_dim]
    pub in_dim: usize,
    pub out_dim: usize,
}

impl<F: Scalar> Linear<F> {
    pub fn new(name: &str, in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Param::new(format!("{name}.weight"), Tensor::zeros(&[out_dim, in_dim])),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[out_dim])),
            in_dim,
            out_dim,
        }
    }

    fn batch_of(&self, x: &Tensor<F>) -> Result<usize> {
        let sh = x.shape();
        if sh.len() != 2 || sh[1] != self.in_dim {
            return Err(Error::ShapeMismatch {
                expected: vec![0, self.in_dim],
                found: sh.to_vec(),
            });
        }
        Ok(sh[0])
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let bsz = self.batch_of(x)?;
        let mut y = Tensor::zeros(&[bsz, self.out_dim]);
        let w = self.weight.value.data();
        let bias = self.bias.value.data();
        let xd = x.data();
        let yd = y.data_mut();
        for b in 0..bsz {
            let xb = &xd[b * self.in_dim..(b + 1) * self.in_dim];
            let yb = &mut yd[b * self.out_dim..(b + 1) * self.out_dim];
            for o in 0..self.out_dim {
                let wrow = &w[o * self.in_dim..(o + 1) * self.in_dim];
                yb[o] = bias[o] + wrow.iter().zip(xb).map(|(&wi, &xi)| wi * xi).sum::<F>();
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, x: &Tensor<F>, gy: &Tensor<F>) -> Result<Tensor<F>> {
        let bsz = self.batch_of(x)?;
        gy.assert_shape(&[bsz, self.out_dim])?;
        let mut gx = Tensor::zeros(x.shape());
        let xd = x.data();
        let gyd = gy.data();
        {
            let gw = self.weight.grad.data_mut();
            let gb = self.bias.grad.data_mut();
            for b in 0..bsz {
                let xb = &xd[b * self.in_dim..(b + 1) * self.in_dim];
                let gyb = &gyd[b * self.out_dim..(b + 1) * self.out_dim];
                for o in 0..self.out_dim {
                    let g = gyb[o];
                    gb[o] = gb[o] + g;
                    let gwrow = &mut gw[o * self.in_dim..(o + 1) * self.in_dim];
                    for (gwi, &xi) in gwrow.iter_mut().zip(xb) {
                        *gwi = *gwi + g * xi;
                    }
                }
            }
        }
        let w = self.weight.value.data();
        let gxd = gx.data_mut();
        for b in 0..bsz {
            let gyb = &gyd[b * self.out_dim..(b + 1) * self.out_dim];
            let gxb = &mut gxd[b * self.in_dim..(b + 1) * self.in_dim];
            for o in 0..self.out_dim {
                let g = gyb[o];
                let wrow = &w[o * self.in_dim..(o + 1) * self.in_dim];
                for (gxi, &wi) in gxb.iter_mut().zip(wrow) {
                    *gxi = *gxi + g * wi;
                }
            }
        }
        Ok(gx)
    }
}

/// Per-channel batch normalization over [batch, channels, time].
#[derive(Debug, Clone)]
pub struct BatchNorm1d<F> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
    pub running_mean: Tensor<F>,
    pub running_var: Tensor<F>,
    pub channels: usize,
    pub eps: F,
    pub momentum: F,
}

/// Saved activations needed by the batchnorm backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<F> {
    xhat: Tensor<F>,
    inv_std: Vec<F>,
}

impl<F: Scalar> BatchNorm1d<F> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), Tensor::full(&[channels], F::one())),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], F::one()),
            channels,
            eps: s(1e-5),
            momentum: s(0.9),
        }
    }

    fn dims(&self, x: &Tensor<F>) -> Result<(usize, usize)> {
        let sh = x.shape();
        if sh.len() != 3 || sh[1] != self.channels {
            return Err(Error::ShapeMismatch {
                expected: vec![0, self.channels, 0],
                found: sh.to_vec(),
            });
        }
        Ok((sh[0], sh[2]))
    }

    pub fn forward_train(&mut self, x: &Tensor<F>) -> Result<(Tensor<F>, BnCache<F>)> {
        let (bsz, t) = self.dims(x)?;
        let n = s::<F>((bsz * t) as f64);
        let mut y = Tensor::zeros(x.shape());
        let mut xhat = Tensor::zeros(x.shape());
        let mut inv_std = vec![F::zero(); self.channels];
        let xd = x.data();
        for c in 0..self.channels {
            let mut mean = F::zero();
            for b in 0..bsz {
                let row = &xd[(b * self.channels + c) * t..(b * self.channels + c + 1) * t];
                mean = mean + row.iter().copied().sum();
            }
            mean = mean / n;
            let mut var = F::zero();
            for b in 0..bsz {
                let row = &xd[(b * self.channels + c) * t..(b * self.channels + c + 1) * t];
                var = var + row.iter().map(|&v| (v - mean) * (v - mean)).sum();
            }
            var = var / n;
            let istd = F::one() / (var + self.eps).sqrt();
            inv_std[c] = istd;
            let g = self.gamma.value.data()[c];
            let be = self.beta.value.data()[c];
            for b in 0..bsz {
                let base = (b * self.channels + c) * t;
                for i in 0..t {
                    let xh = (xd[base + i] - mean) * istd;
                    xhat.data_mut()[base + i] = xh;
                    y.data_mut()[base + i] = g * xh + be;
                }
            }
            let m = self.momentum;
            let rm = &mut self.running_mean.data_mut()[c];
            *rm = m * *rm + (F::one() - m) * mean;
            let rv = &mut self.running_var.data_mut()[c];
            *rv = m * *rv + (F::one() - m) * var;
        }
        Ok((y, BnCache { xhat, inv_std }))
    }

    pub fn forward_eval(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let (bsz, t) = self.dims(x)?;
        let mut y = Tensor::zeros(x.shape());
        let xd = x.data();
        let yd = y.data_mut();
        for c in 0..self.channels {
            let mean = self.running_mean.data()[c];
            let istd = F::one() / (self.running_var.data()[c] + self.eps).sqrt();
            let g = self.gamma.value.data()[c];
            let be = self.beta.value.data()[c];
            for b in 0..bsz {
                let base = (b * self.channels + c) * t;
                for i in 0..t {
                    yd[base + i] = g * (xd[base + i] - mean) * istd + be;
                }
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, cache: &BnCache<F>, gy: &Tensor<F>) -> Result<Tensor<F>> {
        let (bsz, t) = self.dims(gy)?;
        cache.xhat.assert_shape(gy.shape())?;
        let n = s::<F>((bsz * t) as f64);
        let mut gx = Tensor::zeros(gy.shape());
        let gyd = gy.data();
        let xh = cache.xhat.data();
        for c in 0..self.channels {
            let mut sum_gy = F::zero();
            let mut sum_gy_xh = F::zero();
            for b in 0..bsz {
                let base = (b * self.channels + c) * t;
                for i in 0..t {
                    sum_gy = sum_gy + gyd[base + i];
                    sum_gy_xh = sum_gy_xh + gyd[base + i] * xh[base + i];
                }
            }
            self.gamma.grad.data_mut()[c] = self.gamma.grad.data()[c] + sum_gy_xh;
            self.beta.grad.data_mut()[c] = self.beta.grad.data()[c] + sum_gy;
            let g = self.gamma.value.data()[c];
            let istd = cache.inv_std[c];
            let scale = g * istd / n;
            let gxd = gx.data_mut();
            for b in 0..bsz {
                let base = (b * self.channels + c) * t;
                for i in 0..t {
                    gxd[base + i] = scale * (n * gyd[base + i] - sum_gy - xh[base + i] * sum_gy_xh);
                }
            }
        }
        Ok(gx)
    }
}

pub fn relu_forward<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| {
        if *v < F::zero() {
            *v = F::zero();
        }
    });
    y
}

/// Subgradient 0 at exactly zero.
pub fn relu_backward<F: Scalar>(x: &Tensor<F>, gy: &Tensor<F>) -> Tensor<F> {
    let mut gx = gy.clone();
    for (g, &xi) in gx.data_mut().iter_mut().zip(x.data()) {
        if xi <= F::zero() {
            *g = F::zero();
        }
    }
    gx
}

/// Max pooling over the time axis; ties route to the first index.
#[derive(Debug, Clone)]
pub struct MaxPool1d {
    pub window: usize,
    pub stride: usize,
}

impl MaxPool1d {
    pub fn new(window: usize, stride: usize) -> Self {
        Self { window, stride }
    }

    pub fn forward<F: Scalar>(&self, x: &Tensor<F>) -> Result<(Tensor<F>, Vec<usize>)> {
        let sh = x.shape();
        if sh.len() != 3 {
            return Err(Error::ShapeMismatch {
                expected: vec![0, 0, 0],
                found: sh.to_vec(),
            });
        }
        let (bsz, c, t) = (sh[0], sh[1], sh[2]);
        if t < self.window {
            return Err(Error::Invalid(format!(
                "maxpool window {} exceeds input length {t}",
                self.window
            )));
        }
        let t_out = (t - self.window) / self.stride + 1;
        let mut y = Tensor::zeros(&[bsz, c, t_out]);
        let mut argmax = vec![0usize; bsz * c * t_out];
        let xd = x.data();
        let yd = y.data_mut();
        for bc in 0..bsz * c {
            let row = &xd[bc * t..(bc + 1) * t];
            for tp in 0..t_out {
                let start = tp * self.stride;
                let mut best = row[start];
                let mut best_i = start;
                for i in start + 1..start + self.window {
                    if row[i] > best {
                        best = row[i];
                        best_i = i;
                    }
                }
                yd[bc * t_out + tp] = best;
                argmax[bc * t_out + tp] = best_i;
            }
        }
        Ok((y, argmax))
    }

    pub fn backward<F: Scalar>(
        &self,
        in_shape: &[usize],
        argmax: &[usize],
        gy: &Tensor<F>,
    ) -> Result<Tensor<F>> {
        let mut gx = Tensor::zeros(in_shape);
        let t = in_shape[2];
        let t_out = gy.shape()[2];
        if argmax.len() != gy.numel() {
            return Err(Error::ShapeMismatch {
                expected: vec![argmax.len()],
                found: vec![gy.numel()],
            });
        }
        let gxd = gx.data_mut();
        for (bc, chunk) in gy.data().chunks(t_out).enumerate() {
            for (tp, &g) in chunk.iter().enumerate() {
                let i = argmax[bc * t_out + tp];
                gxd[bc * t + i] = gxd[bc * t + i] + g;
            }
        }
        Ok(gx)
    }
}

/// Averages the time axis into `out_bins` contiguous near-equal bins.
#[derive(Debug, Clone)]
pub struct AdaptiveAvgPool1d {
    pub out_bins: usize,
}

impl AdaptiveAvgPool1d {
    pub fn new(out_bins: usize) -> Self {
        Self { out_bins }
    }

    fn bin_bounds(&self, t: usize, j: usize) -> (usize, usize) {
        (j * t / self.out_bins, (j + 1) * t / self.out_bins)
    }

    pub fn forward<F: Scalar>(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let sh = x.shape();
        if sh.len() != 3 || sh[2] < self.out_bins {
            return Err(Error::ShapeMismatch {
                expected: vec![0, 0, self.out_bins],
                found: sh.to_vec(),
            });
        }
        let (bsz, c, t) = (sh[0], sh[1], sh[2]);
        let mut y = Tensor::zeros(&[bsz, c, self.out_bins]);
        let xd = x.data();
        let yd = y.data_mut();
        for bc in 0..bsz * c {
            let row = &xd[bc * t..(bc + 1) * t];
            for j in 0..self.out_bins {
                let (lo, hi) = self.bin_bounds(t, j);
                let len = s::<F>((hi - lo) as f64);
                yd[bc * self.out_bins + j] = row[lo..hi].iter().copied().sum::<F>() / len;
            }
        }
        Ok(y)
    }

    pub fn backward<F: Scalar>(&self, in_shape: &[usize], gy: &Tensor<F>) -> Result<Tensor<F>> {
        let mut gx = Tensor::zeros(in_shape);
        let t = in_shape[2];
        let gxd = gx.data_mut();
        for (bc, chunk) in gy.data().chunks(self.out_bins).enumerate() {
            for (j, &g) in chunk.iter().enumerate() {
                let (lo, hi) = self.bin_bounds(t, j);
                let share = g / s::<F>((hi - lo) as f64);
                for i in lo..hi {
                    gxd[bc * t + i] = gxd[bc * t + i] + share;
                }
            }
        }
        Ok(gx)
    }
}

/// Row-wise softmax with max-subtraction stabilization.
pub fn softmax_rows<F: Scalar>(logits: &Tensor<F>) -> Tensor<F> {
    let k = *logits.shape().last().unwrap();
    let mut p = logits.clone();
    for row in p.data_mut().chunks_mut(k) {
        let m = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut z = F::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z = z + *v;
        }
        for v in row.iter_mut() {
            *v = *v / z;
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t3(b: usize, c: usize, t: usize, data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(vec![b, c, t], data).unwrap()
    }

    #[test]
    fn conv_valid_single_dot_product() {
        let mut conv = Conv1d::<f64>::new("c", 1, 1, 3, 1, Padding::Valid);
        conv.weight
            .value
            .data_mut()
            .copy_from_slice(&[1.0, 0.0, -1.0]);
        let x = t3(1, 1, 3, vec![1.0, 2.0, 3.0]);
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[-2.0]);
    }

    #[test]
    fn conv_identity_1x1() {
        let mut conv = Conv1d::<f64>::new("c", 2, 2, 1, 1, Padding::Same);
        // weight[o][c][0] = identity across channels
        conv.weight
            .value
            .data_mut()
            .copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let x = t3(1, 2, 4, vec![1.0, -1.0, 2.0, 0.5, 3.0, 4.0, -2.0, 0.0]);
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.data(), x.data());
        // backward of the identity passes the upstream through
        let gy = t3(1, 2, 4, (0..8).map(|i| i as f64).collect());
        let gx = conv.backward(&x, &gy).unwrap();
        assert_eq!(gx.data(), gy.data());
    }

    #[test]
    fn conv_same_stride2_halves_length() {
        let conv = Conv1d::<f64>::new("c", 2, 32, 3, 2, Padding::Same);
        let x = Tensor::zeros(&[1, 2, 128]);
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 32, 64]);
    }

    #[test]
    fn conv_same_stride1_preserves_length_for_odd_kernels() {
        for k in [1, 3, 5, 7] {
            let conv = Conv1d::<f64>::new("c", 1, 1, k, 1, Padding::Same);
            let y = conv.forward(&Tensor::zeros(&[2, 1, 13])).unwrap();
            assert_eq!(y.shape(), &[2, 1, 13], "kernel {k}");
        }
    }

    #[test]
    fn conv_zero_upstream_zero_grads() {
        let mut conv = Conv1d::<f64>::new("c", 2, 3, 3, 1, Padding::Same);
        conv.weight.value.fill(0.5);
        let x = t3(1, 2, 5, (0..10).map(|i| i as f64).collect());
        let gy = Tensor::zeros(&[1, 3, 5]);
        let gx = conv.backward(&x, &gy).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(conv.weight.grad.data().iter().all(|&v| v == 0.0));
        assert!(conv.bias.grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_channel_mismatch_rejected() {
        let conv = Conv1d::<f64>::new("c", 2, 3, 3, 1, Padding::Same);
        assert!(conv.forward(&Tensor::zeros(&[1, 3, 5])).is_err());
    }

    #[test]
    fn linear_forward_backward_shapes() {
        let mut fc = Linear::<f64>::new("fc", 3, 2);
        fc.weight
            .value
            .data_mut()
            .copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        fc.bias.value.data_mut().copy_from_slice(&[0.5, -0.5]);
        let x = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = fc.forward(&x).unwrap();
        assert_eq!(y.data(), &[1.5, 1.5, 4.5, 4.5]);
        let gy = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let gx = fc.backward(&x, &gy).unwrap();
        assert_eq!(gx.data(), &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        // bias grad sums upstream over the batch
        assert_eq!(fc.bias.grad.data(), &[1.0, 1.0]);
    }

    #[test]
    fn relu_clamps_and_gates() {
        let x = Tensor::from_vec(vec![-3.0, 0.0, 2.0]);
        let y = relu_forward(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let gy = Tensor::from_vec(vec![1.0, 1.0, 1.0]);
        let gx = relu_backward(&x, &gy);
        assert_eq!(gx.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn batchnorm_train_normalizes_per_channel() {
        let mut bn = BatchNorm1d::<f64>::new("bn", 2);
        let x = t3(
            2,
            2,
            3,
            vec![
                1.0, 2.0, 3.0, 10.0, 20.0, 30.0, //
                4.0, 5.0, 6.0, 40.0, 50.0, 60.0,
            ],
        );
        let (y, _) = bn.forward_train(&x).unwrap();
        for c in 0..2 {
            let mut vals = vec![];
            for b in 0..2 {
                for i in 0..3 {
                    vals.push(y.data()[(b * 2 + c) * 3 + i]);
                }
            }
            let mean: f64 = vals.iter().sum::<f64>() / 6.0;
            let var: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-5, "channel {c} mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "channel {c} var {var}");
        }
    }

    #[test]
    fn batchnorm_eval_uses_running_stats() {
        let mut bn = BatchNorm1d::<f64>::new("bn", 1);
        bn.running_mean.data_mut()[0] = 2.0;
        bn.running_var.data_mut()[0] = 4.0;
        let x = t3(1, 1, 2, vec![2.0, 4.0]);
        let y = bn.forward_eval(&x).unwrap();
        assert!((y.data()[0]).abs() < 1e-9);
        assert!((y.data()[1] - 2.0 / (4.0f64 + 1e-5).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn maxpool_routes_grad_to_first_argmax() {
        let pool = MaxPool1d::new(2, 2);
        let x = t3(1, 1, 4, vec![1.0, 1.0, 3.0, 2.0]);
        let (y, argmax) = pool.forward(&x).unwrap();
        assert_eq!(y.data(), &[1.0, 3.0]);
        assert_eq!(argmax, vec![0, 2]);
        let gy = t3(1, 1, 2, vec![5.0, 7.0]);
        let gx = pool.backward(&[1, 1, 4], &argmax, &gy).unwrap();
        assert_eq!(gx.data(), &[5.0, 0.0, 7.0, 0.0]);
    }

    #[test]
    fn maxpool_rejects_short_input() {
        let pool = MaxPool1d::new(2, 2);
        assert!(pool.forward(&Tensor::<f64>::zeros(&[1, 1, 1])).is_err());
    }

    #[test]
    fn adaptive_pool_single_bin_is_mean() {
        let pool = AdaptiveAvgPool1d::new(1);
        let x = t3(1, 1, 4, vec![1.0, 2.0, 3.0, 4.0]);
        let y = pool.forward(&x).unwrap();
        assert_eq!(y.data(), &[2.5]);
    }

    #[test]
    fn adaptive_pool_four_bins() {
        let pool = AdaptiveAvgPool1d::new(4);
        let x = t3(1, 1, 8, vec![1.0, 3.0, 2.0, 2.0, 0.0, 4.0, -1.0, 1.0]);
        let y = pool.forward(&x).unwrap();
        assert_eq!(y.data(), &[2.0, 2.0, 2.0, 0.0]);
        let gy = t3(1, 1, 4, vec![2.0, 2.0, 2.0, 2.0]);
        let gx = pool.backward(&[1, 1, 8], &gy).unwrap();
        assert!(gx.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant() {
        let logits =
            Tensor::new(vec![2, 4], vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 1.0, 100.0]).unwrap();
        let p = softmax_rows(&logits);
        for row in p.data().chunks(4) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
        let mut shifted = logits.clone();
        shifted.data_mut().iter_mut().for_each(|v| *v += 10.0);
        let q = softmax_rows(&shifted);
        for (a, b) in p.data().iter().zip(q.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
