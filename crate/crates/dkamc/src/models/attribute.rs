use crate::error::{Error, Result};
use crate::models::Model;
use crate::nn::layers::{relu_backward, relu_forward, BnCache};
use crate::nn::{
    AdaptiveAvgPool1d, BatchNorm1d, Conv1d, Linear, MaxPool1d, Padding, Param, Scalar, Tensor,
};

pub const FRAME_LEN: usize = 128;
pub const ATTR_DIM: usize = 6;
const CH: usize = 32;
const STACKS: usize = 3;
const UNITS_PER_STACK: usize = 2;

/// Residual unit: conv-bn-relu-conv-bn, skip add, relu. Shapes are
/// preserved so the skip connection is a plain add.
#[derive(Debug, Clone)]
pub struct ResUnit<F> {
    pub conv_a: Conv1d<F>,
    pub bn_a: BatchNorm1d<F>,
    pub conv_b: Conv1d<F>,
    pub bn_b: BatchNorm1d<F>,
}

#[derive(Debug, Clone)]
pub struct ResUnitCache<F> {
    input: Tensor<F>,
    bn_a_cache: BnCache<F>,
    relu_a_pre: Tensor<F>, // bn_a output
    conv_b_in: Tensor<F>,  // relu(bn_a output)
    bn_b_cache: BnCache<F>,
    sum_pre: Tensor<F>, // bn_b output + skip
}

impl<F: Scalar> ResUnit<F> {
    pub fn new(name: &str) -> Self {
        Self {
            conv_a: Conv1d::new(&format!("{name}.conv_a"), CH, CH, 3, 1, Padding::Same),
            bn_a: BatchNorm1d::new(&format!("{name}.bn_a"), CH),
            conv_b: Conv1d::new(&format!("{name}.conv_b"), CH, CH, 3, 1, Padding::Same),
            bn_b: BatchNorm1d::new(&format!("{name}.bn_b"), CH),
        }
    }

    pub fn forward_train(&mut self, x: &Tensor<F>) -> Result<(Tensor<F>, ResUnitCache<F>)> {
        let bn_a_pre = self.conv_a.forward(x)?;
        let (relu_a_pre, bn_a_cache) = self.bn_a.forward_train(&bn_a_pre)?;
        let conv_b_in = relu_forward(&relu_a_pre);
        let bn_b_pre = self.conv_b.forward(&conv_b_in)?;
        let (bn_b_out, bn_b_cache) = self.bn_b.forward_train(&bn_b_pre)?;
        let mut sum_pre = bn_b_out;
        for (a, &b) in sum_pre.data_mut().iter_mut().zip(x.data()) {
            *a = *a + b;
        }
        let y = relu_forward(&sum_pre);
        Ok((
            y,
            ResUnitCache {
                input: x.clone(),
                bn_a_cache,
                relu_a_pre,
                conv_b_in,
                bn_b_cache,
                sum_pre,
            },
        ))
    }

    pub fn forward_eval(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let a = self.conv_a.forward(x)?;
        let a = self.bn_a.forward_eval(&a)?;
        let a = relu_forward(&a);
        let b = self.conv_b.forward(&a)?;
        let mut b = self.bn_b.forward_eval(&b)?;
        for (v, &xi) in b.data_mut().iter_mut().zip(x.data()) {
            *v = *v + xi;
        }
        Ok(relu_forward(&b))
    }

    pub fn backward(&mut self, cache: &ResUnitCache<F>, gy: &Tensor<F>) -> Result<Tensor<F>> {
        let g_sum = relu_backward(&cache.sum_pre, gy);
        let g_bn_b_pre = self.bn_b.backward(&cache.bn_b_cache, &g_sum)?;
        let g_conv_b_in = self.conv_b.backward(&cache.conv_b_in, &g_bn_b_pre)?;
        let g_relu_a = relu_backward(&cache.relu_a_pre, &g_conv_b_in);
        let g_bn_a_pre = self.bn_a.backward(&cache.bn_a_cache, &g_relu_a)?;
        let mut gx = self.conv_a.backward(&cache.input, &g_bn_a_pre)?;
        // skip path
        for (a, &g) in gx.data_mut().iter_mut().zip(g_sum.data()) {
            *a = *a + g;
        }
        Ok(gx)
    }
}

/// Residual attribute predictor: 1x1 stem conv, three stacks of two
/// residual units plus max pooling, global average pooling, and an FC
/// head emitting the 6-d attribute vector.
#[derive(Debug, Clone)]
pub struct AttributeModel<F> {
    pub stem: Conv1d<F>,
    pub stacks: Vec<Vec<ResUnit<F>>>,
    pub pool: MaxPool1d,
    pub gap: AdaptiveAvgPool1d,
    pub fc: Linear<F>,
}

pub struct AttrCache<F> {
    input: Tensor<F>,
    unit_caches: Vec<ResUnitCache<F>>,
    pool_inputs: Vec<Tensor<F>>,
    pool_argmax: Vec<Vec<usize>>,
    gap_in: Tensor<F>,
    gap_flat: Tensor<F>,
}

impl<F: Scalar> AttributeModel<F> {
    pub fn new() -> Self {
        let stacks = (0..STACKS)
            .map(|s| {
                (0..UNITS_PER_STACK)
                    .map(|u| ResUnit::new(&format!("attr.stack{s}.unit{u}")))
                    .collect()
            })
            .collect();
        Self {
            stem: Conv1d::new("attr.stem", 2, CH, 1, 1, Padding::Same),
            stacks,
            pool: MaxPool1d::new(2, 2),
            gap: AdaptiveAvgPool1d::new(1),
            fc: Linear::new("attr.fc", CH, ATTR_DIM),
        }
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<usize> {
        let sh = x.shape();
        if sh.len() != 3 || sh[1] != 2 || sh[2] != FRAME_LEN {
            return Err(Error::ShapeMismatch {
                expected: vec![0, 2, FRAME_LEN],
                found: sh.to_vec(),
            });
        }
        Ok(sh[0])
    }

    /// [B, 2, 128] -> [B, 6], updating batchnorm running stats.
    pub fn forward_train(&mut self, x: &Tensor<F>) -> Result<(Tensor<F>, AttrCache<F>)> {
        let bsz = self.check_input(x)?;
        let mut cur = self.stem.forward(x)?;
        let mut unit_caches = Vec::with_capacity(STACKS * UNITS_PER_STACK);
        let mut pool_inputs = Vec::with_capacity(STACKS);
        let mut pool_argmax = Vec::with_capacity(STACKS);
        for stack in &mut self.stacks {
            for unit in stack.iter_mut() {
                let (y, cache) = unit.forward_train(&cur)?;
                unit_caches.push(cache);
                cur = y;
            }
            let (pooled, argmax) = self.pool.forward(&cur)?;
            pool_inputs.push(cur);
            pool_argmax.push(argmax);
            cur = pooled;
        }
        let gap_in = cur;
        let gap_out = self.gap.forward(&gap_in)?;
        let gap_flat = gap_out.reshaped(vec![bsz, CH])?;
        let pred = self.fc.forward(&gap_flat)?;
        Ok((
            pred,
            AttrCache {
                input: x.clone(),
                unit_caches,
                pool_inputs,
                pool_argmax,
                gap_in,
                gap_flat,
            },
        ))
    }

    /// Inference path: batchnorm uses running statistics.
    pub fn forward_eval(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let bsz = self.check_input(x)?;
        let mut cur = self.stem.forward(x)?;
        for stack in &self.stacks {
            for unit in stack {
                cur = unit.forward_eval(&cur)?;
            }
            let (pooled, _) = self.pool.forward(&cur)?;
            cur = pooled;
        }
        let gap_out = self.gap.forward(&cur)?;
        let gap_flat = gap_out.reshaped(vec![bsz, CH])?;
        self.fc.forward(&gap_flat)
    }

    /// Accumulates parameter grads; returns the input gradient.
    pub fn backward(&mut self, cache: &AttrCache<F>, g_pred: &Tensor<F>) -> Result<Tensor<F>> {
        let bsz = cache.input.shape()[0];
        let g_gap_flat = self.fc.backward(&cache.gap_flat, g_pred)?;
        let g_gap = g_gap_flat.reshaped(vec![bsz, CH, 1])?;
        let mut g = self.gap.backward(cache.gap_in.shape(), &g_gap)?;
        for (s, stack) in self.stacks.iter_mut().enumerate().rev() {
            g = self
                .pool
                .backward(cache.pool_inputs[s].shape(), &cache.pool_argmax[s], &g)?;
            for (u, unit) in stack.iter_mut().enumerate().rev() {
                g = unit.backward(&cache.unit_caches[s * UNITS_PER_STACK + u], &g)?;
            }
        }
        self.stem.backward(&cache.input, &g)
    }

    pub fn layer_table(&self) -> Vec<[String; 3]> {
        let mut rows = vec![
            ["input".into(), "-".into(), "2x128".into()],
            ["stem".into(), "1x1".into(), "32x128".into()],
        ];
        let mut len = FRAME_LEN;
        for s in 0..STACKS {
            for u in 0..UNITS_PER_STACK {
                rows.push([
                    format!("stack{s}.unit{u}"),
                    "3x1, 3x1".into(),
                    format!("32x{len}"),
                ]);
            }
            len /= 2;
            rows.push([
                format!("stack{s}.maxpool"),
                "2x1".into(),
                format!("32x{len}"),
            ]);
        }
        rows.push(["gap".into(), "adaptive avg, 1 bin".into(), "32x1".into()]);
        rows.push(["fc".into(), "32x6".into(), "6".into()]);
        rows
    }
}

impl<F: Scalar> Default for AttributeModel<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Model<F> for AttributeModel<F> {
    fn params(&self) -> Vec<&Param<F>> {
        let mut out = vec![&self.stem.weight, &self.stem.bias];
        for stack in &self.stacks {
            for u in stack {
                out.extend([
                    &u.conv_a.weight,
                    &u.conv_a.bias,
                    &u.bn_a.gamma,
                    &u.bn_a.beta,
                    &u.conv_b.weight,
                    &u.conv_b.bias,
                    &u.bn_b.gamma,
                    &u.bn_b.beta,
                ]);
            }
        }
        out.push(&self.fc.weight);
        out.push(&self.fc.bias);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut out: Vec<&mut Param<F>> = vec![&mut self.stem.weight, &mut self.stem.bias];
        for stack in &mut self.stacks {
            for u in stack.iter_mut() {
                out.push(&mut u.conv_a.weight);
                out.push(&mut u.conv_a.bias);
                out.push(&mut u.bn_a.gamma);
                out.push(&mut u.bn_a.beta);
                out.push(&mut u.conv_b.weight);
                out.push(&mut u.conv_b.bias);
                out.push(&mut u.bn_b.gamma);
                out.push(&mut u.bn_b.beta);
            }
        }
        out.push(&mut self.fc.weight);
        out.push(&mut self.fc.bias);
        out
    }

    fn extra_state(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = Vec::new();
        for (s, stack) in self.stacks.iter().enumerate() {
            for (u, unit) in stack.iter().enumerate() {
                let base = format!("attr.stack{s}.unit{u}");
                out.push((format!("{base}.bn_a.running_mean"), &unit.bn_a.running_mean));
                out.push((format!("{base}.bn_a.running_var"), &unit.bn_a.running_var));
                out.push((format!("{base}.bn_b.running_mean"), &unit.bn_b.running_mean));
                out.push((format!("{base}.bn_b.running_var"), &unit.bn_b.running_var));
            }
        }
        out
    }

    fn extra_state_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        let mut out = Vec::new();
        for (s, stack) in self.stacks.iter_mut().enumerate() {
            for (u, unit) in stack.iter_mut().enumerate() {
                let base = format!("attr.stack{s}.unit{u}");
                out.push((
                    format!("{base}.bn_a.running_mean"),
                    &mut unit.bn_a.running_mean,
                ));
                out.push((
                    format!("{base}.bn_a.running_var"),
                    &mut unit.bn_a.running_var,
                ));
                out.push((
                    format!("{base}.bn_b.running_mean"),
                    &mut unit.bn_b.running_mean,
                ));
                out.push((
                    format!("{base}.bn_b.running_var"),
                    &mut unit.bn_b.running_var,
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intermediate_shapes_match_architecture_table() {
        let mut m = AttributeModel::<f32>::new();
        m.init(2);
        let x = Tensor::zeros(&[2, 2, 128]);
        let mut cur = m.stem.forward(&x).unwrap();
        assert_eq!(cur.shape(), &[2, 32, 128]);
        let mut expected_len = 128;
        for stack in &mut m.stacks {
            for unit in stack.iter_mut() {
                let (y, _) = unit.forward_train(&cur).unwrap();
                assert_eq!(y.shape(), &[2, 32, expected_len]);
                cur = y;
            }
            let (pooled, _) = m.pool.forward(&cur).unwrap();
            expected_len /= 2;
            assert_eq!(pooled.shape(), &[2, 32, expected_len]);
            cur = pooled;
        }
        assert_eq!(cur.shape(), &[2, 32, 16]);
        let gap = m.gap.forward(&cur).unwrap();
        assert_eq!(gap.shape(), &[2, 32, 1]);
        let (pred, _) = m.forward_train(&x).unwrap();
        assert_eq!(pred.shape(), &[2, 6]);
    }

    #[test]
    fn resunit_with_zero_convs_is_relu() {
        // zero conv weights, identity batchnorm (running stats) in eval
        let unit = ResUnit::<f64>::new("u");
        let mut x = Tensor::zeros(&[1, 32, 8]);
        x.data_mut()
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = (i as f64 % 7.0) - 3.0);
        let y = unit.forward_eval(&x).unwrap();
        let expected = relu_forward(&x);
        for (a, b) in y.data().iter().zip(expected.data()) {
            // bn_b(0) = 0/sqrt(1+eps)*1 + 0 = 0, so y = relu(x)
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let mut m = AttributeModel::<f64>::new();
        assert!(m.forward_train(&Tensor::zeros(&[1, 2, 64])).is_err());
        assert!(m.forward_eval(&Tensor::zeros(&[1, 3, 128])).is_err());
    }
}
