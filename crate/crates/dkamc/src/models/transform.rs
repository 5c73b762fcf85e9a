use crate::error::Result;
use crate::models::Model;
use crate::nn::layers::{relu_backward, relu_forward};
use crate::nn::{Linear, Param, Scalar, Tensor};

pub const ATTR_DIM: usize = 6;
pub const HIDDEN_DIM: usize = 64;
pub const FEATURE_DIM: usize = 128;

/// Two FC+ReLU layers mapping a 6-d attribute vector into the 128-d
/// visual feature space.
#[derive(Debug, Clone)]
pub struct TransformNet<F> {
    pub fc1: Linear<F>,
    pub fc2: Linear<F>,
}

/// Pre-activation caches for the backward pass.
#[derive(Debug, Clone)]
pub struct TnetCache<F> {
    pub h1_pre: Tensor<F>,
    pub h1: Tensor<F>,
    pub h2_pre: Tensor<F>,
}

impl<F: Scalar> TransformNet<F> {
    pub fn new() -> Self {
        Self {
            fc1: Linear::new("tnet.fc1", ATTR_DIM, HIDDEN_DIM),
            fc2: Linear::new("tnet.fc2", HIDDEN_DIM, FEATURE_DIM),
        }
    }

    /// attr: [B, 6] -> output: [B, 128], nonnegative.
    pub fn forward(&self, attr: &Tensor<F>) -> Result<(Tensor<F>, TnetCache<F>)> {
        let h1_pre = self.fc1.forward(attr)?;
        let h1 = relu_forward(&h1_pre);
        let h2_pre = self.fc2.forward(&h1)?;
        let out = relu_forward(&h2_pre);
        Ok((out, TnetCache { h1_pre, h1, h2_pre }))
    }

    /// Accumulates parameter gradients; returns the attribute-input grad.
    pub fn backward(
        &mut self,
        attr: &Tensor<F>,
        cache: &TnetCache<F>,
        g_out: &Tensor<F>,
    ) -> Result<Tensor<F>> {
        let g_h2_pre = relu_backward(&cache.h2_pre, g_out);
        let g_h1 = self.fc2.backward(&cache.h1, &g_h2_pre)?;
        let g_h1_pre = relu_backward(&cache.h1_pre, &g_h1);
        self.fc1.backward(attr, &g_h1_pre)
    }
}

impl<F: Scalar> Default for TransformNet<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Model<F> for TransformNet<F> {
    fn params(&self) -> Vec<&Param<F>> {
        vec![
            &self.fc1.weight,
            &self.fc1.bias,
            &self.fc2.weight,
            &self.fc2.bias,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        vec![
            &mut self.fc1.weight,
            &mut self.fc1.bias,
            &mut self.fc2.weight,
            &mut self.fc2.bias,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_map_everything_to_zero() {
        let tnet = TransformNet::<f64>::new();
        let attr = Tensor::new(vec![1, 6], vec![0.3; 6]).unwrap();
        let (out, _) = tnet.forward(&attr).unwrap();
        assert_eq!(out.shape(), &[1, 128]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_nonnegative_with_random_weights() {
        let mut tnet = TransformNet::<f64>::new();
        tnet.init(3);
        let attr = Tensor::new(
            vec![2, 6],
            vec![0.1, 0.9, 0.0, 1.0, 0.5, 0.2, 1.0, 0.0, 1.0, 0.3, 0.6, 0.4],
        )
        .unwrap();
        let (out, _) = tnet.forward(&attr).unwrap();
        assert_eq!(out.shape(), &[2, 128]);
        assert!(out.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn wrong_input_dim_rejected() {
        let tnet = TransformNet::<f64>::new();
        assert!(tnet.forward(&Tensor::zeros(&[1, 5])).is_err());
    }
}
