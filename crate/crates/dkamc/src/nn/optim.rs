use crate::nn::tensor::{Scalar, Tensor};

/// A trainable tensor with its gradient and momentum buffers.
#[derive(Debug, Clone)]
pub struct Param<F> {
    pub name: String,
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
    pub momentum: Tensor<F>,
}

impl<F: Scalar> Param<F> {
    pub fn new(name: impl Into<String>, value: Tensor<F>) -> Self {
        let grad = Tensor::zeros(value.shape());
        let momentum = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
            momentum,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }
}

/// Classic momentum SGD: v <- momentum*v + grad; value <- value - lr*v.
/// Gradients are zeroed afterwards.
pub fn sgd_momentum_step<F: Scalar>(params: &mut [&mut Param<F>], lr: F, momentum: F) {
    for p in params.iter_mut() {
        let g = p.grad.data();
        let v = p.momentum.data_mut();
        for (vi, &gi) in v.iter_mut().zip(g) {
            *vi = momentum * *vi + gi;
        }
        let v = p.momentum.data();
        for (wi, &vi) in p.value.data_mut().iter_mut().zip(v) {
            *wi = *wi - lr * vi;
        }
        p.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> Param<f64> {
        Param::new("p", Tensor::from_vec(vec![v]))
    }

    #[test]
    fn first_step_moves_by_lr_times_grad() {
        let mut p = scalar_param(1.0);
        p.grad.data_mut()[0] = 1.0;
        sgd_momentum_step(&mut [&mut p], 0.01, 0.9);
        assert!((p.value.data()[0] - 0.99).abs() < 1e-12);
        assert_eq!(p.momentum.data()[0], 1.0);
        assert_eq!(p.grad.data()[0], 0.0);
    }

    #[test]
    fn zero_grad_decays_velocity_geometrically() {
        let mut p = scalar_param(0.0);
        p.grad.data_mut()[0] = 1.0;
        sgd_momentum_step(&mut [&mut p], 0.0, 0.9);
        for _ in 0..3 {
            sgd_momentum_step(&mut [&mut p], 0.0, 0.9);
        }
        assert!((p.momentum.data()[0] - 0.9f64.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn two_steps_constant_grad() {
        // total delta = -lr * (g + (momentum*g + g)) = -lr*(2 + momentum)*g
        let mut p = scalar_param(0.0);
        let g = 2.0;
        for _ in 0..2 {
            p.grad.data_mut()[0] = g;
            sgd_momentum_step(&mut [&mut p], 0.01, 0.9);
        }
        assert!((p.value.data()[0] - (-0.01 * 2.9 * g)).abs() < 1e-12);
    }
}
