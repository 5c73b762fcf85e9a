//! Minimal dense-tensor compute and reverse-mode gradients for the
//! three fixed architectures. No taping: each layer exposes an explicit
//! forward and backward, and models wire them by hand.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod tensor;

pub use layers::{AdaptiveAvgPool1d, BatchNorm1d, Conv1d, Linear, MaxPool1d, Padding};
pub use optim::{sgd_momentum_step, Param};
pub use tensor::{Scalar, Tensor};

/// Shorthand for lifting an `f64` literal into the working scalar type.
pub fn s<F: Scalar>(x: f64) -> F {
    F::from(x).expect("literal representable in scalar type")
}
