//! The three hand-wired networks: the multiscale visual encoder, the
//! residual attribute predictor, and the two-layer transformation
//! subnet mapping attribute space into visual-feature space.

pub mod attribute;
pub mod checkpoint;
pub mod transform;
pub mod visual;

pub use attribute::{AttributeModel, ResUnit};
pub use transform::TransformNet;
pub use visual::{MsModule, VisualModel};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::{Param, Scalar, Tensor};

/// Uniform Xavier/Glorot bound for a weight tensor.
/// FC weights are [out, in]; conv weights are [out_ch, in_ch, kernel].
fn xavier_bound(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match shape {
        [out, inp] => (*inp, *out),
        [oc, ic, k] => (ic * k, oc * k),
        _ => (shape.iter().product(), 1),
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Common parameter access for the three models. State entries cover
/// both trainable parameters and batchnorm running statistics, so a
/// checkpoint restores inference behavior exactly.
pub trait Model<F: Scalar> {
    fn params(&self) -> Vec<&Param<F>>;
    fn params_mut(&mut self) -> Vec<&mut Param<F>>;
    /// Non-trainable state (batchnorm running stats), name-keyed.
    fn extra_state(&self) -> Vec<(String, &Tensor<F>)> {
        Vec::new()
    }
    fn extra_state_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        Vec::new()
    }

    /// Deterministic initialization: Xavier-uniform weights, zero
    /// biases, identity batchnorm, reset running stats.
    fn init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in self.params_mut() {
            if p.name.ends_with(".weight") {
                let b = xavier_bound(p.value.shape());
                for v in p.value.data_mut() {
                    *v = F::from(rng.gen_range(-b..b)).unwrap();
                }
            } else if p.name.ends_with(".gamma") {
                p.value.fill(F::one());
            } else {
                p.value.fill(F::zero());
            }
            p.grad.fill(F::zero());
            p.momentum.fill(F::zero());
        }
        for (name, t) in self.extra_state_mut() {
            if name.ends_with("running_var") {
                t.fill(F::one());
            } else {
                t.fill(F::zero());
            }
        }
    }

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.numel()).sum()
    }

    /// Full named state, parameters first, then running stats.
    fn state(&self) -> Vec<(String, Tensor<F>)> {
        let mut out: Vec<(String, Tensor<F>)> = self
            .params()
            .into_iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        out.extend(self.extra_state().into_iter().map(|(n, t)| (n, t.clone())));
        out
    }

    fn load_state(&mut self, entries: &HashMap<String, Tensor<F>>) -> Result<()> {
        for p in self.params_mut() {
            let t = entries.get(&p.name).ok_or_else(|| {
                Error::Invalid(format!("checkpoint missing parameter {}", p.name))
            })?;
            t.assert_shape(p.value.shape())?;
            p.value = t.clone();
            p.grad.fill(F::zero());
            p.momentum.fill(F::zero());
        }
        for (name, slot) in self.extra_state_mut() {
            let t = entries
                .get(&name)
                .ok_or_else(|| Error::Invalid(format!("checkpoint missing state {name}")))?;
            t.assert_shape(slot.shape())?;
            *slot = t.clone();
        }
        Ok(())
    }
}

/// Map every row of the class attribute matrix through the
/// transformation subnet, producing one prototype per class ([K, 128]).
pub fn class_prototypes<F: Scalar>(
    tnet: &TransformNet<F>,
    cam: &crate::attributes::ClassAttributeMatrix,
) -> Result<Tensor<F>> {
    let k = cam.num_classes();
    let dim = cam.row(0).values().len();
    let mut attrs = Tensor::zeros(&[k, dim]);
    for (c, row) in cam.rows().iter().enumerate() {
        for (i, &v) in row.values().iter().enumerate() {
            attrs.data_mut()[c * dim + i] = F::from(v).unwrap();
        }
    }
    let (out, _) = tnet.forward(&attrs)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xavier_bound_matches_fc_formula() {
        assert!((xavier_bound(&[128, 512]) - (6.0f64 / 640.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn init_is_deterministic_and_biases_zero() {
        let mut a = TransformNet::<f64>::new();
        let mut b = TransformNet::<f64>::new();
        a.init(7);
        b.init(7);
        for (pa, pb) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(pa.value.data(), pb.value.data());
        }
        assert!(a.fc1.bias.value.data().iter().all(|&v| v == 0.0));
        let mut c = TransformNet::<f64>::new();
        c.init(8);
        assert_ne!(a.fc1.weight.value.data(), c.fc1.weight.value.data());
    }
}
