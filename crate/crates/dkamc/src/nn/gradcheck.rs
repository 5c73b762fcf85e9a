//! Central finite-difference verification of every backward pass.
//!
//! Each case builds a small randomized layer, computes analytic
//! gradients of a scalar loss, then probes a random subsample of
//! coordinates with central differences. Relative error is
//! |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
//!
//! Coordinates where both derivatives sit below a per-case noise floor
//! (FD rounding divided by the step swamps the relative-error formula
//! there) are skipped; the f64 tier re-checks the same layers with a
//! floor of 1e-7, so small gradients are still verified exactly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::models::{AttributeModel, Model, TransformNet, VisualModel};
use crate::nn::layers::{relu_backward, relu_forward};
use crate::nn::loss::{mse_loss, one_hot, softmax_cross_entropy};
use crate::nn::{
    s, AdaptiveAvgPool1d, BatchNorm1d, Conv1d, Linear, MaxPool1d, Padding, Scalar, Tensor,
};
use crate::training::embedding_loss;

pub const MAX_COORDS: usize = 64;

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub coords_checked: usize,
}

impl CaseResult {
    pub fn pass(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Smallest derivative magnitude worth comparing. In f32 the forward
/// pass carries ~5e-4 absolute FD noise through the two-layer subnet,
/// so the embedding case only resolves larger gradients; the f64 tier
/// re-checks every coordinate with a floor of 1e-7.
fn noise_floor<F: Scalar>(case: &str) -> f64 {
    if std::mem::size_of::<F>() == 4 {
        match case {
            "embedding" => 0.25,
            _ => 1e-2,
        }
    } else {
        1e-7
    }
}

fn tolerance<F: Scalar>(case: &str) -> f64 {
    if std::mem::size_of::<F>() == 4 {
        1e-3
    } else {
        match case {
            "batchnorm" => 1e-5,
            "embedding" => 1e-4,
            _ => 1e-6,
        }
    }
}

/// Accumulates the worst relative error over probed coordinates.
/// `eval_at(i, delta)` must return the loss with coordinate i shifted
/// by delta, leaving the state as it found it.
struct Prober {
    eps: f64,
    floor: f64,
    max_err: f64,
    coords: usize,
}

impl Prober {
    fn new(eps: f64, floor: f64) -> Self {
        Self {
            eps,
            floor,
            max_err: 0.0,
            coords: 0,
        }
    }

    fn probe(
        &mut self,
        rng: &mut ChaCha8Rng,
        analytic: &[f64],
        mut eval_at: impl FnMut(usize, f64) -> f64,
    ) {
        let n = analytic.len();
        let picked: Vec<usize> = if n <= MAX_COORDS {
            (0..n).collect()
        } else {
            let mut idx: Vec<usize> = (0..n).collect();
            for i in 0..MAX_COORDS {
                let j = rng.gen_range(i..n);
                idx.swap(i, j);
            }
            idx.truncate(MAX_COORDS);
            idx
        };
        for i in picked {
            let lp = eval_at(i, self.eps);
            let lm = eval_at(i, -self.eps);
            let numeric = (lp - lm) / (2.0 * self.eps);
            self.coords += 1;
            if analytic[i].abs().max(numeric.abs()) < self.floor {
                continue;
            }
            self.max_err = self.max_err.max(rel_err(analytic[i], numeric));
        }
    }
}

fn rand_fill<F: Scalar>(t: &mut Tensor<F>, rng: &mut ChaCha8Rng, lo: f64, hi: f64) {
    for v in t.data_mut() {
        *v = s(rng.gen_range(lo..hi));
    }
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn weighted_sum<F: Scalar>(y: &Tensor<F>, c: &[f64]) -> f64 {
    y.data()
        .iter()
        .zip(c)
        .map(|(&v, &w)| num_traits::cast::<F, f64>(v).unwrap() * w)
        .sum()
}

fn coeff_tensor<F: Scalar>(shape: &[usize], c: &[f64]) -> Tensor<F> {
    let mut t = Tensor::zeros(shape);
    for (v, &w) in t.data_mut().iter_mut().zip(c) {
        *v = s(w);
    }
    t
}

// FD losses for the scalar-loss cases are reduced in f64 over the
// F-typed forward outputs; otherwise f32 summation noise (~|L|*2^-24 /
// 2eps) swamps the derivative of small-gradient coordinates.

fn mse_f64<F: Scalar>(pred: &Tensor<F>, target: &Tensor<F>) -> f64 {
    let n = pred.numel() as f64;
    pred.data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = num_traits::cast::<F, f64>(p).unwrap() - num_traits::cast::<F, f64>(t).unwrap();
            d * d
        })
        .sum::<f64>()
        / n
}

fn ce_f64<F: Scalar>(logits: &Tensor<F>, targets: &Tensor<F>) -> f64 {
    let k = logits.shape()[1];
    let b = logits.shape()[0];
    let mut loss = 0.0;
    for row in 0..b {
        let l: Vec<f64> = logits.data()[row * k..(row + 1) * k]
            .iter()
            .map(|&v| num_traits::cast::<F, f64>(v).unwrap())
            .collect();
        let m = l.iter().cloned().fold(f64::MIN, f64::max);
        let lse = m + l.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for (j, &lv) in l.iter().enumerate() {
            let q = num_traits::cast::<F, f64>(targets.data()[row * k + j]).unwrap();
            loss -= q * (lv - lse);
        }
    }
    loss / b as f64
}

fn embed_f64<F: Scalar>(
    feats: &Tensor<F>,
    attrs: &Tensor<F>,
    tnet: &TransformNet<F>,
    lambda: f64,
) -> f64 {
    let (out, _) = tnet.forward(attrs).unwrap();
    let b = out.shape()[0] as f64;
    let embed: f64 = out
        .data()
        .iter()
        .zip(feats.data())
        .map(|(&o, &f)| {
            let d = num_traits::cast::<F, f64>(o).unwrap() - num_traits::cast::<F, f64>(f).unwrap();
            d * d
        })
        .sum();
    let reg: f64 = [&tnet.fc1.weight, &tnet.fc2.weight]
        .iter()
        .map(|w| {
            w.value
                .data()
                .iter()
                .map(|&v| {
                    let x = num_traits::cast::<F, f64>(v).unwrap();
                    x * x
                })
                .sum::<f64>()
        })
        .sum();
    embed / b + lambda * reg
}

fn grads_f64<F: Scalar>(t: &Tensor<F>) -> Vec<f64> {
    t.data()
        .iter()
        .map(|&v| num_traits::cast::<F, f64>(v).unwrap())
        .collect()
}

fn shifted<F: Scalar>(
    t: &mut Tensor<F>,
    i: usize,
    d: f64,
    f: impl FnOnce(&Tensor<F>) -> f64,
) -> f64 {
    let old = t.data()[i];
    t.data_mut()[i] = old + s(d);
    let out = f(t);
    t.data_mut()[i] = old;
    out
}

fn case_conv1d<F: Scalar>(rng: &mut ChaCha8Rng, prober: &mut Prober) -> Result<()> {
    let mut conv = Conv1d::<F>::new("c", 2, 3, 3, 1, Padding::Same);
    rand_fill(&mut conv.weight.value, rng, 0.2, 1.0);
    rand_fill(&mut conv.bias.value, rng, 0.1, 0.5);
    let mut x = Tensor::<F>::zeros(&[2, 2, 8]);
    rand_fill(&mut x, rng, 0.5, 1.5);
    let y = conv.forward(&x)?;
    let c = rand_vec(rng, y.numel(), 0.5, 1.5);
    conv.weight.zero_grad();
    conv.bias.zero_grad();
    let gx = conv.backward(&x, &coeff_tensor(y.shape(), &c))?;
    let gw = grads_f64(&conv.weight.grad);
    let gb = grads_f64(&conv.bias.grad);
    let gi = grads_f64(&gx);
    let mut w = conv.weight.value.clone();
    prober.probe(rng, &gw, |i, d| {
        shifted(&mut w, i, d, |w| {
            let mut probe = conv.clone();
            probe.weight.value = w.clone();
            weighted_sum(&probe.forward(&x).unwrap(), &c)
        })
    });
    let mut b = conv.bias.value.clone();
    prober.probe(rng, &gb, |i, d| {
        shifted(&mut b, i, d, |b| {
            let mut probe = conv.clone();
            probe.bias.value = b.clone();
            weighted_sum(&probe.forward(&x).unwrap(), &c)
        })
    });
    prober.probe(rng, &gi, |i, d| {
        shifted(&mut x, i, d, |x| {
            weighted_sum(&conv.forward(x).unwrap(), &c)
        })
    });
    Ok(())
}

fn case_fc<F: Scalar>(rng: &mut ChaCha8Rng, prober: &mut Prober) -> Result<()> {
    let mut fc = Linear::<F>::new("f", 5, 4);
    // positive weights keep gradient sums from cancelling below the
    // f32 FD noise floor
    rand_fill(&mut fc.weight.value, rng, 0.3, 1.0);
    rand_fill(&mut fc.bias.value, rng, 0.1, 0.5);
    let mut x = Tensor::<F>::zeros(&[3, 5]);
    rand_fill(&mut x, rng, 0.5, 1.5);
    let y = fc.forward(&x)?;
    let c = rand_vec(rng, y.numel(), 0.5, 1.5);
    fc.weight.zero_grad();
    fc.bias.zero_grad();
    let gx = fc.backward(&x, &coeff_tensor(y.shape(), &c))?;
    let gw = grads_f64(&fc.weight.grad);
    let gb = grads_f64(&fc.bias.grad);
    let gi = grads_f64(&gx);
    let mut w = fc.weight.value.clone();
    prober.probe(rng, &gw, |i, d| {
        shifted(&mut w, i, d, |w| {
            let mut probe = fc.clone();
            probe.weight.value = w.clone();
            weighted_sum(&probe.forward(&x).unwrap(), &c)
        })
    });
    let mut b = fc.bias.value.clone();
    prober.probe(rng, &gb, |i, d| {
        shifted(&mut b, i, d, |b| {
            let mut probe = fc.clone();
            probe.bias.value = b.clone();
            weighted_sum(&probe.forward(&x).unwrap(), &c)
        })
    });
    prober.probe(rng, &gi, |i, d| {
        shifted(&mut x, i, d, |x| weighted_sum(&fc.forward(x).unwrap(), &c))
    });
    Ok(())
}

/// Train-mode batchnorm forward recomputed in f64 from F-typed state,
/// reduced against the coefficient vector. The f32 moment computation
/// is too noisy for FD at eps=1e-3.
fn bn_loss_f64<F: Scalar>(gamma: &Tensor<F>, beta: &Tensor<F>, x: &Tensor<F>, c: &[f64]) -> f64 {
    let (b, ch, t) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let xd: Vec<f64> = x
        .data()
        .iter()
        .map(|&v| num_traits::cast::<F, f64>(v).unwrap())
        .collect();
    let mut loss = 0.0;
    for k in 0..ch {
        let vals: Vec<f64> = (0..b)
            .flat_map(|bi| xd[(bi * ch + k) * t..(bi * ch + k) * t + t].to_vec())
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + 1e-5).sqrt();
        let g = num_traits::cast::<F, f64>(gamma.data()[k]).unwrap();
        let be = num_traits::cast::<F, f64>(beta.data()[k]).unwrap();
        for bi in 0..b {
            for ti in 0..t {
                let y = g * (xd[(bi * ch + k) * t + ti] - mean) * inv_std + be;
                loss += y * c[(bi * ch + k) * t + ti];
            }
        }
    }
    loss
}

fn case_batchnorm<F: Scalar>(rng: &mut ChaCha8Rng, prober: &mut Prober) -> Result<()> {
    let mut bn = BatchNorm1d::<F>::new("b", 3);
    rand_fill(&mut bn.gamma.value, rng, 0.5, 1.5);
    rand_fill(&mut bn.beta.value, rng, -0.5, 0.5);
    let mut x = Tensor::<F>::zeros(&[2, 3, 6]);
    rand_fill(&mut x, rng, -1.0, 1.0);
    let (y, cache) = bn.forward_train(&x)?;
    let c = rand_vec(rng, y.numel(), 0.5, 1.5);
    bn.gamma.zero_grad();
    bn.beta.zero_grad();
    let gx = bn.backward(&cache, &coeff_tensor(y.shape(), &c))?;
    let gg = grads_f64(&bn.gamma.grad);
    let gb = grads_f64(&bn.beta.grad);
    let gi = grads_f64(&gx);
    let mut gamma = bn.gamma.value.clone();
    let beta0 = bn.beta.value.clone();
    prober.probe(rng, &gg, |i, d| {
        shifted(&mut gamma, i, d, |g| bn_loss_f64(g, &beta0, &x, &c))
    });
    let gamma0 = bn.gamma.value.clone();
    let mut beta = bn.beta.value.clone();
    prober.probe(rng, &gb, |i, d| {
        shifted(&mut beta, i, d, |b| bn_loss_f64(&gamma0, b, &x, &c))
    });
    prober.probe(rng, &gi, |i, d| {
        shifted(&mut x, i, d, |x| bn_loss_f64(&gamma0, &beta0, x, &c))
    });
    Ok(())
}

fn case_relu<F: Scalar>(rng: &mut ChaCha8Rng, prober: &mut Prober) -> Result<()> {
    let mut x = Tensor::<F>::zeros(&[24]);
    // keep probes away from the kink at 0
    for v in x.data_mut() {
        let r: f64 = rng.gen_range(0.1..1.0);
        *v = s(if rng.gen_bool(0.5) { r } else { -r });
    }
    let y = relu_forward(&x);
    let c = rand_vec(rng, y.numel(), 0.5, 1.5);
    let gi = grads_f64(&relu_backward(&x, &coeff_tensor(y.shape(), &c)));
    prober.probe(rng, &gi, |i, d| {
        shifted(&mut x, i, d, |x| weighted_sum(&relu_forward(x), &c))
    });
    Ok(())
}

fn case_maxpool<F: Scalar>(rng: &mut ChaCha8Rng, prober: &mut Prober) -> Result<()> {
    let pool = MaxPool1d::new(2, 2);
    let mut x = Tensor::<F>::zeros(&[2, 3, 8]);
    rand_fill(&mut x, rng, -1.0, 1.0);
    // enforce a margin inside each window so probing cannot flip the argmax
    {
        let d = x.data_mut();
        for w in d.chunks_mut(2) {
            let a = num_traits::cast::<F, f64>(w[0]).unwrap();
            let b = num_traits::cast::<F, f64>(w[1]).unwrap();
            if (a - b).abs() < 0.2 {
                w[1] = s(b + 0.3);
            }
        }
    }
    let (y, argmax) = pool.forward(&x)?;
    let c = rand_vec(rng, y.numel(), 0.5, 1.5);
    let gi = grads_f64(&pool.backward(x.shape(), &argmax, &coeff_tensor::<F>(y.shape(), &c))?);
    prober.probe(rng, &gi, |i, d| {
        shifted(&mut x, i, d, |x| {
            weighted_sum(&pool.forward(x).unwrap().0, &c)
        })
    });
    Ok(())
}

fn case_adaptive_pool<F: Scalar>(rng: &mut ChaCha8Rng, prober: &mut Prober) -> Result<()> {
    let pool = AdaptiveAvgPool1d::new(3);
    let mut x = Tensor::<F>::zeros(&[2, 2, 7]);
    rand_fill(&mut x, rng, -1.0, 1.0);
    let y = pool.forward(&x)?;
    let c = rand_vec(rng, y.numel(), 0.5, 1.5);
    let gi = grads_f64(&pool.backward(x.shape(), &coeff_tensor::<F>(y.shape(), &c))?);
    prober.probe(rng, &gi, |i, d| {
        shifted(&mut x, i, d, |x| {
            weighted_sum(&pool.forward(x).unwrap(), &c)
        })
    });
    Ok(())
}

fn case_softmax_ce<F: Scalar>(rng: &mut ChaCha8Rng, prober: &mut Prober) -> Result<()> {
    let mut logits = Tensor::<F>::zeros(&[3, 4]);
    rand_fill(&mut logits, rng, -2.0, 2.0);
    let labels: Vec<usize> = (0..3).map(|_| rng.gen_range(0..4)).collect();
    let targets = one_hot::<F>(&labels, 4);
    let (_, g) = softmax_cross_entropy(&logits, &targets)?;
    let ga = grads_f64(&g);
    prober.probe(rng, &ga, |i, d| {
        shifted(&mut logits, i, d, |l| ce_f64(l, &targets))
    });
    Ok(())
}

fn case_mse<F: Scalar>(rng: &mut ChaCha8Rng, prober: &mut Prober) -> Result<()> {
    let mut pred = Tensor::<F>::zeros(&[3, 5]);
    let mut target = Tensor::<F>::zeros(&[3, 5]);
    rand_fill(&mut pred, rng, -1.0, 1.0);
    rand_fill(&mut target, rng, -1.0, 1.0);
    let (_, g) = mse_loss(&pred, &target)?;
    let ga = grads_f64(&g);
    prober.probe(rng, &ga, |i, d| {
        shifted(&mut pred, i, d, |p| mse_f64(p, &target))
    });
    Ok(())
}

/// Shift relu pre-activations away from 0 so FD probes cannot cross
/// the kink.
fn clear_kinks<F: Scalar>(tnet: &mut TransformNet<F>, attrs: &Tensor<F>, margin: f64) {
    for _ in 0..20 {
        let (_, cache) = tnet.forward(attrs).unwrap();
        let mut dirty = false;
        for layer in 0..2 {
            let pre = if layer == 0 {
                &cache.h1_pre
            } else {
                &cache.h2_pre
            };
            let dims = pre.shape()[1];
            let mut bump = vec![false; dims];
            for b in 0..pre.shape()[0] {
                for j in 0..dims {
                    let v = num_traits::cast::<F, f64>(pre.data()[b * dims + j]).unwrap();
                    if v.abs() < margin {
                        bump[j] = true;
                    }
                }
            }
            let bias = if layer == 0 {
                &mut tnet.fc1.bias
            } else {
                &mut tnet.fc2.bias
            };
            for (j, &hit) in bump.iter().enumerate() {
                if hit {
                    let old = bias.value.data()[j];
                    bias.value.data_mut()[j] = old + s(3.0 * margin);
                    dirty = true;
                }
            }
        }
        if !dirty {
            return;
        }
    }
}

fn case_embedding<F: Scalar>(rng: &mut ChaCha8Rng, prober: &mut Prober) -> Result<()> {
    let mut tnet = TransformNet::<F>::new();
    tnet.init(rng.gen());
    let mut attrs = Tensor::<F>::zeros(&[2, 6]);
    rand_fill(&mut attrs, rng, 0.2, 1.0);
    let mut feats = Tensor::<F>::zeros(&[2, 128]);
    rand_fill(&mut feats, rng, -0.5, 0.5);
    clear_kinks(&mut tnet, &attrs, (20.0 * prober.eps).max(0.02));
    let lambda: F = s(0.01);
    tnet.zero_grads();
    embedding_loss(&feats, &attrs, &mut tnet, lambda)?;
    let analytic: Vec<Vec<f64>> = tnet.params().iter().map(|p| grads_f64(&p.grad)).collect();
    for (pi, ga) in analytic.iter().enumerate() {
        prober.probe(rng, ga, |i, d| {
            let old = tnet.params()[pi].value.data()[i];
            tnet.params_mut()[pi].value.data_mut()[i] = old + s(d);
            let out = embed_f64(&feats, &attrs, &tnet, 0.01);
            tnet.params_mut()[pi].value.data_mut()[i] = old;
            out
        });
    }
    Ok(())
}

type CaseFn = fn(&mut ChaCha8Rng, &mut Prober) -> Result<()>;

const CASE_NAMES: [&str; 9] = [
    "conv1d",
    "fc",
    "batchnorm",
    "relu",
    "maxpool",
    "adaptive_pool",
    "softmax_ce",
    "mse",
    "embedding",
];

fn cases<F: Scalar>() -> [CaseFn; 9] {
    [
        case_conv1d::<F>,
        case_fc::<F>,
        case_batchnorm::<F>,
        case_relu::<F>,
        case_maxpool::<F>,
        case_adaptive_pool::<F>,
        case_softmax_ce::<F>,
        case_mse::<F>,
        case_embedding::<F>,
    ]
}

/// Run every layer case over the given seeds. `eps` should be 1e-3 for
/// f32 and 1e-5 for f64.
pub fn run_suite<F: Scalar>(seeds: &[u64], eps: f64) -> Result<Vec<CaseResult>> {
    let fns = cases::<F>();
    let mut out = Vec::with_capacity(CASE_NAMES.len());
    for (name, case) in CASE_NAMES.iter().zip(fns.iter()) {
        let mut prober = Prober::new(eps, noise_floor::<F>(name));
        for &seed in seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            case(&mut rng, &mut prober)?;
        }
        out.push(CaseResult {
            name: (*name).to_string(),
            max_rel_err: prober.max_err,
            tolerance: tolerance::<F>(name),
            coords_checked: prober.coords,
        });
    }
    Ok(out)
}

/// End-to-end FD check of the attribute model plus MSE loss in f64.
pub fn composite_attribute_check(seed: u64) -> Result<CaseResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = AttributeModel::<f64>::new();
    model.init(seed);
    let mut x = Tensor::<f64>::zeros(&[1, 2, 128]);
    rand_fill(&mut x, &mut rng, -1.0, 1.0);
    let mut target = Tensor::<f64>::zeros(&[1, 6]);
    rand_fill(&mut target, &mut rng, 0.0, 1.0);
    model.zero_grads();
    let (pred, cache) = model.forward_train(&x)?;
    let (_, g) = mse_loss(&pred, &target)?;
    model.backward(&cache, &g)?;
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| grads_f64(&p.grad)).collect();
    // one flat index over all parameters so every layer can be hit
    let flat: Vec<(usize, usize)> = analytic
        .iter()
        .enumerate()
        .flat_map(|(pi, g)| (0..g.len()).map(move |i| (pi, i)))
        .collect();
    let ga: Vec<f64> = flat.iter().map(|&(pi, i)| analytic[pi][i]).collect();
    let mut prober = Prober::new(1e-5, 1e-7);
    prober.probe(&mut rng, &ga, |k, d| {
        let (pi, i) = flat[k];
        let old = model.params()[pi].value.data()[i];
        model.params_mut()[pi].value.data_mut()[i] = old + d;
        let (pred, _) = model.forward_train(&x).unwrap();
        let out = mse_loss(&pred, &target).unwrap().0;
        model.params_mut()[pi].value.data_mut()[i] = old;
        out
    });
    Ok(CaseResult {
        name: "attribute_model_mse".into(),
        max_rel_err: prober.max_err,
        tolerance: 1e-4,
        coords_checked: prober.coords,
    })
}

/// End-to-end FD check of the visual model plus softmax-CE loss in f64.
pub fn composite_visual_check(seed: u64) -> Result<CaseResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = VisualModel::<f64>::new(4);
    model.init(seed);
    let mut x = Tensor::<f64>::zeros(&[2, 2, 128]);
    rand_fill(&mut x, &mut rng, -1.0, 1.0);
    let labels: Vec<usize> = (0..2).map(|_| rng.gen_range(0..4)).collect();
    let targets = one_hot::<f64>(&labels, 4);
    model.zero_grads();
    let (_, logits, cache) = model.forward(&x)?;
    let (_, g) = softmax_cross_entropy(&logits, &targets)?;
    model.backward_from_logits(&cache, &g)?;
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| grads_f64(&p.grad)).collect();
    let flat: Vec<(usize, usize)> = analytic
        .iter()
        .enumerate()
        .flat_map(|(pi, g)| (0..g.len()).map(move |i| (pi, i)))
        .collect();
    let ga: Vec<f64> = flat.iter().map(|&(pi, i)| analytic[pi][i]).collect();
    let mut prober = Prober::new(1e-5, 1e-7);
    prober.probe(&mut rng, &ga, |k, d| {
        let (pi, i) = flat[k];
        let old = model.params()[pi].value.data()[i];
        model.params_mut()[pi].value.data_mut()[i] = old + d;
        let (_, logits, _) = model.forward(&x).unwrap();
        let out = softmax_cross_entropy(&logits, &targets).unwrap().0;
        model.params_mut()[pi].value.data_mut()[i] = old;
        out
    });
    Ok(CaseResult {
        name: "visual_model_ce".into(),
        max_rel_err: prober.max_err,
        tolerance: 1e-4,
        coords_checked: prober.coords,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeds(n: u64) -> Vec<u64> {
        (0..n).map(|i| 1000 + i).collect()
    }

    #[test]
    fn f32_suite_within_1e3() {
        let results = run_suite::<f32>(&seeds(20), 1e-3).unwrap();
        for r in &results {
            assert!(
                r.pass(),
                "{}: max rel err {} > {} ({} coords)",
                r.name,
                r.max_rel_err,
                r.tolerance,
                r.coords_checked
            );
            assert!(r.coords_checked > 0, "{}: no coords checked", r.name);
        }
    }

    #[test]
    fn f64_suite_within_tier_tolerances() {
        let results = run_suite::<f64>(&seeds(20), 1e-5).unwrap();
        for r in &results {
            assert!(
                r.pass(),
                "{}: max rel err {} > {}",
                r.name,
                r.max_rel_err,
                r.tolerance
            );
        }
        // linear layers are exact up to rounding
        let fc = results.iter().find(|r| r.name == "fc").unwrap();
        assert!(fc.max_rel_err <= 1e-7, "fc err {}", fc.max_rel_err);
    }

    #[test]
    fn composite_model_within_1e4() {
        let r = composite_attribute_check(42).unwrap();
        assert!(r.pass(), "composite err {}", r.max_rel_err);
        assert_eq!(r.coords_checked, MAX_COORDS);
    }

    #[test]
    fn composite_visual_within_1e4() {
        let r = composite_visual_check(43).unwrap();
        assert!(r.pass(), "composite err {}", r.max_rel_err);
        assert_eq!(r.coords_checked, MAX_COORDS);
    }

    #[test]
    fn rel_err_formula() {
        assert_eq!(rel_err(2.0, 2.0), 0.0);
        assert!((rel_err(1.0, 0.9) - 0.1).abs() < 1e-12);
        // floor keeps near-zero pairs from dividing by zero
        assert!(rel_err(0.0, 1e-12) < 1e-3);
    }
}
