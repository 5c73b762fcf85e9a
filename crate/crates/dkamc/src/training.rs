//! The three-stage schedule: cross-entropy pretraining of the visual
//! model, MSE pretraining of the attribute model, and least-squares
//! embedding training of the transformation subnet against frozen
//! submodels, plus the nearest-prototype classifier.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

use crate::attributes::ClassAttributeMatrix;
use crate::error::{Error, Result};
use crate::models::{AttributeModel, Model, TransformNet, VisualModel};
use crate::nn::loss::{mse_loss, one_hot, softmax_cross_entropy};
use crate::nn::{s, sgd_momentum_step, Scalar, Tensor};
use crate::signal::{Dataset, IQFrame};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub epochs_visual: usize,
    pub epochs_attr: usize,
    pub epochs_embed: usize,
    pub batch_size: usize,
    pub lambda_reg: f64,
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            epochs_visual: 40,
            epochs_attr: 40,
            epochs_embed: 40,
            batch_size: 64,
            lambda_reg: 1e-4,
            seed: 0,
            train_fraction: 0.8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lr must be > 0, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::BadFraction(self.train_fraction));
        }
        if self.lambda_reg < 0.0 {
            return Err(Error::InvalidConfig("lambda_reg must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub stage: String,
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map(|e| e.train_loss).unwrap_or(f64::NAN)
    }
}

/// Stratified split by (class, snr) cell, deterministic per seed.
pub fn split_dataset(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::BadFraction(train_fraction));
    }
    if dataset.frames.is_empty() {
        return Err(Error::Invalid("empty dataset".into()));
    }
    // cells in deterministic (class, snr) order
    let mut cells: Vec<((usize, i8), Vec<usize>)> = Vec::new();
    for (idx, frame) in dataset.frames.iter().enumerate() {
        let key = (frame.label, frame.snr_db);
        match cells.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(idx),
            None => cells.push((key, vec![idx])),
        }
    }
    cells.sort_by_key(|(k, _)| *k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_frames = Vec::new();
    let mut test_frames = Vec::new();
    for ((class, snr_db), mut indices) in cells {
        let count = indices.len();
        if count < 2 {
            return Err(Error::CellTooSmall {
                class,
                snr_db,
                count,
            });
        }
        indices.shuffle(&mut rng);
        let n_train = ((train_fraction * count as f64).round() as usize).clamp(1, count - 1);
        for (pos, idx) in indices.into_iter().enumerate() {
            if pos < n_train {
                train_frames.push(dataset.frames[idx].clone());
            } else {
                test_frames.push(dataset.frames[idx].clone());
            }
        }
    }
    let mk = |frames: Vec<IQFrame>| Dataset {
        frames,
        class_names: dataset.class_names.clone(),
        frame_length: dataset.frame_length,
    };
    Ok((mk(train_frames), mk(test_frames)))
}

/// Stack frames into a [B, 2, N] tensor (I row, then Q row).
pub fn frames_to_tensor<F: Scalar>(frames: &[&IQFrame], frame_len: usize) -> Tensor<F> {
    let mut t = Tensor::zeros(&[frames.len(), 2, frame_len]);
    let d = t.data_mut();
    for (b, frame) in frames.iter().enumerate() {
        for (i, &v) in frame.i.iter().enumerate() {
            d[(b * 2) * frame_len + i] = s(v as f64);
        }
        for (i, &v) in frame.q.iter().enumerate() {
            d[(b * 2 + 1) * frame_len + i] = s(v as f64);
        }
    }
    t
}

fn cam_targets<F: Scalar>(cam: &ClassAttributeMatrix, labels: &[usize]) -> Tensor<F> {
    let l = cam.row(0).values().len();
    let mut t = Tensor::zeros(&[labels.len(), l]);
    for (b, &label) in labels.iter().enumerate() {
        for (i, &v) in cam.row(label).values().iter().enumerate() {
            t.data_mut()[b * l + i] = s(v);
        }
    }
    t
}

struct EpochPlan {
    fit: Vec<usize>,
    val: Vec<usize>,
    rng: ChaCha8Rng,
}

/// Hold out ~10% of the training frames as a validation subset.
fn epoch_plan(train: &Dataset, seed: u64) -> EpochPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..train.frames.len()).collect();
    indices.shuffle(&mut rng);
    let val_n = (indices.len() / 10).max(1).min(indices.len() - 1);
    let val = indices.split_off(indices.len() - val_n);
    EpochPlan {
        fit: indices,
        val,
        rng,
    }
}

fn guard_divergence(loss: f64, first: &mut Option<f64>, epoch: usize, batch: usize) -> Result<()> {
    let reference = *first.get_or_insert(loss.abs().max(1e-12));
    if !loss.is_finite() || loss > 1e4 * reference {
        return Err(Error::Divergence { epoch, batch, loss });
    }
    Ok(())
}

/// Cross-entropy pretraining of the visual model. The model is left at
/// the epoch with the best held-out accuracy.
pub fn pretrain_visual(
    model: &mut VisualModel<f32>,
    train: &Dataset,
    config: &TrainConfig,
) -> Result<TrainReport> {
    let k = train.num_classes();
    let mut plan = epoch_plan(train, config.seed ^ 0x7669_7375_616c);
    let mut report = TrainReport {
        stage: "visual".into(),
        epochs: Vec::new(),
    };
    let mut first_loss = None;
    let mut best: Option<(f64, Vec<(String, Tensor<f32>)>)> = None;
    for epoch in 1..=config.epochs_visual {
        let start = Instant::now();
        plan.fit.shuffle(&mut plan.rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (batch_idx, chunk) in plan.fit.chunks(config.batch_size).enumerate() {
            let frames: Vec<&IQFrame> = chunk.iter().map(|&i| &train.frames[i]).collect();
            let labels: Vec<usize> = frames.iter().map(|f| f.label).collect();
            let x = frames_to_tensor::<f32>(&frames, train.frame_length);
            let (_, logits, cache) = model.forward(&x)?;
            let (loss, g_logits) = softmax_cross_entropy(&logits, &one_hot(&labels, k))?;
            guard_divergence(loss as f64, &mut first_loss, epoch, batch_idx)?;
            model.backward_from_logits(&cache, &g_logits)?;
            let mut params = model.params_mut();
            sgd_momentum_step(&mut params, config.lr as f32, config.momentum as f32);
            loss_sum += loss as f64 * chunk.len() as f64;
            seen += chunk.len();
        }
        let val_acc = visual_accuracy(model, train, &plan.val)?;
        if best.as_ref().map_or(true, |(acc, _)| val_acc > *acc) {
            best = Some((val_acc, model.state()));
        }
        report.epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_metric: val_acc,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    if let Some((_, state)) = best {
        model.load_state(&state.into_iter().collect())?;
    }
    Ok(report)
}

fn visual_accuracy(model: &VisualModel<f32>, data: &Dataset, indices: &[usize]) -> Result<f64> {
    let mut correct = 0usize;
    for chunk in indices.chunks(256) {
        let frames: Vec<&IQFrame> = chunk.iter().map(|&i| &data.frames[i]).collect();
        let x = frames_to_tensor::<f32>(&frames, data.frame_length);
        let (_, logits) = model.forward_eval(&x)?;
        let k = model.num_classes;
        for (b, frame) in frames.iter().enumerate() {
            let row = &logits.data()[b * k..(b + 1) * k];
            if argmax(row) == frame.label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / indices.len().max(1) as f64)
}

fn argmax<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// MSE pretraining of the attribute model against the class attribute
/// matrix. The model is left at the epoch with the lowest held-out MSE.
pub fn pretrain_attribute(
    model: &mut AttributeModel<f32>,
    train: &Dataset,
    cam: &ClassAttributeMatrix,
    config: &TrainConfig,
) -> Result<TrainReport> {
    let mut plan = epoch_plan(train, config.seed ^ 0x61_7474_7269_62);
    let mut report = TrainReport {
        stage: "attribute".into(),
        epochs: Vec::new(),
    };
    let mut first_loss = None;
    let mut best: Option<(f64, Vec<(String, Tensor<f32>)>)> = None;
    for epoch in 1..=config.epochs_attr {
        let start = Instant::now();
        plan.fit.shuffle(&mut plan.rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (batch_idx, chunk) in plan.fit.chunks(config.batch_size).enumerate() {
            let frames: Vec<&IQFrame> = chunk.iter().map(|&i| &train.frames[i]).collect();
            let labels: Vec<usize> = frames.iter().map(|f| f.label).collect();
            let x = frames_to_tensor::<f32>(&frames, train.frame_length);
            let targets = cam_targets::<f32>(cam, &labels);
            let (pred, cache) = model.forward_train(&x)?;
            let (loss, g_pred) = mse_loss(&pred, &targets)?;
            guard_divergence(loss as f64, &mut first_loss, epoch, batch_idx)?;
            model.backward(&cache, &g_pred)?;
            let mut params = model.params_mut();
            sgd_momentum_step(&mut params, config.lr as f32, config.momentum as f32);
            loss_sum += loss as f64 * chunk.len() as f64;
            seen += chunk.len();
        }
        let val_mse = attribute_mse(model, train, cam, &plan.val)?;
        if best.as_ref().map_or(true, |(mse, _)| val_mse < *mse) {
            best = Some((val_mse, model.state()));
        }
        report.epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_metric: val_mse,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    if let Some((_, state)) = best {
        model.load_state(&state.into_iter().collect())?;
    }
    Ok(report)
}

fn attribute_mse(
    model: &AttributeModel<f32>,
    data: &Dataset,
    cam: &ClassAttributeMatrix,
    indices: &[usize],
) -> Result<f64> {
    let mut total = 0.0;
    let mut seen = 0usize;
    for chunk in indices.chunks(256) {
        let frames: Vec<&IQFrame> = chunk.iter().map(|&i| &data.frames[i]).collect();
        let labels: Vec<usize> = frames.iter().map(|f| f.label).collect();
        let x = frames_to_tensor::<f32>(&frames, data.frame_length);
        let pred = model.forward_eval(&x)?;
        let (loss, _) = mse_loss(&pred, &cam_targets::<f32>(cam, &labels))?;
        total += loss as f64 * chunk.len() as f64;
        seen += chunk.len();
    }
    Ok(total / seen.max(1) as f64)
}

/// Least-squares embedding loss (mean squared distance between visual
/// features and transformed attribute predictions, plus L2 weight
/// regularization). Accumulates gradients into the transformation
/// subnet only.
pub fn embedding_loss<F: Scalar>(
    visual_feats: &Tensor<F>,
    attr_preds: &Tensor<F>,
    tnet: &mut TransformNet<F>,
    lambda: F,
) -> Result<F> {
    let (out, cache) = tnet.forward(attr_preds)?;
    visual_feats.assert_shape(out.shape())?;
    let bsz = out.shape()[0];
    let bf = s::<F>(bsz as f64);
    let mut g_out = Tensor::zeros(out.shape());
    let mut embed = F::zero();
    let two = s::<F>(2.0);
    for ((g, &o), &f) in g_out
        .data_mut()
        .iter_mut()
        .zip(out.data())
        .zip(visual_feats.data())
    {
        let d = o - f;
        embed = embed + d * d;
        *g = two * d / bf;
    }
    embed = embed / bf;
    tnet.backward(attr_preds, &cache, &g_out)?;
    // regularizer applies to weight matrices only
    let mut reg = F::zero();
    for w in [&mut tnet.fc1.weight, &mut tnet.fc2.weight] {
        reg = reg + w.value.sq_norm();
        for (g, &v) in w.grad.data_mut().iter_mut().zip(w.value.data()) {
            *g = *g + two * lambda * v;
        }
    }
    Ok(embed + lambda * reg)
}

/// Loss-only evaluation of the embedding objective (no gradients).
pub fn embedding_loss_value<F: Scalar>(
    visual_feats: &Tensor<F>,
    attr_preds: &Tensor<F>,
    tnet: &TransformNet<F>,
    lambda: F,
) -> Result<F> {
    let (out, _) = tnet.forward(attr_preds)?;
    visual_feats.assert_shape(out.shape())?;
    let bf = s::<F>(out.shape()[0] as f64);
    let embed: F = out
        .data()
        .iter()
        .zip(visual_feats.data())
        .map(|(&o, &f)| (o - f) * (o - f))
        .sum();
    let reg = tnet.fc1.weight.value.sq_norm() + tnet.fc2.weight.value.sq_norm();
    Ok(embed / bf + lambda * reg)
}

/// Train the transformation subnet against frozen pretrained models.
/// The submodels are taken by shared reference, so their parameters
/// cannot change.
pub fn train_embedding(
    visual: &VisualModel<f32>,
    attr: &AttributeModel<f32>,
    tnet: &mut TransformNet<f32>,
    train: &Dataset,
    config: &TrainConfig,
) -> Result<TrainReport> {
    let mut plan = epoch_plan(train, config.seed ^ 0x65_6d62_6564);
    let mut report = TrainReport {
        stage: "embedding".into(),
        epochs: Vec::new(),
    };
    // Both submodels are frozen for this stage and their eval-mode
    // forwards are per-sample deterministic, so the visual features and
    // attribute predictions are computed once up front; epochs then only
    // run the transformation subnet.
    let mut feat_cache: Vec<f32> = Vec::new();
    let mut pred_cache: Vec<f32> = Vec::new();
    let mut feat_dim = 0usize;
    let mut pred_dim = 0usize;
    {
        let n = train.frames.len();
        let all_idx: Vec<usize> = plan.fit.iter().chain(plan.val.iter()).copied().collect();
        for chunk in all_idx.chunks(256) {
            let frames: Vec<&IQFrame> = chunk.iter().map(|&i| &train.frames[i]).collect();
            let x = frames_to_tensor::<f32>(&frames, train.frame_length);
            let (feats, _) = visual.forward_eval(&x)?;
            let preds = attr.forward_eval(&x)?;
            if feat_cache.is_empty() {
                feat_dim = feats.shape()[1];
                pred_dim = preds.shape()[1];
                feat_cache.resize(n * feat_dim, 0.0);
                pred_cache.resize(n * pred_dim, 0.0);
            }
            for (b, &i) in chunk.iter().enumerate() {
                feat_cache[i * feat_dim..(i + 1) * feat_dim]
                    .copy_from_slice(&feats.data()[b * feat_dim..(b + 1) * feat_dim]);
                pred_cache[i * pred_dim..(i + 1) * pred_dim]
                    .copy_from_slice(&preds.data()[b * pred_dim..(b + 1) * pred_dim]);
            }
        }
    }
    let gather = |indices: &[usize]| -> Result<(Tensor<f32>, Tensor<f32>)> {
        let mut f = Vec::with_capacity(indices.len() * feat_dim);
        let mut p = Vec::with_capacity(indices.len() * pred_dim);
        for &i in indices {
            f.extend_from_slice(&feat_cache[i * feat_dim..(i + 1) * feat_dim]);
            p.extend_from_slice(&pred_cache[i * pred_dim..(i + 1) * pred_dim]);
        }
        Ok((
            Tensor::new(vec![indices.len(), feat_dim], f)?,
            Tensor::new(vec![indices.len(), pred_dim], p)?,
        ))
    };
    let mut first_loss = None;
    for epoch in 1..=config.epochs_embed {
        let start = Instant::now();
        plan.fit.shuffle(&mut plan.rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (batch_idx, chunk) in plan.fit.chunks(config.batch_size).enumerate() {
            let (feats, preds) = gather(chunk)?;
            let loss = embedding_loss(&feats, &preds, tnet, config.lambda_reg as f32)?;
            guard_divergence(loss as f64, &mut first_loss, epoch, batch_idx)?;
            let mut params = tnet.params_mut();
            sgd_momentum_step(&mut params, config.lr as f32, config.momentum as f32);
            loss_sum += loss as f64 * chunk.len() as f64;
            seen += chunk.len();
        }
        let val_loss = {
            let (feats, preds) = gather(&plan.val)?;
            embedding_loss_value(&feats, &preds, tnet, config.lambda_reg as f32)? as f64
        };
        report.epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_metric: val_loss,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(report)
}

/// Nearest-prototype classification in visual-feature space. Returns
/// the class index (ties break to the lowest index) and the Euclidean
/// distance to every prototype.
pub fn classify<F: Scalar>(
    visual: &VisualModel<F>,
    tnet: &TransformNet<F>,
    cam: &ClassAttributeMatrix,
    frame: &Tensor<F>,
) -> Result<(usize, Vec<f64>)> {
    let (feature, _) = visual.forward_eval(frame)?;
    let prototypes = crate::models::class_prototypes(tnet, cam)?;
    let indices = nearest_prototypes(&feature, &prototypes);
    let d = feature.shape()[1];
    let k = cam.num_classes();
    let distances: Vec<f64> = (0..k)
        .map(|c| {
            let mut acc = 0.0f64;
            for i in 0..d {
                let diff: f64 =
                    num_traits::cast::<F, f64>(feature.data()[i] - prototypes.data()[c * d + i])
                        .unwrap();
                acc += diff * diff;
            }
            acc.sqrt()
        })
        .collect();
    Ok((indices[0], distances))
}

/// Batched nearest-prototype assignment (features [B, D], prototypes [K, D]).
pub fn nearest_prototypes<F: Scalar>(features: &Tensor<F>, prototypes: &Tensor<F>) -> Vec<usize> {
    let d = prototypes.shape()[1];
    let k = prototypes.shape()[0];
    let bsz = features.numel() / d;
    (0..bsz)
        .map(|b| {
            let f = &features.data()[b * d..(b + 1) * d];
            let mut best = 0usize;
            let mut best_d = F::infinity();
            for c in 0..k {
                let p = &prototypes.data()[c * d..(c + 1) * d];
                let dist: F = f.iter().zip(p).map(|(&a, &b)| (a - b) * (a - b)).sum();
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Pure data-driven baseline: argmax over the softmax head's logits.
pub fn classify_baseline<F: Scalar>(visual: &VisualModel<F>, frame: &Tensor<F>) -> Result<usize> {
    let (_, logits) = visual.forward_eval(frame)?;
    Ok(argmax(&logits.data()[..visual.num_classes]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::class_attribute_matrix;
    use crate::signal::{synthesize_dataset, ChannelConfig, ModulationScheme::*, Pulse};

    fn toy_dataset() -> Dataset {
        let config = ChannelConfig {
            snr_grid_db: vec![-10, 0, 10],
            frames_per_class_per_snr: 10,
            samples_per_symbol: 8,
            pulse: Pulse::Rectangular,
            rng_seed: 7,
        };
        synthesize_dataset(&config, &[Bpsk, Qpsk, Qam16, Qam64]).unwrap()
    }

    #[test]
    fn split_is_stratified_and_exhaustive() {
        let ds = toy_dataset();
        let (train, test) = split_dataset(&ds, 0.8, 5).unwrap();
        assert_eq!(train.frames.len(), 96);
        assert_eq!(test.frames.len(), 24);
        for label in 0..4 {
            for &snr in &[-10i8, 0, 10] {
                let n = train
                    .frames
                    .iter()
                    .filter(|f| f.label == label && f.snr_db == snr)
                    .count();
                assert_eq!(n, 8, "cell ({label},{snr})");
            }
        }
        let (train2, test2) = split_dataset(&ds, 0.8, 5).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let ds = toy_dataset();
        assert!(matches!(
            split_dataset(&ds, 1.0, 0),
            Err(Error::BadFraction(_))
        ));
        assert!(matches!(
            split_dataset(&ds, 0.0, 0),
            Err(Error::BadFraction(_))
        ));
    }

    #[test]
    fn pretrain_visual_report_rows_and_lr_zero() {
        let ds = toy_dataset();
        let (train, _) = split_dataset(&ds, 0.8, 1).unwrap();
        let mut model = VisualModel::<f32>::new(4);
        model.init(3);
        let before: Vec<f32> = model
            .params()
            .iter()
            .flat_map(|p| p.value.data().to_vec())
            .collect();
        let config = TrainConfig {
            epochs_visual: 2,
            batch_size: 32,
            lr: 0.0,
            ..TrainConfig::default()
        };
        let report = pretrain_visual(&mut model, &train, &config).unwrap();
        assert_eq!(report.epochs.len(), 2);
        assert!(report.epochs.iter().all(|e| e.train_loss.is_finite()));
        let after: Vec<f32> = model
            .params()
            .iter()
            .flat_map(|p| p.value.data().to_vec())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn embedding_loss_zero_weight_cases() {
        // zero tnet: loss = mean ||phi1||^2, regularizer vanishes
        let feats = Tensor::new(
            vec![2, 128],
            (0..256).map(|i| (i % 5) as f64 * 0.1).collect(),
        )
        .unwrap();
        let preds = Tensor::new(vec![2, 6], vec![0.3; 12]).unwrap();
        let mut tnet = TransformNet::<f64>::new();
        let loss = embedding_loss(&feats, &preds, &mut tnet, 123.0).unwrap();
        let expected = feats.sq_norm() / 2.0;
        assert!((loss - expected).abs() < 1e-12);

        // exact match, lambda = 0 -> 0
        let mut tnet = TransformNet::<f64>::new();
        tnet.init(1);
        let (out, _) = tnet.forward(&preds).unwrap();
        let loss = embedding_loss_value(&out, &preds, &tnet, 0.0).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn embedding_loss_lambda_decomposition() {
        let feats = Tensor::new(
            vec![3, 128],
            (0..384).map(|i| ((i * 7) % 11) as f64 * 0.05).collect(),
        )
        .unwrap();
        let preds =
            Tensor::new(vec![3, 6], (0..18).map(|i| (i % 3) as f64 * 0.4).collect()).unwrap();
        let mut tnet = TransformNet::<f64>::new();
        tnet.init(2);
        let lambda = 0.37;
        let l0 = embedding_loss_value(&feats, &preds, &tnet, 0.0).unwrap();
        let ll = embedding_loss_value(&feats, &preds, &tnet, lambda).unwrap();
        let reg = tnet.fc1.weight.value.sq_norm() + tnet.fc2.weight.value.sq_norm();
        assert!(((ll - l0) - lambda * reg).abs() / ll.abs() < 1e-12);
    }

    #[test]
    fn classifier_tie_breaks_to_lowest_index() {
        // all-equal prototypes: class 0 wins
        let features = Tensor::new(vec![1, 4], vec![1.0f64, 0.0, 0.0, 0.0]).unwrap();
        let prototypes = Tensor::new(vec![3, 4], vec![0.5; 12]).unwrap();
        assert_eq!(nearest_prototypes(&features, &prototypes), vec![0]);
    }

    #[test]
    fn classify_exact_prototype_distance_zero() {
        let cam = class_attribute_matrix(&[Bpsk, Qpsk, Qam16, Qam64]).unwrap();
        let mut tnet = TransformNet::<f64>::new();
        tnet.init(4);
        let prototypes = crate::models::class_prototypes(&tnet, &cam).unwrap();
        // feature equal to prototype 2
        let d = prototypes.shape()[1];
        let feat: Vec<f64> = prototypes.data()[2 * d..3 * d].to_vec();
        let features = Tensor::new(vec![1, d], feat).unwrap();
        assert_eq!(nearest_prototypes(&features, &prototypes), vec![2]);
    }

    #[test]
    fn baseline_argmax() {
        assert_eq!(argmax(&[0.1f64, 3.0, -1.0, 0.0]), 1);
        assert_eq!(argmax(&[1.1f64, 4.0, 0.0, 1.0].map(|v| v + 5.0)), 1);
    }
}
