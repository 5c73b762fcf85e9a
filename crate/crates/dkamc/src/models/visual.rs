use crate::error::Result;
use crate::models::Model;
use crate::nn::layers::{relu_backward, relu_forward};
use crate::nn::{AdaptiveAvgPool1d, Conv1d, Linear, Padding, Param, Scalar, Tensor};

pub const FRAME_LEN: usize = 128;
pub const FEATURE_DIM: usize = 128;
const BRANCH_KERNELS: [usize; 4] = [7, 5, 3, 1];
const BRANCH_CH: usize = 32;
const MS_OUT_CH: usize = 4 * BRANCH_CH; // 128 after concat
const GAP_BINS: usize = 4;

/// Multiscale module: a stride-2 downsampling conv at the top, then
/// four parallel convs with kernels 7/5/3/1 concatenated channel-wise.
#[derive(Debug, Clone)]
pub struct MsModule<F> {
    pub down: Conv1d<F>,
    pub branches: Vec<Conv1d<F>>,
}

#[derive(Debug, Clone)]
pub struct MsCache<F> {
    down_pre: Tensor<F>,
    down_act: Tensor<F>,
    concat_pre: Tensor<F>,
}

impl<F: Scalar> MsModule<F> {
    pub fn new(name: &str, in_ch: usize) -> Self {
        let down = Conv1d::new(
            &format!("{name}.down"),
            in_ch,
            BRANCH_CH,
            3,
            2,
            Padding::Same,
        );
        let branches = BRANCH_KERNELS
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                Conv1d::new(
                    &format!("{name}.branch{i}"),
                    BRANCH_CH,
                    BRANCH_CH,
                    k,
                    1,
                    Padding::Same,
                )
            })
            .collect();
        Self { down, branches }
    }

    /// [B, C, T] -> [B, 128, T/2]; ReLU after the downsample conv and
    /// after the branch concat.
    pub fn forward(&self, x: &Tensor<F>) -> Result<(Tensor<F>, MsCache<F>)> {
        let down_pre = self.down.forward(x)?;
        let down_act = relu_forward(&down_pre);
        let sh = down_act.shape();
        let (bsz, t) = (sh[0], sh[2]);
        let mut concat_pre = Tensor::zeros(&[bsz, MS_OUT_CH, t]);
        for (i, branch) in self.branches.iter().enumerate() {
            let by = branch.forward(&down_act)?;
            let yd = concat_pre.data_mut();
            for b in 0..bsz {
                let dst = (b * MS_OUT_CH + i * BRANCH_CH) * t;
                let src = b * BRANCH_CH * t;
                yd[dst..dst + BRANCH_CH * t].copy_from_slice(&by.data()[src..src + BRANCH_CH * t]);
            }
        }
        let y = relu_forward(&concat_pre);
        Ok((
            y,
            MsCache {
                down_pre,
                down_act,
                concat_pre,
            },
        ))
    }

    pub fn backward(
        &mut self,
        x: &Tensor<F>,
        cache: &MsCache<F>,
        gy: &Tensor<F>,
    ) -> Result<Tensor<F>> {
        let g_concat = relu_backward(&cache.concat_pre, gy);
        let sh = cache.down_act.shape();
        let (bsz, t) = (sh[0], sh[2]);
        let mut g_down_act = Tensor::zeros(cache.down_act.shape());
        for (i, branch) in self.branches.iter_mut().enumerate() {
            let mut g_branch = Tensor::zeros(&[bsz, BRANCH_CH, t]);
            for b in 0..bsz {
                let src = (b * MS_OUT_CH + i * BRANCH_CH) * t;
                let dst = b * BRANCH_CH * t;
                g_branch.data_mut()[dst..dst + BRANCH_CH * t]
                    .copy_from_slice(&g_concat.data()[src..src + BRANCH_CH * t]);
            }
            let gb = branch.backward(&cache.down_act, &g_branch)?;
            for (a, &g) in g_down_act.data_mut().iter_mut().zip(gb.data()) {
                *a = *a + g;
            }
        }
        let g_down_pre = relu_backward(&cache.down_pre, &g_down_act);
        self.down.backward(x, &g_down_pre)
    }
}

/// MSNet visual encoder: two MS modules, adaptive average pooling to
/// 4 bins per channel (512 flat), an FC/ReLU feature layer, and an FC
/// softmax head.
#[derive(Debug, Clone)]
pub struct VisualModel<F> {
    pub ms1: MsModule<F>,
    pub ms2: MsModule<F>,
    pub gap: AdaptiveAvgPool1d,
    pub fc_feature: Linear<F>,
    pub fc_softmax: Linear<F>,
    pub num_classes: usize,
}

#[derive(Debug, Clone)]
pub struct VisualCache<F> {
    input: Tensor<F>,
    ms1_cache: MsCache<F>,
    ms1_out: Tensor<F>,
    ms2_cache: MsCache<F>,
    ms2_out: Tensor<F>,
    gap_flat: Tensor<F>,
    feat_pre: Tensor<F>,
    pub feature: Tensor<F>,
}

impl<F: Scalar> VisualModel<F> {
    pub fn new(num_classes: usize) -> Self {
        Self {
            ms1: MsModule::new("visual.ms1", 2),
            ms2: MsModule::new("visual.ms2", MS_OUT_CH),
            gap: AdaptiveAvgPool1d::new(GAP_BINS),
            fc_feature: Linear::new("visual.fc_feature", MS_OUT_CH * GAP_BINS, FEATURE_DIM),
            fc_softmax: Linear::new("visual.fc_softmax", FEATURE_DIM, num_classes),
            num_classes,
        }
    }

    /// [B, 2, 128] -> (feature [B, 128], logits [B, K]).
    pub fn forward(&self, x: &Tensor<F>) -> Result<(Tensor<F>, Tensor<F>, VisualCache<F>)> {
        let sh = x.shape();
        if sh.len() != 3 || sh[1] != 2 || sh[2] != FRAME_LEN {
            return Err(crate::error::Error::ShapeMismatch {
                expected: vec![0, 2, FRAME_LEN],
                found: sh.to_vec(),
            });
        }
        let bsz = sh[0];
        let (ms1_out, ms1_cache) = self.ms1.forward(x)?;
        let (ms2_out, ms2_cache) = self.ms2.forward(&ms1_out)?;
        let gap_out = self.gap.forward(&ms2_out)?;
        let gap_flat = gap_out.reshaped(vec![bsz, MS_OUT_CH * GAP_BINS])?;
        let feat_pre = self.fc_feature.forward(&gap_flat)?;
        let feature = relu_forward(&feat_pre);
        let logits = self.fc_softmax.forward(&feature)?;
        Ok((
            feature.clone(),
            logits,
            VisualCache {
                input: x.clone(),
                ms1_cache,
                ms1_out,
                ms2_cache,
                ms2_out,
                gap_flat,
                feat_pre,
                feature,
            },
        ))
    }

    /// Feature and logits without retaining a cache.
    pub fn forward_eval(&self, x: &Tensor<F>) -> Result<(Tensor<F>, Tensor<F>)> {
        let (feature, logits, _) = self.forward(x)?;
        Ok((feature, logits))
    }

    /// Backpropagate from the logits; accumulates parameter grads.
    pub fn backward_from_logits(
        &mut self,
        cache: &VisualCache<F>,
        g_logits: &Tensor<F>,
    ) -> Result<()> {
        let g_feature = self.fc_softmax.backward(&cache.feature, g_logits)?;
        self.backward_from_feature(cache, &g_feature)
    }

    /// Backpropagate from the 128-d feature (softmax head untouched).
    pub fn backward_from_feature(
        &mut self,
        cache: &VisualCache<F>,
        g_feature: &Tensor<F>,
    ) -> Result<()> {
        let g_feat_pre = relu_backward(&cache.feat_pre, g_feature);
        let g_gap_flat = self.fc_feature.backward(&cache.gap_flat, &g_feat_pre)?;
        let bsz = cache.input.shape()[0];
        let g_gap = g_gap_flat.reshaped(vec![bsz, MS_OUT_CH, GAP_BINS])?;
        let g_ms2_out = self.gap.backward(cache.ms2_out.shape(), &g_gap)?;
        let g_ms1_out = self
            .ms2
            .backward(&cache.ms1_out, &cache.ms2_cache, &g_ms2_out)?;
        self.ms1
            .backward(&cache.input, &cache.ms1_cache, &g_ms1_out)?;
        Ok(())
    }

    /// Layer table (name, kernel, output shape) for batch size 1.
    pub fn layer_table(&self) -> Vec<[String; 3]> {
        let k = self.num_classes;
        vec![
            ["input".into(), "-".into(), "2x128".into()],
            [
                "ms1".into(),
                "3x1 s2, [7x1, 5x1, 3x1, 1x1]".into(),
                "128x64".into(),
            ],
            [
                "ms2".into(),
                "3x1 s2, [7x1, 5x1, 3x1, 1x1]".into(),
                "128x32".into(),
            ],
            ["gap".into(), "adaptive avg, 4 bins".into(), "128x4".into()],
            ["fc_feature/relu".into(), "512x128".into(), "128".into()],
            ["fc_softmax".into(), format!("128x{k}"), format!("{k}")],
        ]
    }
}

impl<F: Scalar> Model<F> for VisualModel<F> {
    fn params(&self) -> Vec<&Param<F>> {
        let mut out = Vec::new();
        for ms in [&self.ms1, &self.ms2] {
            out.push(&ms.down.weight);
            out.push(&ms.down.bias);
            for b in &ms.branches {
                out.push(&b.weight);
                out.push(&b.bias);
            }
        }
        out.push(&self.fc_feature.weight);
        out.push(&self.fc_feature.bias);
        out.push(&self.fc_softmax.weight);
        out.push(&self.fc_softmax.bias);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut out = Vec::new();
        for ms in [&mut self.ms1, &mut self.ms2] {
            out.push(&mut ms.down.weight);
            out.push(&mut ms.down.bias);
            for b in &mut ms.branches {
                out.push(&mut b.weight);
                out.push(&mut b.bias);
            }
        }
        out.push(&mut self.fc_feature.weight);
        out.push(&mut self.fc_feature.bias);
        out.push(&mut self.fc_softmax.weight);
        out.push(&mut self.fc_softmax.bias);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intermediate_shapes_match_architecture_table() {
        let mut m = VisualModel::<f32>::new(4);
        m.init(1);
        let x = Tensor::zeros(&[1, 2, 128]);
        let (ms1_out, _) = m.ms1.forward(&x).unwrap();
        assert_eq!(ms1_out.shape(), &[1, 128, 64]);
        let (ms2_out, _) = m.ms2.forward(&ms1_out).unwrap();
        assert_eq!(ms2_out.shape(), &[1, 128, 32]);
        let gap = m.gap.forward(&ms2_out).unwrap();
        assert_eq!(gap.shape(), &[1, 128, 4]);
        let (feature, logits, _) = m.forward(&x).unwrap();
        assert_eq!(feature.shape(), &[1, 128]);
        assert_eq!(logits.shape(), &[1, 4]);
    }

    #[test]
    fn zero_frame_gives_finite_feature() {
        let mut m = VisualModel::<f64>::new(4);
        m.init(9);
        let x = Tensor::zeros(&[1, 2, 128]);
        let (feature, _, _) = m.forward(&x).unwrap();
        assert!(feature.all_finite());
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let m = VisualModel::<f64>::new(4);
        assert!(m.forward(&Tensor::zeros(&[1, 2, 64])).is_err());
    }

    #[test]
    fn fc_parameter_counts_match_ledger() {
        let m = VisualModel::<f64>::new(4);
        assert_eq!(
            m.fc_feature.weight.value.numel() + m.fc_feature.bias.value.numel(),
            512 * 128 + 128
        );
        assert_eq!(
            m.fc_softmax.weight.value.numel() + m.fc_softmax.bias.value.numel(),
            128 * 4 + 4
        );
    }

    #[test]
    fn feature_invariant_to_softmax_head() {
        let mut m = VisualModel::<f64>::new(4);
        m.init(5);
        let mut x = Tensor::zeros(&[1, 2, 128]);
        x.data_mut()
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = ((i * 37 % 17) as f64 - 8.0) / 8.0);
        let (f1, _, _) = m.forward(&x).unwrap();
        m.fc_softmax.weight.value.fill(0.123);
        let (f2, _, _) = m.forward(&x).unwrap();
        assert_eq!(f1.data(), f2.data());
    }
}
