//! The full detector: parameter registry, per-item forward/backward, and the
//! batch objective combining the contrastive and detection losses.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::align::{contrastive_objective, ContrastiveLoss, Modality, SharedSpaceGrads, SharedSpaceParams};
use crate::encoders::{pooled_input, EncoderGrads, EncoderParams, ImageFeatureVector, TextInput};
use crate::enrich::{EnhanceGrads, EnhanceParams, EnhanceTrace};
use crate::error::{Error, Result};
use crate::fuse::{
    detection_loss, detection_loss_grad, FusionGrads, FusionParams, FusionTrace, GateMode,
    Prediction,
};
use crate::interact::{InteractionGrads, InteractionParams, InteractionTrace};
use crate::numerics::{gradcheck, Param, RngState, Tensor};
use crate::parallel::Execution;

/// Items per gradient-accumulation chunk. Fixed so that reduction order does
/// not depend on the thread count.
pub const GRAD_CHUNK: usize = 8;

/// Which module, if any, is removed from the model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ablation {
    #[default]
    #[serde(rename = "none")]
    None,
    /// Gates fixed to 1.
    #[serde(rename = "no_A")]
    NoA,
    /// No contrastive loss and no interaction feature.
    #[serde(rename = "no_M")]
    NoM,
    /// No description enhancement.
    #[serde(rename = "no_E")]
    NoE,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::None, Ablation::NoA, Ablation::NoM, Ablation::NoE];

    pub fn uses_interaction(self) -> bool {
        self != Ablation::NoM
    }

    pub fn uses_descriptions(self) -> bool {
        self != Ablation::NoE
    }

    pub fn gate_mode(self) -> GateMode {
        if self == Ablation::NoA {
            GateMode::Unit
        } else {
            GateMode::Adaptive
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoA => "no_A",
            Ablation::NoM => "no_M",
            Ablation::NoE => "no_E",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown ablation {s:?} (none, no_A, no_M, no_E)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Single model width used for every feature space.
    pub d: usize,
    pub vocab: usize,
    /// Raw image feature length.
    pub d_raw: usize,
}

/// Every trainable tensor of the detector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub encoder: EncoderParams,
    pub enhance: EnhanceParams,
    pub shared: SharedSpaceParams,
    pub interaction: InteractionParams,
    pub fusion: FusionParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub encoder: EncoderGrads,
    pub enhance: EnhanceGrads,
    pub shared: SharedSpaceGrads,
    pub interaction: InteractionGrads,
    pub fusion: FusionGrads,
}

impl ModelGrads {
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.encoder.tensors();
        v.extend(self.enhance.tensors());
        v.extend(self.shared.tensors());
        v.extend(self.interaction.tensors());
        v.extend(self.fusion.tensors());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.encoder.tensors_mut();
        v.extend(self.enhance.tensors_mut());
        v.extend(self.shared.tensors_mut());
        v.extend(self.interaction.tensors_mut());
        v.extend(self.fusion.tensors_mut());
        v
    }

    pub fn add_assign(&mut self, other: &ModelGrads) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b).expect("matching registry");
        }
    }
}

fn gaussian(rng: &mut RngState, shape: &[usize], std: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), rng.normal_vec(n, std)).expect("shape")
}

fn fan_in(rng: &mut RngState, rows: usize, cols: usize) -> Tensor {
    gaussian(rng, &[rows, cols], 1.0 / (cols as f64).sqrt())
}

impl ModelParams {
    /// Gaussian fan-in initialization, zero biases.
    pub fn init(dims: ModelDims, rng: &mut RngState) -> Result<Self> {
        let ModelDims { d, vocab, d_raw } = dims;
        if d == 0 || vocab == 0 || d_raw == 0 {
            return Err(Error::Config(format!("model dims must be positive: {dims:?}")));
        }
        let encoder = EncoderParams::from_values(
            gaussian(rng, &[vocab, d], 1.0),
            fan_in(rng, d, d),
            fan_in(rng, d, d_raw),
            fan_in(rng, d, d),
        );
        let enhance = EnhanceParams::from_values(fan_in(rng, d, d), fan_in(rng, d, d));
        let shared = SharedSpaceParams::from_values(
            fan_in(rng, d, d),
            Tensor::zeros(&[d]),
            fan_in(rng, d, d),
            Tensor::zeros(&[d]),
        );
        let interaction = InteractionParams::from_values(
            fan_in(rng, d, d),
            Tensor::zeros(&[d]),
            fan_in(rng, d, d),
            Tensor::zeros(&[d]),
        );
        let fusion = FusionParams::from_values(
            fan_in(rng, 3, d),
            Tensor::zeros(&[3]),
            fan_in(rng, d, 3 * d),
            Tensor::zeros(&[d]),
            fan_in(rng, 2, d),
            Tensor::zeros(&[2]),
        );
        Ok(ModelParams {
            dims,
            encoder,
            enhance,
            shared,
            interaction,
            fusion,
        })
    }

    /// Registry order: encoder, enhance, shared, interaction, fusion.
    pub fn params(&self) -> Vec<&Param> {
        let mut v = self.encoder.params();
        v.extend(self.enhance.params());
        v.extend(self.shared.params());
        v.extend(self.interaction.params());
        v.extend(self.fusion.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.encoder.params_mut();
        v.extend(self.enhance.params_mut());
        v.extend(self.shared.params_mut());
        v.extend(self.interaction.params_mut());
        v.extend(self.fusion.params_mut());
        v
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params().into_iter().find(|p| p.name == name)
    }

    pub fn num_scalars(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            encoder: self.encoder.zero_grads(),
            enhance: self.enhance.zero_grads(),
            shared: self.shared.zero_grads(),
            interaction: self.interaction.zero_grads(),
            fusion: self.fusion.zero_grads(),
        }
    }

    pub fn reset_gradients(&mut self) {
        self.params_mut().into_iter().for_each(Param::reset_gradient);
    }

    /// Adds a gradient buffer into each parameter's accumulated gradient.
    pub fn accumulate(&mut self, grads: &ModelGrads) {
        for (p, g) in self.params_mut().into_iter().zip(grads.tensors()) {
            p.grad_mut().add_assign(g).expect("matching registry");
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.value.is_finite())
    }

    pub(crate) fn restore_grads(&mut self) {
        self.params_mut().into_iter().for_each(|p| p.ensure_grad());
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut p: ModelParams = serde_json::from_str(s)?;
        p.restore_grads();
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let ModelDims { d, vocab, d_raw } = self.dims;
        let expect: [(&Param, Vec<usize>); 4] = [
            (&self.encoder.tok_emb, vec![vocab, d]),
            (&self.encoder.w_vf, vec![d, d_raw]),
            (&self.fusion.cls_w1, vec![d, 3 * d]),
            (&self.fusion.gate_w, vec![3, d]),
        ];
        for (p, shape) in expect {
            if p.value.shape() != shape.as_slice() {
                return Err(Error::Schema(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    p.name,
                    p.value.shape(),
                    shape
                )));
            }
        }
        Ok(())
    }
}

/// Model-ready inputs for one news item.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    pub text: TextInput,
    pub image: ImageFeatureVector,
    pub descriptions: Vec<TextInput>,
    pub label: u8,
}

/// Loss settings shared by training and gradient checking.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    pub tau: f64,
    pub lambda_c: f64,
    pub ablation: Ablation,
}

/// Forward intermediates of one item.
#[derive(Clone, Debug)]
pub struct ItemForward {
    pub text_pooled: Tensor,
    pub r_t: Tensor,
    pub r_v: Tensor,
    pub desc_pooled: Vec<Tensor>,
    pub m_d: Option<Tensor>,
    pub enhance: Option<EnhanceTrace>,
    pub r_t_enhanced: Tensor,
    pub aligned: Option<Aligned>,
    pub fusion: FusionTrace,
}

#[derive(Clone, Debug)]
pub struct Aligned {
    pub e_t: Tensor,
    pub pre_t: Tensor,
    pub e_v: Tensor,
    pub pre_v: Tensor,
    pub interaction: InteractionTrace,
}

impl ItemForward {
    pub fn prediction(&self) -> Prediction {
        self.fusion.prediction()
    }

    pub fn r_f(&self) -> Option<&Tensor> {
        self.aligned.as_ref().map(|a| &a.interaction.r_f)
    }
}

impl ModelParams {
    pub fn forward_item(&self, input: &ModelInput, ablation: Ablation) -> Result<ItemForward> {
        let enc = &self.encoder;
        let text_pooled = pooled_input(&enc.tok_emb.value, &input.text)?;
        let r_t = crate::numerics::ops::matmul(&enc.w_tf.value, &text_pooled)?;
        let r_v = enc.encode_image(&input.image)?;

        let mut desc_pooled = Vec::new();
        let mut m_d = None;
        if ablation.uses_descriptions() && !input.descriptions.is_empty() {
            let mut rows = Vec::with_capacity(input.descriptions.len());
            for desc in &input.descriptions {
                let pooled = pooled_input(&enc.tok_emb.value, desc)?;
                rows.push(crate::numerics::ops::matmul(&enc.w_df.value, &pooled)?.into_data());
                desc_pooled.push(pooled);
            }
            m_d = Some(Tensor::from_rows(&rows)?);
        }
        let (r_t_enhanced, enhance) = self.enhance.enhance(&r_t, m_d.as_ref())?;

        let aligned = if ablation.uses_interaction() {
            let (e_t, pre_t) = self.shared.shared_encode_traced(&r_t, Modality::Text)?;
            let (e_v, pre_v) = self.shared.shared_encode_traced(&r_v, Modality::Image)?;
            let interaction = self.interaction.interact(&e_t, &e_v)?;
            Some(Aligned {
                e_t,
                pre_t,
                e_v,
                pre_v,
                interaction,
            })
        } else {
            None
        };
        let r_f = aligned.as_ref().map(|a| &a.interaction.r_f);
        let fusion = self
            .fusion
            .forward(&r_t_enhanced, &r_v, r_f, ablation.gate_mode())?;
        Ok(ItemForward {
            text_pooled,
            r_t,
            r_v,
            desc_pooled,
            m_d,
            enhance,
            r_t_enhanced,
            aligned,
            fusion,
        })
    }

    /// Backpropagates `d_logits` plus any external gradients on the aligned
    /// vectors into `grads`.
    pub fn backward_item(
        &self,
        input: &ModelInput,
        fwd: &ItemForward,
        ablation: Ablation,
        d_logits: &Tensor,
        d_aligned: Option<(&[f64], &[f64])>,
        grads: &mut ModelGrads,
    ) {
        let r_f = fwd.r_f();
        let (d_rt_enh, d_rv_fuse, d_rf) = self.fusion.backward(
            &fwd.r_t_enhanced,
            &fwd.r_v,
            r_f,
            ablation.gate_mode(),
            &fwd.fusion,
            d_logits,
            &mut grads.fusion,
        );
        let (mut d_rt, d_md) = self.enhance.enhance_backward(
            &fwd.r_t,
            fwd.m_d.as_ref(),
            fwd.enhance.as_ref(),
            &d_rt_enh,
            &mut grads.enhance,
        );
        let mut d_rv = d_rv_fuse;

        if let (Some(al), Some(d_rf)) = (fwd.aligned.as_ref(), d_rf) {
            let (mut d_et, mut d_ev) = self.interaction.interact_backward(
                &al.e_t,
                &al.e_v,
                &al.interaction,
                &d_rf,
                &mut grads.interaction,
            );
            if let Some((gt, gv)) = d_aligned {
                d_et.data_mut().iter_mut().zip(gt).for_each(|(a, b)| *a += b);
                d_ev.data_mut().iter_mut().zip(gv).for_each(|(a, b)| *a += b);
            }
            let from_t = self
                .shared
                .shared_backward(&fwd.r_t, &al.pre_t, &d_et, Modality::Text, &mut grads.shared);
            let from_v = self
                .shared
                .shared_backward(&fwd.r_v, &al.pre_v, &d_ev, Modality::Image, &mut grads.shared);
            d_rt.add_assign(&from_t).expect("d");
            d_rv.add_assign(&from_v).expect("d");
        }

        if let Some(d_md) = d_md {
            for (i, (desc, pooled)) in input.descriptions.iter().zip(&fwd.desc_pooled).enumerate() {
                let row = Tensor::vector(d_md.row(i).to_vec());
                self.encoder
                    .text_backward(desc, pooled, &row, true, &mut grads.encoder);
            }
        }
        self.encoder
            .text_backward(&input.text, &fwd.text_pooled, &d_rt, false, &mut grads.encoder);
        self.encoder.image_backward(&input.image, &d_rv, &mut grads.encoder);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchLoss {
    /// Contrastive term before weighting; zero when the module is ablated.
    pub contrastive: f64,
    /// Mean detection loss over the batch.
    pub detection: f64,
    pub total: f64,
    pub clamped: usize,
}

fn stack(rows: impl Iterator<Item = Vec<f64>>) -> Result<Tensor> {
    Tensor::from_rows(&rows.collect::<Vec<_>>())
}

fn contrastive_for(fwds: &[ItemForward], objective: &Objective) -> Result<Option<crate::align::ContrastiveOutput>> {
    if !objective.ablation.uses_interaction() || objective.lambda_c == 0.0 {
        return Ok(None);
    }
    let aligned = || fwds.iter().map(|f| f.aligned.as_ref().expect("aligned"));
    let e_v = stack(aligned().map(|a| a.e_v.data().to_vec()))?;
    let e_t = stack(aligned().map(|a| a.e_t.data().to_vec()))?;
    contrastive_objective(&e_v, &e_t, objective.tau).map(Some)
}

fn summarize(fwds: &[ItemForward], batch: &[&ModelInput], c: Option<&ContrastiveLoss>, objective: &Objective) -> Result<BatchLoss> {
    let n = batch.len() as f64;
    let detection = fwds
        .iter()
        .zip(batch)
        .map(|(f, x)| detection_loss(&f.prediction().probs, x.label))
        .sum::<f64>()
        / n;
    let contrastive = c.map_or(0.0, |c| c.total);
    let total = crate::fuse::total_loss(contrastive, detection, objective.lambda_c)?;
    Ok(BatchLoss {
        contrastive,
        detection,
        total,
        clamped: c.map_or(0, |c| c.clamped),
    })
}

impl ModelParams {
    /// Batch objective without gradients.
    pub fn batch_loss(&self, batch: &[&ModelInput], objective: &Objective, exec: Execution) -> Result<BatchLoss> {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let fwds = exec
            .map(batch, |x| self.forward_item(x, objective.ablation))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let c = contrastive_for(&fwds, objective)?;
        summarize(&fwds, batch, c.as_ref().map(|c| &c.loss), objective)
    }

    /// Batch objective and its gradient with respect to every parameter.
    pub fn batch_gradients(
        &self,
        batch: &[&ModelInput],
        objective: &Objective,
        exec: Execution,
    ) -> Result<(BatchLoss, ModelGrads)> {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let ablation = objective.ablation;
        let fwds = exec
            .map(batch, |x| self.forward_item(x, ablation))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let c = contrastive_for(&fwds, objective)?;
        let loss = summarize(&fwds, batch, c.as_ref().map(|c| &c.loss), objective)?;

        let n = batch.len() as f64;
        let lambda = objective.lambda_c;
        let idx: Vec<usize> = (0..batch.len()).collect();
        let partials = exec.map_chunks(&idx, GRAD_CHUNK, |_, chunk| {
            let mut g = self.zero_grads();
            for &i in chunk {
                let d_logits = detection_loss_grad(&fwds[i].fusion.probs, batch[i].label).scaled(1.0 / n);
                let ext: Option<(Vec<f64>, Vec<f64>)> = c.as_ref().map(|c| {
                    (
                        c.grad_t.row(i).iter().map(|x| x * lambda).collect(),
                        c.grad_v.row(i).iter().map(|x| x * lambda).collect(),
                    )
                });
                self.backward_item(
                    batch[i],
                    &fwds[i],
                    ablation,
                    &d_logits,
                    ext.as_ref().map(|(t, v)| (t.as_slice(), v.as_slice())),
                    &mut g,
                );
            }
            g
        });
        let mut grads = self.zero_grads();
        for p in &partials {
            grads.add_assign(p);
        }
        Ok((loss, grads))
    }

    pub fn predict(&self, inputs: &[ModelInput], ablation: Ablation, exec: Execution) -> Result<Vec<ItemForward>> {
        exec.map(inputs, |x| self.forward_item(x, ablation))
            .into_iter()
            .collect()
    }
}

/// Max relative error per parameter between analytic gradients and central
/// differences of the batch objective.
pub fn gradcheck_model(
    params: &ModelParams,
    batch: &[&ModelInput],
    objective: &Objective,
    h: f64,
    exec: Execution,
) -> Result<Vec<(String, f64)>> {
    let (_, grads) = params.batch_gradients(batch, objective, Execution::Serial)?;
    let names: Vec<(usize, String)> = params
        .params()
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.name.clone()))
        .collect();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.data().to_vec()).collect();
    exec.map(&names, |(pi, name)| {
        let mut probe = params.clone();
        let start = probe.params()[*pi].value.data().to_vec();
        let mut f = |x: &[f64]| {
            probe.params_mut()[*pi].value.data_mut().copy_from_slice(x);
            probe.batch_loss(batch, objective, Execution::Serial).map(|l| l.total)
        };
        let err = gradcheck::finite_diff_check(&mut f, &start, &analytic[*pi], h)?;
        Ok((name.clone(), err))
    })
    .into_iter()
    .collect()
}

/// Distance of every piecewise-linear switch point from flipping: ReLU
/// pre-activations and max-pool winner gaps. Finite differences are only
/// meaningful when this comfortably exceeds the step size.
pub fn kink_margin(fwd: &ItemForward) -> f64 {
    let mut margin = fwd
        .fusion
        .hidden_pre
        .data()
        .iter()
        .fold(f64::INFINITY, |m, x| m.min(x.abs()));
    if let Some(al) = &fwd.aligned {
        let tr = &al.interaction;
        for x in tr.hidden_pre.data() {
            margin = margin.min(x.abs());
        }
        let (rows, cols) = (tr.m_f.rows(), tr.m_f.cols());
        for j in 0..cols {
            let best = tr.m_f.get(tr.argmax[j], j);
            for i in (0..rows).filter(|&i| i != tr.argmax[j]) {
                margin = margin.min(best - tr.m_f.get(i, j));
            }
        }
    }
    margin
}

/// A random model and batch for gradient checking.
#[derive(Clone, Debug)]
pub struct GradcheckCase {
    pub params: ModelParams,
    pub inputs: Vec<ModelInput>,
    pub attempts: usize,
}

impl GradcheckCase {
    pub fn batch(&self) -> Vec<&ModelInput> {
        self.inputs.iter().collect()
    }
}

/// Draws a random instance with `n` items of `n_desc` token descriptions
/// each. Biases are randomized so that no ReLU starts pinned at zero, and
/// draws whose kink margin falls below `min_margin` are rejected.
pub fn gradcheck_case(
    d: usize,
    n: usize,
    n_desc: usize,
    seed: u64,
    min_margin: f64,
    ablation: Ablation,
) -> Result<GradcheckCase> {
    const MAX_ATTEMPTS: usize = 1000;
    let vocab = 2 * d + 4;
    let dims = ModelDims { d, vocab, d_raw: d + 2 };
    let tokens = |rng: &mut RngState, min_len: usize| {
        let len = min_len + rng.below(4);
        let ids = (0..len).map(|_| 1 + rng.below(vocab - 1)).collect();
        TextInput::Tokens(crate::encoders::TokenSequence::padded(ids, len + 2))
    };
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = RngState::new(seed).split(attempt as u64);
        let mut params = ModelParams::init(dims, &mut rng)?;
        for p in params.params_mut() {
            if p.value.rank() == 1 {
                let noise = rng.normal_vec(p.value.len(), 0.5);
                p.value.data_mut().copy_from_slice(&noise);
            }
        }
        let inputs: Vec<ModelInput> = (0..n)
            .map(|i| ModelInput {
                text: tokens(&mut rng, 3),
                image: ImageFeatureVector(Tensor::vector(rng.normal_vec(dims.d_raw, 1.0))),
                descriptions: (0..n_desc).map(|_| tokens(&mut rng, 2)).collect(),
                label: (i % 2) as u8,
            })
            .collect();
        let margin = inputs
            .iter()
            .map(|x| params.forward_item(x, ablation).map(|f| kink_margin(&f)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if margin >= min_margin {
            return Ok(GradcheckCase {
                params,
                inputs,
                attempts: attempt + 1,
            });
        }
    }
    Err(Error::Degenerate(format!(
        "no gradcheck instance with kink margin {min_margin} in {MAX_ATTEMPTS} draws"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::TokenSequence;

    fn tokens(rng: &mut RngState, vocab: usize, len: usize) -> TextInput {
        let ids = (0..len).map(|_| 1 + rng.below(vocab - 1)).collect();
        TextInput::Tokens(TokenSequence::padded(ids, len + 2))
    }

    fn setup(seed: u64) -> (ModelParams, Vec<ModelInput>) {
        let mut rng = RngState::new(seed);
        let dims = ModelDims { d: 8, vocab: 12, d_raw: 6 };
        let params = ModelParams::init(dims, &mut rng).unwrap();
        let inputs = (0..4)
            .map(|i| ModelInput {
                text: tokens(&mut rng, 12, 5),
                image: ImageFeatureVector(Tensor::vector(rng.normal_vec(6, 1.0))),
                descriptions: vec![tokens(&mut rng, 12, 3), tokens(&mut rng, 12, 4)],
                label: (i % 2) as u8,
            })
            .collect();
        (params, inputs)
    }

    #[test]
    fn gradients_match_finite_differences_for_every_variant() {
        for ablation in Ablation::ALL {
            let case = gradcheck_case(8, 4, 2, 7, 1e-3, ablation).unwrap();
            let objective = Objective { tau: 0.07, lambda_c: 1.0, ablation };
            let report =
                gradcheck_model(&case.params, &case.batch(), &objective, 1e-4, Execution::Serial)
                    .unwrap();
            for (name, err) in report {
                assert!(err < 1e-4, "{ablation} {name}: {err}");
            }
        }
    }

    #[test]
    fn serial_and_parallel_gradients_are_bit_identical() {
        let (params, inputs) = setup(3);
        let batch: Vec<&ModelInput> = inputs.iter().cycle().take(20).collect();
        let objective = Objective { tau: 0.07, lambda_c: 1.0, ablation: Ablation::None };
        let (l1, g1) = params.batch_gradients(&batch, &objective, Execution::Serial).unwrap();
        let (l2, g2) = params.batch_gradients(&batch, &objective, Execution::Parallel).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(g1, g2);
    }

    #[test]
    fn ablation_names_round_trip() {
        for a in Ablation::ALL {
            assert_eq!(a.as_str().parse::<Ablation>().unwrap(), a);
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(json, format!("\"{a}\""));
        }
        assert!("no_X".parse::<Ablation>().is_err());
    }

    #[test]
    fn params_json_round_trip() {
        let (params, _) = setup(1);
        let back = ModelParams::from_json(&params.to_json().unwrap()).unwrap();
        for (a, b) in params.params().iter().zip(back.params()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, b.value);
        }
    }
}
