//! Gated fusion of the three news features and the binary classifier.
//!
//! Class 0 is real news, class 1 is fake news.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ops, Tensor};

pub const LABEL_REAL: u8 = 0;
pub const LABEL_FAKE: u8 = 1;

param_group! {
    pub struct FusionParams / FusionGrads : "fusion" {
        /// `[3 × d]`
        gate_w,
        gate_b,
        /// `[d × 3d]`
        cls_w1,
        cls_b1,
        /// `[2 × d]`
        cls_w2,
        cls_b2,
    }
}

/// How the per-feature gates are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateMode {
    /// Learned sigmoid gates.
    Adaptive,
    /// Every gate fixed at 1: plain concatenation.
    Unit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// `[p(real), p(fake)]`.
    pub probs: [f64; 2],
    pub label: u8,
    /// `(a^t, a^v, a^f)`.
    pub gates: [f64; 3],
}

/// Forward intermediates of fusion and classification.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionTrace {
    pub mean: Tensor,
    pub gates: Tensor,
    pub fused: Tensor,
    pub hidden_pre: Tensor,
    pub logits: Tensor,
    pub probs: Tensor,
}

impl FusionTrace {
    pub fn prediction(&self) -> Prediction {
        let p = self.probs.data();
        let g = self.gates.data();
        Prediction {
            probs: [p[0], p[1]],
            label: argmax_label(&self.logits),
            gates: [g[0], g[1], g[2]],
        }
    }
}

/// Larger logit wins; ties go to real.
pub fn argmax_label(logits: &Tensor) -> u8 {
    if logits.data()[1] > logits.data()[0] {
        LABEL_FAKE
    } else {
        LABEL_REAL
    }
}

/// Column-wise mean of the stacked feature rows. An absent interaction
/// feature drops out of the mean.
pub fn feature_mean(r_t: &Tensor, r_v: &Tensor, r_f: Option<&Tensor>) -> Result<Tensor> {
    let mut rows = vec![r_t.data().to_vec(), r_v.data().to_vec()];
    if let Some(f) = r_f {
        rows.push(f.data().to_vec());
    }
    let stacked = Tensor::from_rows(&rows)
        .map_err(|_| Error::dim("feature_mean", r_t.shape(), r_v.shape()))?;
    ops::mean_pool(&stacked, 0)
}

impl FusionParams {
    pub fn width(&self) -> usize {
        self.gate_w.value.shape()[1]
    }

    /// `sigmoid(W_g · mean(r̃^t, r^v, r^f) + b_g)`, returning `(gates, mean)`.
    pub fn adaptive_weights(
        &self,
        r_t: &Tensor,
        r_v: &Tensor,
        r_f: Option<&Tensor>,
    ) -> Result<(Tensor, Tensor)> {
        let mean = feature_mean(r_t, r_v, r_f)?;
        let gates = ops::sigmoid(&ops::affine(&self.gate_w.value, &mean, &self.gate_b.value)?);
        Ok((gates, mean))
    }

    /// `softmax(W₂·relu(W₁·x + b₁) + b₂)`, returning `(hidden_pre, logits, probs)`.
    pub fn classify_traced(&self, fused: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        if fused.len() != self.cls_w1.value.shape()[1] {
            return Err(Error::dim("classify", self.cls_w1.value.shape(), fused.shape()));
        }
        let hidden_pre = ops::affine(&self.cls_w1.value, fused, &self.cls_b1.value)?;
        let logits = ops::affine(&self.cls_w2.value, &ops::relu(&hidden_pre), &self.cls_b2.value)?;
        let probs = ops::softmax_rows(&logits);
        Ok((hidden_pre, logits, probs))
    }

    pub fn classify(&self, fused: &Tensor, gates: [f64; 3]) -> Result<Prediction> {
        let (_, logits, probs) = self.classify_traced(fused)?;
        Ok(Prediction {
            probs: [probs.data()[0], probs.data()[1]],
            label: argmax_label(&logits),
            gates,
        })
    }

    /// Gates, fusion and classification in one pass.
    pub fn forward(
        &self,
        r_t: &Tensor,
        r_v: &Tensor,
        r_f: Option<&Tensor>,
        mode: GateMode,
    ) -> Result<FusionTrace> {
        let (gates, mean) = match mode {
            GateMode::Adaptive => self.adaptive_weights(r_t, r_v, r_f)?,
            GateMode::Unit => (Tensor::vector(vec![1.0; 3]), feature_mean(r_t, r_v, r_f)?),
        };
        let g = gates.data();
        let fused = fuse(r_t, r_v, r_f, [g[0], g[1], g[2]]);
        let (hidden_pre, logits, probs) = self.classify_traced(&fused)?;
        Ok(FusionTrace {
            mean,
            gates,
            fused,
            hidden_pre,
            logits,
            probs,
        })
    }

    /// Returns `(∂r̃^t, ∂r^v, ∂r^f)` given `∂L/∂logits`.
    pub fn backward(
        &self,
        r_t: &Tensor,
        r_v: &Tensor,
        r_f: Option<&Tensor>,
        mode: GateMode,
        trace: &FusionTrace,
        d_logits: &Tensor,
        grads: &mut FusionGrads,
    ) -> (Tensor, Tensor, Option<Tensor>) {
        let d = r_t.len();
        grads.cls_b2.add_assign(d_logits).expect("b2");
        let hidden = ops::relu(&trace.hidden_pre);
        let d_hidden =
            ops::matvec_backward_accum(&self.cls_w2.value, &hidden, d_logits, &mut grads.cls_w2);
        let d_pre = ops::relu_backward(&trace.hidden_pre, &d_hidden);
        grads.cls_b1.add_assign(&d_pre).expect("b1");
        let d_fused =
            ops::matvec_backward_accum(&self.cls_w1.value, &trace.fused, &d_pre, &mut grads.cls_w1);
        let parts = ops::split(&d_fused, &[d, d, d]);
        let g = trace.gates.data();

        let mut d_rt = parts[0].scaled(g[0]);
        let mut d_rv = parts[1].scaled(g[1]);
        let mut d_rf = r_f.map(|_| parts[2].scaled(g[2]));

        if mode == GateMode::Adaptive {
            let d_gates = Tensor::vector(vec![
                parts[0].dot(r_t),
                parts[1].dot(r_v),
                r_f.map_or(0.0, |f| parts[2].dot(f)),
            ]);
            let d_gate_pre = ops::sigmoid_backward(&trace.gates, &d_gates);
            grads.gate_b.add_assign(&d_gate_pre).expect("gate_b");
            let d_mean = ops::matvec_backward_accum(
                &self.gate_w.value,
                &trace.mean,
                &d_gate_pre,
                &mut grads.gate_w,
            );
            let k = if r_f.is_some() { 3.0 } else { 2.0 };
            let share = d_mean.scaled(1.0 / k);
            d_rt.add_assign(&share).expect("d");
            d_rv.add_assign(&share).expect("d");
            if let Some(df) = d_rf.as_mut() {
                df.add_assign(&share).expect("d");
            }
        }
        (d_rt, d_rv, d_rf)
    }
}

/// `concat(a^t·r̃^t, a^v·r^v, a^f·r^f)`; an absent `r^f` contributes zeros.
pub fn fuse(r_t: &Tensor, r_v: &Tensor, r_f: Option<&Tensor>, gates: [f64; 3]) -> Tensor {
    let zero;
    let f = match r_f {
        Some(f) => f,
        None => {
            zero = Tensor::zeros(r_t.shape());
            &zero
        }
    };
    ops::concat(&[&r_t.scaled(gates[0]), &r_v.scaled(gates[1]), &f.scaled(gates[2])])
}

/// Binary cross-entropy on the fake-class probability, clamped to
/// `[1e-12, 1 − 1e-12]`.
pub fn detection_loss(probs: &[f64; 2], label: u8) -> f64 {
    let p = clamp_prob(probs[1]);
    let y = f64::from(label);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(crate::align::PROB_FLOOR, 1.0 - crate::align::PROB_FLOOR)
}

/// `∂L_d/∂logits` for a two-way softmax; zero when the probability was
/// clamped.
pub fn detection_loss_grad(probs: &Tensor, label: u8) -> Tensor {
    let p = probs.data()[1];
    if clamp_prob(p) != p {
        return Tensor::zeros(&[2]);
    }
    let y = f64::from(label);
    Tensor::vector(vec![probs.data()[0] - (1.0 - y), p - y])
}

/// `L = λ_c·L_c + L_d`; the unweighted sum is `λ_c = 1`.
pub fn total_loss(contrastive: f64, detection: f64, lambda_c: f64) -> Result<f64> {
    if !contrastive.is_finite() || !detection.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss terms L_c={contrastive} L_d={detection}"
        )));
    }
    Ok(lambda_c * contrastive + detection)
}
