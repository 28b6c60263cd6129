//! Cross-modal semantic interaction between the aligned text and image
//! vectors: mutual attention, an outer-product interaction matrix, column-wise
//! max pooling and a two-layer MLP.

use crate::error::{Error, Result};
use crate::numerics::{ops, Tensor};

param_group! {
    pub struct InteractionParams / InteractionGrads : "interact" {
        w1,
        b1,
        w2,
        b2,
    }
}

/// Every intermediate of one interaction pass.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionTrace {
    /// Text-to-image attention, `[d × d]`, row-stochastic.
    pub f_t2v: Tensor,
    /// Image-to-text attention, `[d × d]`, row-stochastic.
    pub f_v2t: Tensor,
    pub mf_v: Tensor,
    pub mf_t: Tensor,
    /// Rank-one interaction matrix `mf_v ⊗ mf_t`.
    pub m_f: Tensor,
    pub pooled: Tensor,
    /// Winning row per column of `m_f`.
    pub argmax: Vec<usize>,
    pub hidden_pre: Tensor,
    pub r_f: Tensor,
}

/// Attention logits are always divided by `√d` of the input width.
pub fn attention_scale(d: usize) -> f64 {
    (d as f64).sqrt()
}

/// `(softmax_rows(m_t ⊗ m_v / √d), softmax_rows(m_v ⊗ m_t / √d))`.
pub fn cross_attention(m_t: &Tensor, m_v: &Tensor) -> Result<(Tensor, Tensor)> {
    if m_t.len() != m_v.len() {
        return Err(Error::dim("cross_attention", m_t.shape(), m_v.shape()));
    }
    let s = 1.0 / attention_scale(m_t.len());
    let f_t2v = ops::softmax_rows(&ops::outer(m_t, m_v).scaled(s));
    let f_v2t = ops::softmax_rows(&ops::outer(m_v, m_t).scaled(s));
    Ok((f_t2v, f_v2t))
}

/// `(f_t2v · m_v, f_v2t · m_t)`.
pub fn modality_update(
    f_t2v: &Tensor,
    f_v2t: &Tensor,
    m_v: &Tensor,
    m_t: &Tensor,
) -> Result<(Tensor, Tensor)> {
    Ok((ops::matmul(f_t2v, m_v)?, ops::matmul(f_v2t, m_t)?))
}

impl InteractionParams {
    /// `r^f = W₂·relu(W₁·colmax(mf_v ⊗ mf_t) + b₁) + b₂`.
    pub fn interaction_feature(&self, mf_v: &Tensor, mf_t: &Tensor) -> Result<Tensor> {
        Ok(self.pool_and_project(mf_v, mf_t)?.3)
    }

    #[allow(clippy::type_complexity)]
    fn pool_and_project(
        &self,
        mf_v: &Tensor,
        mf_t: &Tensor,
    ) -> Result<(Tensor, (Tensor, Vec<usize>), Tensor, Tensor)> {
        let m_f = ops::outer(mf_v, mf_t);
        let (pooled, argmax) = ops::max_pool(&m_f, 0)?;
        let hidden_pre = ops::affine(&self.w1.value, &pooled, &self.b1.value)?;
        let r_f = ops::affine(&self.w2.value, &ops::relu(&hidden_pre), &self.b2.value)?;
        Ok((m_f, (pooled, argmax), hidden_pre, r_f))
    }

    pub fn interact(&self, m_t: &Tensor, m_v: &Tensor) -> Result<InteractionTrace> {
        let (f_t2v, f_v2t) = cross_attention(m_t, m_v)?;
        let (mf_v, mf_t) = modality_update(&f_t2v, &f_v2t, m_v, m_t)?;
        let (m_f, (pooled, argmax), hidden_pre, r_f) = self.pool_and_project(&mf_v, &mf_t)?;
        Ok(InteractionTrace {
            f_t2v,
            f_v2t,
            mf_v,
            mf_t,
            m_f,
            pooled,
            argmax,
            hidden_pre,
            r_f,
        })
    }

    /// Returns `(∂/∂m_t, ∂/∂m_v)`.
    pub fn interact_backward(
        &self,
        m_t: &Tensor,
        m_v: &Tensor,
        trace: &InteractionTrace,
        d_rf: &Tensor,
        grads: &mut InteractionGrads,
    ) -> (Tensor, Tensor) {
        let hidden = ops::relu(&trace.hidden_pre);
        grads.b2.add_assign(d_rf).expect("b2 shape");
        let d_hidden = ops::matvec_backward_accum(&self.w2.value, &hidden, d_rf, &mut grads.w2);
        let d_pre = ops::relu_backward(&trace.hidden_pre, &d_hidden);
        grads.b1.add_assign(&d_pre).expect("b1 shape");
        let d_pooled =
            ops::matvec_backward_accum(&self.w1.value, &trace.pooled, &d_pre, &mut grads.w1);
        let d_mf = ops::max_pool_backward(trace.m_f.shape(), 0, &trace.argmax, &d_pooled);
        let (d_mfv, d_mft) = ops::outer_backward(&trace.mf_v, &trace.mf_t, &d_mf);

        // mf_v = f_t2v · m_v and mf_t = f_v2t · m_t.
        let (d_ft2v, mut d_mv) = ops::matmul_backward(&trace.f_t2v, m_v, &d_mfv);
        let (d_fv2t, mut d_mt) = ops::matmul_backward(&trace.f_v2t, m_t, &d_mft);

        let s = 1.0 / attention_scale(m_t.len());
        let d_lt2v = ops::softmax_rows_backward(&trace.f_t2v, &d_ft2v).scaled(s);
        let d_lv2t = ops::softmax_rows_backward(&trace.f_v2t, &d_fv2t).scaled(s);
        let (a_t, a_v) = ops::outer_backward(m_t, m_v, &d_lt2v);
        let (b_v, b_t) = ops::outer_backward(m_v, m_t, &d_lv2t);
        for ((g, a), b) in d_mt.data_mut().iter_mut().zip(a_t.data()).zip(b_t.data()) {
            *g += a + b;
        }
        for ((g, a), b) in d_mv.data_mut().iter_mut().zip(a_v.data()).zip(b_v.data()) {
            *g += a + b;
        }
        (d_mt, d_mv)
    }
}
