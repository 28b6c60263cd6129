//! Attention over entity-description features, fused additively into the
//! text feature.

use crate::error::{Error, Result};
use crate::numerics::{ops, Tensor};

param_group! {
    pub struct EnhanceParams / EnhanceGrads : "enhance" {
        /// `[d × d]` applied to the text feature.
        w_t,
        /// `[d × d]` applied to the pooled description feature.
        w_d,
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct EnhanceTrace {
    /// Attention over descriptions, length `n_e`.
    pub att: Tensor,
    /// Mean of attention-scaled description rows, length `d`.
    pub desc_pooled: Tensor,
}

impl EnhanceParams {
    /// `att = softmax(M·r)`, `p = mean_i(att_i · M_i)`, `out = W_t·r + W_d·p`.
    ///
    /// With no descriptions the second term is dropped.
    pub fn enhance(&self, r_t: &Tensor, m_d: Option<&Tensor>) -> Result<(Tensor, Option<EnhanceTrace>)> {
        let base = ops::matmul(&self.w_t.value, r_t)?;
        let Some(m) = m_d else {
            return Ok((base, None));
        };
        if m.rank() != 2 || m.cols() != r_t.len() {
            return Err(Error::dim("enhance", m.shape(), r_t.shape()));
        }
        let att = ops::softmax_rows(&ops::matmul(m, r_t)?);
        let n = m.rows() as f64;
        let mut pooled = vec![0.0; m.cols()];
        for (i, &a) in att.data().iter().enumerate() {
            pooled
                .iter_mut()
                .zip(m.row(i))
                .for_each(|(p, v)| *p += a * v / n);
        }
        let desc_pooled = Tensor::vector(pooled);
        let out = ops::add(&base, &ops::matmul(&self.w_d.value, &desc_pooled)?)?;
        Ok((out, Some(EnhanceTrace { att, desc_pooled })))
    }

    /// Returns `(d r_t, d M_d)`.
    pub fn enhance_backward(
        &self,
        r_t: &Tensor,
        m_d: Option<&Tensor>,
        trace: Option<&EnhanceTrace>,
        dy: &Tensor,
        grads: &mut EnhanceGrads,
    ) -> (Tensor, Option<Tensor>) {
        let mut d_r = ops::matvec_backward_accum(&self.w_t.value, r_t, dy, &mut grads.w_t);
        let (Some(m), Some(trace)) = (m_d, trace) else {
            return (d_r, None);
        };
        let d_pooled =
            ops::matvec_backward_accum(&self.w_d.value, &trace.desc_pooled, dy, &mut grads.w_d);
        let n = m.rows() as f64;
        let mut d_m = Tensor::zeros(m.shape());
        let mut d_att = vec![0.0; m.rows()];
        for (i, (&a, da)) in trace.att.data().iter().zip(d_att.iter_mut()).enumerate() {
            *da = crate::numerics::dot(m.row(i), d_pooled.data()) / n;
            d_m.row_mut(i)
                .iter_mut()
                .zip(d_pooled.data())
                .for_each(|(g, dp)| *g += a * dp / n);
        }
        let d_scores = ops::softmax_rows_backward(&trace.att, &Tensor::vector(d_att));
        for (i, &ds) in d_scores.data().iter().enumerate() {
            d_m.row_mut(i)
                .iter_mut()
                .zip(r_t.data())
                .for_each(|(g, r)| *g += ds * r);
            d_r.data_mut()
                .iter_mut()
                .zip(m.row(i))
                .for_each(|(g, v)| *g += ds * v);
        }
        (d_r, Some(d_m))
    }
}
