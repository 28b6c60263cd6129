//! Shared-space projection and the bidirectional InfoNCE objective.
//!
//! Both modalities are mapped by their own affine layer and L2-normalized.
//! Within a batch the `i`-th text and `i`-th image form the only positive
//! pair for row `i`; every other pairing is a negative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ops, Tensor};

/// Probability floor applied before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;
pub const DEFAULT_TEMPERATURE: f64 = 0.07;

param_group! {
    pub struct SharedSpaceParams / SharedSpaceGrads : "shared" {
        w_st,
        b_st,
        w_sv,
        b_sv,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
}

impl SharedSpaceParams {
    fn weights(&self, modality: Modality) -> (&Tensor, &Tensor) {
        match modality {
            Modality::Text => (&self.w_st.value, &self.b_st.value),
            Modality::Image => (&self.w_sv.value, &self.b_sv.value),
        }
    }

    /// `l2_normalize(W·r + b)`.
    pub fn shared_encode(&self, r: &Tensor, modality: Modality) -> Result<Tensor> {
        Ok(self.shared_encode_traced(r, modality)?.0)
    }

    /// Also returns the pre-normalization vector needed for backward.
    pub fn shared_encode_traced(&self, r: &Tensor, modality: Modality) -> Result<(Tensor, Tensor)> {
        let (w, b) = self.weights(modality);
        let pre = ops::affine(w, r, b)?;
        let e = ops::l2_normalize(&pre)?;
        Ok((e, pre))
    }

    /// Returns the gradient with respect to `r`.
    pub fn shared_backward(
        &self,
        r: &Tensor,
        pre: &Tensor,
        de: &Tensor,
        modality: Modality,
        grads: &mut SharedSpaceGrads,
    ) -> Tensor {
        let d_pre = ops::l2_normalize_backward(pre, de);
        let (w, dw, db) = match modality {
            Modality::Text => (&self.w_st.value, &mut grads.w_st, &mut grads.b_st),
            Modality::Image => (&self.w_sv.value, &mut grads.w_sv, &mut grads.b_sv),
        };
        db.add_assign(&d_pre).expect("bias shape");
        ops::matvec_backward_accum(w, r, &d_pre, dw)
    }
}

fn check_temperature(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("temperature must be positive, got {tau}")))
    }
}

/// `P[i][j] = softmax_j(⟨a_i, b_j⟩ / τ)`.
pub fn similarity_matrix(e_a: &Tensor, e_b: &Tensor, tau: f64) -> Result<Tensor> {
    check_temperature(tau)?;
    if e_a.shape() != e_b.shape() || e_a.rank() != 2 {
        return Err(Error::dim("similarity_matrix", e_a.shape(), e_b.shape()));
    }
    let logits = ops::matmul(e_a, &e_b.transpose())?.scaled(1.0 / tau);
    Ok(ops::softmax_rows(&logits))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveLoss {
    pub v2t: f64,
    pub t2v: f64,
    /// Mean of the two directions.
    pub total: f64,
    /// Number of diagonal probabilities that hit [`PROB_FLOOR`].
    pub clamped: usize,
}

fn directional(p: &Tensor, clamped: &mut usize) -> f64 {
    let n = p.rows();
    let mut acc = 0.0;
    for i in 0..n {
        let v = p.get(i, i);
        if v < PROB_FLOOR {
            *clamped += 1;
        }
        acc -= v.max(PROB_FLOOR).ln();
    }
    acc / n as f64
}

/// Averages the image→text and text→image InfoNCE terms.
pub fn contrastive_loss(p_v2t: &Tensor, p_t2v: &Tensor) -> Result<ContrastiveLoss> {
    if p_v2t.shape() != p_t2v.shape() || p_v2t.rows() != p_v2t.cols() {
        return Err(Error::dim("contrastive_loss", p_v2t.shape(), p_t2v.shape()));
    }
    let mut clamped = 0;
    let v2t = directional(p_v2t, &mut clamped);
    let t2v = directional(p_t2v, &mut clamped);
    Ok(ContrastiveLoss {
        v2t,
        t2v,
        total: 0.5 * (v2t + t2v),
        clamped,
    })
}

/// Loss and gradients for one batch of aligned embeddings.
#[derive(Clone, Debug)]
pub struct ContrastiveOutput {
    pub loss: ContrastiveLoss,
    pub p_v2t: Tensor,
    pub p_t2v: Tensor,
    /// `∂L_c/∂E^v`, `[N × d]`.
    pub grad_v: Tensor,
    /// `∂L_c/∂E^t`, `[N × d]`.
    pub grad_t: Tensor,
}

/// Forward and backward of the contrastive objective over row-stacked image
/// embeddings `e_v` and text embeddings `e_t`.
pub fn contrastive_objective(e_v: &Tensor, e_t: &Tensor, tau: f64) -> Result<ContrastiveOutput> {
    let p_v2t = similarity_matrix(e_v, e_t, tau)?;
    let p_t2v = similarity_matrix(e_t, e_v, tau)?;
    let loss = contrastive_loss(&p_v2t, &p_t2v)?;
    let n = e_v.rows();
    let scale = 1.0 / (2.0 * n as f64);
    // d/dlogits of −log softmax_i = p − onehot; zero for rows whose diagonal
    // was clamped, since the floor is constant there.
    let mut d_s = Tensor::zeros(&[n, n]);
    for i in 0..n {
        let row_live = p_v2t.get(i, i) >= PROB_FLOOR;
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            let mut g = 0.0;
            if row_live {
                g += p_v2t.get(i, j) - delta;
            }
            // Row j of the text→image matrix touches S[i][j] through Sᵀ.
            if p_t2v.get(j, j) >= PROB_FLOOR {
                g += p_t2v.get(j, i) - delta;
            }
            d_s.data_mut()[i * n + j] = g * scale / tau;
        }
    }
    let grad_v = ops::matmul(&d_s, e_t)?;
    let grad_t = ops::matmul(&d_s.transpose(), e_v)?;
    Ok(ContrastiveOutput {
        loss,
        p_v2t,
        p_t2v,
        grad_v,
        grad_t,
    })
}
