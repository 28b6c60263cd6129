use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

/// A trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    #[serde(skip_serializing, default = "Option::default")]
    grad: Option<Tensor>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Some(Tensor::zeros(value.shape()));
        Param {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn grad(&self) -> &Tensor {
        self.grad.as_ref().expect("grad initialized")
    }

    pub fn grad_mut(&mut self) -> &mut Tensor {
        self.grad
            .get_or_insert_with(|| Tensor::zeros(self.value.shape()))
    }

    pub fn reset_gradient(&mut self) {
        self.grad_mut().fill(0.0);
    }

    /// Restores the zero gradient after deserialization.
    pub(crate) fn ensure_grad(&mut self) {
        self.grad_mut();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_matches_value_shape_and_resets() {
        let mut p = Param::new("w", Tensor::identity(3));
        assert_eq!(p.grad().shape(), p.value.shape());
        p.grad_mut().fill(2.5);
        p.reset_gradient();
        assert!(p.grad().data().iter().all(|&g| g == 0.0));
    }
}
