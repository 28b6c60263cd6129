//! Dense tensor kernel with hand-written gradients.

pub mod gradcheck;
pub mod ops;
mod param;
mod rng;
mod tensor;

pub use gradcheck::{finite_diff_check, DEFAULT_STEP};
pub use param::Param;
pub use rng::RngState;
pub use tensor::{dot, Tensor};
