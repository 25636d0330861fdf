//! Dense `f64` tensors and a reverse-mode tape over them.
//!
//! Everything the models compute is recorded on a [`Tape`] that borrows a
//! read-only [`ParamStore`]; a single reverse sweep yields exact gradients for
//! every parameter. Distinct tapes over the same store are independent, which
//! is what lets batches and decodes fan out across threads.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckOptions, GradCheckReport, ParamCheck};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{sigmoid, softmax_values, Backward, Elementwise, NodeId, Tape};
pub use tensor::Tensor;
