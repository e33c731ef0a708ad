//! Dense numerics: tensors, layer primitives, the differentiation tape,
//! Adam and gradient checking.

mod adam;
pub mod functional;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::{grad_check, grad_check_input, relative_error, GradCheckReport, GRAD_CHECK_STEP, RELATIVE_ERROR_FLOOR};
pub use graph::{Gradients, Graph, ParamGrads, Var};
pub use params::{glorot_uniform, Param, ParamId, ParamKind, ParamSet};
pub use tensor::Tensor;
