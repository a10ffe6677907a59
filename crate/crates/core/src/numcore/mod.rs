//! Small dense tensors and a reverse-mode tape sized for the forecaster.

mod tape;
mod tensor;

pub use tape::{Gradients, Tape, Var};
pub use tensor::{add_rows, concat, hadamard, matvec, matvec_cols, matvec_t, sigmoid, softmax, tanh_act, Tensor};
