//! Tensor arithmetic, reverse-mode gradients, Adam, and gradient checking.

mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckReport, GradMismatch, RELATIVE_FLOOR};
pub use optim::{optimizer_step, AdamConfig, OptState};
pub use params::{glorot_uniform, ParamStore};
pub use tape::{gaussian_kl_value, mse_value, sigmoid, Gradients, Tape, Var};
pub use tensor::Tensor;
