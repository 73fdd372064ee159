//! Minimal differentiable MLP machinery: initialization, forward evaluation,
//! reverse-mode gradients of scalar losses, Adam updates, and a
//! finite-difference gradient checker.

mod adam;
mod grad;
mod mlp;
mod tape;

pub use adam::AdamState;
pub use grad::{eval_loss, finite_diff_check, value_and_grad, GradBundle, MlpGrads};
pub use mlp::{Activation, Mlp};
pub use tape::{Tape, TapeMlp, Var};
