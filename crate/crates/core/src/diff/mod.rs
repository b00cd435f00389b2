//! Tensor expressions with reverse-mode differentiation whose results are
//! again differentiable expressions.

mod check;
mod expr;
mod grad;
mod params;

pub use check::{GradCheck, GradCheckReport};
pub use expr::{mse, Expr};
pub use grad::gradient;
pub use params::{ParamSet, TensorSet};
