use alloc::vec::Vec;

use crate::diff::{gradient, mse, Expr};
use crate::error::Result;
use crate::networks::{forward, LearnerParams, ModulationKind, ModulationParams};
use crate::taskgen::TaskData;
#[cfg(test)]
use crate::tensor::Tensor;

/// Whether the outer gradient differentiates through the inner updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum GradientOrder {
    /// Treat each inner gradient as a constant.
    First,
    #[default]
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct InnerConfig {
    pub alpha: f64,
    /// Inner steps during meta-training.
    pub train_steps: usize,
    /// Inner steps swept during evaluation.
    pub eval_steps: usize,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            train_steps: 1,
            eval_steps: 5,
        }
    }
}

impl InnerConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(crate::Error::Config(alloc::format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Plain gradient descent `p <- p - alpha * grad loss(p)` for `steps` steps.
///
/// In second order the updates stay differentiable with respect to whatever
/// `params` and `loss` depend on; in first order each gradient is detached.
pub fn adapt<F>(params: &[Expr], loss: F, alpha: f64, steps: usize, order: GradientOrder) -> Result<Vec<Expr>>
where
    F: Fn(&[Expr]) -> Result<Expr>,
{
    let mut current = params.to_vec();
    if alpha == 0.0 {
        return Ok(current);
    }
    for _ in 0..steps {
        let l = loss(&current)?;
        let grads = gradient(&l, &current)?;
        current = current
            .iter()
            .zip(grads)
            .map(|(p, g)| {
                let g = match order {
                    GradientOrder::First => g.detach(),
                    GradientOrder::Second => g,
                };
                p.sub(&g.scale(alpha))
            })
            .collect::<Result<_>>()?;
    }
    Ok(current)
}

/// Adapts the learner to a support set by gradient descent on its MSE.
/// The modulation is held fixed.
pub fn inner_adapt(
    theta: &LearnerParams,
    tau: &ModulationParams,
    kind: ModulationKind,
    support: &TaskData,
    alpha: f64,
    steps: usize,
    order: GradientOrder,
) -> Result<LearnerParams> {
    let x = Expr::constant(support.support_inputs());
    let y = Expr::constant(support.support_targets());
    let adapted = adapt(
        &theta.flat(),
        |p| {
            let learner = LearnerParams::from_flat(p.to_vec())?;
            mse(&forward(&learner, tau, kind, &x)?, &y)
        },
        alpha,
        steps,
        order,
    )?;
    LearnerParams::from_flat(adapted)
}
