use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::ModulationKind;
use crate::diff::{Expr, ParamSet, TensorSet};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) fn weight_name(block: usize) -> String {
    format!("block{block}.weight")
}

pub(crate) fn bias_name(block: usize) -> String {
    format!("block{block}.bias")
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::Config(format!(
            "a learner needs at least two widths, got {widths:?}"
        )));
    }
    if widths.contains(&0) {
        return Err(Error::Config(format!(
            "learner widths must be positive, got {widths:?}"
        )));
    }
    Ok(())
}

/// Glorot-uniform weights and zero biases for a fully connected learner with
/// layer widths `widths` (input first, output last).
pub fn init_learner<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<TensorSet> {
    check_widths(widths)?;
    let mut set = TensorSet::new();
    for (i, pair) in widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        set.insert(weight_name(i), glorot(fan_in, fan_out, rng))?;
        set.insert(bias_name(i), Tensor::zeros(&[fan_out]))?;
    }
    Ok(set)
}

pub(crate) fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    uniform(&[fan_in, fan_out], limit, rng)
}

pub(crate) fn uniform<R: Rng + ?Sized>(shape: &[usize], limit: f64, rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| limit * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap_or_else(|_| unreachable!("sized by shape"))
}

#[derive(Debug, Clone)]
pub struct DenseBlock {
    pub weight: Expr,
    pub bias: Expr,
}

/// The base learner's blocks, bound into a graph.
#[derive(Debug, Clone)]
pub struct LearnerParams {
    pub blocks: Vec<DenseBlock>,
}

impl LearnerParams {
    pub fn bind(set: &ParamSet) -> Result<LearnerParams> {
        let mut blocks = Vec::new();
        while let Some(weight) = set.get(&weight_name(blocks.len())) {
            let bias = set.require(&bias_name(blocks.len()))?;
            blocks.push(DenseBlock {
                weight: weight.clone(),
                bias: bias.clone(),
            });
        }
        Self::from_blocks(blocks)
    }

    /// Rebuilds from the `[w0, b0, w1, b1, ...]` order of [`Self::flat`].
    pub fn from_flat(exprs: Vec<Expr>) -> Result<LearnerParams> {
        if !exprs.len().is_multiple_of(2) {
            return Err(Error::invalid("learner", "odd number of block tensors"));
        }
        let mut it = exprs.into_iter();
        let mut blocks = Vec::new();
        while let (Some(weight), Some(bias)) = (it.next(), it.next()) {
            blocks.push(DenseBlock { weight, bias });
        }
        Self::from_blocks(blocks)
    }

    fn from_blocks(blocks: Vec<DenseBlock>) -> Result<LearnerParams> {
        if blocks.is_empty() {
            return Err(Error::MissingParameter(weight_name(0)));
        }
        let mut prev: Option<usize> = None;
        for b in &blocks {
            let (fan_in, fan_out) = match b.weight.shape() {
                &[i, o] => (i, o),
                s => return Err(Error::shapes("learner weight", s, &[])),
            };
            if b.bias.shape() != [fan_out] {
                return Err(Error::shapes("learner bias", b.weight.shape(), b.bias.shape()));
            }
            if let Some(p) = prev {
                if p != fan_in {
                    return Err(Error::shapes("learner blocks", &[p], &[fan_in]));
                }
            }
            prev = Some(fan_out);
        }
        Ok(LearnerParams { blocks })
    }

    pub fn flat(&self) -> Vec<Expr> {
        self.blocks
            .iter()
            .flat_map(|b| [b.weight.clone(), b.bias.clone()])
            .collect()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Output width of every block.
    pub fn out_widths(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.bias.shape()[0]).collect()
    }

    pub fn detach(&self) -> LearnerParams {
        LearnerParams {
            blocks: self
                .blocks
                .iter()
                .map(|b| DenseBlock {
                    weight: b.weight.detach(),
                    bias: b.bias.detach(),
                })
                .collect(),
        }
    }
}

/// Per-block modulation of one block's pre-activation.
#[derive(Debug, Clone)]
pub enum BlockModulation {
    /// `F * gamma + beta`
    Film { gamma: Expr, beta: Expr },
    /// `F * tau` for sigmoid or softmax gates.
    Gate(Expr),
}

#[derive(Debug, Clone)]
pub struct ModulationParams {
    pub kind: ModulationKind,
    pub blocks: Vec<BlockModulation>,
}

impl ModulationParams {
    pub fn none() -> ModulationParams {
        ModulationParams {
            kind: ModulationKind::None,
            blocks: Vec::new(),
        }
    }

    /// FiLM with `gamma = 1`, `beta = 0` on every block.
    pub fn identity_film(out_widths: &[usize]) -> ModulationParams {
        ModulationParams {
            kind: ModulationKind::Film,
            blocks: out_widths
                .iter()
                .map(|&w| BlockModulation::Film {
                    gamma: Expr::constant(Tensor::ones(&[1, w])),
                    beta: Expr::constant(Tensor::zeros(&[1, w])),
                })
                .collect(),
        }
    }

    pub fn detach(&self) -> ModulationParams {
        ModulationParams {
            kind: self.kind,
            blocks: self
                .blocks
                .iter()
                .map(|b| match b {
                    BlockModulation::Film { gamma, beta } => BlockModulation::Film {
                        gamma: gamma.detach(),
                        beta: beta.detach(),
                    },
                    BlockModulation::Gate(t) => BlockModulation::Gate(t.detach()),
                })
                .collect(),
        }
    }

    /// Every modulation tensor, block by block.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.blocks
            .iter()
            .flat_map(|b| match b {
                BlockModulation::Film { gamma, beta } => alloc::vec![gamma.value(), beta.value()],
                BlockModulation::Gate(t) => alloc::vec![t.value()],
            })
            .collect()
    }
}

/// Runs the learner on a `[B, 1]` batch.
///
/// Each block computes `F = x W + b`, applies its modulation to `F`, and
/// follows it with ReLU except on the last block.
pub fn forward(
    theta: &LearnerParams,
    tau: &ModulationParams,
    kind: ModulationKind,
    x: &Expr,
) -> Result<Expr> {
    if tau.kind != kind {
        return Err(Error::ModulationMismatch {
            model: tau.kind.name(),
            requested: kind.name(),
        });
    }
    if kind != ModulationKind::None && tau.blocks.len() != theta.num_blocks() {
        return Err(Error::invalid(
            "forward",
            format!(
                "{} modulation blocks for {} learner blocks",
                tau.blocks.len(),
                theta.num_blocks()
            ),
        ));
    }
    let last = theta.num_blocks() - 1;
    let mut h = x.clone();
    for (i, block) in theta.blocks.iter().enumerate() {
        let mut f = h.matmul(&block.weight)?.add(&block.bias)?;
        if let Some(m) = tau.blocks.get(i) {
            f = match m {
                BlockModulation::Film { gamma, beta } => f.mul(gamma)?.add(beta)?,
                BlockModulation::Gate(gate) => f.mul(gate)?,
            };
        }
        h = if i == last { f } else { f.relu() };
    }
    Ok(h)
}
