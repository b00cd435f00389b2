//! The modulated base learner and the model-based meta-learner that
//! produces its modulation.

mod encoder;
mod learner;

use alloc::format;
use alloc::vec::Vec;

pub use encoder::{
    encode_task, generate_modulation, init_encoder, EncoderParams, GeneratorBlock, GruDirection,
};
pub use learner::{forward, init_learner, BlockModulation, DenseBlock, LearnerParams, ModulationParams};

use crate::error::{Error, Result};

/// How the generated task parameters act on each block's pre-activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ModulationKind {
    None,
    #[default]
    Film,
    Sigmoid,
    Softmax,
}

impl ModulationKind {
    pub fn name(self) -> &'static str {
        match self {
            ModulationKind::None => "none",
            ModulationKind::Film => "film",
            ModulationKind::Sigmoid => "sigmoid",
            ModulationKind::Softmax => "softmax",
        }
    }

    /// Modulation values emitted per unit of a block.
    pub fn vectors_per_unit(self) -> usize {
        match self {
            ModulationKind::None => 0,
            ModulationKind::Film => 2,
            ModulationKind::Sigmoid | ModulationKind::Softmax => 1,
        }
    }
}

/// Shapes of the learner and encoder.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Architecture {
    /// Layer widths of the learner, input first. Regression uses `1` at both ends.
    pub widths: Vec<usize>,
    /// Hidden size `H` of each GRU direction; the embedding has `2H` entries.
    pub hidden_size: usize,
    /// Hidden width of each block's modulation generator.
    pub generator_hidden: usize,
    pub modulation: ModulationKind,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            widths: alloc::vec![1, 100, 100, 100, 100, 1],
            hidden_size: 40,
            generator_hidden: 100,
            modulation: ModulationKind::Film,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::Config(format!(
                "learner widths must have at least two positive entries, got {:?}",
                self.widths
            )));
        }
        if self.widths[0] != 1 || self.widths[self.widths.len() - 1] != 1 {
            return Err(Error::Config(format!(
                "scalar regression needs input and output width 1, got {:?}",
                self.widths
            )));
        }
        if self.hidden_size == 0 || self.generator_hidden == 0 {
            return Err(Error::Config(
                "hidden_size and generator_hidden must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Output width of every learner block.
    pub fn block_widths(&self) -> &[usize] {
        &self.widths[1..]
    }

    pub fn num_blocks(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn embedding_dim(&self) -> usize {
        2 * self.hidden_size
    }
}
