//! Multimodal model-agnostic meta-learning for few-shot regression.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation: a differentiable tensor graph, the multimodal task
//! distribution, the modulated learner with its task encoder, meta-training
//! for MAML, Multi-MAML and MuMoMAML, and the evaluation and embedding
//! analysis routines. File formats and the command-line driver live in the
//! `modalmeta` crate.
#![no_std]
// `!(x > 0.0)` style checks are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod analysis;
pub mod diff;
pub mod error;
pub mod meta;
pub mod networks;
pub mod rng;
pub mod taskgen;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
