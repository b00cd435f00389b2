//! Meta-training: inner-loop adaptation, the meta-objective, Adam, and the
//! MAML / Multi-MAML / MuMoMAML training loop.

mod adam;
mod config;
mod exec;
mod inner;
mod model;
mod train;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use config::{ExperimentConfig, MetaConfig};
pub use exec::{Executor, Serial};
pub use inner::{adapt, inner_adapt, GradientOrder, InnerConfig};
pub use model::{meta_gradient_check, multi_maml_route, BoundModel, ModelState, TrainerKind};
pub use train::{continue_training, meta_train_step, train, NoHooks, TrainHooks, TrainLog, TrainRecord};
