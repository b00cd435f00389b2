//! Files and command line for `modalmeta-core`: JSON configs and
//! checkpoints, CSV exports, a rayon executor and the `modalmeta` binary.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod csv_out;
pub mod error;
pub mod format;
pub mod pool;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION};
pub use cli::{gradcheck_config, gradcheck_suite, render_table, run};
pub use config::{load_config, parse_config};
pub use error::{AppError, AppResult};
pub use pool::Pool;
