//! Held-out evaluation and embedding analysis.

mod eval;
mod pca;

pub use eval::{
    adaptation_curves, embed_tasks, evaluate_model, evaluate_predictor, AdaptivePredictor, Curves,
    EmbeddingRow, EvalReport, EvalSettings, ModeCurve, StepCurve,
};
pub use pca::{centroid_purity, pca_project, Projection};
