use alloc::string::String;
use alloc::vec::Vec;

use crate::diff::{gradient, mse, Expr};
use crate::error::{Error, Result};
use crate::meta::{BoundModel, Executor, ModelState};
use crate::networks::{forward, LearnerParams, ModulationKind};
use crate::rng::{stream, Domain};
use crate::taskgen::{column, sample_episode, DistConfig, Task, TaskData};
use crate::tensor::Tensor;

/// Anything that predicts at arbitrary inputs after a number of inner
/// gradient steps on a task's support set.
pub trait AdaptivePredictor: Sync {
    /// Predictions at `inputs` after 0, 1, ..., `steps` inner updates;
    /// returns `steps + 1` rows of `inputs.len()` values.
    fn predictions(
        &self,
        task: &Task,
        data: &TaskData,
        inputs: &[f64],
        alpha: f64,
        steps: usize,
    ) -> Result<Vec<Vec<f64>>>;

    /// Trainer and modulation names for reports.
    fn labels(&self) -> (&'static str, &'static str) {
        ("custom", "none")
    }
}

impl AdaptivePredictor for BoundModel {
    /// Step 0 is the prior after routing and modulation. Later steps are
    /// plain gradient descent on the support MSE with the modulation fixed;
    /// nothing is differentiated through, so each step starts a fresh graph.
    fn predictions(
        &self,
        task: &Task,
        data: &TaskData,
        inputs: &[f64],
        alpha: f64,
        steps: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let (_, theta, tau) = self.prior(task, data)?;
        let tau = tau.detach();
        let x = Expr::constant(column(inputs));
        let support_x = Expr::constant(data.support_inputs());
        let support_y = Expr::constant(data.support_targets());
        let mut current: Vec<Tensor> = theta.flat().iter().map(Expr::evaluate).collect();
        let mut rows = Vec::with_capacity(steps + 1);
        for step in 0..=steps {
            let vars: Vec<Expr> = current.iter().cloned().map(Expr::variable).collect();
            let learner = LearnerParams::from_flat(vars.clone())?;
            rows.push(forward(&learner, &tau, self.kind, &x)?.evaluate().into_data());
            if step == steps || alpha == 0.0 {
                continue;
            }
            let loss = mse(&forward(&learner, &tau, self.kind, &support_x)?, &support_y)?;
            for (p, g) in current.iter_mut().zip(gradient(&loss, &vars)?) {
                for (p, g) in p.data_mut().iter_mut().zip(g.value().data()) {
                    *p -= alpha * g;
                }
            }
        }
        Ok(rows)
    }

    fn labels(&self) -> (&'static str, &'static str) {
        (self.trainer.name(), self.kind.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalSettings {
    pub n_tasks: usize,
    pub eval_steps: usize,
    pub alpha: f64,
    /// Task `i` is drawn from the evaluation stream of this seed with counter `i`.
    pub seed: u64,
}

/// Query MSE sweeps for one group of tasks.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepCurve {
    pub n_tasks: usize,
    /// Mean query MSE against the noisy targets; entry `s` is after `s` inner steps.
    pub mse_by_step: Vec<f64>,
    /// Same against the noise-free targets.
    pub mse_true_by_step: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModeCurve {
    pub mode_index: usize,
    pub family: String,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub curve: StepCurve,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub trainer: String,
    pub modulation: String,
    pub alpha: f64,
    pub seed: u64,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub overall: StepCurve,
    /// Modes that received no task are omitted.
    pub per_mode: Vec<ModeCurve>,
}

impl EvalReport {
    pub fn eval_steps(&self) -> usize {
        self.overall.mse_by_step.len() - 1
    }
}

struct TaskScores {
    mode: usize,
    noisy: Vec<f64>,
    clean: Vec<f64>,
}

/// A prediction that has overflowed scores `+inf`, NaN included, so a
/// diverging learner is measured rather than aborting the sweep.
fn mean_squared_error(pred: &[f64], target: &[f64]) -> f64 {
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    match sum / target.len() as f64 {
        v if v.is_nan() => f64::INFINITY,
        v => v,
    }
}

fn score_task<P: AdaptivePredictor>(
    predictor: &P,
    dist: &DistConfig,
    settings: &EvalSettings,
    index: usize,
) -> Result<TaskScores> {
    let mut rng = stream(settings.seed, Domain::Evaluation, index as u64);
    let (task, data) = sample_episode(dist, &mut rng)?;
    let rows = predictor.predictions(&task, &data, &data.query_x, settings.alpha, settings.eval_steps)?;
    if rows.len() != settings.eval_steps + 1 || rows.iter().any(|r| r.len() != data.l()) {
        return Err(Error::invalid(
            "evaluate",
            "predictor returned the wrong number of values",
        ));
    }
    Ok(TaskScores {
        mode: task.mode_index,
        noisy: rows
            .iter()
            .map(|r| mean_squared_error(r, &data.query_y))
            .collect(),
        clean: rows
            .iter()
            .map(|r| mean_squared_error(r, &data.query_true))
            .collect(),
    })
}

fn average<'a>(scores: impl Iterator<Item = &'a TaskScores>, steps: usize) -> StepCurve {
    let mut curve = StepCurve {
        n_tasks: 0,
        mse_by_step: alloc::vec![0.0; steps + 1],
        mse_true_by_step: alloc::vec![0.0; steps + 1],
    };
    for s in scores {
        curve.n_tasks += 1;
        for (acc, v) in curve.mse_by_step.iter_mut().zip(&s.noisy) {
            *acc += v;
        }
        for (acc, v) in curve.mse_true_by_step.iter_mut().zip(&s.clean) {
            *acc += v;
        }
    }
    let n = curve.n_tasks as f64;
    curve.mse_by_step.iter_mut().for_each(|v| *v /= n);
    curve.mse_true_by_step.iter_mut().for_each(|v| *v /= n);
    curve
}

/// Mean query MSE after 0..=eval_steps inner steps over `n_tasks` held-out
/// tasks. Sums run in task order, so the result does not depend on `exec`.
pub fn evaluate_predictor<P: AdaptivePredictor, E: Executor>(
    predictor: &P,
    dist: &DistConfig,
    settings: &EvalSettings,
    exec: &E,
) -> Result<EvalReport> {
    dist.validate()?;
    if settings.n_tasks == 0 {
        return Err(Error::invalid("evaluate", "n_tasks must be at least 1"));
    }
    let scores = exec
        .map(settings.n_tasks, |i| score_task(predictor, dist, settings, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let steps = settings.eval_steps;
    let per_mode = dist
        .modes
        .iter()
        .enumerate()
        .filter(|(m, _)| scores.iter().any(|s| s.mode == *m))
        .map(|(m, spec)| ModeCurve {
            mode_index: m,
            family: spec.family_name().into(),
            curve: average(scores.iter().filter(|s| s.mode == m), steps),
        })
        .collect();
    let (trainer, modulation) = predictor.labels();
    Ok(EvalReport {
        trainer: trainer.into(),
        modulation: modulation.into(),
        alpha: settings.alpha,
        seed: settings.seed,
        overall: average(scores.iter(), steps),
        per_mode,
    })
}

/// Evaluates a stored model, first checking that `kind` is the modulation
/// it was trained with.
pub fn evaluate_model<E: Executor>(
    state: &ModelState,
    kind: ModulationKind,
    dist: &DistConfig,
    settings: &EvalSettings,
    exec: &E,
) -> Result<EvalReport> {
    state.check_modulation(kind)?;
    evaluate_predictor(&state.bind_constants()?, dist, settings, exec)
}

/// Task embeddings of `n_tasks` tasks drawn from the embedding stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub task: Task,
    pub embedding: Vec<f64>,
}

pub fn embed_tasks<E: Executor>(
    state: &ModelState,
    dist: &DistConfig,
    n_tasks: usize,
    seed: u64,
    exec: &E,
) -> Result<Vec<EmbeddingRow>> {
    dist.validate()?;
    let bound = state.bind_constants()?;
    exec.map(n_tasks, |i| {
        let mut rng = stream(seed, Domain::Embedding, i as u64);
        let (task, data) = sample_episode(dist, &mut rng)?;
        let embedding = bound.embed(&data)?.evaluate().into_data();
        Ok(EmbeddingRow { task, embedding })
    })
    .into_iter()
    .collect()
}

/// Predictions of every adaptation step on a dense grid, for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    pub task: Task,
    pub support_x: Vec<f64>,
    pub support_y: Vec<f64>,
    pub x: Vec<f64>,
    pub truth: Vec<f64>,
    /// `steps[s][i]` is the prediction at `x[i]` after `s` inner steps.
    pub steps: Vec<Vec<f64>>,
}

/// Curves for task `index` of the curves stream of `seed`.
pub fn adaptation_curves<P: AdaptivePredictor>(
    predictor: &P,
    dist: &DistConfig,
    x: &[f64],
    alpha: f64,
    eval_steps: usize,
    seed: u64,
    index: u64,
) -> Result<Curves> {
    dist.validate()?;
    let mut rng = stream(seed, Domain::Curves, index);
    let (task, data) = sample_episode(dist, &mut rng)?;
    let steps = predictor.predictions(&task, &data, x, alpha, eval_steps)?;
    Ok(Curves {
        truth: x.iter().map(|&v| task.function.eval(v)).collect(),
        x: x.to_vec(),
        support_x: data.support_x,
        support_y: data.support_y,
        task,
        steps,
    })
}
