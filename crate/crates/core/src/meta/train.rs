use alloc::format;
use alloc::vec::Vec;

use super::adam::adam_update;
use super::config::ExperimentConfig;
use super::exec::Executor;
use super::model::{BoundModel, ModelState};
use crate::diff::{gradient, Expr, TensorSet};
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};
use crate::taskgen::sample_episode;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainRecord {
    /// Zero-based index of the meta-training step.
    pub iteration: u64,
    /// Mean post-adaptation query loss of the step's task batch.
    pub mean_loss: f64,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

/// Callbacks from the training loop.
pub trait TrainHooks {
    /// Seconds since training started; stamped onto every record.
    fn elapsed_secs(&self) -> f64 {
        0.0
    }

    fn on_record(&mut self, _record: &TrainRecord) {}

    /// Called every `eval_every` iterations with the current state.
    fn on_eval(&mut self, _state: &ModelState) {}
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NoHooks;

impl TrainHooks for NoHooks {}

struct TaskGradient {
    loss: f64,
    learner: usize,
    learner_grad: Vec<Tensor>,
    encoder_grad: Option<Vec<Tensor>>,
}

fn task_gradient(
    bound: &BoundModel,
    config: &ExperimentConfig,
    seed: u64,
    counter: u64,
) -> Result<TaskGradient> {
    let mut rng = stream(seed, Domain::Training, counter);
    let (task, data) = sample_episode(&config.distribution, &mut rng)?;
    let (idx, loss) = bound.task_loss(&task, &data, &config.inner, config.meta.order)?;
    let n_learner = bound.learner_sets[idx].len();
    let mut wrt: Vec<Expr> = bound.learner_sets[idx].exprs().to_vec();
    if let Some(enc) = &bound.encoder_set {
        wrt.extend_from_slice(enc.exprs());
    }
    let mut grads: Vec<Tensor> = gradient(&loss, &wrt)?.iter().map(Expr::evaluate).collect();
    let encoder_grad = bound.encoder_set.as_ref().map(|_| grads.split_off(n_learner));
    Ok(TaskGradient {
        loss: loss.value().data()[0],
        learner: idx,
        learner_grad: grads,
        encoder_grad,
    })
}

fn accumulate(sum: &mut Option<Vec<Tensor>>, grads: Vec<Tensor>) {
    match sum {
        None => *sum = Some(grads),
        Some(acc) => {
            for (a, g) in acc.iter_mut().zip(&grads) {
                for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                    *x += y;
                }
            }
        }
    }
}

fn mean_into(layout: &TensorSet, sum: Vec<Tensor>, count: usize) -> TensorSet {
    let scale = 1.0 / count as f64;
    let mut out = layout.zeros_like();
    for ((_, dst), src) in out.iter_mut().zip(sum) {
        for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
            *d = s * scale;
        }
    }
    out
}

/// One outer step: samples `meta_batch` tasks, takes the meta-gradient of
/// their mean post-adaptation loss with respect to every learner and the
/// encoder at the current point, then applies one Adam step to each.
///
/// Task `j` of iteration `t` is drawn from the training stream with counter
/// `t * meta_batch + j`. Per-task gradients are reduced in task order, so
/// the result does not depend on the executor. For Multi-MAML each learner
/// is updated with the mean gradient of the tasks routed to it and left
/// untouched when no task was.
pub fn meta_train_step<E: Executor>(
    state: &mut ModelState,
    config: &ExperimentConfig,
    exec: &E,
) -> Result<TrainRecord> {
    let iteration = state.iteration;
    let batch = config.meta.meta_batch;
    let bound = state.bind()?;
    let seed = config.seed;
    let results = exec.map(batch, |j| {
        task_gradient(&bound, config, seed, iteration * batch as u64 + j as u64)
    });
    drop(bound);

    let n_learners = state.learners.len();
    let mut learner_sums: Vec<Option<Vec<Tensor>>> = (0..n_learners).map(|_| None).collect();
    let mut counts = alloc::vec![0usize; n_learners];
    let mut encoder_sum: Option<Vec<Tensor>> = None;
    let mut total_loss = 0.0;
    for r in results {
        let r = r?;
        total_loss += r.loss;
        counts[r.learner] += 1;
        accumulate(&mut learner_sums[r.learner], r.learner_grad);
        if let Some(g) = r.encoder_grad {
            accumulate(&mut encoder_sum, g);
        }
    }
    let mean_loss = total_loss / batch as f64;
    if !mean_loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "outer loss at iteration {iteration} is {mean_loss}"
        )));
    }

    let adam = config.meta.adam();
    for (m, sum) in learner_sums.into_iter().enumerate() {
        if let Some(sum) = sum {
            let grads = mean_into(&state.learners[m], sum, counts[m]);
            adam_update(&mut state.learners[m], &grads, &mut state.learner_adam[m], &adam)?;
        }
    }
    if let (Some(sum), Some(params), Some(opt)) =
        (encoder_sum, state.encoder.as_mut(), state.encoder_adam.as_mut())
    {
        let grads = mean_into(params, sum, batch);
        adam_update(params, &grads, opt, &adam)?;
    }
    state.iteration += 1;
    Ok(TrainRecord {
        iteration,
        mean_loss,
        wall_time_secs: 0.0,
    })
}

/// Runs `config.meta.iterations` further steps on `state`.
pub fn continue_training<E: Executor, H: TrainHooks>(
    state: &mut ModelState,
    config: &ExperimentConfig,
    exec: &E,
    hooks: &mut H,
) -> Result<TrainLog> {
    config.validate()?;
    let mut log = TrainLog::default();
    for _ in 0..config.meta.iterations {
        let mut record = meta_train_step(state, config, exec)?;
        record.wall_time_secs = hooks.elapsed_secs();
        hooks.on_record(&record);
        log.records.push(record);
        if config.eval_every > 0 && state.iteration.is_multiple_of(config.eval_every) {
            hooks.on_eval(state);
        }
    }
    Ok(log)
}

/// Initializes a model for `config.meta.trainer` and meta-trains it.
pub fn train<E: Executor, H: TrainHooks>(
    config: &ExperimentConfig,
    exec: &E,
    hooks: &mut H,
) -> Result<(ModelState, TrainLog)> {
    config.validate()?;
    let mut state = ModelState::init(
        config.meta.trainer,
        &config.architecture,
        config.distribution.modes.len(),
        config.seed,
    )?;
    let log = continue_training(&mut state, config, exec, hooks)?;
    Ok((state, log))
}
