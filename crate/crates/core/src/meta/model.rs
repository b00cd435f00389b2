use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::adam::AdamState;
use super::inner::{inner_adapt, GradientOrder, InnerConfig};
use crate::diff::{mse, Expr, GradCheck, GradCheckReport, ParamSet, TensorSet};
use crate::error::{Error, Result};
use crate::networks::{
    encode_task, forward, generate_modulation, init_encoder, init_learner, Architecture, EncoderParams,
    LearnerParams, ModulationKind, ModulationParams,
};
use crate::rng::{stream, Domain};
use crate::taskgen::{Task, TaskData};

/// Which meta-learner is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TrainerKind {
    /// One shared initialization, no modulation.
    Maml,
    /// One MAML learner per mode, selected by the ground-truth mode.
    MultiMaml,
    /// MAML plus a task encoder that modulates the learner.
    #[default]
    MuMoMaml,
}

impl TrainerKind {
    pub fn name(self) -> &'static str {
        match self {
            TrainerKind::Maml => "MAML",
            TrainerKind::MultiMaml => "Multi-MAML",
            TrainerKind::MuMoMaml => "MuMoMAML",
        }
    }
}

/// All trainable state of one meta-learner, in storage form.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelState {
    pub trainer: TrainerKind,
    pub architecture: Architecture,
    /// One learner, or one per mode for Multi-MAML.
    pub learners: Vec<TensorSet>,
    /// Encoder and modulation generator; MuMoMAML only.
    pub encoder: Option<TensorSet>,
    pub learner_adam: Vec<AdamState>,
    pub encoder_adam: Option<AdamState>,
    /// Number of completed meta-training steps.
    pub iteration: u64,
}

impl ModelState {
    /// Fresh parameters. Learner `m` is drawn from its own stream, so learner
    /// 0 is identical across trainers for the same seed; the encoder has a
    /// separate stream.
    pub fn init(
        trainer: TrainerKind,
        architecture: &Architecture,
        n_modes: usize,
        seed: u64,
    ) -> Result<ModelState> {
        architecture.validate()?;
        let n_learners = match trainer {
            TrainerKind::MultiMaml => n_modes,
            _ => 1,
        };
        if n_learners == 0 {
            return Err(Error::Config("Multi-MAML needs at least one mode".into()));
        }
        let learners = (0..n_learners)
            .map(|m| {
                init_learner(
                    &architecture.widths,
                    &mut stream(seed, Domain::LearnerInit, m as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let encoder = match trainer {
            TrainerKind::MuMoMaml => Some(init_encoder(
                architecture,
                &mut stream(seed, Domain::EncoderInit, 0),
            )?),
            _ => None,
        };
        Ok(ModelState {
            trainer,
            architecture: architecture.clone(),
            learner_adam: learners.iter().map(AdamState::new).collect(),
            encoder_adam: encoder.as_ref().map(AdamState::new),
            learners,
            encoder,
            iteration: 0,
        })
    }

    /// The modulation actually applied: none unless the trainer is MuMoMAML.
    pub fn modulation(&self) -> ModulationKind {
        match self.trainer {
            TrainerKind::MuMoMaml => self.architecture.modulation,
            _ => ModulationKind::None,
        }
    }

    /// Errors if `requested` is not the modulation this model was built with.
    pub fn check_modulation(&self, requested: ModulationKind) -> Result<()> {
        if requested != self.modulation() {
            return Err(Error::ModulationMismatch {
                model: self.modulation().name(),
                requested: requested.name(),
            });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        if self.learners.is_empty() || self.learners.len() != self.learner_adam.len() {
            return Err(Error::invalid("model", "learner and optimizer counts differ"));
        }
        if self.encoder.is_some() != (self.trainer == TrainerKind::MuMoMaml)
            || self.encoder.is_some() != self.encoder_adam.is_some()
        {
            return Err(Error::invalid(
                "model",
                "encoder presence does not match the trainer",
            ));
        }
        // Binding checks every name and shape.
        self.bind_constants().map(|_| ())
    }

    /// Binds every parameter as a differentiable leaf.
    pub fn bind(&self) -> Result<BoundModel> {
        BoundModel::new(self, ParamSet::variables)
    }

    /// Binds every parameter as a constant, for evaluation.
    pub fn bind_constants(&self) -> Result<BoundModel> {
        BoundModel::new(self, ParamSet::constants)
    }

    /// Every parameter in one set. Learner entries are prefixed with
    /// `learner{m}.`; encoder entries keep their names.
    pub fn flat_parameters(&self) -> Result<TensorSet> {
        let mut all = TensorSet::new();
        for (m, set) in self.learners.iter().enumerate() {
            for (name, t) in set.iter() {
                all.insert(format!("learner{m}.{name}"), t.clone())?;
            }
        }
        for (name, t) in self.encoder.iter().flat_map(TensorSet::iter) {
            all.insert(name, t.clone())?;
        }
        Ok(all)
    }
}

/// A [`ModelState`] bound into a graph.
pub struct BoundModel {
    pub learner_sets: Vec<ParamSet>,
    pub learners: Vec<LearnerParams>,
    pub encoder_set: Option<ParamSet>,
    pub encoder: Option<EncoderParams>,
    pub trainer: TrainerKind,
    pub kind: ModulationKind,
}

impl BoundModel {
    fn new(state: &ModelState, bind: fn(&TensorSet) -> ParamSet) -> Result<BoundModel> {
        let learner_sets = state.learners.iter().map(bind).collect();
        Self::assemble(state, learner_sets, state.encoder.as_ref().map(bind))
    }

    /// Rebuilds a model shaped like `state` from a set laid out by
    /// [`ModelState::flat_parameters`].
    pub fn from_flat(state: &ModelState, flat: &ParamSet) -> Result<BoundModel> {
        let mut learner_parts: Vec<(Vec<String>, Vec<Expr>)> =
            (0..state.learners.len()).map(|_| Default::default()).collect();
        let mut encoder_part: (Vec<String>, Vec<Expr>) = Default::default();
        for (name, e) in flat.iter() {
            let routed = name.strip_prefix("learner").and_then(|rest| {
                let (m, inner) = rest.split_once('.')?;
                Some((m.parse::<usize>().ok()?, inner))
            });
            match routed {
                Some((m, inner)) if m < learner_parts.len() => {
                    learner_parts[m].0.push(inner.into());
                    learner_parts[m].1.push(e.clone());
                }
                _ => {
                    encoder_part.0.push(name.into());
                    encoder_part.1.push(e.clone());
                }
            }
        }
        let learner_sets = learner_parts
            .into_iter()
            .map(|(n, e)| ParamSet::from_parts(n, e))
            .collect::<Result<Vec<_>>>()?;
        let encoder_set = match state.encoder {
            Some(_) => Some(ParamSet::from_parts(encoder_part.0, encoder_part.1)?),
            None if encoder_part.0.is_empty() => None,
            None => return Err(Error::invalid("model", "unexpected encoder parameters")),
        };
        Self::assemble(state, learner_sets, encoder_set)
    }

    fn assemble(
        state: &ModelState,
        learner_sets: Vec<ParamSet>,
        encoder_set: Option<ParamSet>,
    ) -> Result<BoundModel> {
        let learners = learner_sets
            .iter()
            .map(LearnerParams::bind)
            .collect::<Result<Vec<_>>>()?;
        for l in &learners {
            if l.num_blocks() != state.architecture.num_blocks() {
                return Err(Error::invalid(
                    "model",
                    "learner depth differs from the architecture",
                ));
            }
        }
        let encoder = encoder_set
            .as_ref()
            .map(|s| EncoderParams::bind(s, &state.architecture))
            .transpose()?;
        Ok(BoundModel {
            learner_sets,
            learners,
            encoder_set,
            encoder,
            trainer: state.trainer,
            kind: state.modulation(),
        })
    }

    /// Index of the learner serving a task of the given mode.
    pub fn route(&self, mode_index: usize) -> Result<usize> {
        match self.trainer {
            TrainerKind::MultiMaml => multi_maml_route(mode_index, self.learners.len()),
            _ => Ok(0),
        }
    }

    /// Task embedding of a support set; MuMoMAML only.
    pub fn embed(&self, data: &TaskData) -> Result<Expr> {
        let enc = self
            .encoder
            .as_ref()
            .ok_or_else(|| Error::invalid("embed", "this model has no task encoder"))?;
        encode_task(enc, &data.support_pairs())
    }

    /// Modulation inferred from the support set.
    pub fn modulation(&self, data: &TaskData) -> Result<ModulationParams> {
        match (&self.encoder, self.kind) {
            (_, ModulationKind::None) => Ok(ModulationParams::none()),
            (Some(enc), kind) => {
                let u = encode_task(enc, &data.support_pairs())?;
                generate_modulation(enc, &u, kind)
            }
            (None, _) => Err(Error::invalid("modulation", "model has no task encoder")),
        }
    }

    /// The learner prior and modulation for a task, before any inner step.
    pub fn prior(&self, task: &Task, data: &TaskData) -> Result<(usize, LearnerParams, ModulationParams)> {
        let idx = self.route(task.mode_index)?;
        Ok((idx, self.learners[idx].clone(), self.modulation(data)?))
    }

    /// Query MSE after `inner.train_steps` adaptation steps on the support set.
    pub fn task_loss(
        &self,
        task: &Task,
        data: &TaskData,
        inner: &InnerConfig,
        order: GradientOrder,
    ) -> Result<(usize, Expr)> {
        let (idx, theta, tau) = self.prior(task, data)?;
        let adapted = inner_adapt(
            &theta,
            &tau,
            self.kind,
            data,
            inner.alpha,
            inner.train_steps,
            order,
        )?;
        let prediction = forward(&adapted, &tau, self.kind, &Expr::constant(data.query_inputs()))?;
        let loss = mse(&prediction, &Expr::constant(data.query_targets()))?;
        Ok((idx, loss))
    }

    /// Mean post-adaptation query loss over a batch of tasks.
    pub fn meta_objective(
        &self,
        batch: &[(Task, TaskData)],
        inner: &InnerConfig,
        order: GradientOrder,
    ) -> Result<Expr> {
        if batch.is_empty() {
            return Err(Error::invalid("meta_objective", "empty task batch"));
        }
        let mut total: Option<Expr> = None;
        for (task, data) in batch {
            let (_, l) = self.task_loss(task, data, inner, order)?;
            total = Some(match total {
                Some(t) => t.add(&l)?,
                None => l,
            });
        }
        let total = total.unwrap_or_else(|| unreachable!("batch is nonempty"));
        Ok(total.scale(1.0 / batch.len() as f64))
    }
}

/// Checks the gradient of the meta-objective of `batch` with respect to
/// every parameter of `state` against central differences.
pub fn meta_gradient_check(
    state: &ModelState,
    batch: &[(Task, TaskData)],
    inner: &InnerConfig,
    order: GradientOrder,
    check: &GradCheck,
) -> Result<GradCheckReport> {
    check.run(
        |p| BoundModel::from_flat(state, p)?.meta_objective(batch, inner, order),
        &state.flat_parameters()?,
    )
}

/// Selects the learner of a task's ground-truth mode.
pub fn multi_maml_route(mode_index: usize, n_learners: usize) -> Result<usize> {
    if mode_index >= n_learners {
        return Err(Error::ModeOutOfRange {
            index: mode_index,
            count: n_learners,
        });
    }
    Ok(mode_index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routing() {
        assert_eq!(multi_maml_route(1, 2), Ok(1));
        assert_eq!(multi_maml_route(0, 1), Ok(0));
        assert_eq!(
            multi_maml_route(3, 2),
            Err(Error::ModeOutOfRange { index: 3, count: 2 })
        );
    }

    #[test]
    fn learner_zero_is_shared_across_trainers() {
        let arch = Architecture {
            widths: alloc::vec![1, 8, 1],
            hidden_size: 4,
            generator_hidden: 8,
            modulation: ModulationKind::Film,
        };
        let maml = ModelState::init(TrainerKind::Maml, &arch, 2, 9).unwrap();
        let multi = ModelState::init(TrainerKind::MultiMaml, &arch, 2, 9).unwrap();
        let mumo = ModelState::init(TrainerKind::MuMoMaml, &arch, 2, 9).unwrap();
        assert_eq!(multi.learners.len(), 2);
        assert_eq!(maml.learners[0], multi.learners[0]);
        assert_eq!(maml.learners[0], mumo.learners[0]);
        assert_ne!(multi.learners[0], multi.learners[1]);
        assert!(maml.encoder.is_none() && mumo.encoder.is_some());
        assert_eq!(maml.modulation(), ModulationKind::None);
        assert_eq!(mumo.modulation(), ModulationKind::Film);
        assert!(mumo.check_modulation(ModulationKind::Sigmoid).is_err());
        mumo.validate().unwrap();
    }
}
