use modalmeta_core::analysis::{
    adaptation_curves, centroid_purity, evaluate_model, evaluate_predictor, pca_project, AdaptivePredictor,
    EvalSettings,
};
use modalmeta_core::diff::{mse, Expr, ParamSet};
use modalmeta_core::meta::{adam_update, AdamConfig, AdamState, ModelState, Serial, TrainerKind};
use modalmeta_core::networks::{forward, Architecture, LearnerParams, ModulationKind, ModulationParams};
use modalmeta_core::rng::{stream, Domain};
use modalmeta_core::taskgen::{sample_episode, DistConfig, Task, TaskData};
use modalmeta_core::Tensor;
use proptest::prelude::*;

/// Predicts the noise-free function regardless of the step.
struct Exact;

impl AdaptivePredictor for Exact {
    fn predictions(
        &self,
        task: &Task,
        _: &TaskData,
        inputs: &[f64],
        _: f64,
        steps: usize,
    ) -> modalmeta_core::Result<Vec<Vec<f64>>> {
        Ok(vec![
            inputs.iter().map(|&x| task.function.eval(x)).collect();
            steps + 1
        ])
    }
}

struct Zero;

impl AdaptivePredictor for Zero {
    fn predictions(
        &self,
        _: &Task,
        _: &TaskData,
        inputs: &[f64],
        _: f64,
        steps: usize,
    ) -> modalmeta_core::Result<Vec<Vec<f64>>> {
        Ok(vec![vec![0.0; inputs.len()]; steps + 1])
    }
}

fn settings(n_tasks: usize, alpha: f64) -> EvalSettings {
    EvalSettings {
        n_tasks,
        eval_steps: 5,
        alpha,
        seed: 21,
    }
}

#[test]
fn exact_predictor_scores_zero_without_noise() {
    let dist = DistConfig {
        noise_sigma: 0.0,
        ..DistConfig::default()
    };
    let r = evaluate_predictor(&Exact, &dist, &settings(50, 0.01), &Serial).unwrap();
    assert!(r
        .overall
        .mse_by_step
        .iter()
        .chain(&r.overall.mse_true_by_step)
        .all(|&v| v == 0.0));
}

#[test]
fn zero_predictor_scores_mean_square_target() {
    let dist = DistConfig::default();
    let s = settings(40, 0.01);
    let r = evaluate_predictor(&Zero, &dist, &s, &Serial).unwrap();
    let (mut noisy, mut clean) = (0.0, 0.0);
    for i in 0..s.n_tasks {
        let (_, data) = sample_episode(&dist, &mut stream(s.seed, Domain::Evaluation, i as u64)).unwrap();
        let l = data.l() as f64;
        noisy += data.query_y.iter().map(|y| y * y).sum::<f64>() / l;
        clean += data.query_true.iter().map(|y| y * y).sum::<f64>() / l;
    }
    let (noisy, clean) = (noisy / s.n_tasks as f64, clean / s.n_tasks as f64);
    for (&a, &b) in r.overall.mse_by_step.iter().zip(&r.overall.mse_true_by_step) {
        assert!((a - noisy).abs() <= 1e-12 * noisy);
        assert!((b - clean).abs() <= 1e-12 * clean);
    }
    let counted: usize = r.per_mode.iter().map(|m| m.curve.n_tasks).sum();
    assert_eq!(counted, s.n_tasks);
}

fn desk_arch(kind: ModulationKind) -> Architecture {
    Architecture {
        widths: vec![1, 16, 16, 1],
        hidden_size: 4,
        generator_hidden: 8,
        modulation: kind,
    }
}

#[test]
fn zero_alpha_sweep_is_flat() {
    let state = ModelState::init(TrainerKind::MuMoMaml, &desk_arch(ModulationKind::Film), 2, 4).unwrap();
    let dist = DistConfig::default();
    let r = evaluate_model(&state, ModulationKind::Film, &dist, &settings(20, 0.0), &Serial).unwrap();
    let first = r.overall.mse_by_step[0];
    assert!(r
        .overall
        .mse_by_step
        .iter()
        .all(|v| v.to_bits() == first.to_bits()));

    let x: Vec<f64> = (0..201).map(|i| -5.0 + 0.05 * i as f64).collect();
    let c = adaptation_curves(&state.bind_constants().unwrap(), &dist, &x, 0.0, 5, 3, 0).unwrap();
    assert_eq!(c.steps.len(), 6);
    assert!(c.steps.iter().all(|s| s == &c.steps[0]));
}

#[test]
fn post_modulation_matches_a_direct_forward() {
    let state = ModelState::init(TrainerKind::Maml, &desk_arch(ModulationKind::None), 2, 6).unwrap();
    let dist = DistConfig::default();
    let s = settings(10, 0.01);
    let r = evaluate_model(&state, ModulationKind::None, &dist, &s, &Serial).unwrap();
    let theta = LearnerParams::bind(&ParamSet::constants(&state.learners[0])).unwrap();
    let mut total = 0.0;
    for i in 0..s.n_tasks {
        let (_, data) = sample_episode(&dist, &mut stream(s.seed, Domain::Evaluation, i as u64)).unwrap();
        let pred = forward(
            &theta,
            &ModulationParams::none(),
            ModulationKind::None,
            &Expr::constant(data.query_inputs()),
        )
        .unwrap();
        total += mse(&pred, &Expr::constant(data.query_targets()))
            .unwrap()
            .value()
            .item()
            .unwrap();
    }
    let expected = total / s.n_tasks as f64;
    assert!((r.overall.mse_by_step[0] - expected).abs() <= 1e-12 * expected);
}

#[test]
fn single_task_overfit_stays_on_the_curve() {
    let dist = DistConfig {
        noise_sigma: 0.0,
        ..DistConfig::default()
    };
    let (seed, index) = (8, 0);
    let (task, _) = sample_episode(&dist, &mut stream(seed, Domain::Curves, index)).unwrap();
    let grid: Vec<f64> = (0..101).map(|i| -5.0 + 0.1 * i as f64).collect();
    let inputs = Expr::constant(Tensor::matrix(grid.len(), 1, grid.clone()));
    let targets = Expr::constant(Tensor::matrix(
        grid.len(),
        1,
        grid.iter().map(|&x| task.function.eval(x)).collect(),
    ));

    let arch = Architecture {
        widths: vec![1, 40, 40, 1],
        ..desk_arch(ModulationKind::None)
    };
    let mut state = ModelState::init(TrainerKind::Maml, &arch, 2, 0).unwrap();
    let mut opt = AdamState::new(&state.learners[0]);
    let adam = AdamConfig {
        lr: 0.01,
        ..AdamConfig::default()
    };
    for _ in 0..3000 {
        let p = ParamSet::variables(&state.learners[0]);
        let theta = LearnerParams::bind(&p).unwrap();
        let pred = forward(&theta, &ModulationParams::none(), ModulationKind::None, &inputs).unwrap();
        let grads = p.gradient_of(&mse(&pred, &targets).unwrap()).unwrap().values();
        adam_update(&mut state.learners[0], &grads, &mut opt, &adam).unwrap();
    }

    let x: Vec<f64> = (0..201).map(|i| -5.0 + 0.05 * i as f64).collect();
    let c = adaptation_curves(&state.bind_constants().unwrap(), &dist, &x, 0.01, 5, seed, index).unwrap();
    assert_eq!(c.task, task);
    let rms = (c.steps[5]
        .iter()
        .zip(&c.truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / x.len() as f64)
        .sqrt();
    assert!(rms <= 0.05, "{task:?}: rms {rms}");
}

#[test]
fn purity_examples() {
    let rows = vec![vec![0.0, 0.1], vec![0.1, 0.0], vec![10.0, 10.1], vec![10.1, 10.0]];
    assert_eq!(centroid_purity(&rows, &[0, 0, 1, 1], 2).unwrap(), 1.0);
    let same = vec![vec![1.0, 1.0]; 4];
    assert_eq!(centroid_purity(&same, &[0, 1, 0, 1], 2).unwrap(), 0.5);
    assert!(centroid_purity(&rows, &[0, 0, 0, 0], 2).is_err());
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pca_components_are_orthonormal_and_ordered(
        rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 4), 2..30),
    ) {
        let p = pca_project(&rows).unwrap();
        let [a, b] = &p.components;
        prop_assert!((dot(a, a) - 1.0).abs() <= 1e-9);
        prop_assert!((dot(b, b) - 1.0).abs() <= 1e-9);
        prop_assert!(dot(a, b).abs() <= 1e-9);
        prop_assert!(p.variances[0] >= p.variances[1] - 1e-9 * p.variances[0].abs().max(1.0));
        prop_assert_eq!(p.coordinates.len(), rows.len());
    }

    #[test]
    fn pca_recovers_a_line(
        direction in prop::collection::vec(-1.0f64..1.0, 5),
        offsets in prop::collection::vec(-5.0f64..5.0, 3..40),
    ) {
        let norm = dot(&direction, &direction).sqrt();
        prop_assume!(norm > 0.1);
        prop_assume!(offsets.iter().any(|t| (t - offsets[0]).abs() > 0.5));
        let rows: Vec<Vec<f64>> = offsets.iter().map(|t| direction.iter().map(|d| d * t + 1.0).collect()).collect();
        let p = pca_project(&rows).unwrap();
        prop_assert!(p.coordinates.iter().all(|c| c[1].abs() <= 1e-9));
    }

    #[test]
    fn purity_is_a_fraction(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 4..40),
    ) {
        let labels: Vec<usize> = (0..rows.len()).map(|i| i % 2).collect();
        let v = centroid_purity(&rows, &labels, 2).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!((v * rows.len() as f64).round() / rows.len() as f64, v);
    }
}
