use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use modalmeta_core::analysis::{
    adaptation_curves, centroid_purity, embed_tasks, evaluate_model, pca_project, EvalReport, EvalSettings,
};
use modalmeta_core::diff::{GradCheck, GradCheckReport};
use modalmeta_core::meta::{
    meta_gradient_check, train, ExperimentConfig, GradientOrder, InnerConfig, MetaConfig, ModelState,
    TrainHooks, TrainRecord, TrainerKind,
};
use modalmeta_core::networks::{Architecture, ModulationKind};
use modalmeta_core::rng::{stream, Domain};
use modalmeta_core::taskgen::{grid, sample_episode, DistConfig, Task, TaskData};
use rand::Rng;

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::load_config;
use crate::csv_out;
use crate::error::{AppError, AppResult};
use crate::format::to_json_bytes;
use crate::pool::Pool;

#[derive(Debug, Parser)]
#[command(
    name = "modalmeta",
    version,
    about = "Multimodal meta-learning for few-shot regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment config; defaults apply to absent fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TrainerArg {
    Maml,
    MultiMaml,
    MumoMaml,
}

impl From<TrainerArg> for TrainerKind {
    fn from(t: TrainerArg) -> Self {
        match t {
            TrainerArg::Maml => TrainerKind::Maml,
            TrainerArg::MultiMaml => TrainerKind::MultiMaml,
            TrainerArg::MumoMaml => TrainerKind::MuMoMaml,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Meta-train a model; writes checkpoint.json and train_log.csv.
    Train {
        #[command(flatten)]
        common: Common,
        /// Overrides the config trainer.
        #[arg(long, value_enum)]
        trainer: Option<TrainerArg>,
        /// Overrides the config iteration count.
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// Held-out MSE after 0..=eval_steps inner steps; writes eval_report.json.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Overrides the config eval_tasks.
        #[arg(long)]
        tasks: Option<usize>,
    },
    /// Task embeddings with a PCA projection and cluster purity.
    Embed {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 500)]
        tasks: usize,
    },
    /// Predictions of every adaptation step on a dense grid for one task.
    Curves {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Which task of the curves stream to draw.
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[arg(long, default_value_t = 201)]
        points: usize,
    },
    /// Finite-difference checks of the meta-gradient for every trainer.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scales analytic gradients before comparison (negative control).
        #[arg(long, hide = true)]
        corrupt_analytic: Option<f64>,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> AppResult<()> {
    match command {
        Command::Train {
            common,
            trainer,
            iterations,
        } => cmd_train(&common, trainer, iterations),
        Command::Eval {
            common,
            checkpoint,
            tasks,
        } => cmd_eval(&common, &checkpoint, tasks),
        Command::Embed {
            common,
            checkpoint,
            tasks,
        } => cmd_embed(&common, &checkpoint, tasks),
        Command::Curves {
            common,
            checkpoint,
            index,
            points,
        } => cmd_curves(&common, &checkpoint, index, points),
        Command::Gradcheck {
            seed,
            corrupt_analytic,
        } => cmd_gradcheck(seed, corrupt_analytic),
    }
}

fn out_dir(common: &Common) -> AppResult<&Path> {
    fs::create_dir_all(&common.out).map_err(AppError::io(&common.out))?;
    Ok(&common.out)
}

/// The model and the config to evaluate it under: `--config` if given,
/// otherwise the snapshot stored in the checkpoint.
fn load_for_analysis(common: &Common, checkpoint: &Path) -> AppResult<(ModelState, ExperimentConfig)> {
    let ckpt = load_checkpoint(checkpoint)?;
    let mut config = match &common.config {
        Some(path) => load_config(path)?,
        None => ckpt.config,
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    ckpt.model.check_modulation(requested_modulation(&config))?;
    Ok((ckpt.model, config))
}

fn requested_modulation(config: &ExperimentConfig) -> ModulationKind {
    match config.meta.trainer {
        TrainerKind::MuMoMaml => config.architecture.modulation,
        _ => ModulationKind::None,
    }
}

struct ProgressHooks<'a> {
    start: Instant,
    every: u64,
    config: &'a ExperimentConfig,
    pool: &'a Pool,
}

impl TrainHooks for ProgressHooks<'_> {
    fn elapsed_secs(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn on_record(&mut self, record: &TrainRecord) {
        if (record.iteration + 1).is_multiple_of(self.every) {
            info!(
                "iteration {} loss {:.4} ({:.1}s)",
                record.iteration + 1,
                record.mean_loss,
                record.wall_time_secs
            );
        }
    }

    fn on_eval(&mut self, state: &ModelState) {
        let settings = eval_settings(self.config, self.config.eval_tasks);
        match evaluate_model(
            state,
            state.modulation(),
            &self.config.distribution,
            &settings,
            self.pool,
        ) {
            Ok(r) => info!(
                "iteration {} eval: step 0 {:.4}, step {} {:.4}",
                state.iteration,
                r.overall.mse_by_step[0],
                settings.eval_steps,
                r.overall.mse_by_step[settings.eval_steps]
            ),
            Err(e) => warn!("evaluation at iteration {} failed: {e}", state.iteration),
        }
    }
}

fn eval_settings(config: &ExperimentConfig, n_tasks: usize) -> EvalSettings {
    EvalSettings {
        n_tasks,
        eval_steps: config.inner.eval_steps,
        alpha: config.inner.alpha,
        seed: config.seed,
    }
}

fn cmd_train(common: &Common, trainer: Option<TrainerArg>, iterations: Option<u64>) -> AppResult<()> {
    let mut config = match &common.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(t) = trainer {
        config.meta.trainer = t.into();
    }
    if let Some(n) = iterations {
        config.meta.iterations = n;
    }
    config.validate()?;
    let out = out_dir(common)?;
    let pool = Pool::from_env()?;
    info!(
        "training {} for {} iterations on {} threads",
        config.meta.trainer.name(),
        config.meta.iterations,
        pool.threads()
    );
    let mut hooks = ProgressHooks {
        start: Instant::now(),
        every: (config.meta.iterations / 20).max(1),
        config: &config,
        pool: &pool,
    };
    let (model, log) = train(&config, &pool, &mut hooks)?;
    csv_out::write_train_log(&out.join("train_log.csv"), &log)?;
    let path = out.join("checkpoint.json");
    save_checkpoint(&path, &Checkpoint::new(config, model))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Aligned text table: one row per target kind, with the step-0 and
/// final-step MSE, followed by the per-mode breakdown.
pub fn render_table(report: &EvalReport) -> String {
    let last = report.eval_steps();
    let post_adaptation = format!("Post Adaptation ({last} steps)");
    let mut rows: Vec<[String; 4]> = vec![[
        "Method".into(),
        "Targets".into(),
        "Post Modulation".into(),
        post_adaptation,
    ]];
    let method = match report.modulation.as_str() {
        "none" => report.trainer.clone(),
        m => format!("{} ({m})", report.trainer),
    };
    let mut push = |label: String, targets: &str, curve: &[f64]| {
        rows.push([
            label,
            targets.into(),
            format!("{:.4}", curve[0]),
            format!("{:.4}", curve[last]),
        ]);
    };
    push(method.clone(), "noisy", &report.overall.mse_by_step);
    push(method.clone(), "noise-free", &report.overall.mse_true_by_step);
    for m in &report.per_mode {
        let label = format!("  mode {} {} (n={})", m.mode_index, m.family, m.curve.n_tasks);
        push(label.clone(), "noisy", &m.curve.mse_by_step);
        push(label, "noise-free", &m.curve.mse_true_by_step);
    }
    let widths: Vec<usize> = (0..4)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut text = format!("{} tasks, alpha {}\n", report.overall.n_tasks, report.alpha);
    for r in &rows {
        let line = format!(
            "{:<w0$}  {:<w1$}  {:>w2$}  {:>w3$}",
            r[0],
            r[1],
            r[2],
            r[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3]
        );
        text.push_str(line.trim_end());
        text.push('\n');
    }
    text
}

fn cmd_eval(common: &Common, checkpoint: &Path, tasks: Option<usize>) -> AppResult<()> {
    let (model, config) = load_for_analysis(common, checkpoint)?;
    let out = out_dir(common)?;
    let settings = eval_settings(&config, tasks.unwrap_or(config.eval_tasks));
    let pool = Pool::from_env()?;
    let report = evaluate_model(
        &model,
        requested_modulation(&config),
        &config.distribution,
        &settings,
        &pool,
    )?;
    print!("{}", render_table(&report));
    let path = out.join("eval_report.json");
    let bytes = to_json_bytes(&report).map_err(|e| AppError::Usage(e.to_string()))?;
    fs::write(&path, bytes).map_err(AppError::io(&path))?;
    Ok(())
}

fn cmd_embed(common: &Common, checkpoint: &Path, tasks: usize) -> AppResult<()> {
    let (model, config) = load_for_analysis(common, checkpoint)?;
    let out = out_dir(common)?;
    let pool = Pool::from_env()?;
    let rows = embed_tasks(&model, &config.distribution, tasks, config.seed, &pool)?;
    csv_out::write_embeddings(&out.join("embeddings.csv"), &rows)?;
    let points: Vec<Vec<f64>> = rows.iter().map(|r| r.embedding.clone()).collect();
    let labels: Vec<usize> = rows.iter().map(|r| r.task.mode_index).collect();
    let projection = pca_project(&points)?;
    if projection.degenerate {
        warn!("embeddings have zero variance; the projection is all zeros");
    }
    csv_out::write_projection(&out.join("projection.csv"), &rows, &projection)?;
    let purity = centroid_purity(&points, &labels, config.distribution.modes.len())?;
    println!(
        "{} tasks, embedding dimension {}",
        rows.len(),
        points.first().map_or(0, Vec::len)
    );
    println!("centroid purity {purity:.4}");
    println!(
        "explained variance pc1 {:.4e}, pc2 {:.4e}",
        projection.variances[0], projection.variances[1]
    );
    Ok(())
}

fn cmd_curves(common: &Common, checkpoint: &Path, index: u64, points: usize) -> AppResult<()> {
    let (model, config) = load_for_analysis(common, checkpoint)?;
    let out = out_dir(common)?;
    let xs = grid(config.distribution.input_range(), points);
    let curves = adaptation_curves(
        &model.bind_constants()?,
        &config.distribution,
        &xs,
        config.inner.alpha,
        config.inner.eval_steps,
        config.seed,
        index,
    )?;
    csv_out::write_curves(&out.join("curves.csv"), &curves)?;
    csv_out::write_support(&out.join("support.csv"), &curves)?;
    println!(
        "task {index}: {} mode {}",
        curves.task.function.family_name(),
        curves.task.mode_index
    );
    Ok(())
}

/// Configuration used by the meta-gradient checks: a tiny learner and
/// encoder with three support points and one second-order inner step.
pub fn gradcheck_config(trainer: TrainerKind, modulation: ModulationKind) -> ExperimentConfig {
    let defaults = ExperimentConfig::default();
    ExperimentConfig {
        distribution: DistConfig {
            k_shot: 3,
            l_query: 4,
            ..DistConfig::default()
        },
        architecture: Architecture {
            widths: vec![1, 8, 8, 1],
            hidden_size: 4,
            generator_hidden: 8,
            modulation,
        },
        inner: InnerConfig {
            alpha: 0.01,
            train_steps: 1,
            eval_steps: 5,
        },
        meta: MetaConfig {
            trainer,
            order: GradientOrder::Second,
            ..defaults.meta
        },
        ..defaults
    }
}

/// Central-difference checks (step 1e-5, tolerance 1e-5) of the
/// meta-gradient for MAML, Multi-MAML and every modulation kind.
///
/// Generator output layers start at zero, which would leave most encoder
/// gradients trivially zero, so they are filled with small random values
/// first.
pub fn gradcheck_suite(seed: u64, corrupt: Option<f64>) -> AppResult<Vec<(String, GradCheckReport)>> {
    let mut check = GradCheck::new(1e-5, 1e-5)?;
    if let Some(scale) = corrupt {
        check = check.corrupt_analytic(scale);
    }
    let cases = [
        (TrainerKind::Maml, ModulationKind::Film),
        (TrainerKind::MultiMaml, ModulationKind::Film),
        (TrainerKind::MuMoMaml, ModulationKind::Film),
        (TrainerKind::MuMoMaml, ModulationKind::Sigmoid),
        (TrainerKind::MuMoMaml, ModulationKind::Softmax),
    ];
    let mut reports = Vec::new();
    for (trainer, kind) in cases {
        let config = gradcheck_config(trainer, kind);
        let mut model = ModelState::init(
            trainer,
            &config.architecture,
            config.distribution.modes.len(),
            seed,
        )?;
        let mut rng = stream(seed, Domain::Custom(1), 0);
        if let Some(enc) = model.encoder.as_mut() {
            for (name, t) in enc.iter_mut() {
                if name.contains(".out.") {
                    t.data_mut()
                        .iter_mut()
                        .for_each(|v| *v = rng.random_range(-0.3..0.3));
                }
            }
        }
        // Two tasks per mode, so every Multi-MAML learner is exercised.
        let mut batch: Vec<(Task, TaskData)> = Vec::new();
        let mut i = 0;
        while batch.len() < 2 * config.distribution.modes.len() {
            let (task, data) = sample_episode(&config.distribution, &mut stream(seed, Domain::Custom(2), i))?;
            if batch
                .iter()
                .filter(|(t, _)| t.mode_index == task.mode_index)
                .count()
                < 2
            {
                batch.push((task, data));
            }
            i += 1;
        }
        let report = meta_gradient_check(&model, &batch, &config.inner, config.meta.order, &check)?;
        let label = match trainer {
            TrainerKind::MuMoMaml => format!("{} ({})", trainer.name(), kind.name()),
            _ => trainer.name().to_string(),
        };
        reports.push((label, report));
    }
    Ok(reports)
}

fn cmd_gradcheck(seed: u64, corrupt: Option<f64>) -> AppResult<()> {
    let reports = gradcheck_suite(seed, corrupt)?;
    let mut failed = Vec::new();
    for (label, r) in &reports {
        println!(
            "{:<4} {label}: max rel error {:.3e} at {}[{}] over {} entries (tolerance {:.0e})",
            if r.passed { "PASS" } else { "FAIL" },
            r.max_rel_error,
            r.worst_parameter,
            r.worst_index,
            r.entries_checked,
            r.tolerance
        );
        if !r.passed {
            failed.push(label.clone());
        }
    }
    match failed.is_empty() {
        true => Ok(()),
        false => Err(AppError::GradCheck(failed.join(", "))),
    }
}
