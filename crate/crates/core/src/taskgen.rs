//! The multimodal regression task distribution.
//!
//! A task picks one function family (mode) uniformly, draws that family's
//! parameters uniformly from their ranges, and yields a noisy support set
//! of `k_shot` points and an independent query set of `l_query` points.

use alloc::format;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Closed interval `[low, high]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(from = "[f64; 2]", into = "[f64; 2]"))]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub const fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.low + (self.high - self.low) * rng.random::<f64>()
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.low.is_finite() && self.high.is_finite() && self.low <= self.high) {
            return Err(Error::Config(format!(
                "{what} range [{}, {}] is not a finite ordered interval",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

impl From<[f64; 2]> for Interval {
    fn from([low, high]: [f64; 2]) -> Self {
        Self { low, high }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.low, i.high]
    }
}

mod ranges {
    use super::Interval;
    use core::f64::consts::PI;

    pub fn sin_amplitude() -> Interval {
        Interval::new(0.1, 5.0)
    }
    pub fn sin_frequency() -> Interval {
        Interval::new(0.5, 2.0)
    }
    pub fn sin_phase() -> Interval {
        Interval::new(0.0, 2.0 * PI)
    }
    pub fn linear_slope() -> Interval {
        Interval::new(-3.0, 3.0)
    }
    pub fn linear_intercept() -> Interval {
        Interval::new(-3.0, 3.0)
    }
    pub fn quad_magnitude() -> Interval {
        Interval::new(0.02, 0.15)
    }
    pub fn quad_center() -> Interval {
        Interval::new(-3.0, 3.0)
    }
    pub fn quad_offset() -> Interval {
        Interval::new(-3.0, 3.0)
    }
}

/// One function family of the distribution with its parameter ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum ModeSpec {
    /// `A * sin(w * x + b)`
    Sinusoid {
        #[cfg_attr(feature = "serde", serde(default = "ranges::sin_amplitude"))]
        amplitude: Interval,
        #[cfg_attr(feature = "serde", serde(default = "ranges::sin_frequency"))]
        frequency: Interval,
        #[cfg_attr(feature = "serde", serde(default = "ranges::sin_phase"))]
        phase: Interval,
    },
    /// `A * x + b`
    Linear {
        #[cfg_attr(feature = "serde", serde(default = "ranges::linear_slope"))]
        slope: Interval,
        #[cfg_attr(feature = "serde", serde(default = "ranges::linear_intercept"))]
        intercept: Interval,
    },
    /// `A * (x - c)^2 + b` with `|A|` drawn from `magnitude` and a fair sign.
    Quadratic {
        #[cfg_attr(feature = "serde", serde(default = "ranges::quad_magnitude"))]
        magnitude: Interval,
        #[cfg_attr(feature = "serde", serde(default = "ranges::quad_center"))]
        center: Interval,
        #[cfg_attr(feature = "serde", serde(default = "ranges::quad_offset"))]
        offset: Interval,
    },
}

impl ModeSpec {
    pub fn sinusoid() -> Self {
        ModeSpec::Sinusoid {
            amplitude: ranges::sin_amplitude(),
            frequency: ranges::sin_frequency(),
            phase: ranges::sin_phase(),
        }
    }

    pub fn linear() -> Self {
        ModeSpec::Linear {
            slope: ranges::linear_slope(),
            intercept: ranges::linear_intercept(),
        }
    }

    pub fn quadratic() -> Self {
        ModeSpec::Quadratic {
            magnitude: ranges::quad_magnitude(),
            center: ranges::quad_center(),
            offset: ranges::quad_offset(),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            ModeSpec::Sinusoid { .. } => "sinusoid",
            ModeSpec::Linear { .. } => "linear",
            ModeSpec::Quadratic { .. } => "quadratic",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ModeSpec::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                amplitude.validate("sinusoid amplitude")?;
                frequency.validate("sinusoid frequency")?;
                phase.validate("sinusoid phase")
            }
            ModeSpec::Linear { slope, intercept } => {
                slope.validate("linear slope")?;
                intercept.validate("linear intercept")
            }
            ModeSpec::Quadratic {
                magnitude,
                center,
                offset,
            } => {
                magnitude.validate("quadratic magnitude")?;
                if magnitude.low < 0.0 {
                    return Err(Error::Config(
                        "quadratic magnitude range must be nonnegative".into(),
                    ));
                }
                center.validate("quadratic center")?;
                offset.validate("quadratic offset")
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TaskFunction {
        match *self {
            ModeSpec::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => TaskFunction::Sinusoid {
                amplitude: amplitude.sample(rng),
                frequency: frequency.sample(rng),
                phase: phase.sample(rng),
            },
            ModeSpec::Linear { slope, intercept } => TaskFunction::Linear {
                slope: slope.sample(rng),
                intercept: intercept.sample(rng),
            },
            ModeSpec::Quadratic {
                magnitude,
                center,
                offset,
            } => {
                let negative = rng.random_bool(0.5);
                let m = magnitude.sample(rng);
                TaskFunction::Quadratic {
                    curvature: if negative { -m } else { m },
                    center: center.sample(rng),
                    offset: offset.sample(rng),
                }
            }
        }
    }
}

/// A concrete target function.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "family", rename_all = "snake_case"))]
pub enum TaskFunction {
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    Linear {
        slope: f64,
        intercept: f64,
    },
    Quadratic {
        curvature: f64,
        center: f64,
        offset: f64,
    },
}

impl TaskFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TaskFunction::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude * libm::sin(frequency * x + phase),
            TaskFunction::Linear { slope, intercept } => slope * x + intercept,
            TaskFunction::Quadratic {
                curvature,
                center,
                offset,
            } => {
                let d = x - center;
                curvature * d * d + offset
            }
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            TaskFunction::Sinusoid { .. } => "sinusoid",
            TaskFunction::Linear { .. } => "linear",
            TaskFunction::Quadratic { .. } => "quadratic",
        }
    }

    /// Parameters as `(A, w, b, c)`; entries a family does not have are `None`.
    pub fn parameters(&self) -> [Option<f64>; 4] {
        match *self {
            TaskFunction::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => [Some(amplitude), Some(frequency), Some(phase), None],
            TaskFunction::Linear { slope, intercept } => [Some(slope), None, Some(intercept), None],
            TaskFunction::Quadratic {
                curvature,
                center,
                offset,
            } => [Some(curvature), None, Some(offset), Some(center)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Task {
    pub mode_index: usize,
    pub function: TaskFunction,
}

/// Noise-free target value of `task` at `x`.
pub fn true_value(task: &Task, x: f64) -> f64 {
    task.function.eval(x)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DistConfig {
    pub modes: Vec<ModeSpec>,
    pub noise_sigma: f64,
    pub k_shot: usize,
    pub l_query: usize,
    pub x_low: f64,
    pub x_high: f64,
}

impl Default for DistConfig {
    fn default() -> Self {
        Self {
            modes: alloc::vec![ModeSpec::sinusoid(), ModeSpec::linear()],
            noise_sigma: 0.3,
            k_shot: 5,
            l_query: 10,
            x_low: -5.0,
            x_high: 5.0,
        }
    }
}

impl DistConfig {
    pub fn with_modes(modes: Vec<ModeSpec>) -> Self {
        Self {
            modes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::Config("the task distribution has no modes".into()));
        }
        for m in &self.modes {
            m.validate()?;
        }
        if !(self.x_low.is_finite() && self.x_high.is_finite() && self.x_low < self.x_high) {
            return Err(Error::Config(format!(
                "input range needs x_low < x_high, got [{}, {}]",
                self.x_low, self.x_high
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.k_shot == 0 || self.l_query == 0 {
            return Err(Error::Config("k_shot and l_query must be at least 1".into()));
        }
        Ok(())
    }

    pub fn input_range(&self) -> Interval {
        Interval::new(self.x_low, self.x_high)
    }
}

/// Draws a mode uniformly, then that mode's parameters uniformly.
pub fn sample_task<R: Rng + ?Sized>(config: &DistConfig, rng: &mut R) -> Result<Task> {
    if config.modes.is_empty() {
        return Err(Error::Config("the task distribution has no modes".into()));
    }
    let mode_index = rng.random_range(0..config.modes.len());
    Ok(Task {
        mode_index,
        function: config.modes[mode_index].sample(rng),
    })
}

/// Support and query sets of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub support_x: Vec<f64>,
    pub support_y: Vec<f64>,
    pub query_x: Vec<f64>,
    pub query_y: Vec<f64>,
    /// Noise-free query targets.
    pub query_true: Vec<f64>,
}

impl TaskData {
    pub fn k(&self) -> usize {
        self.support_x.len()
    }

    pub fn l(&self) -> usize {
        self.query_x.len()
    }

    /// Support inputs as a `[K, 1]` column.
    pub fn support_inputs(&self) -> Tensor {
        column(&self.support_x)
    }

    pub fn support_targets(&self) -> Tensor {
        column(&self.support_y)
    }

    /// Support set as `[K, 2]` rows of `(x, y)` in sampled order.
    pub fn support_pairs(&self) -> Tensor {
        let data = self
            .support_x
            .iter()
            .zip(&self.support_y)
            .flat_map(|(&x, &y)| [x, y])
            .collect();
        Tensor::matrix(self.k(), 2, data)
    }

    pub fn query_inputs(&self) -> Tensor {
        column(&self.query_x)
    }

    pub fn query_targets(&self) -> Tensor {
        column(&self.query_y)
    }

    pub fn query_true_targets(&self) -> Tensor {
        column(&self.query_true)
    }
}

pub(crate) fn column(values: &[f64]) -> Tensor {
    Tensor::matrix(values.len(), 1, values.to_vec())
}

/// Draws `k_shot` support points, then `l_query` query points, each with
/// uniform `x` and additive Gaussian noise on `y`.
pub fn sample_dataset<R: Rng + ?Sized>(task: &Task, config: &DistConfig, rng: &mut R) -> TaskData {
    let range = config.input_range();
    let draw = |n: usize, rng: &mut R| {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        let mut clean = Vec::with_capacity(n);
        for _ in 0..n {
            let x = range.sample(rng);
            let f = true_value(task, x);
            let eps: f64 = rng.sample(StandardNormal);
            xs.push(x);
            ys.push(f + config.noise_sigma * eps);
            clean.push(f);
        }
        (xs, ys, clean)
    };
    let (support_x, support_y, _) = draw(config.k_shot, rng);
    let (query_x, query_y, query_true) = draw(config.l_query, rng);
    TaskData {
        support_x,
        support_y,
        query_x,
        query_y,
        query_true,
    }
}

/// A task and its data drawn from one stream.
pub fn sample_episode<R: Rng + ?Sized>(config: &DistConfig, rng: &mut R) -> Result<(Task, TaskData)> {
    let task = sample_task(config, rng)?;
    let data = sample_dataset(&task, config, rng);
    Ok((task, data))
}

/// Evenly spaced grid of `n` points covering `[low, high]`.
pub fn grid(range: Interval, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![range.low],
        _ => (0..n)
            .map(|i| range.low + (range.high - range.low) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use core::f64::consts::FRAC_PI_2;

    #[test]
    fn closed_forms() {
        let sin = Task {
            mode_index: 0,
            function: TaskFunction::Sinusoid {
                amplitude: 1.0,
                frequency: 1.0,
                phase: 0.0,
            },
        };
        assert_eq!(true_value(&sin, FRAC_PI_2), 1.0);
        let lin = TaskFunction::Linear {
            slope: 2.0,
            intercept: 1.0,
        };
        assert_eq!(lin.eval(0.0), 1.0);
        let quad = TaskFunction::Quadratic {
            curvature: 0.1,
            center: 0.0,
            offset: 0.0,
        };
        assert!((quad.eval(3.0) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn empty_modes_is_an_error() {
        let cfg = DistConfig::with_modes(Vec::new());
        let mut rng = stream(0, Domain::Custom(0), 0);
        assert!(matches!(sample_task(&cfg, &mut rng), Err(Error::Config(_))));
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn same_stream_same_task() {
        let cfg = DistConfig::with_modes(alloc::vec![
            ModeSpec::sinusoid(),
            ModeSpec::linear(),
            ModeSpec::quadratic()
        ]);
        let a = sample_episode(&cfg, &mut stream(11, Domain::Training, 5)).unwrap();
        let b = sample_episode(&cfg, &mut stream(11, Domain::Training, 5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn default_sizes() {
        let cfg = DistConfig::default();
        let (_, data) = sample_episode(&cfg, &mut stream(1, Domain::Custom(1), 0)).unwrap();
        assert_eq!((data.k(), data.l()), (5, 10));
        assert_eq!(data.support_pairs().shape(), &[5, 2]);
    }

    #[test]
    fn validation_catches_bad_configs() {
        let base = DistConfig::default;
        assert!(DistConfig { x_low: 5.0, ..base() }.validate().is_err());
        assert!(DistConfig {
            noise_sigma: -0.1,
            ..base()
        }
        .validate()
        .is_err());
        assert!(DistConfig { k_shot: 0, ..base() }.validate().is_err());
        assert!(DistConfig::default().validate().is_ok());
    }

    #[test]
    fn grid_endpoints() {
        let g = grid(Interval::new(-5.0, 5.0), 201);
        assert_eq!(g.len(), 201);
        assert_eq!(g[0], -5.0);
        assert_eq!(g[200], 5.0);
        assert_eq!(g[100], 0.0);
    }
}
