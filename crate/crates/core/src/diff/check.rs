//! Central-difference verification of analytic gradients.

use alloc::format;
use alloc::string::String;

use super::expr::Expr;
use super::params::{ParamSet, TensorSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(1, |analytic|)` over all entries.
    pub max_rel_error: f64,
    pub worst_parameter: String,
    pub worst_index: usize,
    pub entries_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares analytic gradients against central differences, entry by entry.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    step: f64,
    tolerance: f64,
    analytic_scale: f64,
}

impl GradCheck {
    pub fn new(step: f64, tolerance: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::invalid(
                "gradcheck",
                format!("step must be > 0, got {step}"),
            ));
        }
        Ok(Self {
            step,
            tolerance,
            analytic_scale: 1.0,
        })
    }

    /// Multiplies the analytic gradient by `scale` before comparing. Used as
    /// a negative control: any scale other than 1 should make the check fail.
    pub fn corrupt_analytic(mut self, scale: f64) -> Self {
        self.analytic_scale = scale;
        self
    }

    pub fn run<F>(&self, builder: F, params: &TensorSet) -> Result<GradCheckReport>
    where
        F: Fn(&ParamSet) -> Result<Expr>,
    {
        let bound = ParamSet::variables(params);
        let output = builder(&bound)?;
        scalar_value(&output, "output at the base point")?;
        let grads = bound.gradient_of(&output)?;

        let mut report = GradCheckReport {
            max_rel_error: 0.0,
            worst_parameter: String::new(),
            worst_index: 0,
            entries_checked: 0,
            tolerance: self.tolerance,
            passed: true,
        };
        let mut probe = params.clone();
        for (p, ((name, tensor), grad)) in params.iter().zip(grads.exprs()).enumerate() {
            for i in 0..tensor.len() {
                let original = tensor.data()[i];
                let analytic = grad.value().data()[i] * self.analytic_scale;
                let plus = self.eval_at(&builder, &mut probe, p, i, original + self.step)?;
                let minus = self.eval_at(&builder, &mut probe, p, i, original - self.step)?;
                set_entry(&mut probe, p, i, original);
                let numeric = (plus - minus) / (2.0 * self.step);
                if !analytic.is_finite() {
                    return Err(Error::NonFinite(format!("analytic gradient of {name}[{i}]")));
                }
                let rel = libm::fabs(analytic - numeric) / libm::fmax(1.0, libm::fabs(analytic));
                if rel > report.max_rel_error || report.entries_checked == 0 {
                    report.max_rel_error = rel;
                    report.worst_parameter = String::from(name);
                    report.worst_index = i;
                }
                report.entries_checked += 1;
            }
        }
        report.passed = report.max_rel_error <= self.tolerance;
        Ok(report)
    }

    fn eval_at<F>(
        &self,
        builder: &F,
        probe: &mut TensorSet,
        param: usize,
        index: usize,
        value: f64,
    ) -> Result<f64>
    where
        F: Fn(&ParamSet) -> Result<Expr>,
    {
        set_entry(probe, param, index, value);
        // Variables, not constants: the builder may differentiate internally.
        let out = builder(&ParamSet::variables(probe))?;
        scalar_value(&out, "perturbed output")
    }
}

fn set_entry(set: &mut TensorSet, param: usize, index: usize, value: f64) {
    if let Some((_, t)) = set.iter_mut().nth(param) {
        t.data_mut()[index] = value;
    }
}

fn scalar_value(e: &Expr, what: &str) -> Result<f64> {
    if !e.shape().is_empty() {
        return Err(Error::NonScalar(e.shape().into()));
    }
    let v = e.value().data()[0];
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("{what} is {v}")));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn constant_function_passes() {
        let mut p = TensorSet::new();
        p.insert("w", Tensor::vector(alloc::vec![1.0, -2.0])).unwrap();
        let report = GradCheck::new(1e-5, 1e-6)
            .unwrap()
            .run(|_| Ok(Expr::scalar(4.0)), &p)
            .unwrap();
        assert!(report.passed);
        assert_eq!(report.max_rel_error, 0.0);
        assert_eq!(report.entries_checked, 2);
    }

    #[test]
    fn rejects_nonpositive_step() {
        assert!(GradCheck::new(0.0, 1e-6).is_err());
        assert!(GradCheck::new(-1e-5, 1e-6).is_err());
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let mut p = TensorSet::new();
        p.insert("w", Tensor::scalar(1.0)).unwrap();
        let err = GradCheck::new(1e-5, 1e-6)
            .unwrap()
            .run(|_| Ok(Expr::scalar(f64::NAN)), &p)
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn builders_may_differentiate_internally() {
        // f(w) = (w - 0.1 * d(w^3)/dw)^2 = (w - 0.3 w^2)^2.
        let mut p = TensorSet::new();
        p.insert("w", Tensor::scalar(1.5)).unwrap();
        let report = GradCheck::new(1e-5, 1e-8)
            .unwrap()
            .run(
                |ps| {
                    let w = ps.require("w")?;
                    let inner = crate::diff::gradient(&w.square().mul(w)?, core::slice::from_ref(w))?;
                    Ok(w.sub(&inner[0].scale(0.1))?.square())
                },
                &p,
            )
            .unwrap();
        assert!(report.passed, "{report:?}");
    }
}
