use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::expr::Expr;
use super::grad::gradient;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ordered, uniquely named parameter values. This is the storage form of
/// parameters between training steps, in checkpoints and in the optimizer.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TensorSet {
    entries: Vec<(String, Tensor)>,
}

impl TensorSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(Error::DuplicateName(name));
        }
        self.entries.push((name, value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar entries.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> TensorSet {
        TensorSet {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    /// Whether both sets have the same names and shapes in the same order.
    pub fn same_layout(&self, other: &TensorSet) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((a, x), (b, y))| a == b && x.shape() == y.shape())
    }
}

/// Ordered, uniquely named expressions: parameters bound into a graph, or
/// gradients of a scalar with respect to such parameters.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    exprs: Vec<Expr>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds every tensor as a fresh differentiable leaf.
    pub fn variables(values: &TensorSet) -> ParamSet {
        ParamSet {
            names: values.names().map(String::from).collect(),
            exprs: values.tensors().map(|t| Expr::variable(t.clone())).collect(),
        }
    }

    /// Binds every tensor as a constant.
    pub fn constants(values: &TensorSet) -> ParamSet {
        ParamSet {
            names: values.names().map(String::from).collect(),
            exprs: values.tensors().map(|t| Expr::constant(t.clone())).collect(),
        }
    }

    pub fn from_parts(names: Vec<String>, exprs: Vec<Expr>) -> Result<ParamSet> {
        if names.len() != exprs.len() {
            return Err(Error::invalid(
                "param_set",
                alloc::format!("{} names for {} expressions", names.len(), exprs.len()),
            ));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::DuplicateName(n.clone()));
            }
        }
        Ok(ParamSet { names, exprs })
    }

    pub fn insert(&mut self, name: impl Into<String>, expr: Expr) -> Result<()> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::DuplicateName(name));
        }
        self.names.push(name);
        self.exprs.push(expr);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Expr> {
        self.names.iter().position(|n| n == name).map(|i| &self.exprs[i])
    }

    pub fn require(&self, name: &str) -> Result<&Expr> {
        self.get(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.exprs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exprs.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Expr)> {
        self.names.iter().map(String::as_str).zip(&self.exprs)
    }

    /// Current values as a [`TensorSet`].
    pub fn values(&self) -> TensorSet {
        TensorSet {
            entries: self
                .iter()
                .map(|(n, e)| (String::from(n), e.evaluate()))
                .collect(),
        }
    }

    /// Gradient of `output` with respect to every entry, keeping names.
    pub fn gradient_of(&self, output: &Expr) -> Result<ParamSet> {
        Ok(ParamSet {
            names: self.names.clone(),
            exprs: gradient(output, &self.exprs)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_ordered() {
        let mut set = TensorSet::new();
        set.insert("b", Tensor::scalar(1.0)).unwrap();
        set.insert("a", Tensor::scalar(2.0)).unwrap();
        assert_eq!(
            set.insert("a", Tensor::scalar(3.0)),
            Err(Error::DuplicateName("a".into()))
        );
        assert_eq!(set.names().collect::<Vec<_>>(), ["b", "a"]);
        let bound = ParamSet::variables(&set);
        assert_eq!(bound.names(), ["b", "a"]);
        assert_eq!(bound.values(), set);
    }

    #[test]
    fn gradient_keeps_names() {
        let mut set = TensorSet::new();
        set.insert("w", Tensor::scalar(3.0)).unwrap();
        let p = ParamSet::variables(&set);
        let w = p.require("w").unwrap();
        let g = p.gradient_of(&w.square()).unwrap();
        assert_eq!(g.get("w").unwrap().value().item(), Some(6.0));
        assert!(matches!(p.require("x"), Err(Error::MissingParameter(_))));
    }
}
