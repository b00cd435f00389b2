use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use super::expr::{Expr, Op};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reverse-mode gradient of the scalar `output` with respect to each node in
/// `wrt`.
///
/// The returned gradients are themselves graph nodes, so they can be fed
/// into further computations and differentiated again. A `wrt` node that
/// `output` does not depend on receives a constant zero of its shape. The
/// nodes in `wrt` need not be leaves.
pub fn gradient(output: &Expr, wrt: &[Expr]) -> Result<Vec<Expr>> {
    if !output.shape().is_empty() {
        return Err(Error::NonScalar(output.shape().to_vec()));
    }
    let targets: BTreeSet<u64> = wrt.iter().filter(|e| e.is_tracked()).map(Expr::id).collect();
    let mut found: BTreeMap<u64, Expr> = BTreeMap::new();

    if let Some(&min_id) = targets.iter().next() {
        let relevant = relevant_nodes(output, &targets, min_id);
        let mut order: Vec<&Expr> = relevant.values().filter_map(|r| r.as_ref()).collect();
        order.sort_unstable_by_key(|e| core::cmp::Reverse(e.id()));

        let mut adjoints: BTreeMap<u64, Expr> = BTreeMap::new();
        adjoints.insert(output.id(), Expr::scalar(1.0));
        for node in order {
            let Some(g) = adjoints.remove(&node.id()) else {
                continue;
            };
            if targets.contains(&node.id()) {
                found.insert(node.id(), g.clone());
            }
            let needs = |e: &Expr| matches!(relevant.get(&e.id()), Some(Some(_)));
            for (child, contribution) in backprop(node, &g, needs)? {
                match adjoints.remove(&child) {
                    Some(prev) => {
                        adjoints.insert(child, prev.add(&contribution)?);
                    }
                    None => {
                        adjoints.insert(child, contribution);
                    }
                }
            }
        }
    }

    Ok(wrt
        .iter()
        .map(|e| {
            found
                .get(&e.id())
                .cloned()
                .unwrap_or_else(|| Expr::constant(Tensor::zeros(e.shape())))
        })
        .collect())
}

// Maps every visited node id to `Some(node)` if it lies on a path from a
// target to the output, `None` otherwise.
fn relevant_nodes(output: &Expr, targets: &BTreeSet<u64>, min_id: u64) -> BTreeMap<u64, Option<Expr>> {
    let mut memo: BTreeMap<u64, Option<Expr>> = BTreeMap::new();
    let mut stack: Vec<(Expr, bool)> = vec![(output.clone(), false)];
    while let Some((node, expanded)) = stack.pop() {
        if memo.contains_key(&node.id()) {
            continue;
        }
        if !node.is_tracked() || node.id() < min_id {
            memo.insert(node.id(), None);
            continue;
        }
        let operands = node.0.op.operands();
        if expanded {
            let hit = targets.contains(&node.id())
                || operands
                    .iter()
                    .any(|c| matches!(memo.get(&c.id()), Some(Some(_))));
            let entry = hit.then(|| node.clone());
            memo.insert(node.id(), entry);
        } else {
            let pending: Vec<Expr> = operands
                .into_iter()
                .filter(|c| !memo.contains_key(&c.id()))
                .cloned()
                .collect();
            stack.push((node, true));
            stack.extend(pending.into_iter().map(|c| (c, false)));
        }
    }
    memo
}

// Vector-Jacobian products of one node. Only operands accepted by `needs`
// receive a contribution.
fn backprop(node: &Expr, g: &Expr, needs: impl Fn(&Expr) -> bool) -> Result<Vec<(u64, Expr)>> {
    let mut out = Vec::with_capacity(2);
    let mut push = |e: &Expr, f: &dyn Fn() -> Result<Expr>| -> Result<()> {
        if needs(e) {
            out.push((e.id(), f()?));
        }
        Ok(())
    };
    match &node.0.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            push(a, &|| g.sum_to(a.shape()))?;
            push(b, &|| g.sum_to(b.shape()))?;
        }
        Op::Sub(a, b) => {
            push(a, &|| g.sum_to(a.shape()))?;
            push(b, &|| g.neg().sum_to(b.shape()))?;
        }
        Op::Mul(a, b) => {
            push(a, &|| g.mul(b)?.sum_to(a.shape()))?;
            push(b, &|| g.mul(a)?.sum_to(b.shape()))?;
        }
        Op::MatMul(a, b) => {
            push(a, &|| g.matmul(&b.transpose()?))?;
            push(b, &|| a.transpose()?.matmul(g))?;
        }
        Op::Transpose(a) => push(a, &|| g.transpose())?,
        Op::Neg(a) => push(a, &|| Ok(g.neg()))?,
        Op::Scale(a, c) => push(a, &|| Ok(g.scale(*c)))?,
        Op::Square(a) => push(a, &|| Ok(g.mul(a)?.scale(2.0)))?,
        Op::Relu(a) => push(a, &|| {
            let mask = a.value().map(|v| if v > 0.0 { 1.0 } else { 0.0 });
            g.mul(&Expr::constant(mask))
        })?,
        Op::Tanh(a) => push(a, &|| g.mul(&node.square().rsub_scalar(1.0)))?,
        Op::Sigmoid(a) => push(a, &|| g.mul(&node.mul(&node.rsub_scalar(1.0))?))?,
        Op::Softmax(a, axis) => push(a, &|| {
            let dot = g.mul(node)?.sum_axis(*axis, true)?;
            node.mul(&g.sub(&dot)?)
        })?,
        Op::SumAll(a) => push(a, &|| g.broadcast_to(a.shape()))?,
        Op::SumAxis(a, axis, keepdim) => push(a, &|| {
            let kept = if *keepdim {
                g.clone()
            } else {
                let mut shape = a.shape().to_vec();
                shape[*axis] = 1;
                g.reshape(&shape)?
            };
            kept.broadcast_to(a.shape())
        })?,
        Op::BroadcastTo(a) => push(a, &|| g.sum_to(a.shape()))?,
        Op::SumTo(a) => push(a, &|| g.broadcast_to(a.shape()))?,
        Op::Reshape(a) => push(a, &|| g.reshape(a.shape()))?,
        Op::Concat(parts, axis) => {
            let mut offset = 0;
            for p in parts {
                let len = p.shape()[*axis];
                let start = offset;
                push(p, &|| g.slice(*axis, start, len))?;
                offset += len;
            }
        }
        Op::Slice(a, axis, start) => push(a, &|| g.pad(*axis, *start, a.shape()[*axis]))?,
        Op::Pad(a, axis, start) => push(a, &|| g.slice(*axis, *start, a.shape()[*axis]))?,
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(x: f64) -> Expr {
        Expr::variable(Tensor::scalar(x))
    }

    fn val(e: &Expr) -> f64 {
        e.value().item().unwrap()
    }

    #[test]
    fn power_rule() {
        let w = var(3.0);
        let g = gradient(&w.mul(&w).unwrap(), core::slice::from_ref(&w)).unwrap();
        assert_eq!(val(&g[0]), 6.0);
    }

    #[test]
    fn product_leaf() {
        let a = var(2.0);
        let b = var(5.0);
        let g = gradient(&a.mul(&b).unwrap(), core::slice::from_ref(&a)).unwrap();
        assert_eq!(val(&g[0]), 5.0);
    }

    #[test]
    fn second_order_of_cube() {
        let w = var(2.0);
        let cube = w.square().mul(&w).unwrap();
        let first = gradient(&cube, core::slice::from_ref(&w)).unwrap();
        assert_eq!(val(&first[0]), 12.0);
        let second = gradient(&first[0], core::slice::from_ref(&w)).unwrap();
        assert_eq!(val(&second[0]), 12.0);
    }

    #[test]
    fn detach_blocks_gradient() {
        let w = var(3.0);
        let g = gradient(&w.square().detach(), core::slice::from_ref(&w)).unwrap();
        assert_eq!(val(&g[0]), 0.0);
        let h = gradient(&w.mul(&w.detach()).unwrap(), core::slice::from_ref(&w)).unwrap();
        assert_eq!(val(&h[0]), 3.0);
    }

    #[test]
    fn relu_derivative_at_zero_is_zero() {
        let w = var(0.0);
        let g = gradient(&w.relu(), core::slice::from_ref(&w)).unwrap();
        assert_eq!(val(&g[0]), 0.0);
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let w = Expr::variable(Tensor::vector(vec![1.0, 2.0]));
        assert_eq!(
            gradient(&w, core::slice::from_ref(&w)).unwrap_err(),
            Error::NonScalar(vec![2])
        );
    }

    #[test]
    fn unreachable_target_gets_zero() {
        let w = var(1.0);
        let u = Expr::variable(Tensor::vector(vec![1.0, 2.0]));
        let g = gradient(&w.square(), core::slice::from_ref(&u)).unwrap();
        assert_eq!(g[0].value(), &Tensor::zeros(&[2]));
    }

    #[test]
    fn gradient_with_respect_to_intermediate_node() {
        let w = var(1.5);
        let mid = w.scale(2.0);
        let out = mid.square();
        let g = gradient(&out, &[mid.clone(), w.clone()]).unwrap();
        assert_eq!(val(&g[0]), 6.0);
        assert_eq!(val(&g[1]), 12.0);
    }

    #[test]
    fn broadcast_gradients_reduce_back() {
        let x = Expr::constant(Tensor::matrix(2, 2, vec![1., 2., 3., 4.]));
        let b = Expr::variable(Tensor::vector(vec![0.5, -0.5]));
        let out = x.add(&b).unwrap().square().sum();
        let g = gradient(&out, core::slice::from_ref(&b)).unwrap();
        // d/db_j sum_i (x_ij + b_j)^2 = 2 sum_i (x_ij + b_j)
        assert_eq!(g[0].value().data(), &[2.0 * (1.5 + 3.5), 2.0 * (1.5 + 3.5)]);
    }
}
