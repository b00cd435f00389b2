use modalmeta_core::diff::{gradient, mse, Expr, GradCheck, ParamSet, TensorSet};
use modalmeta_core::rng::{stream, Domain};
use modalmeta_core::Tensor;
use proptest::prelude::*;
use rand::Rng;

fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

/// 3 -> 3 -> 2 network: 9 + 3 + 6 + 2 = 20 parameters.
fn two_layer_params(seed: u64) -> TensorSet {
    let mut rng = stream(seed, Domain::Custom(10), 0);
    let mut p = TensorSet::new();
    p.insert("w1", random_tensor(&mut rng, &[3, 3], 1.0)).unwrap();
    p.insert("b1", random_tensor(&mut rng, &[3], 0.5)).unwrap();
    p.insert("w2", random_tensor(&mut rng, &[3, 2], 1.0)).unwrap();
    p.insert("b2", random_tensor(&mut rng, &[2], 0.5)).unwrap();
    p
}

fn two_layer_loss(seed: u64) -> impl Fn(&ParamSet) -> modalmeta_core::Result<Expr> {
    let mut rng = stream(seed, Domain::Custom(11), 0);
    let x = Expr::constant(random_tensor(&mut rng, &[5, 3], 2.0));
    let y = Expr::constant(random_tensor(&mut rng, &[5, 2], 2.0));
    move |p| {
        let h = x.matmul(p.require("w1")?)?.add(p.require("b1")?)?.tanh();
        let out = h.matmul(p.require("w2")?)?.add(p.require("b2")?)?;
        mse(&out, &y)
    }
}

#[test]
fn two_layer_network_matches_central_differences() {
    let params = two_layer_params(1);
    assert_eq!(params.numel(), 20);
    let report = GradCheck::new(1e-5, 1e-6)
        .unwrap()
        .run(two_layer_loss(1), &params)
        .unwrap();
    assert!(report.passed, "{report:?}");
    assert_eq!(report.entries_checked, 20);
}

#[test]
fn corrupted_gradient_is_caught() {
    let params = two_layer_params(1);
    let report = GradCheck::new(1e-5, 1e-6)
        .unwrap()
        .corrupt_analytic(1.01)
        .run(two_layer_loss(1), &params)
        .unwrap();
    assert!(!report.passed);
    assert!(report.max_rel_error > 1e-4);
}

/// A composite touching every primitive except relu (whose kink would
/// make the central difference meaningless when straddled).
fn composite(p: &ParamSet) -> modalmeta_core::Result<Expr> {
    let a = p.require("a")?; // [2, 3]
    let b = p.require("b")?; // [3]
    let c = p.require("c")?; // [3, 2]
    let joined = Expr::concat(&[a.clone(), b.reshape(&[1, 3])?], 0)?; // [3, 3]
    let s = joined.softmax(1)?.mul(&joined.sigmoid())?;
    let t = s.matmul(c)?.tanh().transpose()?; // [2, 3]
    let head = t.slice(1, 0, 2)?.sub(&a.slice(1, 1, 2)?)?; // [2, 2]
    let row = head.sum_axis(0, true)?.broadcast_to(&[3, 2])?.sum_to(&[1, 2])?;
    row.square()
        .mean()
        .add(&b.neg().scale(0.5).sum())?
        .add(&t.sum().square())
}

fn composite_params(rng: &mut impl Rng) -> TensorSet {
    let mut p = TensorSet::new();
    p.insert("a", random_tensor(rng, &[2, 3], 1.5)).unwrap();
    p.insert("b", random_tensor(rng, &[3], 1.5)).unwrap();
    p.insert("c", random_tensor(rng, &[3, 2], 1.5)).unwrap();
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn composites_match_central_differences(seed in any::<u64>()) {
        let params = composite_params(&mut stream(seed, Domain::Custom(12), 0));
        let report = GradCheck::new(1e-5, 1e-6).unwrap().run(composite, &params).unwrap();
        prop_assert!(report.passed, "{:?}", report);
    }

    #[test]
    fn squared_gradient_norm_matches_central_differences(seed in any::<u64>()) {
        // g(w) = |grad f(w)|^2 needs the second derivative of f.
        let params = two_layer_params(seed);
        let f = two_layer_loss(seed);
        let g = |p: &ParamSet| {
            let grads = gradient(&f(p)?, p.exprs())?;
            let mut total = Expr::scalar(0.0);
            for gr in &grads {
                total = total.add(&gr.square().sum())?;
            }
            Ok(total)
        };
        let report = GradCheck::new(1e-5, 1e-5).unwrap().run(g, &params).unwrap();
        prop_assert!(report.passed, "{:?}", report);
    }

    #[test]
    fn gradient_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let values = composite_params(&mut stream(seed, Domain::Custom(13), 0));
        let p = ParamSet::variables(&values);
        let f = composite(&p).unwrap();
        let g = p.require("c").unwrap().square().sum().add(&p.require("a").unwrap().tanh().sum()).unwrap();
        let combined = gradient(&f.scale(a).add(&g.scale(b)).unwrap(), p.exprs()).unwrap();
        let gf = gradient(&f, p.exprs()).unwrap();
        let gg = gradient(&g, p.exprs()).unwrap();
        for ((c, x), y) in combined.iter().zip(&gf).zip(&gg) {
            for ((&c, &x), &y) in c.value().data().iter().zip(x.value().data()).zip(y.value().data()) {
                let expected = a * x + b * y;
                prop_assert!((c - expected).abs() <= 1e-12 * expected.abs().max(1.0));
            }
        }
    }

    #[test]
    fn softmax_rows_are_distributions(
        rows in 1usize..5,
        cols in 1usize..7,
        seed in any::<u64>(),
        scale in 0.1f64..50.0,
    ) {
        let t = random_tensor(&mut stream(seed, Domain::Custom(14), 0), &[rows, cols], scale);
        for axis in 0..2 {
            let s = Expr::constant(t.clone()).softmax(axis).unwrap();
            prop_assert!(s.value().data().iter().all(|&v| v > 0.0));
            let sums = s.value().sum_axis(axis, false).unwrap();
            prop_assert!(sums.data().iter().all(|v| (v - 1.0).abs() <= 1e-12));
        }
    }
}

#[test]
fn evaluation_is_bitwise_repeatable() {
    let build = || {
        let p = ParamSet::variables(&composite_params(&mut stream(3, Domain::Custom(15), 0)));
        let out = composite(&p).unwrap();
        let grads: Vec<Tensor> = gradient(&out, p.exprs())
            .unwrap()
            .iter()
            .map(Expr::evaluate)
            .collect();
        (out.evaluate(), grads)
    };
    let (v1, g1) = build();
    let (v2, g2) = build();
    assert_eq!(v1.data()[0].to_bits(), v2.data()[0].to_bits());
    for (a, b) in g1.iter().zip(&g2) {
        assert!(a
            .data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn primitive_examples() {
    assert_eq!(Expr::scalar(0.0).tanh().value().item(), Some(0.0));
    let s = Expr::constant(Tensor::vector(vec![0.0, 0.0])).softmax(0).unwrap();
    assert_eq!(s.value().data(), &[0.5, 0.5]);
    let eye = Expr::constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
    let col = Expr::constant(Tensor::matrix(2, 1, vec![3.0, 4.0]));
    assert_eq!(eye.matmul(&col).unwrap().value().data(), &[3.0, 4.0]);
}

#[test]
fn detach_examples() {
    let w = Expr::variable(Tensor::scalar(3.0));
    let frozen = w.square().detach();
    assert_eq!(frozen.value(), w.square().value());
    assert_eq!(
        gradient(&frozen, std::slice::from_ref(&w)).unwrap()[0]
            .value()
            .item(),
        Some(0.0)
    );
    let half = w.mul(&w.detach()).unwrap();
    assert_eq!(
        gradient(&half, std::slice::from_ref(&w)).unwrap()[0]
            .value()
            .item(),
        Some(3.0)
    );
}

#[test]
fn shape_errors_name_the_operation() {
    let a = Expr::constant(Tensor::zeros(&[2, 3]));
    let b = Expr::constant(Tensor::zeros(&[2, 3]));
    let err = a.matmul(&b).unwrap_err().to_string();
    assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
    assert!(a.add(&Expr::constant(Tensor::zeros(&[2]))).is_err());
}
