//! Task embedding (bidirectional GRU over the support pairs) and the
//! per-block modulation generator.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::learner::{glorot, uniform, BlockModulation, ModulationParams};
use super::{Architecture, ModulationKind};
use crate::diff::{Expr, ParamSet, TensorSet};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const DIRECTIONS: [&str; 2] = ["fwd", "bwd"];

fn gru_name(dir: &str, part: &str) -> String {
    format!("encoder.{dir}.{part}")
}

fn gen_name(block: usize, part: &str) -> String {
    format!("modulator{block}.{part}")
}

/// Recurrent weights of one direction. Gates are packed in `z, r, n` order:
/// `w_x` is `[2, 3H]`, `u_zr` is `[H, 2H]`, `u_n` is `[H, H]`, `bias` is `[3H]`.
#[derive(Debug, Clone)]
pub struct GruDirection {
    pub w_x: Expr,
    pub u_zr: Expr,
    pub u_n: Expr,
    pub bias: Expr,
}

#[derive(Debug, Clone)]
pub struct GeneratorBlock {
    pub hidden_weight: Expr,
    pub hidden_bias: Expr,
    pub out_weight: Expr,
    pub out_bias: Expr,
}

/// The model-based meta-learner: embedding network plus modulation
/// generator, bound into a graph.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub forward: GruDirection,
    pub backward: GruDirection,
    pub generator: Vec<GeneratorBlock>,
    hidden: usize,
}

/// GRU weights uniform in `±1/sqrt(H)` with zero biases; generator hidden
/// layers Glorot-uniform; generator output layers all zero, so a fresh
/// FiLM generator emits the identity modulation.
pub fn init_encoder<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<TensorSet> {
    arch.validate()?;
    let h = arch.hidden_size;
    let limit = 1.0 / libm::sqrt(h as f64);
    let mut set = TensorSet::new();
    for dir in DIRECTIONS {
        set.insert(gru_name(dir, "w_x"), uniform(&[2, 3 * h], limit, rng))?;
        set.insert(gru_name(dir, "u_zr"), uniform(&[h, 2 * h], limit, rng))?;
        set.insert(gru_name(dir, "u_n"), uniform(&[h, h], limit, rng))?;
        set.insert(gru_name(dir, "bias"), Tensor::zeros(&[3 * h]))?;
    }
    let per_unit = arch.modulation.vectors_per_unit();
    if per_unit > 0 {
        let g = arch.generator_hidden;
        for (i, &w) in arch.block_widths().iter().enumerate() {
            set.insert(gen_name(i, "hidden.weight"), glorot(2 * h, g, rng))?;
            set.insert(gen_name(i, "hidden.bias"), Tensor::zeros(&[g]))?;
            set.insert(gen_name(i, "out.weight"), Tensor::zeros(&[g, per_unit * w]))?;
            set.insert(gen_name(i, "out.bias"), Tensor::zeros(&[per_unit * w]))?;
        }
    }
    Ok(set)
}

impl EncoderParams {
    pub fn bind(set: &ParamSet, arch: &Architecture) -> Result<EncoderParams> {
        let h = arch.hidden_size;
        let direction = |dir: &str| -> Result<GruDirection> {
            let get = |part: &str, shape: &[usize]| -> Result<Expr> {
                let e = set.require(&gru_name(dir, part))?;
                if e.shape() != shape {
                    return Err(Error::shapes("encoder weight", shape, e.shape()));
                }
                Ok(e.clone())
            };
            Ok(GruDirection {
                w_x: get("w_x", &[2, 3 * h])?,
                u_zr: get("u_zr", &[h, 2 * h])?,
                u_n: get("u_n", &[h, h])?,
                bias: get("bias", &[3 * h])?,
            })
        };
        let per_unit = arch.modulation.vectors_per_unit();
        let mut generator = Vec::new();
        if per_unit > 0 {
            let g = arch.generator_hidden;
            for (i, &w) in arch.block_widths().iter().enumerate() {
                let get = |part: &str, shape: &[usize]| -> Result<Expr> {
                    let e = set.require(&gen_name(i, part))?;
                    if e.shape() != shape {
                        return Err(Error::shapes("generator weight", shape, e.shape()));
                    }
                    Ok(e.clone())
                };
                generator.push(GeneratorBlock {
                    hidden_weight: get("hidden.weight", &[2 * h, g])?,
                    hidden_bias: get("hidden.bias", &[g])?,
                    out_weight: get("out.weight", &[g, per_unit * w])?,
                    out_bias: get("out.bias", &[per_unit * w])?,
                });
            }
        }
        Ok(EncoderParams {
            forward: direction(DIRECTIONS[0])?,
            backward: direction(DIRECTIONS[1])?,
            generator,
            hidden: h,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn embedding_dim(&self) -> usize {
        2 * self.hidden
    }
}

// h' = (1 - z) * h + z * n, with z, r = sigmoid(x W + h U + b) and
// n = tanh(x W_n + (r * h) U_n + b_n).
fn run_direction(
    dir: &GruDirection,
    inputs: &Expr,
    order: impl Iterator<Item = usize>,
    h: usize,
) -> Result<Expr> {
    let projected = inputs.matmul(&dir.w_x)?.add(&dir.bias)?;
    let mut state = Expr::constant(Tensor::zeros(&[1, h]));
    for t in order {
        let xt = projected.slice(0, t, 1)?;
        let zr = xt.slice(1, 0, 2 * h)?.add(&state.matmul(&dir.u_zr)?)?.sigmoid();
        let z = zr.slice(1, 0, h)?;
        let r = zr.slice(1, h, h)?;
        let n = xt
            .slice(1, 2 * h, h)?
            .add(&r.mul(&state)?.matmul(&dir.u_n)?)?
            .tanh();
        state = state.add(&z.mul(&n.sub(&state)?)?)?;
    }
    Ok(state)
}

/// Embeds a `[K, 2]` support set of `(x, y)` rows as the concatenation of
/// the forward and backward final hidden states, shape `[1, 2H]`.
pub fn encode_task(enc: &EncoderParams, support: &Tensor) -> Result<Expr> {
    let k = match support.shape() {
        &[k, 2] => k,
        s => return Err(Error::shapes("encode_task", s, &[0, 2])),
    };
    if k == 0 {
        return Err(Error::invalid("encode_task", "empty support set"));
    }
    let inputs = Expr::constant(support.clone());
    let fwd = run_direction(&enc.forward, &inputs, 0..k, enc.hidden)?;
    let bwd = run_direction(&enc.backward, &inputs, (0..k).rev(), enc.hidden)?;
    Expr::concat(&[fwd, bwd], 1)
}

/// Maps the task embedding to one modulation per learner block through a
/// one-hidden-layer ReLU network per block.
pub fn generate_modulation(
    enc: &EncoderParams,
    embedding: &Expr,
    kind: ModulationKind,
) -> Result<ModulationParams> {
    if kind == ModulationKind::None {
        return Ok(ModulationParams::none());
    }
    if enc.generator.is_empty() {
        return Err(Error::invalid(
            "generate_modulation",
            format!("encoder has no modulation generator for {}", kind.name()),
        ));
    }
    let per_unit = kind.vectors_per_unit();
    let mut blocks = Vec::with_capacity(enc.generator.len());
    for g in &enc.generator {
        let hidden = embedding.matmul(&g.hidden_weight)?.add(&g.hidden_bias)?.relu();
        let raw = hidden.matmul(&g.out_weight)?.add(&g.out_bias)?;
        let total = raw.shape()[1];
        if total % per_unit != 0 {
            return Err(Error::invalid(
                "generate_modulation",
                format!(
                    "generator emits {total} values, not a multiple of {per_unit} for {}",
                    kind.name()
                ),
            ));
        }
        let w = total / per_unit;
        blocks.push(match kind {
            ModulationKind::Film => BlockModulation::Film {
                gamma: raw.slice(1, 0, w)?.add_scalar(1.0),
                beta: raw.slice(1, w, w)?,
            },
            ModulationKind::Sigmoid => BlockModulation::Gate(raw.sigmoid()),
            ModulationKind::Softmax => BlockModulation::Gate(raw.softmax(1)?),
            ModulationKind::None => unreachable!(),
        });
    }
    Ok(ModulationParams { kind, blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use alloc::vec;

    fn arch(kind: ModulationKind, h: usize) -> Architecture {
        Architecture {
            widths: vec![1, 8, 8, 1],
            hidden_size: h,
            generator_hidden: 6,
            modulation: kind,
        }
    }

    fn support() -> Tensor {
        Tensor::matrix(3, 2, vec![-1.0, 0.5, 0.25, 2.0, 3.0, -1.5])
    }

    fn randomized(a: &Architecture, seed: u64) -> TensorSet {
        let mut set = init_encoder(a, &mut stream(seed, Domain::Custom(2), 0)).unwrap();
        let mut rng = stream(seed, Domain::Custom(3), 0);
        for (_, t) in set.iter_mut() {
            for v in t.data_mut() {
                *v = rng.random::<f64>() - 0.5;
            }
        }
        set
    }

    #[test]
    fn zero_weights_give_zero_embedding() {
        let a = arch(ModulationKind::Film, 4);
        let set = init_encoder(&a, &mut stream(0, Domain::Custom(0), 0))
            .unwrap()
            .zeros_like();
        let enc = EncoderParams::bind(&ParamSet::constants(&set), &a).unwrap();
        let u = encode_task(&enc, &support()).unwrap();
        assert_eq!(u.shape(), &[1, 8]);
        assert!(u.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embedding_dimension_is_twice_hidden() {
        let a = arch(ModulationKind::Film, 40);
        let set = init_encoder(&a, &mut stream(1, Domain::Custom(0), 0)).unwrap();
        let enc = EncoderParams::bind(&ParamSet::constants(&set), &a).unwrap();
        let u = encode_task(&enc, &support()).unwrap();
        assert_eq!(u.shape(), &[1, 80]);
        let again = encode_task(&enc, &support()).unwrap();
        assert_eq!(u.value(), again.value());
    }

    #[test]
    fn empty_support_is_rejected() {
        let a = arch(ModulationKind::Film, 4);
        let set = init_encoder(&a, &mut stream(1, Domain::Custom(0), 0)).unwrap();
        let enc = EncoderParams::bind(&ParamSet::constants(&set), &a).unwrap();
        let empty = Tensor::new(vec![0, 2], vec![]).unwrap();
        assert!(encode_task(&enc, &empty).is_err());
    }

    #[test]
    fn fresh_film_generator_is_identity() {
        let a = arch(ModulationKind::Film, 4);
        let set = init_encoder(&a, &mut stream(1, Domain::Custom(0), 0)).unwrap();
        let enc = EncoderParams::bind(&ParamSet::constants(&set), &a).unwrap();
        let u = encode_task(&enc, &support()).unwrap();
        let tau = generate_modulation(&enc, &u, ModulationKind::Film).unwrap();
        assert_eq!(tau.blocks.len(), 3);
        for b in &tau.blocks {
            let BlockModulation::Film { gamma, beta } = b else {
                panic!()
            };
            assert!(gamma.value().data().iter().all(|&v| v == 1.0));
            assert!(beta.value().data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn gates_are_normalized() {
        for kind in [ModulationKind::Sigmoid, ModulationKind::Softmax] {
            let a = arch(kind, 4);
            let enc = EncoderParams::bind(&ParamSet::constants(&randomized(&a, 4)), &a).unwrap();
            let u = encode_task(&enc, &support()).unwrap();
            let tau = generate_modulation(&enc, &u, kind).unwrap();
            assert_eq!(tau.blocks.len(), 3);
            for b in &tau.blocks {
                let BlockModulation::Gate(g) = b else { panic!() };
                let d = g.value().data();
                if kind == ModulationKind::Softmax {
                    assert!(d.iter().all(|&v| v > 0.0));
                    let s: f64 = d.iter().sum();
                    assert!((s - 1.0).abs() <= 1e-12);
                } else {
                    assert!(d.iter().all(|&v| v > 0.0 && v < 1.0));
                }
            }
        }
    }

    #[test]
    fn none_kind_emits_nothing() {
        let a = arch(ModulationKind::None, 4);
        let set = init_encoder(&a, &mut stream(1, Domain::Custom(0), 0)).unwrap();
        assert_eq!(set.len(), 8);
        let enc = EncoderParams::bind(&ParamSet::constants(&set), &a).unwrap();
        let u = encode_task(&enc, &support()).unwrap();
        assert!(generate_modulation(&enc, &u, ModulationKind::None)
            .unwrap()
            .blocks
            .is_empty());
    }
}
