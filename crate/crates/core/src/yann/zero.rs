use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Activation, Affine, Network, NetworkBuilder};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Shape and initialization of a block that outputs exactly zero until it
/// is trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroBlockSpec {
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
    pub init_scale: f64,
    pub rng_seed: u64,
}

impl ZeroBlockSpec {
    pub fn new(in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        ZeroBlockSpec {
            in_dim,
            hidden,
            out_dim,
            init_scale: 0.01,
            rng_seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::arg("zero block dimensions must be positive"));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::arg("zero block init_scale must be positive"));
        }
        Ok(())
    }

    /// Width of the hidden activation: one unit per mirrored pair, plus the
    /// zeroed spare node when `hidden` is odd.
    pub fn folded_width(&self) -> usize {
        self.hidden.div_ceil(2)
    }
}

pub fn build_zero_block(spec: &ZeroBlockSpec) -> Result<Network> {
    let mut b = NetworkBuilder::new(spec.in_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let out = append_zero_block(&mut b, 0, spec, &mut rng, "zero")?;
    b.finish(out)
}

/// Appends the block after value `input` and returns the output id.
///
/// Layer 1 has `hidden` nodes: the first half random in
/// `[−init_scale, init_scale]`, the second half their negation, and for an
/// odd count one extra node with zero weight and bias. Each mirrored pair
/// feeds one tanh unit, so the pair's contributions cancel exactly before
/// the activation and every unit starts at `tanh(0) = 0`. Layer 2 has random
/// weights and zero biases, so its output is zero as well.
pub(crate) fn append_zero_block(
    b: &mut NetworkBuilder,
    input: usize,
    spec: &ZeroBlockSpec,
    rng: &mut ChaCha8Rng,
    prefix: &str,
) -> Result<usize> {
    spec.validate()?;
    if b.dim(input) != spec.in_dim {
        return Err(Error::Construction(format!(
            "{prefix}: input has {} values, spec says {}",
            b.dim(input),
            spec.in_dim
        )));
    }
    let (n, h, s) = (spec.in_dim, spec.hidden, spec.init_scale);
    let half = h / 2;
    let mut w1 = Matrix::zeros(h, n);
    let mut b1 = vec![0.0; h];
    for i in 0..half {
        for j in 0..n {
            let v = rng.random_range(-s..=s);
            w1[(i, j)] = v;
            w1[(i + half, j)] = -v;
        }
        let v = rng.random_range(-s..=s);
        b1[i] = v;
        b1[i + half] = -v;
    }
    let l1 = b.affine(
        format!("{prefix}.l1"),
        input,
        Affine::trainable(w1, Some(b1), Activation::Identity),
    )?;

    let width = spec.folded_width();
    let mut fold = Matrix::zeros(width, h);
    for i in 0..half {
        fold[(i, i)] = 1.0;
        fold[(i, i + half)] = 1.0;
    }
    if h % 2 == 1 {
        fold[(width - 1, h - 1)] = 1.0;
    }
    let f = b.affine(
        format!("{prefix}.fold"),
        l1,
        Affine::frozen(fold, None, Activation::Tanh),
    )?;

    let mut w2 = Matrix::zeros(spec.out_dim, width);
    for v in w2.as_mut_slice() {
        *v = rng.random_range(-s..=s);
    }
    b.affine(
        format!("{prefix}.l2"),
        f,
        Affine::trainable(w2, Some(vec![0.0; spec.out_dim]), Activation::Identity),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::yann::network::Op;

    fn spec(hidden: usize) -> ZeroBlockSpec {
        ZeroBlockSpec {
            in_dim: 3,
            hidden,
            out_dim: 2,
            init_scale: 0.01,
            rng_seed: 7,
        }
    }

    #[test]
    fn output_is_zero_for_large_random_inputs() {
        let net = build_zero_block(&spec(16)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1e3..1e3)).collect();
            assert!(net.forward(&x).unwrap().iter().all(|v| v.abs() <= 1e-15));
        }
    }

    #[test]
    fn odd_hidden_has_one_zeroed_node() {
        let net = build_zero_block(&spec(5)).unwrap();
        assert!(net
            .forward(&[1.0, -2.0, 3.0])
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let Op::Affine(l1) = &net.node("zero.l1").unwrap().op else {
            panic!()
        };
        let zero_nodes = (0..5)
            .filter(|&i| {
                l1.weight.row(i).iter().all(|&v| v == 0.0) && l1.bias.as_ref().unwrap()[i] == 0.0
            })
            .count();
        assert_eq!(zero_nodes, 1);
    }

    #[test]
    fn first_step_touches_only_layer_two_bias() {
        let net = build_zero_block(&spec(6)).unwrap();
        let g = net.gradients(&[0.5, -0.2, 1.0], &[1.0, -1.0]).unwrap();
        let (gw2, gb2) = g.of(&net, "zero.l2").unwrap();
        assert!(gw2.iter().all(|&v| v == 0.0));
        assert!(gb2.iter().all(|&v| v != 0.0));
    }

    #[test]
    fn gradient_steps_break_the_mirror() {
        let mut net = build_zero_block(&spec(4)).unwrap();
        let w2_before = net.node("zero.l2").map(|n| n.op.clone()).unwrap();
        let x = [0.4, 0.3, -0.8];
        let target = [0.5, -0.25];
        for _ in 0..2 {
            let y = net.forward(&x).unwrap();
            let up: Vec<f64> = y.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            let g = net.gradients(&x, &up).unwrap().flatten(&net);
            let p: Vec<f64> = net
                .trainable_params()
                .iter()
                .zip(&g)
                .map(|(p, g)| p - 0.1 * g)
                .collect();
            net.set_trainable_params(&p).unwrap();
        }
        let Op::Affine(l1) = &net.node("zero.l1").unwrap().op else {
            panic!()
        };
        let mirrored = (0..2).all(|i| (0..3).all(|j| l1.weight[(i, j)] == -l1.weight[(i + 2, j)]));
        assert!(!mirrored);
        assert_ne!(&net.node("zero.l2").unwrap().op, &w2_before);
    }

    #[test]
    fn rejects_bad_spec() {
        let mut s = spec(4);
        s.init_scale = 0.0;
        assert!(build_zero_block(&s).is_err());
        assert!(build_zero_block(&spec(0)).is_err());
    }
}
