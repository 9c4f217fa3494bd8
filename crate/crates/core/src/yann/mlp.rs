use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::{Activation, Affine, Network, NetworkBuilder};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Dense network `in → hidden… → out` with fan-in uniform initialization
/// (last layer in `±3e-3`), as used by the DDPG baseline. With
/// `output_scale`, the output is `scale ⊙ tanh(·)`.
pub fn build_mlp(
    in_dim: usize,
    hidden: &[usize],
    out_dim: usize,
    hidden_act: Activation,
    output_scale: Option<&[f64]>,
    seed: u64,
) -> Result<Network> {
    if in_dim == 0 || out_dim == 0 || hidden.contains(&0) {
        return Err(Error::arg("layer widths must be positive"));
    }
    if hidden_act == Activation::Step {
        return Err(Error::arg("step activation is not trainable"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = NetworkBuilder::new(in_dim);
    let mut id = 0;
    let mut prev = in_dim;
    let widths: Vec<usize> = hidden
        .iter()
        .copied()
        .chain(std::iter::once(out_dim))
        .collect();
    for (k, &w) in widths.iter().enumerate() {
        let last = k + 1 == widths.len();
        let lim = if last {
            3e-3
        } else {
            1.0 / (prev as f64).sqrt()
        };
        let mut wm = Matrix::zeros(w, prev);
        for v in wm.as_mut_slice() {
            *v = rng.random_range(-lim..=lim);
        }
        let bias: Vec<f64> = (0..w).map(|_| rng.random_range(-lim..=lim)).collect();
        let act = match (last, output_scale) {
            (false, _) => hidden_act,
            (true, Some(_)) => Activation::Tanh,
            (true, None) => Activation::Identity,
        };
        id = b.affine(
            format!("dense{k}"),
            id,
            Affine::trainable(wm, Some(bias), act),
        )?;
        prev = w;
    }
    if let Some(s) = output_scale {
        if s.len() != out_dim {
            return Err(Error::arg("output scale has the wrong length"));
        }
        id = b.affine(
            "scale",
            id,
            Affine::frozen(Matrix::diag(s), None, Activation::Identity),
        )?;
    }
    b.finish(id)
}
