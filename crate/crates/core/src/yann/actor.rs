use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::exact::{append_indicator_stack, big_m, gate_rows};
use super::network::{Activation, Affine, Network, NetworkBuilder, Op};
use super::zero::{append_zero_block, ZeroBlockSpec};
use crate::error::{Error, Result};
use crate::mpqp::PwaFunction;
use crate::numerics::{Matrix, Polytope};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorOptions {
    /// Hidden nodes of each region's zero block.
    pub hidden: usize,
    pub init_scale: f64,
    pub seed: u64,
    /// Let training adjust the embedded linear laws too.
    pub train_linear_laws: bool,
}

impl Default for ActorOptions {
    fn default() -> Self {
        ActorOptions {
            hidden: 16,
            init_scale: 0.01,
            seed: 0,
            train_linear_laws: false,
        }
    }
}

pub fn zero_block_label(region: usize) -> String {
    format!("zero[{region}]")
}

/// Exact YANN plus one trainable zero block per region, combined by a
/// suppression layer so only the active region's law and block reach the
/// output.
pub fn build_yann_actor(
    pwa: &PwaFunction,
    spec: &ZeroBlockSpec,
    u_bounds: &Polytope,
) -> Result<Network> {
    let opts = ActorOptions {
        hidden: spec.hidden,
        init_scale: spec.init_scale,
        seed: spec.rng_seed,
        ..Default::default()
    };
    build_yann_actor_with(pwa, &opts, u_bounds)
}

pub fn build_yann_actor_with(
    pwa: &PwaFunction,
    opts: &ActorOptions,
    u_bounds: &Polytope,
) -> Result<Network> {
    let n = pwa.n_theta();
    let m = pwa.n_u_applied;
    let p = pwa.len();
    if u_bounds.dim() != m {
        return Err(Error::arg(
            "input bounds do not match the law's output dimension",
        ));
    }
    let (lo, hi) = u_bounds.bounding_box()?;
    let ub: Vec<f64> = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| l.abs().max(h.abs()))
        .collect();

    let mut b = NetworkBuilder::new(n);
    let bin = append_indicator_stack(&mut b, 0, pwa)?;

    let mut wl = Matrix::zeros(p * m, n);
    let mut bl = vec![0.0; p * m];
    for (i, reg) in pwa.regions.iter().enumerate() {
        for j in 0..m {
            wl.row_mut(i * m + j).copy_from_slice(reg.k.row(j));
            bl[i * m + j] = reg.r[j];
        }
    }
    let mut laws = Affine::frozen(wl, Some(bl), Activation::Identity);
    laws.set_trainable(opts.train_linear_laws);
    let laws = b.affine("laws", 0, laws)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let zspec = ZeroBlockSpec {
        in_dim: n,
        hidden: opts.hidden,
        out_dim: m,
        init_scale: opts.init_scale,
        rng_seed: opts.seed,
    };
    let mut parts = vec![bin, laws];
    for i in 0..p {
        parts.push(append_zero_block(
            &mut b,
            0,
            &zspec,
            &mut rng,
            &zero_block_label(i),
        )?);
    }
    let x4 = b.push("x4", parts, Op::Concat)?;

    // X4 = [b (p) | laws (p m) | zero blocks (p m)]
    let bigm = big_m(pwa, Some(&ub))?;
    let (units, add) = gate_rows(p, m, &bigm);
    let mut ws = Matrix::zeros(2 * p * m, p + 2 * p * m);
    let mut bs = vec![0.0; 2 * p * m];
    for &(u, i, sign, mj) in &units {
        let j = (u / 2) % m;
        ws[(u, i)] = mj;
        ws[(u, p + i * m + j)] = sign;
        ws[(u, p + p * m + i * m + j)] = sign;
        bs[u] = -mj;
    }
    let sup = b.affine(
        "suppress",
        x4,
        Affine::frozen(ws, Some(bs), Activation::Relu),
    )?;
    let out = b.affine(
        "add",
        sup,
        Affine::frozen(add, Some(vec![0.0; m]), Activation::Identity),
    )?;
    b.finish(out)
}

/// Smallest `M_j/2 − |v_ij|` over the suppression units at `theta`;
/// negative means a trained block has grown past the gate's safe range.
pub fn suppression_headroom(net: &Network, theta: &[f64]) -> Result<f64> {
    let k = net
        .nodes
        .iter()
        .position(|n| n.label == "suppress")
        .ok_or_else(|| Error::arg("not a YANN-actor"))?;
    let Op::Affine(a) = &net.nodes[k].op else {
        unreachable!()
    };
    let acts = net.activations(theta)?;
    let x4 = &acts[net.nodes[k].inputs[0]];
    let p = net.node("indicator.region").and_then(|n| match &n.op {
        Op::Affine(a) => Some(a.out_dim()),
        _ => None,
    });
    let p = p.ok_or_else(|| Error::arg("not a YANN-actor"))?;
    let mut worst = f64::INFINITY;
    for u in 0..a.out_dim() {
        let row = a.weight.row(u);
        let mj = -a.bias.as_ref().expect("suppression bias")[u];
        // the first p columns are the gate term M b
        let v: f64 = row[p..].iter().zip(&x4[p..]).map(|(w, x)| w * x).sum();
        worst = worst.min(mj / 2.0 - v.abs());
    }
    Ok(worst)
}
