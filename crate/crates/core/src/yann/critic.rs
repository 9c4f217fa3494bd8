use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{Activation, Affine, Network, NetworkBuilder, Op};
use super::zero::{append_zero_block, ZeroBlockSpec};
use crate::error::{Error, Result};
use crate::linctl::LinearSystem;
use crate::numerics::Matrix;

/// Coefficients of `Q(s,u) = zᵀ C z`, `z = (s,u)`, for the discounted
/// linear-quadratic problem with terminal weight `P`:
/// `C = [[Qw + γAᵀPA, 2γAᵀPB], [0, R + γBᵀPB]]`.
pub fn quadratic_q_matrix(
    sys: &LinearSystem,
    qw: &Matrix,
    r: &Matrix,
    p: &Matrix,
    gamma: f64,
) -> Result<Matrix> {
    let n = sys.state_dim();
    let m = sys.input_dim();
    if qw.shape() != (n, n) || r.shape() != (m, m) || p.shape() != (n, n) {
        return Err(Error::arg("critic weights do not match the system"));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::arg("discount factor must be in (0, 1]"));
    }
    let at = sys.a.transpose();
    let bt = sys.b.transpose();
    let ss = qw + &at.matmul(p)?.matmul(&sys.a)?.scale(gamma);
    let su = at.matmul(p)?.matmul(&sys.b)?.scale(2.0 * gamma);
    let uu = r + &bt.matmul(p)?.matmul(&sys.b)?.scale(gamma);
    let mut c = Matrix::zeros(n + m, n + m);
    c.set_block(0, 0, &ss);
    c.set_block(0, n, &su);
    c.set_block(n, n, &uu);
    Ok(c)
}

/// Input `(s, u)`; output the exact linear-quadratic Q-value plus a
/// zero-initialized correction.
pub fn build_yann_critic(
    sys: &LinearSystem,
    qw: &Matrix,
    r: &Matrix,
    p: &Matrix,
    gamma: f64,
    spec: &ZeroBlockSpec,
) -> Result<Network> {
    build_yann_critic_scaled(sys, qw, r, p, gamma, spec, None)
}

/// Same, with an optional frozen per-coordinate scaling of `(s, u)` in
/// front of the correction block only.
pub fn build_yann_critic_scaled(
    sys: &LinearSystem,
    qw: &Matrix,
    r: &Matrix,
    p: &Matrix,
    gamma: f64,
    spec: &ZeroBlockSpec,
    input_scale: Option<&[f64]>,
) -> Result<Network> {
    let c = quadratic_q_matrix(sys, qw, r, p, gamma)?;
    let d = c.rows();
    if spec.in_dim != d || spec.out_dim != 1 {
        return Err(Error::arg("critic zero block must map (s,u) to one value"));
    }
    let mut b = NetworkBuilder::new(d);
    let cz = b.affine(
        "quad.coeff",
        0,
        Affine::trainable(c, None, Activation::Identity),
    )?;
    let terms = b.push("quad.terms", vec![0, cz], Op::Product)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let zin = match input_scale {
        Some(w) if w.len() != d => {
            return Err(Error::arg(
                "critic input scale must have one entry per input",
            ))
        }
        Some(w) => b.affine(
            "zero.scale",
            0,
            Affine::frozen(Matrix::diag(w), None, Activation::Identity),
        )?,
        None => 0,
    };
    let zb = append_zero_block(&mut b, zin, spec, &mut rng, "zero")?;
    let cat = b.push("terms", vec![terms, zb], Op::Concat)?;
    let ones = Matrix::from_vec(1, d + 1, vec![1.0; d + 1])?;
    let out = b.affine("sum", cat, Affine::frozen(ones, None, Activation::Identity))?;
    b.finish(out)
}
