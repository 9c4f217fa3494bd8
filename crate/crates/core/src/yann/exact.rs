use super::network::{Activation, Affine, Network, NetworkBuilder};
use crate::error::{Error, Result};
use crate::mpqp::{FacetRole, PwaFunction};
use crate::numerics::{lp_solve, Matrix, Polytope, SolveStatus};

/// Bias shift applied to indicator rows; region rows are unit-normalized so
/// this is a distance.
pub const FACET_EPS: f64 = 1e-9;

/// Appends layers 1–3: one step indicator per half-space row, a per-region
/// row count, and a threshold at `q_i − ½`. Returns the id of the
/// `p`-vector of region binaries.
///
/// Shared rows are shifted by `+ε` on the owning side and written as the
/// exact negation on the yielding side, so the two indicators are
/// complementary bit for bit and the tie moves off the facet into the
/// yielding region. Unshared rows get `+ε` so boundary points count as
/// inside, matching point-location tolerance.
pub(crate) fn append_indicator_stack(
    b: &mut NetworkBuilder,
    input: usize,
    pwa: &PwaFunction,
) -> Result<usize> {
    let n = pwa.n_theta();
    let q = pwa.total_rows();
    let p = pwa.len();
    if p == 0 {
        return Err(Error::Construction("PWA function has no regions".into()));
    }
    let mut w1 = Matrix::zeros(q, n);
    let mut b1 = vec![0.0; q];
    let mut w2 = Matrix::zeros(p, q);
    let mut row = 0;
    for (i, reg) in pwa.regions.iter().enumerate() {
        for k in 0..reg.poly.len() {
            let (a, g) = reg.poly.row(k);
            for j in 0..n {
                w1[(row, j)] = -a[j];
            }
            b1[row] = match reg.facets[k] {
                FacetRole::Owner | FacetRole::Boundary => g + FACET_EPS,
                FacetRole::Yields => -((-g) + FACET_EPS),
            };
            w2[(i, row)] = 1.0;
            row += 1;
        }
    }
    let l1 = b.affine(
        "indicator.rows",
        input,
        Affine::frozen(w1, Some(b1), Activation::Step),
    )?;
    let l2 = b.affine(
        "indicator.count",
        l1,
        Affine::frozen(w2, Some(vec![0.0; p]), Activation::Identity),
    )?;
    let b3: Vec<f64> = pwa
        .regions
        .iter()
        .map(|r| -(r.poly.len() as f64 - 0.5))
        .collect();
    b.affine(
        "indicator.region",
        l2,
        Affine::frozen(Matrix::identity(p), Some(b3), Activation::Step),
    )
}

/// `max |K_i θ + r_i|` over `poly`, per output.
pub fn law_bound_over(k: &Matrix, r: &[f64], poly: &Polytope) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(r.len());
    for j in 0..r.len() {
        let row = k.row(j);
        let mut best = 0.0f64;
        for sign in [1.0, -1.0] {
            let c: Vec<f64> = row.iter().map(|v| -sign * v).collect();
            let s = lp_solve(&c, poly)?;
            match s.status {
                SolveStatus::Optimal => {
                    let v: f64 = row.iter().zip(&s.x).map(|(a, b)| a * b).sum::<f64>() + r[j];
                    best = best.max(v.abs());
                }
                SolveStatus::Unbounded => {
                    return Err(Error::Construction(
                        "control law is unbounded over the domain".into(),
                    ))
                }
                SolveStatus::Infeasible => return Err(Error::EmptyPolytope),
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// Per output channel: `10 × (max_i max_domain |K_iθ + r_i| + input bound)`.
pub fn big_m(pwa: &PwaFunction, input_bound: Option<&[f64]>) -> Result<Vec<f64>> {
    let m = pwa.n_u_applied;
    let mut worst = vec![0.0f64; m];
    for reg in &pwa.regions {
        let b = law_bound_over(&reg.k, &reg.r, &pwa.domain)?;
        for j in 0..m {
            worst[j] = worst[j].max(b[j]);
        }
    }
    if let Some(u) = input_bound {
        if u.len() != m {
            return Err(Error::arg("input bound has the wrong length"));
        }
        worst.iter_mut().zip(u).for_each(|(w, u)| *w += u.abs());
    }
    Ok(worst.into_iter().map(|w| 10.0 * w.max(1.0)).collect())
}

/// Weights of the gated evaluation: for region `i` and output `j`, units
/// `relu(v + M_j b_i − M_j)` and `relu(−v + M_j b_i − M_j)`, with unit
/// index `2(i m + j)` and `2(i m + j) + 1`.
pub(crate) fn gate_rows(
    p: usize,
    m: usize,
    bigm: &[f64],
) -> (Vec<(usize, usize, f64, f64)>, Matrix) {
    // (unit, region, sign, M) and the ±1 addition matrix
    let mut units = Vec::with_capacity(2 * p * m);
    let mut add = Matrix::zeros(m, 2 * p * m);
    for i in 0..p {
        for j in 0..m {
            let u = 2 * (i * m + j);
            units.push((u, i, 1.0, bigm[j]));
            units.push((u + 1, i, -1.0, bigm[j]));
            add[(j, u)] = 1.0;
            add[(j, u + 1)] = -1.0;
        }
    }
    (units, add)
}

pub fn build_exact_yann(pwa: &PwaFunction) -> Result<Network> {
    build_exact_yann_with(pwa, None)
}

/// Five-layer network equal to `evaluate_pwa` on the domain.
pub fn build_exact_yann_with(pwa: &PwaFunction, input_bound: Option<&[f64]>) -> Result<Network> {
    let n = pwa.n_theta();
    let m = pwa.n_u_applied;
    let p = pwa.len();
    let mut b = NetworkBuilder::new(n);
    let bin = append_indicator_stack(&mut b, 0, pwa)?;
    let cat = b.push("gate.input", vec![0, bin], super::network::Op::Concat)?;
    let bigm = big_m(pwa, input_bound)?;
    let (units, add) = gate_rows(p, m, &bigm);
    let mut w4 = Matrix::zeros(2 * p * m, n + p);
    let mut b4 = vec![0.0; 2 * p * m];
    for &(u, i, sign, mj) in &units {
        let j = (u / 2) % m;
        let reg = &pwa.regions[i];
        for c in 0..n {
            w4[(u, c)] = sign * reg.k[(j, c)];
        }
        w4[(u, n + i)] = mj;
        b4[u] = sign * reg.r[j] - mj;
    }
    let l4 = b.affine(
        "gate.bound",
        cat,
        Affine::frozen(w4, Some(b4), Activation::Relu),
    )?;
    let l5 = b.affine(
        "gate.sum",
        l4,
        Affine::frozen(add, Some(vec![0.0; m]), Activation::Identity),
    )?;
    b.finish(l5)
}

/// Region binaries of an exact YANN or YANN-actor at `theta`.
pub fn region_binaries(net: &Network, theta: &[f64]) -> Result<Vec<f64>> {
    let k = net
        .nodes
        .iter()
        .position(|n| n.label == "indicator.region")
        .ok_or_else(|| Error::arg("network has no indicator stack"))?;
    Ok(net.activations(theta)?.swap_remove(k + 1))
}
