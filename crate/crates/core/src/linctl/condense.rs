use serde::{Deserialize, Serialize};

use super::{MpcProblem, TerminalConstraint};
use crate::error::{Error, Result};
use crate::numerics::{dot, qp_solve_warm, Matrix, Polytope, QpSolution, Tolerances};

/// `J*(θ) = min_u uᵀHu + uᵀZθ + θᵀM̂θ  s.t.  G u ≤ S θ + W,  CR_A θ ≤ CR_b`.
///
/// `u` stacks the `N` control moves; the first `n_first` entries are the
/// move applied in closed loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpQpProblem {
    #[serde(rename = "H")]
    pub h: Matrix,
    #[serde(rename = "Z")]
    pub z: Matrix,
    #[serde(rename = "Mhat")]
    pub mhat: Matrix,
    #[serde(rename = "G")]
    pub g: Matrix,
    #[serde(rename = "S")]
    pub s: Matrix,
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    #[serde(rename = "CR_A")]
    pub cr_a: Matrix,
    #[serde(rename = "CR_b")]
    pub cr_b: Vec<f64>,
    pub n_theta: usize,
    pub n_u: usize,
    pub n_first: usize,
}

impl MpQpProblem {
    pub fn n_constraints(&self) -> usize {
        self.w.len()
    }

    pub fn domain(&self) -> Polytope {
        Polytope::new(self.cr_a.clone(), self.cr_b.clone()).expect("validated at construction")
    }

    /// Constraint rows whose `G` row vanishes: they restrict `θ` only.
    pub fn parameter_only_rows(&self) -> Vec<usize> {
        (0..self.n_constraints())
            .filter(|&i| self.g.row(i).iter().all(|v| v.abs() <= 1e-13))
            .collect()
    }

    /// The QP at a fixed parameter in the form `½uᵀ(2H)u + (Zθ)ᵀu`,
    /// `G u ≤ Sθ + W`.
    pub fn qp_at(&self, theta: &[f64]) -> Result<(Matrix, Vec<f64>, Polytope)> {
        if theta.len() != self.n_theta {
            return Err(Error::arg(format!(
                "θ has length {}, expected {}",
                theta.len(),
                self.n_theta
            )));
        }
        let f = self.z.matvec(theta)?;
        let st = self.s.matvec(theta)?;
        let rhs: Vec<f64> = st.iter().zip(&self.w).map(|(a, b)| a + b).collect();
        Ok((self.h.scale(2.0), f, Polytope::new(self.g.clone(), rhs)?))
    }

    pub fn solve_at(&self, theta: &[f64]) -> Result<QpSolution> {
        self.solve_at_warm(theta, &[])
    }

    pub fn solve_at_warm(&self, theta: &[f64], guess: &[usize]) -> Result<QpSolution> {
        let (h, f, poly) = self.qp_at(theta)?;
        qp_solve_warm(&h, &f, &poly, guess, &Tolerances::default())
    }

    /// `uᵀHu + uᵀZθ + θᵀM̂θ`.
    pub fn objective(&self, u: &[f64], theta: &[f64]) -> Result<f64> {
        Ok(dot(u, &self.h.matvec(u)?)
            + dot(u, &self.z.matvec(theta)?)
            + dot(theta, &self.mhat.matvec(theta)?))
    }

    /// Optimal value `J*(θ)`, `None` where the QP is infeasible.
    pub fn optimal_value(&self, theta: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
        let sol = self.solve_at(theta)?;
        if !sol.is_optimal() {
            return Ok(None);
        }
        Ok(Some((self.objective(&sol.x, theta)?, sol.x)))
    }
}

/// Eliminates the predicted states from the MPC problem.
///
/// Identical constraint rows (for instance a terminal set equal to the path
/// constraint on the same predicted state) are kept once.
pub fn condense(mpc: &MpcProblem) -> Result<MpQpProblem> {
    let a = &mpc.sys.a;
    let b = &mpc.sys.b;
    let n = mpc.sys.state_dim();
    let m = mpc.sys.input_dim();
    let big_n = mpc.horizon;
    let nu = m * big_n;

    // phi[t] = Aᵗ, gamma[t] maps u to the forced response of s_t
    let mut phi = vec![Matrix::identity(n)];
    let mut gamma = vec![Matrix::zeros(n, nu)];
    for t in 1..=big_n {
        phi.push(a.matmul(&phi[t - 1])?);
        let mut g = a.matmul(&gamma[t - 1])?;
        let mut bu = Matrix::zeros(n, nu);
        bu.set_block(0, (t - 1) * m, b);
        g = &g + &bu;
        gamma.push(g);
    }

    let mut h = Matrix::zeros(nu, nu);
    for t in 0..big_n {
        h.set_block(t * m, t * m, &mpc.r);
    }
    let mut z = Matrix::zeros(nu, n);
    let mut mhat = mpc.qw.clone();
    for t in 1..=big_n {
        let weight = if t == big_n { &mpc.p } else { &mpc.qw };
        let gt_w = gamma[t].transpose().matmul(weight)?;
        h = &h + &gt_w.matmul(&gamma[t])?;
        z = &z + &gt_w.matmul(&phi[t])?.scale(2.0);
        mhat = &mhat + &phi[t].transpose().matmul(weight)?.matmul(&phi[t])?;
    }
    let h = h.symmetrize();
    let mhat = mhat.symmetrize();

    let mut g_rows: Vec<Vec<f64>> = Vec::new();
    let mut s_rows: Vec<Vec<f64>> = Vec::new();
    let mut w: Vec<f64> = Vec::new();
    let mut push = |gr: Vec<f64>, sr: Vec<f64>, wv: f64| {
        let dup = g_rows.iter().zip(&s_rows).zip(&w).any(|((g0, s0), w0)| {
            close(g0, &gr) && close(s0, &sr) && (w0 - wv).abs() <= 1e-12 * (1.0 + wv.abs())
        });
        if !dup {
            g_rows.push(gr);
            s_rows.push(sr);
            w.push(wv);
        }
    };

    let fu = mpc.input_poly.a();
    for t in 0..big_n {
        for i in 0..mpc.input_poly.len() {
            let mut gr = vec![0.0; nu];
            gr[t * m..(t + 1) * m].copy_from_slice(fu.row(i));
            push(gr, vec![0.0; n], mpc.input_poly.b()[i]);
        }
    }
    let mut state_rows = |poly: &Polytope, t: usize| -> Result<()> {
        let fg = poly.a().matmul(&gamma[t])?;
        let fp = poly.a().matmul(&phi[t])?;
        for i in 0..poly.len() {
            push(
                fg.row(i).to_vec(),
                fp.row(i).iter().map(|v| -v).collect(),
                poly.b()[i],
            );
        }
        Ok(())
    };
    for t in 1..big_n {
        state_rows(&mpc.state_poly, t)?;
    }
    let t_f = match mpc.terminal {
        TerminalConstraint::PenultimateState => big_n - 1,
        TerminalConstraint::FinalState => big_n,
    };
    let mut cr_a = mpc.state_poly.a().clone();
    let mut cr_b = mpc.state_poly.b().to_vec();
    if t_f >= 1 {
        state_rows(&mpc.terminal_poly, t_f)?;
    } else {
        cr_a = cr_a.vstack(mpc.terminal_poly.a())?;
        cr_b.extend_from_slice(mpc.terminal_poly.b());
    }

    let q = w.len();
    let g = if q == 0 {
        Matrix::zeros(0, nu)
    } else {
        Matrix::from_rows(&g_rows)?
    };
    let s = if q == 0 {
        Matrix::zeros(0, n)
    } else {
        Matrix::from_rows(&s_rows)?
    };
    if !h.is_positive_definite() {
        return Err(Error::numeric("condensed Hessian is not positive definite"));
    }
    Ok(MpQpProblem {
        h,
        z,
        mhat,
        g,
        s,
        w,
        cr_a,
        cr_b,
        n_theta: n,
        n_u: nu,
        n_first: m,
    })
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linctl::{build_mpc, build_mpc_with, LinearSystem};
    use crate::numerics::{lqr_gain, qp_solve, solve_dare};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pendulum_mpc() -> MpcProblem {
        let a = Matrix::from_rows(&[[1.0188, 0.0503], [0.7547, 1.0188]]).unwrap();
        let b = Matrix::column(&[0.0038, 0.1509]);
        let sys = LinearSystem::new(a, b, 0.05).unwrap();
        build_mpc(
            sys,
            Matrix::identity(2),
            Matrix::diag(&[0.001]),
            2,
            Polytope::symmetric_box(&[2.0, 8.0]).unwrap(),
            Polytope::symmetric_box(&[2.0]).unwrap(),
            None,
        )
        .unwrap()
    }

    /// Sparse formulation: decision vector (u_0..u_{N−1}, s_1..s_N) with the
    /// dynamics as paired inequalities, solved by the same QP core.
    fn sparse_value(mpc: &MpcProblem, theta: &[f64]) -> Option<f64> {
        let n = mpc.sys.state_dim();
        let m = mpc.sys.input_dim();
        let nn = mpc.horizon;
        let dim = nn * m + nn * n;
        let u_at = |t: usize| t * m;
        let s_at = |t: usize| nn * m + (t - 1) * n;
        let mut hq = Matrix::zeros(dim, dim);
        for t in 0..nn {
            hq.set_block(u_at(t), u_at(t), &mpc.r.scale(2.0));
        }
        for t in 1..=nn {
            let wgt = if t == nn { &mpc.p } else { &mpc.qw };
            hq.set_block(s_at(t), s_at(t), &wgt.scale(2.0));
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        for t in 1..=nn {
            // s_t − A s_{t−1} − B u_{t−1} = 0
            for i in 0..n {
                let mut r = vec![0.0; dim];
                r[s_at(t) + i] = 1.0;
                for j in 0..m {
                    r[u_at(t - 1) + j] = -mpc.sys.b[(i, j)];
                }
                let mut c = 0.0;
                if t == 1 {
                    c = dot(mpc.sys.a.row(i), theta);
                } else {
                    for j in 0..n {
                        r[s_at(t - 1) + j] = -mpc.sys.a[(i, j)];
                    }
                }
                rows.push(r.clone());
                rhs.push(c);
                rows.push(r.iter().map(|v| -v).collect());
                rhs.push(-c);
            }
        }
        for t in 0..nn {
            for i in 0..mpc.input_poly.len() {
                let mut r = vec![0.0; dim];
                r[u_at(t)..u_at(t) + m].copy_from_slice(mpc.input_poly.a().row(i));
                rows.push(r);
                rhs.push(mpc.input_poly.b()[i]);
            }
        }
        let mut constrain_state = |poly: &Polytope, t: usize| {
            for i in 0..poly.len() {
                let mut r = vec![0.0; dim];
                r[s_at(t)..s_at(t) + n].copy_from_slice(poly.a().row(i));
                rows.push(r);
                rhs.push(poly.b()[i]);
            }
        };
        for t in 1..nn {
            constrain_state(&mpc.state_poly, t);
        }
        constrain_state(&mpc.terminal_poly, nn - 1);
        if !mpc.state_poly.contains(theta, 0.0) {
            return None;
        }
        let poly = Polytope::new(Matrix::from_rows(&rows).unwrap(), rhs).unwrap();
        let sol = qp_solve(&hq, &vec![0.0; dim], &poly).unwrap();
        sol.is_optimal()
            .then(|| sol.objective + dot(theta, &mpc.qw.matvec(theta).unwrap()))
    }

    #[test]
    fn origin_is_equilibrium() {
        let mp = condense(&pendulum_mpc()).unwrap();
        let (v, u) = mp.optimal_value(&[0.0, 0.0]).unwrap().unwrap();
        assert!(v.abs() < 1e-14);
        assert!(u.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn parameter_domain_is_the_state_box() {
        let mpc = pendulum_mpc();
        let mp = condense(&mpc).unwrap();
        assert_eq!(mp.cr_a, *mpc.state_poly.a());
        assert_eq!(mp.cr_b, mpc.state_poly.b());
        // u_0, u_1 bounds plus s_1 path rows; the terminal rows on s_1 duplicate them
        assert_eq!(mp.n_constraints(), 8);
    }

    #[test]
    fn condensed_matches_sparse_formulation() {
        let mpc = pendulum_mpc();
        let mp = condense(&mpc).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 20 {
            let th = [rng.random_range(-2.0..2.0), rng.random_range(-8.0..8.0)];
            let dense = mp.optimal_value(&th).unwrap();
            let sparse = sparse_value(&mpc, &th);
            match (dense, sparse) {
                (Some((d, _)), Some(s)) => {
                    assert!(
                        (d - s).abs() <= 1e-7 * (1.0 + d.abs()),
                        "{d} vs {s} at {th:?}"
                    );
                    checked += 1;
                }
                (None, None) => {}
                (d, s) => panic!("feasibility disagrees at {th:?}: {d:?} vs {s:?}"),
            }
        }
    }

    #[test]
    fn one_step_unconstrained_recovers_lqr() {
        let a = Matrix::from_rows(&[[1.0188, 0.0503], [0.7547, 1.0188]]).unwrap();
        let b = Matrix::column(&[0.0038, 0.1509]);
        let r = Matrix::diag(&[0.001]);
        let sys = LinearSystem::new(a.clone(), b.clone(), 0.05).unwrap();
        let huge = Polytope::symmetric_box(&[1e6, 1e6]).unwrap();
        let mpc = build_mpc_with(
            sys,
            Matrix::identity(2),
            r.clone(),
            1,
            huge.clone(),
            Polytope::symmetric_box(&[1e6]).unwrap(),
            None,
            None,
            TerminalConstraint::PenultimateState,
        )
        .unwrap();
        let mp = condense(&mpc).unwrap();
        let p = solve_dare(&a, &b, &Matrix::identity(2), &r).unwrap().p;
        let k = lqr_gain(&a, &b, &r, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let th = [rng.random_range(-2.0..2.0), rng.random_range(-8.0..8.0)];
            let u = mp.solve_at(&th).unwrap().x;
            let lqr = -dot(k.row(0), &th);
            assert!((u[0] - lqr).abs() <= 1e-6, "{} vs {lqr}", u[0]);
        }
    }
}
