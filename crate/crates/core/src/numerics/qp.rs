//! Primal active-set method for `min ½xᵀHx + fᵀx s.t. F x ≤ g`, `H ≻ 0`.

use serde::{Deserialize, Serialize};

use super::{dot, lp_solve_with, norm_inf, Matrix, Polytope, SolveStatus, Tolerances};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Final working set, sorted. Every member has a nonnegative multiplier.
    pub active_set: Vec<usize>,
    /// One multiplier per constraint row; zero off the active set.
    pub duals: Vec<f64>,
    pub iterations: usize,
    pub tolerance: f64,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Active rows whose multiplier exceeds `tol` (strongly active).
    pub fn strongly_active(&self, tol: f64) -> Vec<usize> {
        self.active_set
            .iter()
            .copied()
            .filter(|&i| self.duals[i] > tol)
            .collect()
    }

    pub fn kkt_residual(&self, h: &Matrix, f: &[f64], poly: &Polytope) -> f64 {
        let mut station = h.matvec(&self.x).expect("shape checked");
        for (s, fi) in station.iter_mut().zip(f) {
            *s += fi;
        }
        let mut worst = 0.0f64;
        for i in 0..poly.len() {
            let (r, g) = poly.row(i);
            let slack = g - dot(r, &self.x);
            worst = worst
                .max(-slack)
                .max(-self.duals[i])
                .max((self.duals[i] * slack).abs());
            for (s, a) in station.iter_mut().zip(r) {
                *s += a * self.duals[i];
            }
        }
        worst.max(norm_inf(&station))
    }
}

pub fn qp_solve(h: &Matrix, f: &[f64], poly: &Polytope) -> Result<QpSolution> {
    qp_solve_warm(h, f, poly, &[], &Tolerances::default())
}

/// Solves the QP, first trying `guess` as the optimal active set. A wrong or
/// infeasible guess falls back to a cold start.
pub fn qp_solve_warm(
    h: &Matrix,
    f: &[f64],
    poly: &Polytope,
    guess: &[usize],
    tol: &Tolerances,
) -> Result<QpSolution> {
    let n = f.len();
    if h.shape() != (n, n) || poly.dim() != n {
        return Err(Error::arg(format!(
            "QP shapes disagree: H {:?}, f {}, constraints of dimension {}",
            h.shape(),
            n,
            poly.dim()
        )));
    }
    if !h.is_positive_definite() {
        return Err(Error::arg("QP Hessian is not symmetric positive definite"));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("non-finite QP linear term"));
    }
    let scale = 1.0 + h.max_abs() + norm_inf(f);
    let feas_tol = tol.lp * (1.0 + poly.a().max_abs() + norm_inf(poly.b()));
    let dual_tol = 1e-11 * scale;

    let mut start: Option<(Vec<f64>, Vec<usize>)> = None;

    if !guess.is_empty() && guess.iter().all(|&i| i < poly.len()) {
        let mut w: Vec<usize> = guess.to_vec();
        w.sort_unstable();
        w.dedup();
        if let Ok((x, lam)) = solve_eqp(h, f, poly, &w) {
            if poly.contains(&x, feas_tol) {
                if lam.iter().all(|l| *l >= -dual_tol) {
                    return Ok(finish(h, f, poly, x, w, lam, 0, tol));
                }
                start = Some((x, w));
            }
        }
    }

    let (mut x, mut work) = match start {
        Some(s) => s,
        None => {
            let (x, _) = solve_eqp(h, f, poly, &[])?;
            if poly.contains(&x, feas_tol) {
                (x, Vec::new())
            } else {
                let lp = lp_solve_with(&vec![0.0; n], poly, tol)?;
                match lp.status {
                    SolveStatus::Optimal => (lp.x, Vec::new()),
                    _ => {
                        return Ok(QpSolution {
                            status: SolveStatus::Infeasible,
                            x: vec![f64::NAN; n],
                            objective: f64::INFINITY,
                            active_set: Vec::new(),
                            duals: vec![0.0; poly.len()],
                            iterations: 0,
                            tolerance: tol.qp,
                        })
                    }
                }
            }
        }
    };

    for iter in 1..=tol.qp_max_iter {
        let mut grad = h.matvec(&x)?;
        for (gi, fi) in grad.iter_mut().zip(f) {
            *gi += fi;
        }
        let (p, lam) = solve_step(h, &grad, poly, &work)?;
        if norm_inf(&p) <= 1e-12 * (1.0 + norm_inf(&x)) {
            // most negative multiplier leaves; ties go to the smaller row
            let mut worst: Option<(usize, f64)> = None;
            for (k, l) in lam.iter().enumerate() {
                if *l < -dual_tol && worst.is_none_or(|(_, wl)| *l < wl) {
                    worst = Some((k, *l));
                }
            }
            match worst {
                None => {
                    let (xp, lp) = solve_eqp(h, f, poly, &work)?;
                    return Ok(finish(h, f, poly, xp, work, lp, iter, tol));
                }
                Some((k, _)) => {
                    work.remove(k);
                }
            }
        } else {
            let mut alpha = 1.0;
            let mut blocking: Option<usize> = None;
            for i in 0..poly.len() {
                if work.contains(&i) {
                    continue;
                }
                let (r, g) = poly.row(i);
                let ap = dot(r, &p);
                if ap > 1e-14 * (1.0 + norm_inf(r) * norm_inf(&p)) {
                    let step = ((g - dot(r, &x)) / ap).max(0.0);
                    if step < alpha {
                        alpha = step;
                        blocking = Some(i);
                    }
                }
            }
            for (xi, pi) in x.iter_mut().zip(&p) {
                *xi += alpha * pi;
            }
            if let Some(i) = blocking {
                let pos = work.partition_point(|&w| w < i);
                work.insert(pos, i);
            }
        }
    }
    Err(Error::numeric(format!(
        "active-set QP exceeded {} iterations",
        tol.qp_max_iter
    )))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    h: &Matrix,
    f: &[f64],
    poly: &Polytope,
    x: Vec<f64>,
    work: Vec<usize>,
    lam: Vec<f64>,
    iterations: usize,
    tol: &Tolerances,
) -> QpSolution {
    let mut duals = vec![0.0; poly.len()];
    for (k, &i) in work.iter().enumerate() {
        duals[i] = lam[k].max(0.0);
    }
    let hx = h.matvec(&x).expect("shape checked");
    let objective = 0.5 * dot(&x, &hx) + dot(f, &x);
    let sol = QpSolution {
        status: SolveStatus::Optimal,
        x,
        objective,
        active_set: work,
        duals,
        iterations,
        tolerance: tol.qp,
    };
    #[cfg(debug_assertions)]
    {
        let r = sol.kkt_residual(h, f, poly);
        let s = (1.0 + h.max_abs() + norm_inf(f)) * (1.0 + norm_inf(&sol.x));
        debug_assert!(r <= tol.qp * s, "QP KKT self-check failed: residual {r:e}");
    }
    sol
}

/// Minimizer of the objective with the rows in `work` held at equality,
/// together with their multipliers.
fn solve_eqp(
    h: &Matrix,
    f: &[f64],
    poly: &Polytope,
    work: &[usize],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = f.len();
    let k = kkt_matrix(h, poly, work);
    let mut rhs = vec![0.0; n + work.len()];
    for (r, fi) in rhs.iter_mut().zip(f) {
        *r = -fi;
    }
    for (j, &i) in work.iter().enumerate() {
        rhs[n + j] = poly.b()[i];
    }
    let sol = k.solve(&rhs)?;
    Ok((sol[..n].to_vec(), sol[n..].to_vec()))
}

fn solve_step(
    h: &Matrix,
    grad: &[f64],
    poly: &Polytope,
    work: &[usize],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = grad.len();
    let k = kkt_matrix(h, poly, work);
    let mut rhs = vec![0.0; n + work.len()];
    for (r, g) in rhs.iter_mut().zip(grad) {
        *r = -g;
    }
    let sol = k.solve(&rhs)?;
    Ok((sol[..n].to_vec(), sol[n..].to_vec()))
}

fn kkt_matrix(h: &Matrix, poly: &Polytope, work: &[usize]) -> Matrix {
    let n = h.rows();
    let m = work.len();
    let mut k = Matrix::zeros(n + m, n + m);
    k.set_block(0, 0, h);
    for (j, &i) in work.iter().enumerate() {
        let (r, _) = poly.row(i);
        for (c, v) in r.iter().enumerate() {
            k[(n + j, c)] = *v;
            k[(c, n + j)] = *v;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clamped_scalar() {
        // min x² s.t. x ≥ 1
        let h = Matrix::from_rows(&[[2.0]]).unwrap();
        let p = Polytope::new(Matrix::from_rows(&[[-1.0]]).unwrap(), vec![-1.0]).unwrap();
        let s = qp_solve(&h, &[0.0], &p).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert_eq!(s.active_set, vec![0]);
        assert!((s.duals[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn interior_box_minimum() {
        let h = Matrix::from_rows(&[[2.0]]).unwrap();
        let p = Polytope::symmetric_box(&[1.0]).unwrap();
        let s = qp_solve(&h, &[0.0], &p).unwrap();
        assert!(s.x[0].abs() < 1e-15);
        assert!(s.active_set.is_empty());
    }

    #[test]
    fn non_pd_hessian_is_rejected() {
        let h = Matrix::from_rows(&[[1.0, 0.0], [0.0, -1.0]]).unwrap();
        let p = Polytope::symmetric_box(&[1.0, 1.0]).unwrap();
        assert!(matches!(
            qp_solve(&h, &[0.0, 0.0], &p),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn infeasible_status() {
        let h = Matrix::identity(1);
        let p = Polytope::from_box(&[2.0], &[1.0]).unwrap();
        assert_eq!(
            qp_solve(&h, &[0.0], &p).unwrap().status,
            SolveStatus::Infeasible
        );
    }

    #[test]
    fn warm_start_with_correct_set_skips_iterations() {
        let h = Matrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap();
        let p = Polytope::symmetric_box(&[1.0, 1.0]).unwrap();
        let f = [-6.0, 0.3];
        let cold = qp_solve(&h, &f, &p).unwrap();
        let warm = qp_solve_warm(&h, &f, &p, &cold.active_set, &Tolerances::default()).unwrap();
        assert_eq!(warm.iterations, 0);
        assert!((warm.objective - cold.objective).abs() < 1e-14);
        // a wrong guess still converges to the same point
        let wrong = qp_solve_warm(&h, &f, &p, &[3], &Tolerances::default()).unwrap();
        assert!((wrong.objective - cold.objective).abs() < 1e-12);
    }

    fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                l[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
        let mut h = &l * &l.transpose();
        for i in 0..n {
            h[(i, i)] += 0.5;
        }
        h.symmetrize()
    }

    /// Projected gradient on a box, run to a tight tolerance.
    fn projected_gradient(h: &Matrix, f: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
        let n = f.len();
        let step = 1.0 / (h.norm_inf() + 1.0);
        let mut x = vec![0.0; n];
        for _ in 0..400_000 {
            let g: Vec<f64> = h
                .matvec(&x)
                .unwrap()
                .iter()
                .zip(f)
                .map(|(a, b)| a + b)
                .collect();
            let mut delta = 0.0f64;
            for i in 0..n {
                let nx = (x[i] - step * g[i]).clamp(lo[i], hi[i]);
                delta = delta.max((nx - x[i]).abs());
                x[i] = nx;
            }
            if delta < 1e-15 {
                break;
            }
        }
        x
    }

    #[test]
    fn random_box_problems_match_projected_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = 4;
            let h = random_pd(&mut rng, n);
            let f: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..0.0)).collect();
            let hi: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let p = Polytope::from_box(&lo, &hi).unwrap();
            let s = qp_solve(&h, &f, &p).unwrap();
            let oracle = projected_gradient(&h, &f, &lo, &hi);
            let obj = |x: &[f64]| 0.5 * dot(x, &h.matvec(x).unwrap()) + dot(&f, x);
            assert!(
                (s.objective - obj(&oracle)).abs() <= 1e-8,
                "{} vs {}",
                s.objective,
                obj(&oracle)
            );
            assert!(s.kkt_residual(&h, &f, &p) <= 1e-8);
        }
    }

    #[test]
    fn general_polytope_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let n = 4;
            let h = random_pd(&mut rng, n);
            let f: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let mut a = Matrix::zeros(10, n);
            for i in 0..10 {
                for j in 0..n {
                    a[(i, j)] = rng.random_range(-1.0..1.0);
                }
            }
            let b: Vec<f64> = (0..10).map(|_| rng.random_range(0.1..1.0)).collect();
            let p = Polytope::new(a, b).unwrap();
            let s = qp_solve(&h, &f, &p).unwrap();
            assert!(s.is_optimal());
            assert!(s.kkt_residual(&h, &f, &p) <= 1e-8);
        }
    }
}
