//! Dense two-phase simplex for `min cᵀx s.t. F x ≤ g` with free `x`.
//!
//! Free variables are split as `x = x⁺ − x⁻`, each row gets a slack, rows
//! with negative right-hand side get an artificial. Bland's rule picks both
//! the entering and the leaving variable, so the method cannot cycle.

use serde::{Deserialize, Serialize};

use super::{dot, Polytope, SolveStatus, Tolerances};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Rows satisfied with equality at `x`.
    pub active_set: Vec<usize>,
    /// Multipliers `y ≥ 0` with `c + Fᵀy = 0`.
    pub duals: Vec<f64>,
    pub tolerance: f64,
}

impl LpSolution {
    fn without_point(status: SolveStatus, n: usize, q: usize, tol: f64) -> Self {
        let objective = match status {
            SolveStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
        LpSolution {
            status,
            x: vec![f64::NAN; n],
            objective,
            active_set: Vec::new(),
            duals: vec![0.0; q],
            tolerance: tol,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Largest violation among primal feasibility, dual feasibility,
    /// stationarity and complementary slackness.
    pub fn kkt_residual(&self, c: &[f64], poly: &Polytope) -> f64 {
        let f = poly.a();
        let g = poly.b();
        let mut worst = 0.0f64;
        let mut station = c.to_vec();
        for i in 0..f.rows() {
            let slack = g[i] - dot(f.row(i), &self.x);
            worst = worst
                .max(-slack)
                .max(-self.duals[i])
                .max((self.duals[i] * slack).abs());
            for (s, a) in station.iter_mut().zip(f.row(i)) {
                *s += a * self.duals[i];
            }
        }
        station.iter().fold(worst, |w, v| w.max(v.abs()))
    }
}

pub fn lp_solve(c: &[f64], poly: &Polytope) -> Result<LpSolution> {
    lp_solve_with(c, poly, &Tolerances::default())
}

pub fn lp_solve_with(c: &[f64], poly: &Polytope, tol: &Tolerances) -> Result<LpSolution> {
    let n = poly.dim();
    let q = poly.len();
    if c.len() != n {
        return Err(Error::arg(format!(
            "cost has length {}, polytope dimension is {n}",
            c.len()
        )));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("non-finite LP cost"));
    }
    let f = poly.a();
    let g = poly.b();

    // column layout: [x⁺ (n) | x⁻ (n) | slack (q) | artificial (k)]
    let flipped: Vec<bool> = g.iter().map(|v| *v < 0.0).collect();
    let n_art = flipped.iter().filter(|f| **f).count();
    let n_struct = 2 * n + q;
    let n_var = n_struct + n_art;
    let mut tab = Tableau::new(q, n_var);
    let mut basis = vec![0usize; q];
    let mut art = n_struct;
    for i in 0..q {
        let sign = if flipped[i] { -1.0 } else { 1.0 };
        for j in 0..n {
            tab.set(i, j, sign * f[(i, j)]);
            tab.set(i, n + j, -sign * f[(i, j)]);
        }
        tab.set(i, 2 * n + i, sign);
        tab.set_rhs(i, sign * g[i]);
        if flipped[i] {
            tab.set(i, art, 1.0);
            basis[i] = art;
            art += 1;
        } else {
            basis[i] = 2 * n + i;
        }
    }
    let scale = 1.0 + f.max_abs().max(g.iter().fold(0.0, |m, v| m.max(v.abs())));
    let eps = tol.lp * scale;
    let mut iters = 0usize;

    if n_art > 0 {
        let mut phase1 = vec![0.0; n_var];
        for v in phase1.iter_mut().skip(n_struct) {
            *v = 1.0;
        }
        match tab.optimize(&mut basis, &phase1, n_var, eps, tol.lp_max_iter, &mut iters)? {
            Outcome::Optimal => {}
            Outcome::Unbounded => return Err(Error::numeric("phase-1 LP reported unbounded")),
        }
        let infeas: f64 = (0..q)
            .filter(|&i| basis[i] >= n_struct)
            .map(|i| tab.rhs(i))
            .sum();
        if infeas > eps {
            return Ok(LpSolution::without_point(
                SolveStatus::Infeasible,
                n,
                q,
                tol.lp,
            ));
        }
        // pivot remaining (zero-level) artificials out where possible
        for i in 0..q {
            if basis[i] >= n_struct {
                if let Some(j) = (0..n_struct).find(|&j| tab.get(i, j).abs() > eps) {
                    tab.pivot(i, j);
                    basis[i] = j;
                }
            }
        }
    }

    let mut cost = vec![0.0; n_var];
    for j in 0..n {
        cost[j] = c[j];
        cost[n + j] = -c[j];
    }
    // artificials are barred from re-entering by restricting the column range
    match tab.optimize(
        &mut basis,
        &cost,
        n_struct,
        eps,
        tol.lp_max_iter,
        &mut iters,
    )? {
        Outcome::Unbounded => {
            return Ok(LpSolution::without_point(
                SolveStatus::Unbounded,
                n,
                q,
                tol.lp,
            ));
        }
        Outcome::Optimal => {}
    }

    let mut z = vec![0.0; n_var];
    for i in 0..q {
        z[basis[i]] = tab.rhs(i);
    }
    let x: Vec<f64> = (0..n).map(|j| z[j] - z[n + j]).collect();
    let reduced = tab.reduced_costs(&basis, &cost, n_var);
    let duals: Vec<f64> = (0..q).map(|i| reduced[2 * n + i].max(0.0)).collect();
    let active_set = (0..q)
        .filter(|&i| {
            (g[i] - dot(f.row(i), &x)).abs()
                <= eps * (1.0 + x.iter().fold(0.0, |m: f64, v| m.max(v.abs())))
        })
        .collect();
    let sol = LpSolution {
        status: SolveStatus::Optimal,
        objective: dot(c, &x),
        x,
        active_set,
        duals,
        tolerance: tol.lp,
    };
    #[cfg(debug_assertions)]
    {
        let r = sol.kkt_residual(c, poly);
        let cscale = 1.0 + c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        debug_assert!(
            r <= 1e-6 * scale * cscale * (1.0 + sol.x.iter().fold(0.0f64, |m, v| m.max(v.abs()))),
            "LP KKT self-check failed: residual {r:e}"
        );
    }
    Ok(sol)
}

enum Outcome {
    Optimal,
    Unbounded,
}

struct Tableau {
    rows: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tableau {
    fn new(rows: usize, n_var: usize) -> Self {
        let width = n_var + 1;
        Tableau {
            rows,
            width,
            data: vec![0.0; rows * width],
        }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.width + j] = v;
    }

    fn rhs(&self, i: usize) -> f64 {
        self.data[i * self.width + self.width - 1]
    }

    fn set_rhs(&mut self, i: usize, v: f64) {
        let w = self.width;
        self.data[i * w + w - 1] = v;
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.get(r, c);
        for j in 0..w {
            self.data[r * w + j] /= p;
        }
        let (before, rest) = self.data.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        let eliminate = |row: &mut [f64]| {
            let f = row[c];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
                row[c] = 0.0;
            }
        };
        before.chunks_mut(w).for_each(eliminate);
        after.chunks_mut(w).for_each(eliminate);
    }

    fn reduced_costs(&self, basis: &[usize], cost: &[f64], n_cols: usize) -> Vec<f64> {
        let mut d = cost[..n_cols].to_vec();
        for (i, &b) in basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (j, dj) in d.iter_mut().enumerate() {
                    *dj -= cb * self.get(i, j);
                }
            }
        }
        d
    }

    fn optimize(
        &mut self,
        basis: &mut [usize],
        cost: &[f64],
        n_cols: usize,
        eps: f64,
        max_iter: usize,
        iters: &mut usize,
    ) -> Result<Outcome> {
        loop {
            let d = self.reduced_costs(basis, cost, n_cols);
            let Some(enter) = (0..n_cols).find(|&j| d[j] < -eps && !basis.contains(&j)) else {
                return Ok(Outcome::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.get(i, enter);
                if a > eps {
                    let ratio = self.rhs(i).max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - eps
                                || ((ratio - lr).abs() <= eps && basis[i] < basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Ok(Outcome::Unbounded);
            };
            self.pivot(row, enter);
            basis[row] = enter;
            *iters += 1;
            if *iters > max_iter {
                return Err(Error::numeric(format!(
                    "simplex exceeded {max_iter} pivots"
                )));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn poly(rows: &[&[f64]], b: &[f64]) -> Polytope {
        Polytope::new(Matrix::from_rows(rows).unwrap(), b.to_vec()).unwrap()
    }

    #[test]
    fn box_minimum() {
        let p = poly(&[&[1.0], &[-1.0]], &[1.0, 0.0]);
        let s = lp_solve(&[1.0], &p).unwrap();
        assert!(s.is_optimal());
        assert!(s.x[0].abs() < 1e-12 && s.objective.abs() < 1e-12);
        assert_eq!(s.active_set, vec![1]);
        assert!((s.duals[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_box_corner() {
        let p = poly(
            &[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0], &[0.0, -1.0]],
            &[1.0, 1.0, 0.0, 0.0],
        );
        let s = lp_solve(&[-1.0, -1.0], &p).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
        assert!((s.objective + 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded_are_reported() {
        let p = poly(&[&[1.0], &[-1.0]], &[-1.0, -1.0]);
        assert_eq!(
            lp_solve(&[1.0], &p).unwrap().status,
            SolveStatus::Infeasible
        );
        let p = poly(&[&[1.0]], &[1.0]);
        assert_eq!(lp_solve(&[1.0], &p).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn dimension_mismatch_is_an_argument_error() {
        let p = poly(&[&[1.0, 0.0]], &[1.0]);
        assert!(matches!(lp_solve(&[1.0], &p), Err(Error::Argument(_))));
    }

    #[test]
    fn shifted_box_needs_phase_one() {
        // 2 ≤ x ≤ 3, -5 ≤ y ≤ -4
        let p = poly(
            &[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]],
            &[3.0, -2.0, -4.0, 5.0],
        );
        let s = lp_solve(&[1.0, -1.0], &p).unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] + 4.0).abs() < 1e-12);
        assert!(s.kkt_residual(&[1.0, -1.0], &p) < 1e-12);
    }

    #[test]
    fn degenerate_vertex_terminates() {
        // many constraints through the optimal vertex
        let p = poly(
            &[
                &[1.0, 1.0],
                &[1.0, 2.0],
                &[2.0, 1.0],
                &[-1.0, 0.0],
                &[0.0, -1.0],
                &[1.0, 0.0],
            ],
            &[0.0, 0.0, 0.0, 1.0, 1.0, 0.0],
        );
        let s = lp_solve(&[-1.0, -1.0], &p).unwrap();
        assert!(s.is_optimal());
        assert!(s.objective.abs() < 1e-12);
    }

    /// Best feasible vertex among all intersections of constraint triples.
    fn vertex_enumeration(c: &[f64], p: &Polytope) -> f64 {
        let q = p.len();
        let mut best = f64::INFINITY;
        for i in 0..q {
            for j in i + 1..q {
                for k in j + 1..q {
                    let sys = p.a().select_rows(&[i, j, k]);
                    let Ok(x) = sys.solve(&[p.b()[i], p.b()[j], p.b()[k]]) else {
                        continue;
                    };
                    if p.contains(&x, 1e-9) {
                        best = best.min(dot(c, &x));
                    }
                }
            }
        }
        best
    }

    #[test]
    fn random_polytopes_match_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let rows = 10;
            let mut a = Matrix::zeros(rows, 3);
            for i in 0..rows {
                for j in 0..3 {
                    a[(i, j)] = rng.random_range(-1.0..1.0);
                }
            }
            let b: Vec<f64> = (0..rows).map(|_| rng.random_range(-0.2..1.0)).collect();
            let p = Polytope::symmetric_box(&[2.0, 2.0, 2.0])
                .unwrap()
                .intersect(&Polytope::new(a, b).unwrap())
                .unwrap();
            let c: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = lp_solve(&c, &p).unwrap();
            let oracle = vertex_enumeration(&c, &p);
            if oracle.is_infinite() {
                assert_eq!(s.status, SolveStatus::Infeasible);
            } else {
                assert!(s.is_optimal());
                assert!(
                    (s.objective - oracle).abs() <= 1e-9,
                    "{} vs {}",
                    s.objective,
                    oracle
                );
                assert!(s.kkt_residual(&c, &p) <= 1e-9);
            }
        }
    }
}
