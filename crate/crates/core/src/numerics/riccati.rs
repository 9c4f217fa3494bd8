//! Discrete-time algebraic Riccati equation by fixed-point iteration.

use serde::{Deserialize, Serialize};

use super::{Matrix, Tolerances};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DareSolution {
    pub p: Matrix,
    pub iterations: usize,
    /// `‖P − (Q + AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA)‖∞` at the returned `P`.
    pub residual: f64,
    pub tolerance: f64,
}

impl DareSolution {
    /// `K = (R + BᵀPB)⁻¹ BᵀPA`, so that `u = −K s`.
    pub fn gain(&self, a: &Matrix, b: &Matrix, r: &Matrix) -> Result<Matrix> {
        lqr_gain(a, b, r, &self.p)
    }
}

pub fn lqr_gain(a: &Matrix, b: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let bt = b.transpose();
    let btp = bt.matmul(p)?;
    let s = r + &btp.matmul(b)?;
    s.solve_matrix(&btp.matmul(a)?)
}

pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<DareSolution> {
    solve_dare_with(a, b, q, r, &Tolerances::default())
}

pub fn solve_dare_with(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    tol: &Tolerances,
) -> Result<DareSolution> {
    let n = a.rows();
    let m = b.cols();
    if !a.is_square() || b.rows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::arg(format!(
            "DARE shapes disagree: A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    if !q.is_positive_semidefinite(1e-12) {
        return Err(Error::arg("Q must be symmetric positive semi-definite"));
    }
    if !r.is_positive_definite() {
        return Err(Error::arg("R must be symmetric positive definite"));
    }
    let mut p = q.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=tol.dare_max_iter {
        let next = riccati_map(a, b, q, r, &p)?;
        if !next.is_finite() {
            return Err(Error::numeric("Riccati iterate became non-finite"));
        }
        residual = (&next - &p).max_abs();
        p = next;
        if residual <= tol.dare {
            let residual = (&riccati_map(a, b, q, r, &p)? - &p).norm_inf();
            return Ok(DareSolution {
                p,
                iterations: it,
                residual,
                tolerance: tol.dare,
            });
        }
    }
    Err(Error::RiccatiNotConverged {
        iterations: tol.dare_max_iter,
        residual,
    })
}

/// One step `P ↦ Q + AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA`, symmetrized.
fn riccati_map(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let at = a.transpose();
    let atp = at.matmul(p)?;
    let atpa = atp.matmul(a)?;
    let atpb = atp.matmul(b)?;
    let gain = lqr_gain(a, b, r, p)?;
    let out = &(q + &atpa) - &atpb.matmul(&gain)?;
    Ok(out.symmetrize())
}
