use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{solve_dare, Matrix, Polytope};

/// `s_{t+1} = A s_t + B u_t`, sampled every `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(rename = "B")]
    pub b: Matrix,
    pub dt: f64,
}

impl LinearSystem {
    pub fn new(a: Matrix, b: Matrix, dt: f64) -> Result<Self> {
        if !a.is_square() || b.rows() != a.rows() {
            return Err(Error::arg(format!(
                "system shapes disagree: A {:?}, B {:?}",
                a.shape(),
                b.shape()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::arg("sampling period must be positive"));
        }
        Ok(LinearSystem { a, b, dt })
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn step(&self, s: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut next = self.a.matvec(s)?;
        for (x, bu) in next.iter_mut().zip(self.b.matvec(u)?) {
            *x += bu;
        }
        Ok(next)
    }
}

/// Which predicted state the terminal set constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalConstraint {
    /// `s_{N−1} ∈ S_f`, as the regulator problem is commonly written in the
    /// explicit-MPC literature this toolkit follows.
    #[default]
    PenultimateState,
    /// `s_N ∈ S_f`.
    FinalState,
}

/// Finite-horizon regulator
/// `min Σ_{t<N} sᵀQw s + uᵀR u + s_Nᵀ P s_N` subject to the dynamics,
/// `s_t ∈ S`, `u_t ∈ U` for `t < N`, and the terminal set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcProblem {
    pub sys: LinearSystem,
    #[serde(rename = "Qw")]
    pub qw: Matrix,
    #[serde(rename = "R")]
    pub r: Matrix,
    #[serde(rename = "P")]
    pub p: Matrix,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub state_poly: Polytope,
    pub input_poly: Polytope,
    pub terminal_poly: Polytope,
    #[serde(default)]
    pub terminal: TerminalConstraint,
}

pub fn build_mpc(
    sys: LinearSystem,
    qw: Matrix,
    r: Matrix,
    horizon: usize,
    state_poly: Polytope,
    input_poly: Polytope,
    terminal_poly: Option<Polytope>,
) -> Result<MpcProblem> {
    build_mpc_with(
        sys,
        qw,
        r,
        horizon,
        state_poly,
        input_poly,
        terminal_poly,
        None,
        TerminalConstraint::default(),
    )
}

/// Like [`build_mpc`], with an explicit terminal weight (skipping the DARE)
/// and a choice of terminal-constraint placement.
#[allow(clippy::too_many_arguments)]
pub fn build_mpc_with(
    sys: LinearSystem,
    qw: Matrix,
    r: Matrix,
    horizon: usize,
    state_poly: Polytope,
    input_poly: Polytope,
    terminal_poly: Option<Polytope>,
    terminal_weight: Option<Matrix>,
    terminal: TerminalConstraint,
) -> Result<MpcProblem> {
    let n = sys.state_dim();
    let m = sys.input_dim();
    if horizon == 0 {
        return Err(Error::arg("horizon must be at least 1"));
    }
    if qw.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::arg(format!(
            "weights have shapes Qw {:?}, R {:?}",
            qw.shape(),
            r.shape()
        )));
    }
    if !qw.is_positive_semidefinite(1e-12) {
        return Err(Error::arg("Qw must be symmetric positive semi-definite"));
    }
    if !r.is_positive_definite() {
        return Err(Error::arg("R must be symmetric positive definite"));
    }
    if state_poly.dim() != n || input_poly.dim() != m {
        return Err(Error::arg(
            "constraint polytopes do not match the system dimensions",
        ));
    }
    let terminal_poly = terminal_poly.unwrap_or_else(|| state_poly.clone());
    if terminal_poly.dim() != n {
        return Err(Error::arg(
            "terminal set does not match the state dimension",
        ));
    }
    let p = match terminal_weight {
        Some(p) => {
            if p.shape() != (n, n) {
                return Err(Error::arg("terminal weight has the wrong shape"));
            }
            p
        }
        None => solve_dare(&sys.a, &sys.b, &qw, &r)?.p,
    };
    Ok(MpcProblem {
        sys,
        qw,
        r,
        p,
        horizon,
        state_poly,
        input_poly,
        terminal_poly,
        terminal,
    })
}
