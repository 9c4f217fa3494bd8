use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Continuous-time dynamics `ṡ = f(s, u)`.
pub trait ContinuousDynamics {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn derivative(&self, s: &[f64], u: &[f64]) -> Vec<f64>;

    /// Exact `(∂f/∂s, ∂f/∂u)` when the model can provide it.
    fn analytic_jacobian(&self, _s: &[f64], _u: &[f64]) -> Option<(Matrix, Matrix)> {
        None
    }
}

/// Adapts a closure to [`ContinuousDynamics`].
pub struct FnDynamics<F> {
    pub state_dim: usize,
    pub input_dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &[f64]) -> Vec<f64>> ContinuousDynamics for FnDynamics<F> {
    fn state_dim(&self) -> usize {
        self.state_dim
    }
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn derivative(&self, s: &[f64], u: &[f64]) -> Vec<f64> {
        (self.f)(s, u)
    }
}

/// `(Ac, Bc)` at `(s_star, u_star)`: the analytic Jacobian when registered,
/// central differences with step `step` otherwise.
pub fn jacobian_linearize(
    f: &dyn ContinuousDynamics,
    s_star: &[f64],
    u_star: &[f64],
    step: f64,
) -> Result<(Matrix, Matrix)> {
    check_dims(f, s_star, u_star)?;
    if let Some((a, b)) = f.analytic_jacobian(s_star, u_star) {
        if a.shape() != (f.state_dim(), f.state_dim())
            || b.shape() != (f.state_dim(), f.input_dim())
        {
            return Err(Error::arg("analytic Jacobian has the wrong shape"));
        }
        return Ok((a, b));
    }
    finite_difference_jacobian(f, s_star, u_star, step)
}

pub fn finite_difference_jacobian(
    f: &dyn ContinuousDynamics,
    s_star: &[f64],
    u_star: &[f64],
    step: f64,
) -> Result<(Matrix, Matrix)> {
    check_dims(f, s_star, u_star)?;
    if !(step > 0.0) {
        return Err(Error::arg("finite-difference step must be positive"));
    }
    let n = f.state_dim();
    let m = f.input_dim();
    let eval = |s: &[f64], u: &[f64]| -> Result<Vec<f64>> {
        let y = f.derivative(s, u);
        if y.len() != n {
            return Err(Error::arg(format!(
                "dynamics returned {} values, expected {n}",
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite dynamics at s={s:?}, u={u:?}"
            )));
        }
        Ok(y)
    };
    let mut a = Matrix::zeros(n, n);
    let mut b = Matrix::zeros(n, m);
    for j in 0..n {
        let mut sp = s_star.to_vec();
        let mut sm = s_star.to_vec();
        sp[j] += step;
        sm[j] -= step;
        let (yp, ym) = (eval(&sp, u_star)?, eval(&sm, u_star)?);
        for i in 0..n {
            a[(i, j)] = (yp[i] - ym[i]) / (2.0 * step);
        }
    }
    for j in 0..m {
        let mut up = u_star.to_vec();
        let mut um = u_star.to_vec();
        up[j] += step;
        um[j] -= step;
        let (yp, ym) = (eval(s_star, &up)?, eval(s_star, &um)?);
        for i in 0..n {
            b[(i, j)] = (yp[i] - ym[i]) / (2.0 * step);
        }
    }
    Ok((a, b))
}

fn check_dims(f: &dyn ContinuousDynamics, s: &[f64], u: &[f64]) -> Result<()> {
    if s.len() != f.state_dim() || u.len() != f.input_dim() {
        return Err(Error::arg(format!(
            "linearization point has dimensions ({}, {}), model expects ({}, {})",
            s.len(),
            u.len(),
            f.state_dim(),
            f.input_dim()
        )));
    }
    Ok(())
}
