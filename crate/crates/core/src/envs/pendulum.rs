use serde::{Deserialize, Serialize};

use super::integrate::rk4_step;
use crate::linctl::ContinuousDynamics;
use crate::numerics::Matrix;

/// Rod pendulum about its pivot, angle measured from upright:
/// `θ̈ = (3g/2l) sin θ + (3/(m l²)) u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub g: f64,
    pub l: f64,
    pub m: f64,
    pub max_speed: f64,
    pub max_torque: f64,
    /// Wrap the angle into `[−π, π)` after every step. Without it a
    /// spun-up pendulum racks up θ² costs that swamp the critic targets.
    #[serde(default = "yes")]
    pub wrap_angle: bool,
}

fn yes() -> bool {
    true
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            g: 10.0,
            l: 1.0,
            m: 1.0,
            max_speed: 8.0,
            max_torque: 2.0,
            wrap_angle: true,
        }
    }
}

impl ContinuousDynamics for PendulumParams {
    fn state_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn derivative(&self, s: &[f64], u: &[f64]) -> Vec<f64> {
        vec![
            s[1],
            1.5 * self.g / self.l * s[0].sin() + 3.0 / (self.m * self.l * self.l) * u[0],
        ]
    }
    fn analytic_jacobian(&self, s: &[f64], _u: &[f64]) -> Option<(Matrix, Matrix)> {
        let a = Matrix::from_rows(&[[0.0, 1.0], [1.5 * self.g / self.l * s[0].cos(), 0.0]]).ok()?;
        let b = Matrix::column(&[0.0, 3.0 / (self.m * self.l * self.l)]);
        Some((a, b))
    }
}

/// One control period: torque clipped, RK4 over `dt`, speed clipped after.
pub fn pendulum_step(p: &PendulumParams, state: &[f64], u: f64, dt: f64) -> Vec<f64> {
    let u = u.clamp(-p.max_torque, p.max_torque);
    let f = |s: &[f64]| p.derivative(s, &[u]);
    let mut next = rk4_step(&f, state, dt);
    next[1] = next[1].clamp(-p.max_speed, p.max_speed);
    if p.wrap_angle {
        next[0] = wrap_angle(next[0]);
    }
    next
}

/// `½ m l²/3 ω² − m g (l/2)(1 − cos θ)` with the upright position at zero
/// potential; conserved by the unforced dynamics.
pub fn pendulum_energy(p: &PendulumParams, s: &[f64]) -> f64 {
    let inertia = p.m * p.l * p.l / 3.0;
    0.5 * inertia * s[1] * s[1] + p.m * p.g * 0.5 * p.l * s[0].cos()
}

/// Representative of `theta` in `[−π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    (theta + PI).rem_euclid(2.0 * PI) - PI
}
