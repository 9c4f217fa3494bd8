use serde::{Deserialize, Serialize};

use super::integrate::rk4_adaptive;
use crate::error::Result;
use crate::linctl::ContinuousDynamics;

const GAS_CONSTANT: f64 = 8.314;

/// Jacketed CSTR with `A + B → C + D` and the runaway decomposition
/// `S → D`. State `(C_A, C_B, C_S, T)` in mol/L and K; the input is the
/// heat-transfer coefficient `U = U* + u`. Time is in hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CstrParams {
    pub volume: f64,
    pub density: f64,
    pub heat_capacity: f64,
    pub area: f64,
    pub coolant_temp: f64,
    /// Reaction enthalpies, J/mol.
    pub delta_h: [f64; 2],
    pub pre_exp: [f64; 2],
    /// Activation energies, J/mol.
    pub activation: [f64; 2],
    /// Seconds per time unit: `U A_x (T − T_c)` is in watts.
    pub seconds_per_unit: f64,
    /// Throughput per volume, 1/h (`q_in = q_out`).
    pub dilution: f64,
    pub c_in: [f64; 3],
    pub t_in: f64,
    /// Operating temperature the nominal `U*` is chosen for.
    pub t_steady: f64,
    /// Safety limit, K.
    pub t_max: f64,
    pub max_u_dev: f64,
    /// Multiplies both reaction rates; 1 for the real plant.
    pub reaction_scale: f64,
    pub rel_tol: f64,
}

impl Default for CstrParams {
    fn default() -> Self {
        CstrParams {
            volume: 4000.0,
            density: 36.0,
            heat_capacity: 430.91,
            area: 5.3,
            coolant_temp: 373.0,
            delta_h: [-45.6e3, -320e3],
            pre_exp: [4e14, 1e84],
            activation: [1.28e5, 8e5],
            seconds_per_unit: 3600.0,
            dilution: 0.55,
            c_in: [8.0, 9.0, 6.0],
            t_in: 470.0,
            t_steady: 475.0,
            t_max: 480.0,
            max_u_dev: 55.0,
            reaction_scale: 1.0,
            rel_tol: 1e-10,
        }
    }
}

/// Stationary point of the balances at `t_steady` with its nominal `U*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CstrSteadyState {
    pub state: [f64; 4],
    pub u_nominal: f64,
}

impl CstrParams {
    fn rate_constants(&self, t: f64) -> [f64; 2] {
        let k = |i: usize| {
            self.reaction_scale * self.pre_exp[i] * (-self.activation[i] / (GAS_CONSTANT * t)).exp()
        };
        [k(0), k(1)]
    }

    fn heat_gain(&self) -> f64 {
        self.area * self.seconds_per_unit / (self.volume * self.density * self.heat_capacity)
    }

    /// Balances with absolute heat-transfer coefficient `u_abs`.
    pub fn rhs(&self, s: &[f64], u_abs: f64) -> Vec<f64> {
        let (ca, cb, cs, t) = (s[0], s[1], s[2], s[3]);
        let [k1, k2] = self.rate_constants(t);
        let r1 = k1 * ca * cb;
        let r2 = k2 * cs;
        let d = self.dilution;
        let rho_cp = self.density * self.heat_capacity;
        vec![
            d * (self.c_in[0] - ca) - r1,
            d * (self.c_in[1] - cb) - r1,
            d * (self.c_in[2] - cs) - r2,
            d * (self.t_in - t) + (-self.delta_h[0] * r1 - self.delta_h[1] * r2) / rho_cp
                - u_abs * self.heat_gain() * (t - self.coolant_temp),
        ]
    }

    /// Concentrations from the mass balances at `t_steady`, then `U*` from
    /// the energy balance.
    pub fn steady_state(&self) -> CstrSteadyState {
        let t = self.t_steady;
        let [k1, k2] = self.rate_constants(t);
        let d = self.dilution;
        let diff = self.c_in[1] - self.c_in[0];
        // d (CA_in − CA) = k1 CA (CA + diff)
        let (a, b, c) = (k1, k1 * diff + d, -d * self.c_in[0]);
        let ca = if a > 0.0 {
            (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
        } else {
            self.c_in[0]
        };
        let cb = ca + diff;
        let cs = d * self.c_in[2] / (d + k2);
        let mut state = [ca, cb, cs, t];
        let heat = self.rhs(&state, 0.0)[3];
        let u_nominal = heat / (self.heat_gain() * (t - self.coolant_temp));
        state[3] = t;
        CstrSteadyState { state, u_nominal }
    }

    /// One control period with the deviation input clipped.
    pub fn step(
        &self,
        ss: &CstrSteadyState,
        state: &[f64],
        u_dev: f64,
        dt: f64,
    ) -> Result<Vec<f64>> {
        let u = ss.u_nominal + u_dev.clamp(-self.max_u_dev, self.max_u_dev);
        let f = |s: &[f64]| self.rhs(s, u);
        let mut next = rk4_adaptive(&f, state, dt, self.rel_tol)?;
        for c in next.iter_mut().take(3) {
            *c = c.max(0.0);
        }
        Ok(next)
    }
}

/// Deviation-coordinate view used for linearization: `ṡ = f(s* + s, U* + u)`.
pub struct CstrDeviation<'a> {
    pub params: &'a CstrParams,
    pub steady: &'a CstrSteadyState,
}

impl ContinuousDynamics for CstrDeviation<'_> {
    fn state_dim(&self) -> usize {
        4
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn derivative(&self, s: &[f64], u: &[f64]) -> Vec<f64> {
        let abs: Vec<f64> = s
            .iter()
            .zip(&self.steady.state)
            .map(|(a, b)| a + b)
            .collect();
        self.params.rhs(&abs, self.steady.u_nominal + u[0])
    }
}
