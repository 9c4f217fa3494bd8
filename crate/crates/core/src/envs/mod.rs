//! Nonlinear plants the controllers are trained against, their stage costs
//! and safety logic, and the linear design models derived from them.
//!
//! Agents always see deviation coordinates: the pendulum state as is, the
//! reactor state minus its steady state.

mod cstr;
mod integrate;
mod pendulum;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cstr::{CstrDeviation, CstrParams, CstrSteadyState};
pub use pendulum::{pendulum_energy, pendulum_step, wrap_angle, PendulumParams};

use crate::error::{Error, Result};
use crate::linctl::{build_mpc, jacobian_linearize, LinearSystem, MpcProblem};
use crate::numerics::{dot, zoh_discretize, Matrix, Polytope};

/// Reference discretization of the upright pendulum at 0.05 s.
pub const PENDULUM_REFERENCE_A: [[f64; 2]; 2] = [[1.0188, 0.0503], [0.7547, 1.0188]];
pub const PENDULUM_REFERENCE_B: [f64; 2] = [0.0038, 0.1509];

/// Reference reactor design model (deviation coordinates, one-minute sample).
pub const CSTR_DESIGN_A: [[f64; 4]; 4] = [
    [0.9506, 0.0, 0.0, 0.0],
    [-0.0484, 0.9943, 0.0, 0.0],
    [0.0, 0.0, 0.9909, 0.0],
    [0.6970, 0.0678, 0.0, 1.0030],
];
pub const CSTR_DESIGN_B: [f64; 4] = [0.0, 0.0, 0.0, -0.0007];

/// Linearization must round to the reference digits.
const REFERENCE_TOL: f64 = 5e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Pendulum,
    Cstr,
}

impl std::str::FromStr for EnvKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(EnvKind::Pendulum),
            "cstr" => Ok(EnvKind::Cstr),
            _ => Err(Error::arg(format!("unknown environment '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub dt: f64,
    pub steps_per_episode: usize,
    pub u_low: Vec<f64>,
    pub u_high: Vec<f64>,
    /// Deviation-coordinate state box of the MPC problem.
    pub state_low: Vec<f64>,
    pub state_high: Vec<f64>,
    #[serde(rename = "Qw")]
    pub qw: Matrix,
    #[serde(rename = "R")]
    pub r: Matrix,
    pub horizon: usize,
    /// Added to the stage cost of the step that enters the unsafe set.
    pub safety_penalty: f64,
    /// Deviation-coordinate box the initial state is drawn from.
    pub init_low: Vec<f64>,
    pub init_high: Vec<f64>,
    #[serde(default)]
    pub pendulum: PendulumParams,
    #[serde(default)]
    pub cstr: CstrParams,
}

impl EnvSpec {
    pub fn pendulum() -> Self {
        EnvSpec {
            kind: EnvKind::Pendulum,
            dt: 0.05,
            steps_per_episode: 200,
            u_low: vec![-2.0],
            u_high: vec![2.0],
            state_low: vec![-2.0, -8.0],
            state_high: vec![2.0, 8.0],
            qw: Matrix::identity(2),
            r: Matrix::diag(&[0.001]),
            horizon: 2,
            safety_penalty: 0.0,
            init_low: vec![-1.0, -1.0],
            init_high: vec![1.0, 1.0],
            pendulum: PendulumParams::default(),
            cstr: CstrParams::default(),
        }
    }

    pub fn cstr() -> Self {
        EnvSpec {
            kind: EnvKind::Cstr,
            dt: 1.0 / 60.0,
            steps_per_episode: 300,
            u_low: vec![-55.0],
            u_high: vec![55.0],
            state_low: vec![-2.0, -2.0, -2.0, -70.0],
            state_high: vec![2.0, 2.0, 2.0, 5.0],
            qw: Matrix::identity(4).scale(0.1),
            r: Matrix::diag(&[1e-4]),
            horizon: 2,
            safety_penalty: 1e5,
            init_low: vec![-0.5, -0.5, -0.5, -10.0],
            init_high: vec![0.5, 0.5, 0.5, 2.0],
            pendulum: PendulumParams::default(),
            cstr: CstrParams::default(),
        }
    }

    pub fn by_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Pendulum => EnvSpec::pendulum(),
            EnvKind::Cstr => EnvSpec::cstr(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_low.len()
    }

    pub fn action_dim(&self) -> usize {
        self.u_low.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = match self.kind {
            EnvKind::Pendulum => 2,
            EnvKind::Cstr => 4,
        };
        if !(self.dt > 0.0) {
            return Err(Error::arg("dt must be positive"));
        }
        if self.state_low.len() != n
            || self.state_high.len() != n
            || self.init_low.len() != n
            || self.init_high.len() != n
            || self.qw.shape() != (n, n)
        {
            return Err(Error::arg(format!(
                "state-sized fields must have length {n}"
            )));
        }
        if self.u_low.len() != 1 || self.u_high.len() != 1 || self.r.shape() != (1, 1) {
            return Err(Error::arg("both plants take a single input"));
        }
        let ordered = |lo: &[f64], hi: &[f64]| lo.iter().zip(hi).all(|(l, h)| l < h);
        if !ordered(&self.u_low, &self.u_high) || !ordered(&self.state_low, &self.state_high) {
            return Err(Error::arg("bounds must satisfy low < high"));
        }
        if !self
            .init_low
            .iter()
            .zip(&self.init_high)
            .all(|(l, h)| l <= h)
        {
            return Err(Error::arg("initial-state box is inverted"));
        }
        let inside = self
            .init_low
            .iter()
            .zip(&self.state_low)
            .all(|(i, s)| i >= s)
            && self
                .init_high
                .iter()
                .zip(&self.state_high)
                .all(|(i, s)| i <= s);
        if !inside {
            return Err(Error::arg(
                "initial-state box must lie inside the state box",
            ));
        }
        if self.kind == EnvKind::Cstr && self.cstr.t_steady + self.init_high[3] > self.cstr.t_max {
            return Err(Error::arg(
                "initial-state box reaches the unsafe temperature range",
            ));
        }
        if self.steps_per_episode == 0 || self.horizon == 0 {
            return Err(Error::arg("steps_per_episode and horizon must be positive"));
        }
        Ok(())
    }

    /// `T > T_max` for the reactor; the pendulum has no unsafe set.
    pub fn is_unsafe(&self, s_dev: &[f64]) -> bool {
        match self.kind {
            EnvKind::Pendulum => false,
            EnvKind::Cstr => self.cstr.t_steady + s_dev[3] > self.cstr.t_max,
        }
    }

    pub fn clip_action(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.u_low.iter().zip(&self.u_high))
            .map(|(v, (l, h))| v.clamp(*l, *h))
            .collect()
    }
}

/// `sᵀ Qw s + uᵀ R u`, plus the safety penalty when `s_dev` is unsafe.
pub fn stage_cost(spec: &EnvSpec, s_dev: &[f64], u: &[f64]) -> f64 {
    let quad = |m: &Matrix, x: &[f64]| dot(x, &m.matvec(x).expect("dimension checked"));
    let mut c = quad(&spec.qw, s_dev) + quad(&spec.r, u);
    if spec.is_unsafe(s_dev) {
        c += spec.safety_penalty;
    }
    c
}

/// Initial deviation state for an episode; a pure function of the seed.
pub fn reset(spec: &EnvSpec, episode_seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed);
    spec.init_low
        .iter()
        .zip(&spec.init_high)
        .map(|(l, h)| if l == h { *l } else { rng.random_range(*l..*h) })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: Vec<f64>,
    /// Action after clipping to the input bounds.
    pub applied: Vec<f64>,
    pub cost: f64,
    /// The next state is unsafe.
    pub violation: bool,
    /// The integrator failed; the episode cannot continue.
    pub fault: bool,
    /// The episode ended for a reason other than the step limit.
    pub terminated: bool,
    /// The step limit was reached.
    pub truncated: bool,
}

/// One episode's worth of plant state. Cheap to clone.
#[derive(Debug, Clone)]
pub struct Env {
    spec: EnvSpec,
    steady: Option<CstrSteadyState>,
    state: Vec<f64>,
    t: usize,
}

impl Env {
    pub fn new(spec: EnvSpec) -> Result<Self> {
        spec.validate()?;
        let steady = match spec.kind {
            EnvKind::Pendulum => None,
            EnvKind::Cstr => Some(spec.cstr.steady_state()),
        };
        let state = vec![0.0; spec.state_dim()];
        Ok(Env {
            spec,
            steady,
            state,
            t: 0,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn steady_state(&self) -> Option<&CstrSteadyState> {
        self.steady.as_ref()
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn time_step(&self) -> usize {
        self.t
    }

    pub fn reset(&mut self, episode_seed: u64) -> Vec<f64> {
        self.set_state(&reset(&self.spec, episode_seed));
        self.state.clone()
    }

    pub fn set_state(&mut self, s_dev: &[f64]) {
        self.state = s_dev.to_vec();
        self.t = 0;
    }

    /// Cost is charged on the current state and applied action; entering the
    /// unsafe set adds the penalty to the same step and terminates.
    pub fn step(&mut self, u: &[f64]) -> StepOutcome {
        let applied = self.spec.clip_action(u);
        let base = stage_cost(&self.spec, &self.state, &applied);
        let next = match self.spec.kind {
            EnvKind::Pendulum => Ok(pendulum_step(
                &self.spec.pendulum,
                &self.state,
                applied[0],
                self.spec.dt,
            )),
            EnvKind::Cstr => {
                let ss = self.steady.as_ref().expect("reactor steady state");
                let abs: Vec<f64> = self
                    .state
                    .iter()
                    .zip(&ss.state)
                    .map(|(d, s)| d + s)
                    .collect();
                self.spec
                    .cstr
                    .step(ss, &abs, applied[0], self.spec.dt)
                    .map(|x| {
                        x.iter()
                            .zip(&ss.state)
                            .map(|(a, s)| a - s)
                            .collect::<Vec<f64>>()
                    })
            }
        };
        self.t += 1;
        let truncated = self.t >= self.spec.steps_per_episode;
        match next {
            Ok(next) if next.iter().all(|v| v.is_finite()) => {
                let violation = self.spec.is_unsafe(&next);
                let cost = if violation {
                    base + self.spec.safety_penalty
                } else {
                    base
                };
                self.state = next.clone();
                StepOutcome {
                    next,
                    applied,
                    cost,
                    violation,
                    fault: false,
                    terminated: violation,
                    truncated,
                }
            }
            _ => {
                log::warn!("integration failed at step {}", self.t);
                StepOutcome {
                    next: self.state.clone(),
                    applied,
                    cost: base + self.spec.safety_penalty,
                    violation: false,
                    fault: true,
                    terminated: true,
                    truncated,
                }
            }
        }
    }
}

/// Continuous linearization at the operating point, ZOH-discretized at `dt`.
pub fn linearize_plant(spec: &EnvSpec) -> Result<LinearSystem> {
    let (ac, bc) = match spec.kind {
        EnvKind::Pendulum => jacobian_linearize(&spec.pendulum, &[0.0, 0.0], &[0.0], 1e-6)?,
        EnvKind::Cstr => {
            let ss = spec.cstr.steady_state();
            let dev = CstrDeviation {
                params: &spec.cstr,
                steady: &ss,
            };
            jacobian_linearize(&dev, &[0.0; 4], &[0.0], 1e-6)?
        }
    };
    let (a, b) = zoh_discretize(&ac, &bc, spec.dt)?;
    LinearSystem::new(a, b, spec.dt)
}

/// Design model plus the regulator problem built on it.
///
/// The pendulum model is derived from the simulator and, at the default
/// parameters, must agree with the reference digits. The reactor uses the
/// reference model as is: the simulator's inlet conditions are stand-ins, so
/// its own linearization is only reported.
pub fn make_linear_design(spec: &EnvSpec) -> Result<(LinearSystem, MpcProblem)> {
    spec.validate()?;
    let sys = match spec.kind {
        EnvKind::Pendulum => {
            let sys = linearize_plant(spec)?;
            if spec.pendulum == PendulumParams::default() && spec.dt == 0.05 {
                let a_ref = Matrix::from_rows(&PENDULUM_REFERENCE_A)?;
                let b_ref = Matrix::column(&PENDULUM_REFERENCE_B);
                let err = (&sys.a - &a_ref).max_abs().max((&sys.b - &b_ref).max_abs());
                if err > REFERENCE_TOL {
                    return Err(Error::numeric(format!(
                        "pendulum linearization is off the reference by {err:e}"
                    )));
                }
            }
            sys
        }
        EnvKind::Cstr => LinearSystem::new(
            Matrix::from_rows(&CSTR_DESIGN_A)?,
            Matrix::column(&CSTR_DESIGN_B),
            spec.dt,
        )?,
    };
    let mpc = build_mpc(
        sys.clone(),
        spec.qw.clone(),
        spec.r.clone(),
        spec.horizon,
        Polytope::from_box(&spec.state_low, &spec.state_high)?,
        Polytope::from_box(&spec.u_low, &spec.u_high)?,
        None,
    )?;
    Ok((sys, mpc))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub cost: f64,
    pub violation: bool,
}

/// `t,s0..,u0..,cost,violation`, floats in shortest round-trip form.
pub fn write_trajectory_csv<W: Write>(mut w: W, records: &[TrajectoryRecord]) -> Result<()> {
    let (n, m) = records
        .first()
        .map(|r| (r.state.len(), r.action.len()))
        .unwrap_or((0, 0));
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("s{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    header.extend(["cost".into(), "violation".into()]);
    writeln!(w, "{}", header.join(","))?;
    for r in records {
        let mut row = vec![r.t.to_string()];
        row.extend(r.state.iter().chain(&r.action).map(|v| v.to_string()));
        row.push(r.cost.to_string());
        row.push(u8::from(r.violation).to_string());
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
