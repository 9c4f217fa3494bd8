use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use crate::envs::{make_linear_design, EnvKind, EnvSpec};
use crate::error::{Error, Result};
use crate::linctl::{condense, LinearSystem, MpQpProblem, MpcProblem};
use crate::mpqp::{solve_mpqp, PwaFunction};
use crate::numerics::Polytope;
use crate::yann::{
    build_mlp, build_yann_actor_with, build_yann_critic_scaled, Activation, ActorOptions, Network,
    Node, Op, ZeroBlockSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Ddpg,
    YannDdpg,
}

impl std::str::FromStr for AgentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpg" => Ok(AgentKind::Ddpg),
            "yann-ddpg" => Ok(AgentKind::YannDdpg),
            _ => Err(Error::arg(format!("unknown agent '{s}'"))),
        }
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AgentKind::Ddpg => "ddpg",
            AgentKind::YannDdpg => "yann-ddpg",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub tau_actor: f64,
    pub tau_critic: f64,
    pub batch: usize,
    pub buffer_capacity: usize,
    /// Gaussian exploration noise of the baseline, as a fraction of the
    /// input range.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Hidden width of each per-region zero block in the YANN-actor.
    pub actor_hidden: usize,
    /// Hidden width of the YANN-critic's zero block.
    pub critic_hidden: usize,
    pub init_scale: f64,
    pub train_linear_laws: bool,
    /// Let training adjust the critic's quadratic coefficients too. Off by
    /// default: on-policy data never identifies the u-curvature, and Adam
    /// moves those small coefficients at full rate.
    pub train_quadratic: bool,
    /// Frozen scaling of `(s, u)` before the critic's correction block; raw
    /// inputs when absent.
    pub critic_input_scale: Option<Vec<f64>>,
    /// Hidden widths of the baseline actor and critic.
    pub ddpg_hidden: Vec<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            lr_actor: 1e-4,
            lr_critic: 1e-3,
            tau_actor: 0.005,
            tau_critic: 0.005,
            batch: 64,
            buffer_capacity: 1_000_000,
            noise_sigma: 0.1,
            seed: 0,
            actor_hidden: 16,
            critic_hidden: 64,
            init_scale: 0.01,
            train_linear_laws: false,
            train_quadratic: false,
            critic_input_scale: None,
            ddpg_hidden: vec![256, 256],
        }
    }
}

impl AgentConfig {
    pub fn for_env(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Pendulum => AgentConfig::default(),
            EnvKind::Cstr => AgentConfig {
                actor_hidden: 8,
                ..Default::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::arg("gamma must be in (0, 1]"));
        }
        for (name, tau) in [
            ("tau_actor", self.tau_actor),
            ("tau_critic", self.tau_critic),
        ] {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::arg(format!("{name} must be in (0, 1]")));
            }
        }
        if self.batch == 0 || self.buffer_capacity < self.batch {
            return Err(Error::arg("need 1 ≤ batch ≤ buffer_capacity"));
        }
        if !(self.lr_actor >= 0.0 && self.lr_critic >= 0.0 && self.noise_sigma >= 0.0) {
            return Err(Error::arg("learning rates and noise must be non-negative"));
        }
        if self.actor_hidden == 0 || self.critic_hidden == 0 {
            return Err(Error::arg("zero-block widths must be positive"));
        }
        Ok(())
    }
}

/// Independent stream for a purpose tag, so adding a consumer of
/// randomness never shifts another.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(tag);
    rng.next_u64()
}

pub(crate) const SEED_ACTOR: u64 = 1;
pub(crate) const SEED_CRITIC: u64 = 2;
pub(crate) const SEED_REPLAY: u64 = 3;
pub(crate) const SEED_NOISE: u64 = 4;
pub(crate) const SEED_TRAIN_EPISODES: u64 = 5;
pub(crate) const SEED_EVAL_EPISODES: u64 = 6;

/// Offline part of the pipeline: linear model, regulator, mp-QP and its
/// explicit solution.
#[derive(Debug, Clone)]
pub struct Design {
    pub spec: EnvSpec,
    pub sys: LinearSystem,
    pub mpc: MpcProblem,
    pub mp: MpQpProblem,
    pub pwa: PwaFunction,
}

pub fn build_design(spec: &EnvSpec) -> Result<Design> {
    let (sys, mpc) = make_linear_design(spec)?;
    let mp = condense(&mpc)?;
    let pwa = solve_mpqp(&mp)?;
    Ok(Design {
        spec: spec.clone(),
        sys,
        mpc,
        mp,
        pwa,
    })
}

/// A network wrapped with the state clamp and action saturation used
/// whenever it drives the plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub net: Network,
    /// Clamp box for the network input (the offline parameter box).
    pub clamp: Option<(Vec<f64>, Vec<f64>)>,
    pub u_low: Vec<f64>,
    pub u_high: Vec<f64>,
}

impl Policy {
    pub fn input(&self, s: &[f64]) -> Vec<f64> {
        match &self.clamp {
            Some((lo, hi)) => s
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| v.clamp(*l, *h))
                .collect(),
            None => s.to_vec(),
        }
    }

    /// Saturated action and, per component, whether it is inside the
    /// bounds (where the saturation has unit derivative).
    pub fn act_with_mask(&self, s: &[f64]) -> Result<(Vec<f64>, Vec<bool>)> {
        let raw = self.net.forward(&self.input(s))?;
        let mut free = Vec::with_capacity(raw.len());
        let u = raw
            .iter()
            .zip(self.u_low.iter().zip(&self.u_high))
            .map(|(v, (l, h))| {
                free.push(v >= l && v <= h);
                v.clamp(*l, *h)
            })
            .collect();
        Ok((u, free))
    }

    pub fn act(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self.act_with_mask(s)?.0)
    }
}

/// Online and target networks with their optimizers.
#[derive(Debug, Clone)]
pub struct Agent {
    pub kind: AgentKind,
    pub actor: Policy,
    pub critic: Network,
    pub target_actor: Policy,
    pub target_critic: Network,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

pub fn build_yann_policy(design: &Design, cfg: &AgentConfig) -> Result<Policy> {
    let spec = &design.spec;
    let opts = ActorOptions {
        hidden: cfg.actor_hidden,
        init_scale: cfg.init_scale,
        seed: derive_seed(cfg.seed, SEED_ACTOR),
        train_linear_laws: cfg.train_linear_laws,
    };
    let u_poly = Polytope::from_box(&spec.u_low, &spec.u_high)?;
    let net = build_yann_actor_with(&design.pwa, &opts, &u_poly)?;
    Ok(Policy {
        net,
        clamp: Some((spec.state_low.clone(), spec.state_high.clone())),
        u_low: spec.u_low.clone(),
        u_high: spec.u_high.clone(),
    })
}

pub fn build_yann_critic_for(design: &Design, cfg: &AgentConfig) -> Result<Network> {
    let n = design.sys.state_dim() + design.sys.input_dim();
    let zs = ZeroBlockSpec {
        in_dim: n,
        hidden: cfg.critic_hidden,
        out_dim: 1,
        init_scale: cfg.init_scale,
        rng_seed: derive_seed(cfg.seed, SEED_CRITIC),
    };
    let mut net = build_yann_critic_scaled(
        &design.sys,
        &design.mpc.qw,
        &design.mpc.r,
        &design.mpc.p,
        cfg.gamma,
        &zs,
        cfg.critic_input_scale.as_deref(),
    )?;
    if !cfg.train_quadratic {
        if let Some(Node {
            op: Op::Affine(a), ..
        }) = net.node_mut("quad.coeff")
        {
            a.set_trainable(false);
        }
    }
    Ok(net)
}

impl Agent {
    pub fn new(kind: AgentKind, design: &Design, cfg: &AgentConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = &design.spec;
        let n = spec.state_dim();
        let m = spec.action_dim();
        let (actor, critic) = match kind {
            AgentKind::YannDdpg => (
                build_yann_policy(design, cfg)?,
                build_yann_critic_for(design, cfg)?,
            ),
            AgentKind::Ddpg => {
                if spec.u_low.iter().zip(&spec.u_high).any(|(l, h)| *l != -*h) {
                    return Err(Error::arg(
                        "the baseline actor assumes symmetric input bounds",
                    ));
                }
                let net = build_mlp(
                    n,
                    &cfg.ddpg_hidden,
                    m,
                    Activation::Relu,
                    Some(&spec.u_high),
                    derive_seed(cfg.seed, SEED_ACTOR),
                )?;
                let critic = build_mlp(
                    n + m,
                    &cfg.ddpg_hidden,
                    1,
                    Activation::Relu,
                    None,
                    derive_seed(cfg.seed, SEED_CRITIC),
                )?;
                (
                    Policy {
                        net,
                        clamp: None,
                        u_low: spec.u_low.clone(),
                        u_high: spec.u_high.clone(),
                    },
                    critic,
                )
            }
        };
        Ok(Agent {
            kind,
            actor_opt: Adam::for_network(&actor.net),
            critic_opt: Adam::for_network(&critic),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
        })
    }
}
