use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::agent::{
    derive_seed, Agent, AgentConfig, AgentKind, Policy, SEED_EVAL_EPISODES, SEED_NOISE,
    SEED_REPLAY, SEED_TRAIN_EPISODES,
};
use super::buffer::{ReplayBuffer, Transition};
use super::update::{actor_update, critic_update, polyak};
use crate::envs::{Env, EnvSpec, TrajectoryRecord};
use crate::error::{Error, Result};

/// Fixed reset seeds, so different agents face the same episodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSet {
    pub seeds: Vec<u64>,
}

impl EpisodeSet {
    pub fn evaluation(master_seed: u64, count: usize) -> Self {
        let base = derive_seed(master_seed, SEED_EVAL_EPISODES);
        EpisodeSet {
            seeds: (0..count as u64).map(|i| base.wrapping_add(i)).collect(),
        }
    }

    pub fn training(master_seed: u64, count: usize) -> Self {
        let base = derive_seed(master_seed, SEED_TRAIN_EPISODES);
        EpisodeSet {
            seeds: (0..count as u64).map(|i| base.wrapping_add(i)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub total_cost: f64,
    pub steps: usize,
    pub violation: bool,
    pub fault: bool,
}

/// Noise-free rollout of `policy` from the episode's reset state.
pub fn rollout(
    spec: &EnvSpec,
    policy: &Policy,
    seed: u64,
    mut trace: Option<&mut Vec<TrajectoryRecord>>,
) -> Result<EpisodeResult> {
    let mut env = Env::new(spec.clone())?;
    let mut s = env.reset(seed);
    let mut res = EpisodeResult {
        seed,
        total_cost: 0.0,
        steps: 0,
        violation: false,
        fault: false,
    };
    for t in 0..spec.steps_per_episode {
        let u = policy.act(&s)?;
        let out = env.step(&u);
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(TrajectoryRecord {
                t,
                state: s.clone(),
                action: out.applied.clone(),
                cost: out.cost,
                violation: out.violation,
            });
        }
        res.total_cost += out.cost;
        res.steps += 1;
        res.violation |= out.violation;
        res.fault |= out.fault;
        s = out.next;
        if out.terminated {
            break;
        }
    }
    Ok(res)
}

/// Per-episode costs over the set, in set order. Episodes run in parallel;
/// each has its own environment.
pub fn evaluate(
    spec: &EnvSpec,
    policy: &Policy,
    episodes: &EpisodeSet,
) -> Result<Vec<EpisodeResult>> {
    std::thread::scope(|sc| {
        let handles: Vec<_> = episodes
            .seeds
            .iter()
            .map(|&seed| sc.spawn(move || rollout(spec, policy, seed, None)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rollout panicked"))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub steps: usize,
    pub total_cost: f64,
    pub violations: usize,
    pub fault: bool,
    pub updates: usize,
    /// NaN when the episode ran no updates.
    pub mean_critic_loss: f64,
    pub mean_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub agent: AgentKind,
    pub steps_per_episode: usize,
    pub episodes: Vec<EpisodeLog>,
}

impl TrainingLog {
    pub fn total_violations(&self) -> usize {
        self.episodes.iter().map(|e| e.violations).sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "episode,steps,total_cost,violations,fault,updates,mean_critic_loss,mean_Q"
        )?;
        for e in &self.episodes {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                e.episode,
                e.steps,
                e.total_cost,
                e.violations,
                u8::from(e.fault),
                e.updates,
                e.mean_critic_loss,
                e.mean_q
            )?;
        }
        Ok(())
    }
}

/// Actor–critic loop: act, store, then (once the buffer holds a batch)
/// one critic step, one actor step and both target blends per plant step.
/// The YANN agent acts greedily; the baseline adds Gaussian noise.
pub fn train(
    spec: &EnvSpec,
    agent: &mut Agent,
    cfg: &AgentConfig,
    episodes: &EpisodeSet,
) -> Result<TrainingLog> {
    train_with(spec, agent, cfg, episodes, |_, _| Ok(()))
}

/// [`train`], calling `after_episode` once each episode is logged (for
/// checkpoints and progress output).
pub fn train_with<F>(
    spec: &EnvSpec,
    agent: &mut Agent,
    cfg: &AgentConfig,
    episodes: &EpisodeSet,
    mut after_episode: F,
) -> Result<TrainingLog>
where
    F: FnMut(&EpisodeLog, &Agent) -> Result<()>,
{
    cfg.validate()?;
    let mut env = Env::new(spec.clone())?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, derive_seed(cfg.seed, SEED_REPLAY))?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SEED_NOISE));
    let sigmas: Vec<f64> = spec
        .u_low
        .iter()
        .zip(&spec.u_high)
        .map(|(l, h)| cfg.noise_sigma * (h - l))
        .collect();
    let noise: Vec<Option<Normal<f64>>> = sigmas
        .iter()
        .map(|&s| {
            if s > 0.0 {
                Normal::new(0.0, s).ok()
            } else {
                None
            }
        })
        .collect();
    let mut log = TrainingLog {
        agent: agent.kind,
        steps_per_episode: spec.steps_per_episode,
        episodes: Vec::new(),
    };

    for (ep, &seed) in episodes.seeds.iter().enumerate() {
        let mut s = env.reset(seed);
        let mut e = EpisodeLog {
            episode: ep,
            steps: 0,
            total_cost: 0.0,
            violations: 0,
            fault: false,
            updates: 0,
            mean_critic_loss: 0.0,
            mean_q: 0.0,
        };
        for _ in 0..spec.steps_per_episode {
            let mut u = agent.actor.act(&s)?;
            if agent.kind == AgentKind::Ddpg {
                for (v, d) in u.iter_mut().zip(&noise) {
                    if let Some(d) = d {
                        *v += d.sample(&mut noise_rng);
                    }
                }
            }
            let out = env.step(&u);
            buffer.push(Transition {
                s: s.clone(),
                u: out.applied.clone(),
                cost: out.cost,
                s_next: out.next.clone(),
                terminal: out.terminated,
            })?;
            e.steps += 1;
            e.total_cost += out.cost;
            e.violations += usize::from(out.violation);
            e.fault |= out.fault;

            if buffer.len() >= cfg.batch {
                let batch = buffer.sample(cfg.batch)?;
                let loss = critic_update(
                    &mut agent.critic,
                    &mut agent.critic_opt,
                    &agent.target_actor,
                    &agent.target_critic,
                    &batch,
                    cfg.gamma,
                    cfg.lr_critic,
                )?;
                let q = actor_update(
                    &mut agent.actor,
                    &mut agent.actor_opt,
                    &agent.critic,
                    &batch,
                    cfg.lr_actor,
                )?;
                polyak(&mut agent.target_critic, &agent.critic, cfg.tau_critic)?;
                polyak(&mut agent.target_actor.net, &agent.actor.net, cfg.tau_actor)?;
                e.updates += 1;
                e.mean_critic_loss += loss;
                e.mean_q += q;
            }
            s = out.next;
            if out.terminated {
                if out.fault {
                    log::warn!("episode {ep}: plant fault, episode ended");
                }
                break;
            }
        }
        if e.updates > 0 {
            e.mean_critic_loss /= e.updates as f64;
            e.mean_q /= e.updates as f64;
        } else {
            e.mean_critic_loss = f64::NAN;
            e.mean_q = f64::NAN;
        }
        if !e.total_cost.is_finite() {
            return Err(Error::numeric(format!("episode {ep} cost is not finite")));
        }
        log::info!(
            "{} episode {ep}: cost {:.3}, violations {}",
            agent.kind,
            e.total_cost,
            e.violations
        );
        after_episode(&e, agent)?;
        log.episodes.push(e);
    }
    Ok(log)
}
