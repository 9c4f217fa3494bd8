use std::path::{Path, PathBuf};

use serde::Serialize;
use yann_core::envs::{write_trajectory_csv, TrajectoryRecord};
use yann_core::mpqp::{evaluate_pwa, locate_region, PwaFunction};
use yann_core::rl::{
    build_design, evaluate, rollout, train_with, Agent, AgentConfig, AgentKind, Design,
    EpisodeResult, EpisodeSet, Policy, TrainingLog,
};
use yann_core::yann::{build_exact_yann, Network, ParamCount};

use crate::artifacts::{read_json, OutDir, Provenance};
use crate::config::RunConfig;
use crate::error::{CliError, Result, StageExt};
use crate::report::{render_table, BenchmarkReport};
use crate::verify::{self, Check};

/// A resolved config plus the directory its outputs go to.
#[derive(Debug, Clone)]
pub struct Run {
    pub cfg: RunConfig,
    pub out: OutDir,
}

impl Run {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let out = OutDir::create(&cfg.out, Provenance::of(&cfg))?;
        Ok(Run { cfg, out })
    }

    fn agent_cfg(&self) -> AgentConfig {
        AgentConfig {
            seed: self.cfg.seed,
            ..self.cfg.agent_cfg.clone()
        }
    }

    fn design(&self) -> Result<Design> {
        build_design(&self.cfg.env_spec).stage("design")
    }

    fn eval_set(&self) -> EpisodeSet {
        EpisodeSet::evaluation(self.cfg.seed, self.cfg.eval_episodes)
    }

    fn train_set(&self) -> EpisodeSet {
        EpisodeSet::training(self.cfg.seed, self.cfg.train_episodes)
    }
}

fn file_tag(kind: AgentKind) -> String {
    kind.to_string()
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignSummary {
    pub regions: usize,
    pub exact: ParamCount,
    pub actor: ParamCount,
    pub critic: ParamCount,
    pub files: Vec<PathBuf>,
}

impl DesignSummary {
    pub fn lines(&self) -> Vec<String> {
        vec![
            format!("regions: {}", self.regions),
            format!("exact YANN params: {}", self.exact.total),
            format!(
                "actor params: {} (trainable {})",
                self.actor.total, self.actor.trainable
            ),
            format!(
                "critic params: {} (trainable {})",
                self.critic.total, self.critic.trainable
            ),
        ]
    }
}

/// Offline pipeline: writes every stage's artifact and the fresh networks.
pub fn cmd_design(run: &Run) -> Result<DesignSummary> {
    let design = run.design()?;
    let exact = build_exact_yann(&design.pwa).stage("exact YANN")?;
    let agent = Agent::new(AgentKind::YannDdpg, &design, &run.agent_cfg()).stage("YANN agent")?;
    let o = &run.out;
    let files = vec![
        o.write_json("config.json", &run.cfg)?,
        o.write_json("linear_system.json", &design.sys)?,
        o.write_json("mpc.json", &design.mpc)?,
        o.write_json("mpqp.json", &design.mp)?,
        o.write_json("pwa.json", &design.pwa)?,
        o.write_json("exact_yann.json", &exact)?,
        o.write_json("actor.json", &agent.actor.net)?,
        o.write_json("critic.json", &agent.critic)?,
    ];
    Ok(DesignSummary {
        regions: design.pwa.len(),
        exact: exact.param_count(),
        actor: agent.actor.net.param_count(),
        critic: agent.critic.param_count(),
        files,
    })
}

/// Trains `kind` on the configured episodes, checkpointing as it goes.
fn train_agent(run: &Run, design: &Design, kind: AgentKind) -> Result<(Agent, TrainingLog)> {
    let cfg = run.agent_cfg();
    let mut agent = Agent::new(kind, design, &cfg).stage("agent")?;
    let every = run.cfg.checkpoint_every;
    let tag = file_tag(kind);
    let mut write_err = None;
    let log = train_with(
        &run.cfg.env_spec,
        &mut agent,
        &cfg,
        &run.train_set(),
        |e, a| {
            if every > 0 && (e.episode + 1) % every == 0 {
                let name = format!("checkpoints/{tag}_ep{:03}", e.episode + 1);
                let res = run
                    .out
                    .write_json(&format!("{name}_actor.json"), &a.actor.net)
                    .and_then(|_| {
                        run.out
                            .write_json(&format!("{name}_critic.json"), &a.critic)
                    });
                if let Err(err) = res {
                    write_err.get_or_insert(err);
                }
            }
            Ok(())
        },
    )
    .stage("training")?;
    if let Some(e) = write_err {
        return Err(e);
    }
    let mut csv = Vec::new();
    log.write_csv(&mut csv).stage("training log")?;
    run.out.write_csv(&format!("train_{tag}.csv"), &csv)?;
    run.out
        .write_json(&format!("actor_{tag}.json"), &agent.actor.net)?;
    run.out
        .write_json(&format!("critic_{tag}.json"), &agent.critic)?;
    Ok((agent, log))
}

pub fn cmd_train(run: &Run) -> Result<TrainingLog> {
    let design = run.design()?;
    Ok(train_agent(run, &design, run.cfg.agent)?.1)
}

fn eval_csv(results: &[EpisodeResult]) -> Vec<u8> {
    let mut s = String::from("episode,seed,total_cost,steps,violation,fault\n");
    for (i, r) in results.iter().enumerate() {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i + 1,
            r.seed,
            r.total_cost,
            r.steps,
            u8::from(r.violation),
            u8::from(r.fault)
        ));
    }
    s.into_bytes()
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkSuite {
    pub reports: Vec<BenchmarkReport>,
    pub table: String,
}

/// Fresh agent on the evaluation set, training, then the same set again;
/// once per configured agent.
pub fn cmd_benchmark(run: &Run) -> Result<BenchmarkSuite> {
    let design = run.design()?;
    let spec = &run.cfg.env_spec;
    let ev = run.eval_set();
    let mut reports = Vec::new();
    for &kind in &run.cfg.benchmark_agents {
        let fresh = Agent::new(kind, &design, &run.agent_cfg()).stage("agent")?;
        let initial = evaluate(spec, &fresh.actor, &ev).stage("initial evaluation")?;
        let (agent, log) = train_agent(run, &design, kind)?;
        let fin = evaluate(spec, &agent.actor, &ev).stage("final evaluation")?;
        let report = BenchmarkReport::new(
            run.cfg.env,
            kind,
            &initial,
            &fin,
            log.total_violations(),
            log.episodes.len(),
            run.out.provenance.clone(),
        );
        let tag = file_tag(kind);
        run.out.write_csv(
            &format!("benchmark_{tag}.csv"),
            report.rows_csv().as_bytes(),
        )?;
        reports.push(report);
    }
    let table = render_table(&reports);
    run.out.write_json("benchmark.json", &reports)?;
    run.out.write_text(
        "benchmark.txt",
        &format!(
            "# config_hash={} seed={}\n{table}",
            run.out.provenance.config_hash, run.cfg.seed
        ),
    )?;
    Ok(BenchmarkSuite { reports, table })
}

fn policy_for(run: &Run, design: &Design, net: Network) -> Result<Policy> {
    let mut p = Agent::new(run.cfg.agent, design, &run.agent_cfg())
        .stage("agent")?
        .actor;
    if p.net.input_dim != net.input_dim || p.net.output_dim() != net.output_dim() {
        return Err(CliError::Config(
            "weights do not fit the configured environment".into(),
        ));
    }
    p.net = net;
    Ok(p)
}

/// Evaluation set with the configured agent, fresh or loaded from
/// `weights`. With `trace`, one trajectory CSV per episode.
pub fn cmd_evaluate(run: &Run, weights: Option<&Path>, trace: bool) -> Result<Vec<EpisodeResult>> {
    let design = run.design()?;
    let policy = match weights {
        Some(path) => policy_for(run, &design, read_json(path)?)?,
        None => {
            Agent::new(run.cfg.agent, &design, &run.agent_cfg())
                .stage("agent")?
                .actor
        }
    };
    let ev = run.eval_set();
    let results = evaluate(&run.cfg.env_spec, &policy, &ev).stage("evaluation")?;
    let tag = file_tag(run.cfg.agent);
    run.out
        .write_csv(&format!("eval_{tag}.csv"), &eval_csv(&results))?;
    if trace {
        for (i, &seed) in ev.seeds.iter().enumerate() {
            let mut rec: Vec<TrajectoryRecord> = Vec::new();
            rollout(&run.cfg.env_spec, &policy, seed, Some(&mut rec)).stage("evaluation")?;
            let mut buf = Vec::new();
            write_trajectory_csv(&mut buf, &rec).stage("trajectory")?;
            run.out
                .write_csv(&format!("traj_{tag}_{:02}.csv", i + 1), &buf)?;
        }
    }
    Ok(results)
}

/// Runs the self-checks; saved `exact_yann.json` / `actor.json` in the
/// output directory and any `extra` weight files are checked for
/// exactness too.
pub fn cmd_verify(run: &Run, extra: &[PathBuf]) -> Result<Vec<Check>> {
    let design = run.design()?;
    let mut saved = Vec::new();
    let mut files: Vec<PathBuf> = ["exact_yann.json", "actor.json"]
        .iter()
        .map(|f| run.out.path(f))
        .filter(|p| p.exists())
        .collect();
    files.extend(extra.iter().cloned());
    let mut checks = Vec::new();
    for f in files {
        let label = f
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        match read_json::<Network>(&f) {
            Ok(net) => saved.push((label, net)),
            Err(e) => checks.push(Check {
                name: format!("exactness ({label})"),
                passed: false,
                value: f64::NAN,
                limit: f64::NAN,
                detail: e.to_string(),
            }),
        }
    }
    checks.extend(verify::run_all(&design, &run.agent_cfg(), &saved));
    run.out.write_json("verify.json", &checks)?;
    Ok(checks)
}

fn load_pwa(run: &Run) -> Result<PwaFunction> {
    let saved = run.out.path("pwa.json");
    if saved.exists() {
        read_json(&saved)
    } else {
        Ok(run.design()?.pwa)
    }
}

/// Region index and law value at `theta`; `None` outside every region.
pub fn cmd_pwa_eval(run: &Run, theta: &[f64]) -> Result<Option<(usize, Vec<f64>)>> {
    let pwa = load_pwa(run)?;
    if theta.len() != pwa.n_theta() {
        return Err(CliError::Config(format!(
            "expected {} parameter values, got {}",
            pwa.n_theta(),
            theta.len()
        )));
    }
    Ok(locate_region(&pwa, theta).map(|r| (r, evaluate_pwa(&pwa, theta).expect("located"))))
}

pub fn cmd_net_eval(net: &Path, input: &[f64]) -> Result<Vec<f64>> {
    let net: Network = read_json(net)?;
    if input.len() != net.input_dim {
        return Err(CliError::Config(format!(
            "network takes {} inputs, got {}",
            net.input_dim,
            input.len()
        )));
    }
    net.forward(input).stage("forward")
}
