use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use yann_cli::config::OUT_ENV;
use yann_cli::{commands, CliError, Run, RunConfig};

#[derive(Parser)]
#[command(
    name = "yann",
    version,
    about = "Explicit MPC → exact networks → actor-critic training"
)]
struct Cli {
    /// JSON run configuration; unspecified fields take the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (also settable through YANN_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// pendulum | cstr
    #[arg(long, global = true)]
    env: Option<String>,
    /// yann-ddpg | ddpg
    #[arg(long, global = true)]
    agent: Option<String>,
    /// Dotted-path override, e.g. `--set agent_config.lr_actor=3e-4`.
    #[arg(long = "set", short = 's', global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Linearize, build the mp-QP, solve it, and write the networks.
    Design,
    /// Train the configured agent.
    Train,
    /// Evaluate, train, and re-evaluate every benchmark agent.
    Benchmark,
    /// Run the evaluation episodes.
    Evaluate {
        /// Actor weights to load instead of a fresh actor.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Also write one trajectory CSV per episode.
        #[arg(long)]
        trace: bool,
    },
    /// Run the exactness, solver and gradient self-checks.
    Verify {
        /// Extra network files to check for exactness.
        #[arg(long)]
        weights: Vec<PathBuf>,
    },
    /// Evaluate the explicit law at one parameter vector.
    PwaEval {
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        theta: Vec<f64>,
    },
    /// Evaluate a saved network at one input.
    NetEval {
        #[arg(long)]
        net: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        input: Vec<f64>,
    },
    /// Print the resolved configuration and its hash.
    Config,
}

fn resolve(cli: &Cli) -> yann_cli::Result<RunConfig> {
    let mut overrides = Vec::new();
    if let Some(e) = &cli.env {
        overrides.push(format!("env={e}"));
    }
    if let Some(a) = &cli.agent {
        overrides.push(format!("agent={a}"));
    }
    overrides.extend(cli.set.iter().cloned());
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p, &overrides)?,
        None => RunConfig::resolve(None, &overrides)?,
    };
    if let Some(o) = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
    {
        cfg.out = o;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> yann_cli::Result<()> {
    if let Cmd::NetEval { net, input } = &cli.cmd {
        let y = commands::cmd_net_eval(net, input)?;
        println!("{}", serde_json::to_string(&y).expect("floats"));
        return Ok(());
    }
    let cfg = resolve(&cli)?;
    if let Cmd::Config = cli.cmd {
        println!("# config_hash={}\n{}", cfg.hash(), cfg.to_json_pretty());
        return Ok(());
    }
    let run = Run::new(cfg)?;
    println!(
        "config_hash={} seed={} out={}",
        run.out.provenance.config_hash,
        run.cfg.seed,
        run.out.root.display()
    );
    match &cli.cmd {
        Cmd::Design => {
            let s = commands::cmd_design(&run)?;
            for l in s.lines() {
                println!("{l}");
            }
        }
        Cmd::Train => {
            let log = commands::cmd_train(&run)?;
            for e in &log.episodes {
                println!(
                    "episode {:>3}: cost {:>12.3}  violations {}",
                    e.episode + 1,
                    e.total_cost,
                    e.violations
                );
            }
            println!("safety violations: {}", log.total_violations());
        }
        Cmd::Benchmark => {
            let s = commands::cmd_benchmark(&run)?;
            print!("{}", s.table);
        }
        Cmd::Evaluate { weights, trace } => {
            let res = commands::cmd_evaluate(&run, weights.as_deref(), *trace)?;
            for (i, r) in res.iter().enumerate() {
                println!(
                    "episode {:>2}: cost {:>12.3}{}",
                    i + 1,
                    r.total_cost,
                    if r.violation { "  UNSAFE" } else { "" }
                );
            }
            println!(
                "average: {:.3}",
                res.iter().map(|r| r.total_cost).sum::<f64>() / res.len() as f64
            );
        }
        Cmd::Verify { weights } => {
            let checks = commands::cmd_verify(&run, weights)?;
            for c in &checks {
                println!("{}", c.line());
            }
            let failed: Vec<&str> = checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name.as_str())
                .collect();
            if !failed.is_empty() {
                return Err(CliError::Verification(failed.join(", ")));
            }
            println!("all {} checks passed", checks.len());
        }
        Cmd::PwaEval { theta } => match commands::cmd_pwa_eval(&run, theta)? {
            Some((r, u)) => println!(
                "region: {r}\nu: {}",
                serde_json::to_string(&u).expect("floats")
            ),
            None => println!("outside every region"),
        },
        Cmd::NetEval { .. } | Cmd::Config => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
