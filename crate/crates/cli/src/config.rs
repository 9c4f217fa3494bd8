use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use yann_core::envs::{EnvKind, EnvSpec};
use yann_core::rl::{AgentConfig, AgentKind};

use crate::error::{CliError, Result};

/// Only the output directory may come from the environment.
pub const OUT_ENV: &str = "YANN_OUT";

/// Everything one run depends on. Zero-block sizes live in
/// `agent.actor_hidden` / `agent.critic_hidden` / `agent.init_scale`;
/// their seeds derive from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvKind,
    /// Agent used by `train` and `evaluate`.
    pub agent: AgentKind,
    /// Agents compared by `benchmark`, in column order.
    pub benchmark_agents: Vec<AgentKind>,
    pub env_spec: EnvSpec,
    /// `agent.seed` is overwritten by the master `seed`.
    #[serde(rename = "agent_config")]
    pub agent_cfg: AgentConfig,
    pub train_episodes: usize,
    pub eval_episodes: usize,
    /// Save weights every this many training episodes; 0 disables.
    pub checkpoint_every: usize,
    pub out: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    pub fn for_env(env: EnvKind) -> Self {
        RunConfig {
            env,
            agent: AgentKind::YannDdpg,
            benchmark_agents: vec![AgentKind::YannDdpg, AgentKind::Ddpg],
            env_spec: EnvSpec::by_kind(env),
            agent_cfg: AgentConfig::for_env(env),
            train_episodes: 50,
            eval_episodes: 10,
            checkpoint_every: 10,
            out: PathBuf::from("out"),
            seed: 0,
        }
    }

    /// Defaults for the chosen environment, then the file, then the
    /// `key.path=value` overrides in order.
    pub fn resolve(file: Option<&Value>, overrides: &[String]) -> Result<Self> {
        let overrides: Vec<(String, Value)> = overrides
            .iter()
            .map(|o| parse_override(o))
            .collect::<Result<_>>()?;
        let env_value = overrides
            .iter()
            .rev()
            .find(|(k, _)| k == "env")
            .map(|(_, v)| v.clone())
            .or_else(|| file.and_then(|f| f.get("env").cloned()));
        let env = match env_value {
            Some(v) => {
                serde_json::from_value(v).map_err(|e| CliError::Config(format!("env: {e}")))?
            }
            None => EnvKind::Pendulum,
        };
        let mut merged = serde_json::to_value(RunConfig::for_env(env)).expect("config serializes");
        if let Some(f) = file {
            if !f.is_object() {
                return Err(CliError::Config(
                    "config file must hold a JSON object".into(),
                ));
            }
            merge(&mut merged, f);
        }
        for (k, v) in overrides {
            set_path(&mut merged, &k, v)?;
        }
        let mut cfg: RunConfig =
            serde_json::from_value(merged).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.agent_cfg.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::resolve(Some(&v), overrides)
    }

    pub fn validate(&self) -> Result<()> {
        if self.env_spec.kind != self.env {
            return Err(CliError::Config(format!(
                "env_spec.kind does not match env {:?}",
                self.env
            )));
        }
        self.env_spec
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.agent_cfg
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.eval_episodes == 0 {
            return Err(CliError::Config("eval_episodes must be positive".into()));
        }
        if self.benchmark_agents.is_empty() {
            return Err(CliError::Config("benchmark_agents is empty".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of everything except the output
    /// directory, truncated to 16 hex digits.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("object").remove("out");
        let digest = Sha256::digest(v.to_string().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// `a.b.c=value`; the value is read as JSON when it parses, otherwise as a
/// bare string.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{s}' is not key=value")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(CliError::Config(format!("override '{s}' has an empty key")));
    }
    let v = serde_json::from_str(v.trim()).unwrap_or_else(|_| Value::String(v.trim().to_string()));
    Ok((k.to_string(), v))
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn set_path(root: &mut Value, path: &str, v: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if !map.contains_key(*part) {
                    return Err(CliError::Config(format!("unknown config key '{path}'")));
                }
                let slot = map.get_mut(*part).expect("checked");
                if last {
                    *slot = v;
                    return Ok(());
                }
                slot
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| {
                    CliError::Config(format!("'{part}' in '{path}' is not an index"))
                })?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    CliError::Config(format!("index {idx} out of range ({len}) in '{path}'"))
                })?;
                if last {
                    *slot = v;
                    return Ok(());
                }
                slot
            }
            _ => return Err(CliError::Config(format!("'{path}' descends into a scalar"))),
        };
    }
    unreachable!("loop returns on the last component")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cstr_defaults_follow_the_env_override() {
        let cfg = RunConfig::resolve(None, &["env=cstr".into()]).unwrap();
        assert_eq!(cfg.env_spec, EnvSpec::cstr());
        assert_eq!(cfg.agent_cfg.actor_hidden, 8);
        assert_eq!((cfg.train_episodes, cfg.eval_episodes), (50, 10));
    }

    #[test]
    fn overrides_apply_in_order() {
        let file: Value = serde_json::json!({"seed": 4, "agent_config": {"gamma": 0.9}});
        let cfg = RunConfig::resolve(
            Some(&file),
            &[
                "agent_config.lr_actor=0.5".into(),
                "seed=7".into(),
                "env_spec.init_high.1=0.25".into(),
                "agent=ddpg".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.agent_cfg.gamma, 0.9);
        assert_eq!(cfg.agent_cfg.lr_actor, 0.5);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.agent_cfg.seed, 7);
        assert_eq!(cfg.env_spec.init_high, vec![1.0, 0.25]);
        assert_eq!(cfg.agent, AgentKind::Ddpg);
    }

    #[test]
    fn bad_configs_are_config_errors() {
        for o in [
            "nope=1",
            "seed",
            "agent_config.gamma=2",
            "env=moon",
            "env_spec.u_low.5=1",
        ] {
            let e = RunConfig::resolve(None, &[o.into()]).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{o}: {e}");
        }
        let e = RunConfig::resolve(Some(&serde_json::json!({"typo": 1})), &[]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn hash_ignores_out_but_not_seed() {
        let a = RunConfig::resolve(None, &[]).unwrap();
        let mut b = a.clone();
        b.out = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::resolve(None, &["seed=1".into()]).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn round_trips_through_json() {
        let a = RunConfig::resolve(None, &["env=cstr".into(), "seed=3".into()]).unwrap();
        let v: Value = serde_json::from_str(&a.to_json_pretty()).unwrap();
        assert_eq!(RunConfig::resolve(Some(&v), &[]).unwrap(), a);
    }
}
