use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub cli_version: String,
    pub core_version: String,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        Provenance {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            cli_version: env!("CARGO_PKG_VERSION").to_string(),
            core_version: yann_core::VERSION.to_string(),
        }
    }

    /// First line of every CSV we write.
    pub fn csv_comment(&self) -> String {
        format!(
            "# config_hash={} seed={} cli={} core={}\n",
            self.config_hash, self.seed, self.cli_version, self.core_version
        )
    }
}

/// JSON file layout: the payload under `data`, stamped with provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub provenance: Provenance,
    pub data: T,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes files under one output directory, all stamped alike.
#[derive(Debug, Clone)]
pub struct OutDir {
    pub root: PathBuf,
    pub provenance: Provenance,
}

impl OutDir {
    pub fn create(root: &Path, provenance: Provenance) -> Result<Self> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            provenance,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, data: &T) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let art = Artifact {
            provenance: self.provenance.clone(),
            data,
        };
        let text = serde_json::to_string_pretty(&art).map_err(|e| CliError::Stage {
            stage: "write",
            source: e.into(),
        })?;
        fs::write(&path, text + "\n").map_err(io_err(&path))?;
        Ok(path)
    }

    /// `body` is the CSV without the provenance line.
    pub fn write_csv(&self, name: &str, body: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        let mut bytes = self.provenance.csv_comment().into_bytes();
        bytes.extend_from_slice(body);
        fs::write(&path, bytes).map_err(io_err(&path))?;
        Ok(path)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(path)
    }
}

/// Reads either a stamped artifact or a bare payload.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Stage {
        stage: "read",
        source: e.into(),
    })?;
    let payload = match v {
        serde_json::Value::Object(mut m)
            if m.contains_key("provenance") && m.contains_key("data") =>
        {
            m.remove("data").expect("checked")
        }
        other => other,
    };
    serde_json::from_value(payload).map_err(|e| CliError::Stage {
        stage: "read",
        source: e.into(),
    })
}
