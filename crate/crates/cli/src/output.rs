//! Data files with the run configuration embedded for provenance.
//!
//! CSV files start with `#`-prefixed lines holding the full configuration as
//! TOML; JSON summaries carry it under the `config` key.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{CliError, RunConfig};

pub const CONFIG_FILE: &str = "config.toml";

pub struct Output {
    dir: PathBuf,
    header: String,
    config: serde_json::Value,
}

impl Output {
    pub fn create(cfg: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&cfg.out).map_err(|e| CliError::Io(format!("cannot create {}: {e}", cfg.out.display())))?;
        let toml = cfg.to_toml();
        fs::write(cfg.out.join(CONFIG_FILE), &toml)?;
        let mut header = format!("# optofcs {}\n", env!("CARGO_PKG_VERSION"));
        for line in toml.lines() {
            header.push_str("# ");
            header.push_str(line);
            header.push('\n');
        }
        Ok(Self {
            dir: cfg.out.clone(),
            header,
            config: serde_json::to_value(cfg).expect("configuration serializes"),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Opens `name` for CSV output with the provenance header written.
    pub fn csv(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        w.write_all(self.header.as_bytes())?;
        Ok(w)
    }

    pub fn json<T: Serialize>(&self, name: &str, summary: &T) -> Result<(), CliError> {
        let mut value = serde_json::to_value(summary).map_err(|e| CliError::Io(e.to_string()))?;
        if let serde_json::Value::Object(map) = &mut value {
            map.insert("config".into(), self.config.clone());
        }
        let text = serde_json::to_string_pretty(&value).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(self.dir.join(name), text + "\n")?;
        Ok(())
    }
}

/// Recovers the configuration embedded in a CSV file written by [`Output`].
pub fn embedded_config(csv_text: &str) -> Option<RunConfig> {
    let toml: String = csv_text
        .lines()
        .skip(1)
        .map_while(|l| l.strip_prefix("# ").or_else(|| (l == "#").then_some("")))
        .map(|l| format!("{l}\n"))
        .collect();
    RunConfig::from_toml(&toml, None).ok()
}
