use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::config::Config;

/// key = value record of everything a run depended on.
pub struct Manifest {
    entries: Vec<(String, String)>,
    artifacts: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str, config: &Config, config_path: Option<&Path>) -> Self {
        let mut entries = vec![
            ("command".to_string(), command.to_string()),
            ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("core_version".to_string(), epr_revival::VERSION.to_string()),
            (
                "config_file".to_string(),
                config_path.map_or("(paper defaults)".to_string(), |p| p.display().to_string()),
            ),
        ];
        entries.extend(
            config
                .entries()
                .map(|(k, v)| (format!("config.{k}"), v.clone())),
        );
        Self {
            entries,
            artifacts: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn artifact(&mut self, path: PathBuf) {
        self.artifacts.push(path);
    }

    pub fn write(&self, dir: &Path, command: &str) -> Result<PathBuf> {
        let path = dir.join(format!("{command}.manifest"));
        let mut w = BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        for (k, v) in &self.entries {
            writeln!(w, "{k}={v}")?;
        }
        for (n, a) in self.artifacts.iter().enumerate() {
            writeln!(w, "artifact.{n}={}", a.display())?;
        }
        w.flush()?;
        Ok(path)
    }
}
