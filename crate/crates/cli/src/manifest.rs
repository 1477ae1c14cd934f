//! Run manifests: the resolved config plus `manifest.*` metadata.
//!
//! The config loader ignores `manifest.*` keys, so a manifest can be passed
//! back as `--config` to repeat the run.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use surveyml::config::Config;

pub struct Manifest {
    command: &'static str,
    started: Instant,
    stages: Vec<(String, Duration)>,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn start(command: &'static str) -> Self {
        Self { command, started: Instant::now(), stages: Vec::new(), outputs: Vec::new() }
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.stages.push((name.to_string(), t.elapsed()));
        out
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn write(&self, config: &Config, path: &Path) -> Result<()> {
        let mut text = String::new();
        text.push_str(&format!("# surveyml {} run manifest\n", self.command));
        text.push_str(&config.to_text());
        text.push_str(&format!("manifest.version = {}\n", env!("CARGO_PKG_VERSION")));
        text.push_str(&format!("manifest.command = {}\n", self.command));
        let outs: Vec<String> = self.outputs.iter().map(|p| p.display().to_string()).collect();
        text.push_str(&format!("manifest.outputs = {}\n", outs.join(", ")));
        for (name, d) in &self.stages {
            text.push_str(&format!("manifest.seconds.{name} = {:.3}\n", d.as_secs_f64()));
        }
        text.push_str(&format!("manifest.seconds.total = {:.3}\n", self.started.elapsed().as_secs_f64()));
        std::fs::write(path, text).with_context(|| format!("cannot write manifest {}", path.display()))
    }
}

/// `<out>.manifest.cfg` next to a single-file output.
pub fn beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.cfg");
    out.with_file_name(name)
}
