//! Artifact writers with a provenance record per run.

use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::RunConfig;
use crate::error::Result;

#[derive(Serialize)]
struct Provenance<'a> {
    command: &'a str,
    version: &'a str,
    config_hash: String,
    config: &'a std::collections::BTreeMap<String, String>,
    wall_time_s: f64,
    files: Vec<String>,
}

pub struct Artifacts {
    pub files: Vec<(String, String)>,
}

impl Artifacts {
    pub fn new() -> Self {
        Self { files: Vec::new() }
    }

    pub fn add(&mut self, name: &str, content: String) {
        self.files.push((name.to_string(), content));
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut s = serde_json::to_string_pretty(value).expect("serializable report");
        s.push('\n');
        self.add(name, s);
    }
}

impl Default for Artifacts {
    fn default() -> Self {
        Self::new()
    }
}

pub fn out_dir(cfg: &RunConfig, command: &str) -> PathBuf {
    match cfg.get("out.dir") {
        "" => Path::new("out").join(command),
        d => PathBuf::from(d),
    }
}

/// Writes the artifacts, the resolved config and `provenance.json`.
pub fn write_all(
    cfg: &RunConfig,
    command: &str,
    arts: &Artifacts,
    started: Instant,
) -> Result<PathBuf> {
    let dir = out_dir(cfg, command);
    std::fs::create_dir_all(&dir)?;
    for (name, content) in &arts.files {
        std::fs::write(dir.join(name), content)?;
    }
    std::fs::write(dir.join("config.resolved"), cfg.canonical())?;
    let prov = Provenance {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(),
        config: &cfg.values,
        wall_time_s: started.elapsed().as_secs_f64(),
        files: arts.files.iter().map(|(n, _)| n.clone()).collect(),
    };
    let mut s = serde_json::to_string_pretty(&prov).expect("serializable provenance");
    s.push('\n');
    std::fs::write(dir.join("provenance.json"), s)?;
    Ok(dir)
}
