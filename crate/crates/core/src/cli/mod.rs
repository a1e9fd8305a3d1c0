//! Command-line front end: configuration, subcommands and output writers.

pub mod commands;
pub mod config;
pub mod output;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use crate::error::{invalid, Result};
pub use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "ttg",
    version,
    about = "Chiral twisted trilayer graphene: magic parameters, bands, traces, theta functions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Magic,
    Bands,
    WronskianScan,
    Trace,
    ThetaCheck,
    Chern,
    Touch,
    Squeeze,
    Bracket,
    Antichiral,
    Sweep,
    Discontinuity,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Discover magic parameters from B_k and verify them.
    Magic(Common),
    /// Band structure on a k-grid.
    Bands(Common),
    /// |W(α)| along a real α interval.
    WronskianScan(Common),
    /// tr(B_k^ℓ): numeric, closed form and combinatorial.
    Trace(Common),
    /// Theta identities, plus a Bloch-function check when alpha is set.
    ThetaCheck(Common),
    /// Chern number of the flat-band bundle.
    Chern(Common),
    /// Band-touching point of a simple magic parameter.
    Touch(Common),
    /// Exponential squeezing of the low bands along a ray.
    Squeeze(Common),
    /// Semiclassical bracket field heatmap.
    Bracket(Common),
    /// Anti-chiral gap scan.
    Antichiral(Common),
    /// Magic parameters over a grid of twist and hopping ratios.
    Sweep(Common),
    /// 𝒮₄/p_n² along the discontinuity sequence.
    Discontinuity(Common),
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Config file of key=value lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// ζ as "ζ₁/ζ₂".
    #[arg(long)]
    pub zeta: Option<String>,
    /// Twist ratio ζ₂/ζ₁ with ζ₁ = 1.
    #[arg(long = "zeta-ratio")]
    pub zeta_ratio: Option<String>,
    #[arg(long = "hop-ratio")]
    pub hop_ratio: Option<String>,
    /// Truncation radius N.
    #[arg(long)]
    pub n: Option<i64>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long = "alpha-tilde")]
    pub alpha_tilde: Option<String>,
    #[arg(long)]
    pub ell: Option<usize>,
    /// numeric | closed | combinatorial | all
    #[arg(long)]
    pub compare: Option<String>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

impl Command {
    pub fn parts(&self) -> (CommandKind, &Common) {
        use Command::*;
        match self {
            Magic(c) => (CommandKind::Magic, c),
            Bands(c) => (CommandKind::Bands, c),
            WronskianScan(c) => (CommandKind::WronskianScan, c),
            Trace(c) => (CommandKind::Trace, c),
            ThetaCheck(c) => (CommandKind::ThetaCheck, c),
            Chern(c) => (CommandKind::Chern, c),
            Touch(c) => (CommandKind::Touch, c),
            Squeeze(c) => (CommandKind::Squeeze, c),
            Bracket(c) => (CommandKind::Bracket, c),
            Antichiral(c) => (CommandKind::Antichiral, c),
            Sweep(c) => (CommandKind::Sweep, c),
            Discontinuity(c) => (CommandKind::Discontinuity, c),
        }
    }
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        use CommandKind::*;
        match self {
            Magic => "magic",
            Bands => "bands",
            WronskianScan => "wronskian-scan",
            Trace => "trace",
            ThetaCheck => "theta-check",
            Chern => "chern",
            Touch => "touch",
            Squeeze => "squeeze",
            Bracket => "bracket",
            Antichiral => "antichiral",
            Sweep => "sweep",
            Discontinuity => "discontinuity",
        }
    }
}

/// Defaults, then the config file, then `--set`, then dedicated flags.
pub fn resolve_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::new();
    if let Ok(dir) = std::env::var("TTG_OUT_DIR") {
        cfg.set("out.dir", &dir)?;
    }
    if let Some(path) = &c.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        cfg.load_text(&text)?;
    }
    for kv in &c.set {
        cfg.assign(kv)?;
    }
    if let (Some(_), Some(_)) = (&c.zeta, &c.zeta_ratio) {
        return Err(invalid("give either --zeta or --zeta-ratio, not both"));
    }
    if let Some(z) = &c.zeta {
        cfg.set("twist.zeta", z)?;
    }
    if let Some(h) = &c.zeta_ratio {
        let h = crate::lattice::parse_fraction(h)?;
        // ζ₂/ζ₁ = a/b is the pair (b, a)
        cfg.set("twist.zeta", &format!("{}/{}", h.denom(), h.numer()))?;
    }
    let flags: [(&str, Option<String>); 9] = [
        ("twist.hop_ratio", c.hop_ratio.clone()),
        ("trunc.n", c.n.map(|v| v.to_string())),
        ("alpha", c.alpha.clone()),
        ("alpha_tilde", c.alpha_tilde.clone()),
        ("trace.ell", c.ell.map(|v| v.to_string())),
        ("trace.compare", c.compare.clone()),
        ("chern.grid", c.grid.map(|v| v.to_string())),
        ("out.dir", c.out.as_ref().map(|p| p.display().to_string())),
        ("workers", c.workers.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    Ok(cfg)
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (kind, common) = cli.command.parts();
    match resolve_config(common).and_then(|cfg| commands::run(kind, &cfg)) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
