use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::{RunConfig, TaskSpec};
use super::run_task;
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "bose-feedback", version, about = "Feedback-cooled trapped Bose gas: scales, criteria, dynamics, loop, scans and searches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Derived length scales and eta as JSON.
    Scales(Flags),
    /// Squeezing and Schwarz criteria for the configured state.
    Criteria(Flags),
    /// Gaussian moment trajectory as CSV.
    Evolve(Flags),
    /// Exact master-equation trajectory (N <= 2) as CSV.
    Oracle(Flags),
    /// Monte Carlo measure-and-kick ensemble as CSV.
    Loop(Flags),
    /// Regime table over eta and N.
    Scan(Flags),
    /// State search minimizing the correlation term.
    Search(Flags),
}

/// Overrides on top of the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub mass: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub hbar: Option<f64>,
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub sigma0: Option<f64>,
    #[arg(long)]
    pub zeta0: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    fn split(self) -> (&'static str, Flags) {
        match self {
            Command::Scales(f) => ("scales", f),
            Command::Criteria(f) => ("criteria", f),
            Command::Evolve(f) => ("evolve", f),
            Command::Oracle(f) => ("oracle", f),
            Command::Loop(f) => ("loop", f),
            Command::Scan(f) => ("scan", f),
            Command::Search(f) => ("search", f),
        }
    }
}

/// Config for a subcommand: file contents, then flag overrides, then the
/// task for `name` (from the file when it names the same task).
pub fn resolve_config(name: &str, flags: &Flags) -> Result<RunConfig> {
    let mut cfg = match &flags.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    let t = &mut cfg.trap;
    t.n = flags.n.unwrap_or(t.n);
    t.mass = flags.mass.unwrap_or(t.mass);
    t.omega = flags.omega.unwrap_or(t.omega);
    t.hbar = flags.hbar.unwrap_or(t.hbar);
    let f = &mut cfg.feedback;
    f.zeta = flags.zeta.or(f.zeta);
    f.sigma = flags.sigma.or(f.sigma);
    f.gamma = flags.gamma.or(f.gamma);
    f.sigma0 = flags.sigma0.or(f.sigma0);
    f.zeta0 = flags.zeta0.or(f.zeta0);
    cfg.seed = flags.seed.unwrap_or(cfg.seed);
    if flags.out.is_some() {
        cfg.out = flags.out.clone();
    }
    let task = match cfg.task.take() {
        Some(t) if t.name() == name => t,
        Some(t) => {
            return Err(Error::Config(format!("config describes task {} but the subcommand is {name}", t.name())));
        }
        None => TaskSpec::default_for(name, &cfg.trap)?,
    };
    cfg.task = Some(match task {
        TaskSpec::Search(mut s) if flags.n.is_some() => {
            s.n = cfg.trap.n;
            TaskSpec::Search(s)
        }
        other => other,
    });
    cfg.validate()?;
    Ok(cfg)
}

fn error_json(tag: &str, detail: &str) -> String {
    serde_json::json!({ "error": tag, "detail": detail }).to_string()
}

/// Exit code for an error: 3 for numerical failures, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code. Errors go to stderr as `{"error", "detail"}` JSON.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", error_json("Usage", e.to_string().trim()));
            return 2;
        }
    };
    let (name, flags) = cli.command.split();
    let result = resolve_config(name, &flags).and_then(|cfg| run_task(&cfg));
    match result {
        Ok(outcome) => {
            for n in &outcome.notes {
                eprintln!("{n}");
            }
            match outcome.failure {
                Some(e) => {
                    eprintln!("{}", error_json(e.tag(), &e.to_string()));
                    exit_code(&e)
                }
                None => 0,
            }
        }
        Err(e) => {
            eprintln!("{}", error_json(e.tag(), &e.to_string()));
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags() -> Flags {
        Flags::default()
    }

    #[test]
    fn flags_override_defaults() {
        let f = Flags { n: Some(3), zeta: Some(2.0), sigma: Some(0.1), seed: Some(9), ..flags() };
        let cfg = resolve_config("scales", &f).unwrap();
        assert_eq!(cfg.trap.n, 3);
        assert_eq!(cfg.feedback.zeta, Some(2.0));
        assert_eq!(cfg.seed, 9);
        assert!(matches!(cfg.task, Some(TaskSpec::Scales)));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(cli_main(["bose-feedback", "scales", "--config", "/nonexistent/run.json"]), 2);
        assert_eq!(cli_main(["bose-feedback", "scales"]), 2);
        assert_eq!(cli_main(["bose-feedback", "frobnicate"]), 2);
        assert_eq!(exit_code(&Error::PositivityLoss(-1.0)), 3);
        assert_eq!(exit_code(&Error::InvalidN("x".into())), 2);
    }

    #[test]
    fn task_mismatch_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, r#"{"task": {"kind": "evolve"}}"#).unwrap();
        let f = Flags { config: Some(p), ..flags() };
        assert!(matches!(resolve_config("scan", &f), Err(Error::Config(_))));
        assert!(resolve_config("evolve", &f).is_ok());
    }
}
