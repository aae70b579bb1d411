//! Command-line driver: configuration, task dispatch, scans and searches.

mod cli;
pub mod config;
pub mod scan;
pub mod search;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

pub use cli::{cli_main, Flags};
pub use config::{FeedbackSpec, OrbitalSpec, Prepared, RunConfig, StateSpec, TaskSpec, TrapSpec};
pub use scan::{breathing_curve, eta_grid, scan_eta, write_breathing_csv, write_scan_csv, BreathingRow, ScanRow};
pub use search::{search_state, Family, SearchReport, SearchSpec};

use crate::criteria::{evaluate_criteria, quadrature_harmonics};
use crate::error::{Error, Result};
use crate::feedback_loop::{run_ensemble, write_loop_csv, LoopConfig};
use crate::fock::OrbitalBasis;
use crate::moments::{build_generators, init_moments, trajectory, write_trajectory_csv};
use crate::oracle::{build_generator, record_trajectory, write_oracle_csv, DensityMatrix};
use crate::scales::derive_scales;

/// Default oracle orbital counts for one and two atoms.
pub const ORACLE_MODES: [usize; 2] = [16, 12];

/// Everything a task produced besides its main output.
#[derive(Debug, Default)]
pub struct TaskOutcome {
    /// Lines for stderr (warnings, summaries), each a JSON object.
    pub notes: Vec<String>,
    /// Deferred failure: the output was written but the run did not succeed.
    pub failure: Option<Error>,
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::Io(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut out = open_out(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn note(kind: &str, detail: &str) -> String {
    serde_json::json!({ kind: detail }).to_string()
}

/// Runs the configured task. `cfg.task` must be set.
pub fn run_task(cfg: &RunConfig) -> Result<TaskOutcome> {
    cfg.validate()?;
    let task = cfg.task.clone().ok_or_else(|| Error::Config("no task given".into()))?;
    let trap = cfg.trap.build()?;
    let out = cfg.out.as_deref();
    let mut outcome = TaskOutcome::default();
    match task {
        TaskSpec::Scales => {
            let fb = cfg.feedback.continuous()?;
            write_json(out, &derive_scales(&trap, &fb)?)?;
        }
        TaskSpec::Criteria { curve } => {
            let fb = cfg.feedback.continuous()?;
            let state = cfg.state.prepare(&trap)?;
            let basis = OrbitalBasis::new(state.mode_count(), trap)?;
            let h = quadrature_harmonics(state.as_many_body(), &basis)?;
            let report = evaluate_criteria(&derive_scales(&trap, &fb)?, &h);
            if let Some(n) = &report.boundary_note {
                outcome.notes.push(note("warning", n));
            }
            match curve {
                Some(c) => {
                    let (_, rows) = breathing_curve(state.as_many_body(), &basis, &fb, c.points, c.t_end, c.evolve)?;
                    write_breathing_csv(open_out(c.out.as_deref().or(out))?, &rows)?;
                    if c.out.is_some() {
                        write_json(out, &report)?;
                    }
                }
                None => write_json(out, &report)?,
            }
        }
        TaskSpec::Evolve { t_end, dt } => {
            let fb = cfg.feedback.continuous()?;
            let state = cfg.state.prepare(&trap)?;
            let basis = OrbitalBasis::new(state.mode_count(), trap)?;
            let m0 = init_moments(state.as_many_body(), &basis)?;
            let steps = (t_end / dt).round() as usize;
            let traj = trajectory(&m0, &build_generators(&trap, &fb)?, dt, steps)?;
            write_trajectory_csv(open_out(out)?, &traj)?;
        }
        TaskSpec::Oracle { t_end, dt, stride, modes } => {
            let fb = cfg.feedback.continuous()?;
            let modes = modes.unwrap_or(ORACLE_MODES[trap.atom_count - 1]);
            let state = cfg.state.prepare(&trap)?;
            if state.mode_count() > modes {
                return Err(Error::Config(format!("state uses {} orbitals, oracle has {modes}", state.mode_count())));
            }
            let state = state.embed(modes)?;
            let basis = OrbitalBasis::new(modes, trap)?;
            let gen = build_generator(&trap, &fb, &basis)?;
            let rho0 = match &state {
                Prepared::Pure(s) => DensityMatrix::from_state(s, gen.sector().clone())?,
                Prepared::Mixed(e) => DensityMatrix::from_ensemble(e, gen.sector().clone())?,
            };
            let rows = (t_end / (dt * stride as f64)).round() as usize + 1;
            write_oracle_csv(open_out(out)?, &record_trajectory(rho0, &gen, dt, stride, rows)?)?;
        }
        TaskSpec::Loop { t_end, record_dt, trajectories, schedule } => {
            let lc = LoopConfig { schedule, ..cfg.feedback.discrete(trajectories, cfg.seed)? };
            let state = cfg.state.prepare(&trap)?;
            let basis = OrbitalBasis::new(state.mode_count(), trap)?;
            let m0 = init_moments(state.as_many_body(), &basis)?;
            let run = run_ensemble(&m0, &lc, &trap, t_end, record_dt)?;
            write_loop_csv(open_out(out)?, &run.rows)?;
            outcome.notes.extend(run.warnings.iter().map(|w| note("warning", w)));
            outcome.notes.push(serde_json::to_string(&run.summary).map_err(|e| Error::Io(e.to_string()))?);
        }
        TaskSpec::Scan { n_values, eta_min, eta_max, steps, log_spacing } => {
            let zeta = cfg.feedback.zeta.or_else(|| cfg.feedback.continuous().ok().map(|f| f.shift_rate)).unwrap_or(1.0);
            let etas = eta_grid(eta_min, eta_max, steps, log_spacing)?;
            write_scan_csv(open_out(out)?, &scan_eta(&trap, zeta, &n_values, &etas)?)?;
        }
        TaskSpec::Search(spec) => {
            let fb = cfg.feedback.continuous().ok();
            let spec = SearchSpec { seed: if spec.seed == 0 { cfg.seed } else { spec.seed }, ..spec };
            let report = search_state(&spec, &trap, fb.as_ref())?;
            write_json(out, &report)?;
            if report.positivity_ok == Some(false) {
                outcome.notes.push(note("warning", "fixed-N search went below the positivity floor"));
            }
            outcome.failure = report.check().err();
        }
    }
    Ok(outcome)
}
