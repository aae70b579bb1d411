//! JSON run configuration.

use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::search::SearchSpec;
use crate::error::{Error, Result};
use crate::feedback_loop::{LoopConfig, Schedule};
use crate::fock::io::{StateFile, TermRecord};
use crate::fock::{
    condensate_state, displaced_ground_orbital, squeezed_ground_orbital, thermal_ensemble, FockState, ManyBody,
    OrbitalBasis, StateEnsemble,
};
use crate::scales::{FeedbackConfig, TrapConfig};

/// Largest atom number the exact integrator handles.
pub const ORACLE_MAX_N: usize = 2;

fn default_one() -> f64 {
    1.0
}

fn default_n() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSpec {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_one")]
    pub mass: f64,
    #[serde(default = "default_one")]
    pub omega: f64,
    #[serde(default = "default_one")]
    pub hbar: f64,
}

impl Default for TrapSpec {
    fn default() -> Self {
        TrapSpec { n: 2, mass: 1.0, omega: 1.0, hbar: 1.0 }
    }
}

impl TrapSpec {
    pub fn build(&self) -> Result<TrapConfig> {
        TrapConfig::new(self.n, self.mass, self.omega, self.hbar)
    }
}

/// Continuous (`zeta`, `sigma`) or discrete (`gamma`, `sigma0`, `zeta0`)
/// feedback. With both forms present the continuous one is used for the
/// deterministic tasks and the discrete one for the loop.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSpec {
    pub zeta: Option<f64>,
    pub sigma: Option<f64>,
    pub gamma: Option<f64>,
    pub sigma0: Option<f64>,
    pub zeta0: Option<f64>,
}

impl FeedbackSpec {
    pub fn continuous(&self) -> Result<FeedbackConfig> {
        match (self.zeta, self.sigma, self.gamma, self.sigma0, self.zeta0) {
            (Some(z), Some(s), _, _, _) => FeedbackConfig::new(z, s),
            (_, _, Some(g), Some(s0), Some(z0)) => FeedbackConfig::from_discrete(g, s0, z0),
            _ => Err(Error::Config("feedback needs zeta and sigma, or gamma, sigma0 and zeta0".into())),
        }
    }

    /// Loop parameters; gamma alone is enough when zeta and sigma are given.
    pub fn discrete(&self, trajectories: usize, seed: u64) -> Result<LoopConfig> {
        match (self.gamma, self.sigma0, self.zeta0) {
            (Some(g), Some(s0), Some(z0)) => Ok(LoopConfig::new(g, s0, z0, trajectories, seed)),
            (Some(g), _, _) => Ok(LoopConfig::from_continuous(&self.continuous()?, g, trajectories, seed)),
            _ => Err(Error::Config("the loop needs gamma".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum OrbitalSpec {
    Ground,
    /// Trap ground state displaced by `d`.
    Displaced { d: f64 },
    /// Squeezed ground state with squeeze parameter `r`.
    Squeezed { r: f64 },
    /// Explicit orbital amplitudes.
    Custom { re: Vec<f64>, im: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StateSpec {
    Condensate {
        m: usize,
        #[serde(default = "ground_orbital")]
        orbital: OrbitalSpec,
    },
    Occupation {
        occ: Vec<u16>,
    },
    Superposition {
        m: usize,
        terms: Vec<TermRecord>,
    },
    Thermal {
        m: usize,
        kt: f64,
        energy_cutoff: f64,
    },
}

fn ground_orbital() -> OrbitalSpec {
    OrbitalSpec::Ground
}

impl Default for StateSpec {
    fn default() -> Self {
        StateSpec::Condensate { m: 8, orbital: OrbitalSpec::Ground }
    }
}

/// A prepared initial state.
#[derive(Debug, Clone, PartialEq)]
pub enum Prepared {
    Pure(FockState),
    Mixed(StateEnsemble),
}

impl Prepared {
    pub fn as_many_body(&self) -> &dyn ManyBody {
        match self {
            Prepared::Pure(s) => s,
            Prepared::Mixed(e) => e,
        }
    }

    pub fn mode_count(&self) -> usize {
        match self {
            Prepared::Pure(s) => s.mode_count(),
            Prepared::Mixed(e) => e.mode_count(),
        }
    }

    pub fn atom_count(&self) -> usize {
        match self {
            Prepared::Pure(s) => s.atom_count(),
            Prepared::Mixed(e) => e.atom_count(),
        }
    }

    /// Same state over `m` orbitals.
    pub fn embed(&self, m: usize) -> Result<Prepared> {
        Ok(match self {
            Prepared::Pure(s) => Prepared::Pure(s.embed(m)?),
            Prepared::Mixed(e) => Prepared::Mixed(StateEnsemble::new(
                e.members().iter().map(|(w, s)| Ok((*w, s.embed(m)?))).collect::<Result<Vec<_>>>()?,
            )?),
        })
    }
}

impl StateSpec {
    pub fn mode_count(&self) -> usize {
        match self {
            StateSpec::Condensate { m, .. } | StateSpec::Superposition { m, .. } | StateSpec::Thermal { m, .. } => *m,
            StateSpec::Occupation { occ } => occ.len(),
        }
    }

    pub fn prepare(&self, trap: &TrapConfig) -> Result<Prepared> {
        let m = self.mode_count();
        if m < 2 {
            return Err(Error::Config(format!("a state needs at least 2 orbitals, got {m}")));
        }
        let basis = OrbitalBasis::new(m, *trap)?;
        let n = trap.atom_count;
        let state = match self {
            StateSpec::Condensate { orbital, .. } => {
                let phi = match orbital {
                    OrbitalSpec::Ground => {
                        let mut v = vec![C64::new(0.0, 0.0); m];
                        v[0] = C64::new(1.0, 0.0);
                        v
                    }
                    OrbitalSpec::Displaced { d } => displaced_ground_orbital(&basis, *d, m),
                    OrbitalSpec::Squeezed { r } => squeezed_ground_orbital(*r, m),
                    OrbitalSpec::Custom { re, im } => {
                        if re.len() != m || im.len() != m {
                            return Err(Error::Config("custom orbital length differs from m".into()));
                        }
                        let v: Vec<C64> = re.iter().zip(im).map(|(a, b)| C64::new(*a, *b)).collect();
                        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                        if !(norm > 0.0) {
                            return Err(Error::Config("custom orbital is zero".into()));
                        }
                        v.into_iter().map(|z| z / norm).collect()
                    }
                };
                Prepared::Pure(condensate_state(&phi, n)?)
            }
            StateSpec::Occupation { occ } => Prepared::Pure(FockState::occupation(occ)?),
            StateSpec::Superposition { terms, .. } => {
                Prepared::Pure(StateFile { n, m, terms: terms.clone() }.to_state()?)
            }
            StateSpec::Thermal { kt, energy_cutoff, .. } => {
                Prepared::Mixed(thermal_ensemble(&basis, *kt, n, *energy_cutoff)?.0)
            }
        };
        if state.atom_count() != n {
            return Err(Error::Config(format!(
                "state holds {} atoms but the trap has n = {n}",
                state.atom_count()
            )));
        }
        Ok(state)
    }
}

fn default_points() -> usize {
    201
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    #[serde(default = "default_points")]
    pub points: usize,
    /// End time; one half period when absent.
    pub t_end: Option<f64>,
    /// Adds the transient cloud size from the moment equations.
    #[serde(default)]
    pub evolve: bool,
    /// Where the CSV goes; the run's `out` otherwise.
    pub out: Option<PathBuf>,
}

fn default_t_end() -> f64 {
    20.0
}

fn default_dt() -> f64 {
    0.05
}

fn default_stride() -> usize {
    10
}

fn default_trajectories() -> usize {
    1000
}

fn default_steps() -> usize {
    25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TaskSpec {
    Scales,
    Criteria {
        curve: Option<CurveSpec>,
    },
    Evolve {
        #[serde(default = "default_t_end")]
        t_end: f64,
        #[serde(default = "default_dt")]
        dt: f64,
    },
    Oracle {
        #[serde(default = "default_t_end")]
        t_end: f64,
        /// Integrator step.
        #[serde(default = "default_oracle_dt")]
        dt: f64,
        /// Steps between output rows.
        #[serde(default = "default_stride")]
        stride: usize,
        /// Orbital count of the truncated Fock space.
        modes: Option<usize>,
    },
    Loop {
        #[serde(default = "default_t_end")]
        t_end: f64,
        #[serde(default = "default_dt")]
        record_dt: f64,
        #[serde(default = "default_trajectories")]
        trajectories: usize,
        #[serde(default)]
        schedule: Schedule,
    },
    Scan {
        /// Atom numbers to map; the trap's n when empty.
        #[serde(default)]
        n_values: Vec<usize>,
        eta_min: f64,
        eta_max: f64,
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_true")]
        log_spacing: bool,
    },
    Search(SearchSpec),
}

fn default_oracle_dt() -> f64 {
    0.01
}

fn default_true() -> bool {
    true
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::Scales => "scales",
            TaskSpec::Criteria { .. } => "criteria",
            TaskSpec::Evolve { .. } => "evolve",
            TaskSpec::Oracle { .. } => "oracle",
            TaskSpec::Loop { .. } => "loop",
            TaskSpec::Scan { .. } => "scan",
            TaskSpec::Search(_) => "search",
        }
    }

    /// Task of the given kind with default parameters.
    pub fn default_for(name: &str, trap: &TrapSpec) -> Result<TaskSpec> {
        Ok(match name {
            "scales" => TaskSpec::Scales,
            "criteria" => TaskSpec::Criteria { curve: None },
            "evolve" => TaskSpec::Evolve { t_end: default_t_end(), dt: default_dt() },
            "oracle" => TaskSpec::Oracle { t_end: default_t_end(), dt: default_oracle_dt(), stride: default_stride(), modes: None },
            "loop" => TaskSpec::Loop {
                t_end: default_t_end(),
                record_dt: default_dt(),
                trajectories: default_trajectories(),
                schedule: Schedule::Regular,
            },
            "scan" => TaskSpec::Scan { n_values: vec![], eta_min: 0.01, eta_max: 100.0, steps: default_steps(), log_spacing: true },
            "search" => TaskSpec::Search(SearchSpec::defaults(trap.n, 3)),
            other => return Err(Error::Config(format!("unknown task {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub trap: TrapSpec,
    #[serde(default)]
    pub feedback: FeedbackSpec,
    #[serde(default)]
    pub state: StateSpec,
    pub task: Option<TaskSpec>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::from_json(&text)
    }

    /// Cross-field checks that do not need any numerics.
    pub fn validate(&self) -> Result<()> {
        let trap = self.trap.build()?;
        match &self.task {
            Some(TaskSpec::Oracle { modes, dt, stride, .. }) => {
                if trap.atom_count > ORACLE_MAX_N {
                    return Err(Error::InvalidN(format!(
                        "the oracle supports N <= {ORACLE_MAX_N}, got {}",
                        trap.atom_count
                    )));
                }
                if modes.is_some_and(|m| m < 2) || !(*dt > 0.0) || *stride == 0 {
                    return Err(Error::Config("oracle needs modes >= 2, dt > 0 and stride >= 1".into()));
                }
            }
            Some(TaskSpec::Evolve { t_end, dt }) if !(*dt > 0.0) || !(*t_end >= 0.0) => {
                return Err(Error::Config("evolve needs dt > 0 and t_end >= 0".into()));
            }
            Some(TaskSpec::Scan { steps, eta_min, eta_max, .. }) => {
                if *steps < 2 {
                    return Err(Error::Config("a scan needs at least 2 steps".into()));
                }
                if !(*eta_min > 0.0 && *eta_max > *eta_min) {
                    return Err(Error::Config("scan needs 0 < eta_min < eta_max".into()));
                }
            }
            Some(TaskSpec::Search(s)) => s.validate()?,
            _ => {}
        }
        if self.state.mode_count() < 2 {
            return Err(Error::Config("state needs m >= 2".into()));
        }
        Ok(())
    }
}
