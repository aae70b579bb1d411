//! JSON state files and CSV density profiles.

use std::io::Write;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::state::{Amplitudes, FockState, StateEnsemble};
use crate::error::Result;
use crate::output::CsvWriter;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub occ: Vec<u16>,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub n: usize,
    pub m: usize,
    pub terms: Vec<TermRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub weight: f64,
    pub terms: Vec<TermRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFile {
    pub n: usize,
    pub m: usize,
    pub members: Vec<MemberRecord>,
}

fn records(state: &FockState) -> Vec<TermRecord> {
    state
        .terms()
        .iter()
        .map(|(occ, a)| TermRecord { occ: occ.clone(), re: a.re, im: a.im })
        .collect()
}

fn amplitudes(terms: &[TermRecord]) -> Amplitudes {
    let mut amps = Amplitudes::new();
    for t in terms {
        *amps.entry(t.occ.clone()).or_default() += C64::new(t.re, t.im);
    }
    amps
}

impl From<&FockState> for StateFile {
    fn from(s: &FockState) -> Self {
        StateFile { n: s.atom_count(), m: s.mode_count(), terms: records(s) }
    }
}

impl StateFile {
    /// Validates and normalizes to within the state tolerance.
    pub fn to_state(&self) -> Result<FockState> {
        FockState::normalized(self.n, self.m, amplitudes(&self.terms))
    }
}

impl From<&StateEnsemble> for EnsembleFile {
    fn from(e: &StateEnsemble) -> Self {
        EnsembleFile {
            n: e.atom_count(),
            m: e.mode_count(),
            members: e
                .members()
                .iter()
                .map(|(w, s)| MemberRecord { weight: *w, terms: records(s) })
                .collect(),
        }
    }
}

impl EnsembleFile {
    pub fn to_ensemble(&self) -> Result<StateEnsemble> {
        let members = self
            .members
            .iter()
            .map(|m| Ok((m.weight, FockState::normalized(self.n, self.m, amplitudes(&m.terms))?)))
            .collect::<Result<Vec<_>>>()?;
        StateEnsemble::from_unnormalized(members)
    }
}

/// Two-column CSV `x,P`.
pub fn write_profile_csv<W: Write>(out: W, grid: &[f64], profile: &[f64]) -> Result<()> {
    let mut w = CsvWriter::new(out, &["x", "P"])?;
    for (x, p) in grid.iter().zip(profile) {
        w.row(&[*x, *p])?;
    }
    w.finish()
}
