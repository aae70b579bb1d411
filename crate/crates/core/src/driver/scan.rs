//! Regime maps over eta and atom number, and breathing curves.

use std::io::Write;

use rayon::prelude::*;

use crate::criteria::{quadrature_harmonics, QuadratureHarmonics};
use crate::error::{Error, Result};
use crate::fock::{ManyBody, OrbitalBasis};
use crate::moments::{build_generators, cloud_size, init_moments, trajectory};
use crate::output::CsvWriter;
use crate::scales::{classify_regime, derive_scales, FeedbackConfig, Regime, TrapConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRow {
    pub n: usize,
    pub eta: f64,
    pub sql_cm: f64,
    pub sql_atom: f64,
    pub stationary_cm: f64,
    pub regime: Regime,
}

pub fn regime_label(r: Regime) -> &'static str {
    match r {
        Regime::QsThresholdAbove => "qs_above",
        Regime::SchwarzThresholdAbove => "schwarz_above",
        Regime::Boundary => "boundary",
    }
}

/// Evenly (or log-evenly) spaced eta values, endpoints included.
pub fn eta_grid(eta_min: f64, eta_max: f64, steps: usize, log_spacing: bool) -> Result<Vec<f64>> {
    if steps < 2 {
        return Err(Error::Config("a scan needs at least 2 steps".into()));
    }
    if !(eta_min > 0.0 && eta_max > eta_min) {
        return Err(Error::Config("scan needs 0 < eta_min < eta_max".into()));
    }
    let last = (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| {
            let f = i as f64 / last;
            if log_spacing {
                (eta_min.ln() + f * (eta_max / eta_min).ln()).exp()
            } else {
                eta_min + f * (eta_max - eta_min)
            }
        })
        .collect())
}

/// One row per (N, eta). The feedback rate is held at `shift_rate` and the
/// resolution chosen to give each eta.
pub fn scan_eta(trap: &TrapConfig, shift_rate: f64, n_values: &[usize], etas: &[f64]) -> Result<Vec<ScanRow>> {
    let ns: Vec<usize> = if n_values.is_empty() { vec![trap.atom_count] } else { n_values.to_vec() };
    let points: Vec<(usize, f64)> = ns.iter().flat_map(|&n| etas.iter().map(move |&e| (n, e))).collect();
    points
        .par_iter()
        .map(|&(n, eta)| {
            let t = TrapConfig::new(n, trap.mass, trap.trap_freq, trap.hbar)?;
            let fb = FeedbackConfig::for_eta(&t, shift_rate, eta)?;
            let s = derive_scales(&t, &fb)?;
            Ok(ScanRow {
                n,
                eta,
                sql_cm: s.sql_cm,
                sql_atom: s.sql_atom,
                stationary_cm: s.stationary_cm,
                regime: classify_regime(n, eta).regime,
            })
        })
        .collect()
}

pub fn write_scan_csv<W: Write>(out: W, rows: &[ScanRow]) -> Result<()> {
    let mut w = CsvWriter::new(out, &["n", "eta", "dX0", "dx0", "DXs", "regime"])?;
    for r in rows {
        w.row_then_labels(&[r.n as f64, r.eta, r.sql_cm, r.sql_atom, r.stationary_cm], &[regime_label(r.regime)])?;
    }
    w.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreathingRow {
    pub t: f64,
    pub sigma_q_sq: f64,
    pub dxa: f64,
    pub dx0: f64,
    pub dxs: f64,
    pub dx: Option<f64>,
}

/// Half-period (or `t_end`) curve of the asymptotic cloud size with the two
/// thresholds; with `evolve` the transient size from the moment equations.
pub fn breathing_curve<S: ManyBody + ?Sized>(
    state: &S,
    basis: &OrbitalBasis,
    fb: &FeedbackConfig,
    points: usize,
    t_end: Option<f64>,
    evolve: bool,
) -> Result<(QuadratureHarmonics, Vec<BreathingRow>)> {
    if points < 2 {
        return Err(Error::Config("a curve needs at least 2 points".into()));
    }
    let trap = basis.trap;
    let scales = derive_scales(&trap, fb)?;
    let h = quadrature_harmonics(state, basis)?;
    let t_end = t_end.unwrap_or(trap.half_period());
    let dt = t_end / (points - 1) as f64;
    let transient = if evolve {
        let m0 = init_moments(state, basis)?;
        let g = build_generators(&trap, fb)?;
        Some(trajectory(&m0, &g, dt, points - 1)?)
    } else {
        None
    };
    let rows = (0..points)
        .map(|i| {
            let t = dt * i as f64;
            let s = h.eval(t);
            let r = scales.stationary_cm.powi(2) + s;
            BreathingRow {
                t,
                sigma_q_sq: s,
                dxa: if r >= 0.0 { r.sqrt() } else { f64::NAN },
                dx0: scales.sql_atom,
                dxs: scales.stationary_cm,
                dx: transient.as_ref().map(|tr| cloud_size(&tr[i].1)),
            }
        })
        .collect();
    Ok((h, rows))
}

pub fn write_breathing_csv<W: Write>(out: W, rows: &[BreathingRow]) -> Result<()> {
    let with_dx = rows.first().is_some_and(|r| r.dx.is_some());
    let mut header = vec!["t", "sigma_q_sq", "dxa", "dx0", "DXs"];
    if with_dx {
        header.push("dx");
    }
    let mut w = CsvWriter::new(out, &header)?;
    for r in rows {
        let mut v = vec![r.t, r.sigma_q_sq, r.dxa, r.dx0, r.dxs];
        if let Some(dx) = r.dx.filter(|_| with_dx) {
            v.push(dx);
        }
        w.row(&v)?;
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{condensate_state, squeezed_ground_orbital, FockState};

    #[test]
    fn scan_matches_classification_and_n2_switch() {
        let trap = TrapConfig::unit(2);
        let rows = scan_eta(&trap, 1.0, &[2], &[1.0, 4.0]).unwrap();
        assert!((rows[0].stationary_cm - 0.5).abs() < 1e-12);
        assert!(rows[0].stationary_cm <= rows[0].sql_atom);
        assert!((rows[1].stationary_cm - 0.728869).abs() < 1e-6);
        assert!(rows[1].stationary_cm > rows[1].sql_atom);
        assert_eq!(rows[0].regime, Regime::QsThresholdAbove);
        assert_eq!(rows[1].regime, Regime::SchwarzThresholdAbove);
        let etas = eta_grid(0.01, 100.0, 41, true).unwrap();
        for r in scan_eta(&trap, 0.7, &[1, 2, 5, 1000], &etas).unwrap() {
            let direct = r.stationary_cm <= r.sql_atom * (1.0 + 1e-12);
            assert_eq!(direct, classify_regime(r.n, r.eta).stationary_below_atom_sql());
            assert_eq!(r.regime, classify_regime(r.n, r.eta).regime);
        }
    }

    #[test]
    fn single_atom_boundary_sits_at_eta_one() {
        let rows = scan_eta(&TrapConfig::unit(1), 1.0, &[], &[0.5, 1.0, 2.0]).unwrap();
        assert_eq!(rows[1].regime, Regime::Boundary);
        assert_eq!(rows[0].regime, Regime::SchwarzThresholdAbove);
        assert_eq!(rows[2].regime, Regime::SchwarzThresholdAbove);
    }

    #[test]
    fn large_n_interval_covers_scanned_decades() {
        let etas = eta_grid(1e-4, 1e4, 9, true).unwrap();
        let rows = scan_eta(&TrapConfig::unit(1_000_000), 1.0, &[], &etas).unwrap();
        assert!(rows.iter().all(|r| r.regime == Regime::QsThresholdAbove));
    }

    #[test]
    fn squeezed_curve_shape() {
        let trap = TrapConfig::unit(2);
        let basis = OrbitalBasis::new(24, trap).unwrap();
        let s = condensate_state(&squeezed_ground_orbital(0.5, 20), 2).unwrap().embed(24).unwrap();
        let fb = FeedbackConfig::new(1.0, 0.5).unwrap();
        let (h, rows) = breathing_curve(&s, &basis, &fb, 401, None, false).unwrap();
        let (imin, min) = rows.iter().enumerate().min_by(|a, b| a.1.dxa.total_cmp(&b.1.dxa)).map(|(i, r)| (i, r.dxa)).unwrap();
        let (imax, _) = rows.iter().enumerate().max_by(|a, b| a.1.dxa.total_cmp(&b.1.dxa)).unwrap();
        // quarter-period spacing on a grid of pi/400
        assert_eq!((imax as i64 - imin as i64).abs(), 200);
        let closed = (0.25 + h.min()).sqrt();
        assert!((min - closed).abs() < 1e-9);
    }

    #[test]
    fn single_atom_curve_is_flat() {
        let trap = TrapConfig::unit(1);
        let basis = OrbitalBasis::new(6, trap).unwrap();
        let s = FockState::occupation(&[0, 1, 0, 0, 0, 0]).unwrap();
        let fb = FeedbackConfig::new(1.0, 0.5).unwrap();
        let (_, rows) = breathing_curve(&s, &basis, &fb, 11, None, true).unwrap();
        let ds = derive_scales(&trap, &fb).unwrap().stationary_cm;
        assert!(rows.iter().all(|r| (r.dxa - ds).abs() < 1e-12));
        assert!(rows[0].dx.is_some());
        let mut buf = Vec::new();
        write_breathing_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,sigma_q_sq,dxa,dx0,DXs,dx\n"));
    }
}
