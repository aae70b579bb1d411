//! Search for initial states with the smallest min_t sigma_q^2.

use num_complex::Complex64 as C64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{coherent_sigma_q_sq, evaluate_criteria, quadrature_harmonics, CriterionReport, QuadratureHarmonics};
use crate::error::{Error, Result};
use crate::feedback_loop::trajectory_rng;
use crate::fock::io::StateFile;
use crate::fock::{enumerate_occupations, Amplitudes, FockState, Occupation, OrbitalBasis};
use crate::scales::{derive_scales, FeedbackConfig, TrapConfig};

/// Largest number of real parameters a search may optimize.
pub const MAX_PARAMETERS: usize = 64;
/// Lower bound the fixed-N objective must respect.
pub const POSITIVITY_FLOOR: f64 = -1e-8;
/// Orbitals appended above the search space so that quadrature products
/// of the trial state are exact.
const PADDING: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// Pure states of exactly N atoms over M orbitals.
    #[serde(rename = "fixed_N_pure")]
    FixedNPure,
    /// Multimode coherent states with mean atom number N over M orbitals.
    #[serde(rename = "indefinite_N_coherent")]
    IndefiniteNCoherent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpec {
    pub n: usize,
    pub m: usize,
    pub family: Family,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_restarts() -> usize {
    16
}

fn default_max_iter() -> usize {
    4000
}

fn default_tol() -> f64 {
    1e-10
}

impl SearchSpec {
    pub fn defaults(n: usize, m: usize) -> Self {
        SearchSpec {
            n,
            m,
            family: Family::FixedNPure,
            restarts: default_restarts(),
            max_iter: default_max_iter(),
            tol: default_tol(),
            seed: 0,
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self.family {
            Family::FixedNPure => 2 * crate::fock::sector_dimension(self.n, self.m),
            Family::IndefiniteNCoherent => 2 * self.m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidN("search needs at least one atom".into()));
        }
        if self.m < 2 {
            return Err(Error::Config("search needs m >= 2".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("search needs at least one restart".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("search tolerance must be positive".into()));
        }
        let p = self.parameter_count();
        if p > MAX_PARAMETERS {
            return Err(Error::DimensionTooLarge { dim: p, limit: MAX_PARAMETERS });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartResult {
    pub start_objective: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchReport {
    pub family: Family,
    pub n: usize,
    pub m: usize,
    pub best_objective: f64,
    pub mean_objective: f64,
    /// Best fixed-N state, over the M searched orbitals.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_state: Option<StateFile>,
    /// Best coherent amplitudes as (re, im) pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_amplitudes: Option<Vec<(f64, f64)>>,
    /// Whether the fixed-N result respects the positivity floor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positivity_ok: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criteria: Option<CriterionReport>,
    pub restarts: Vec<RestartResult>,
}

impl SearchReport {
    /// `NonConvergence` carrying the best value when no restart converged.
    pub fn check(&self) -> Result<()> {
        if self.restarts.is_empty() || self.restarts.iter().any(|r| r.converged) {
            Ok(())
        } else {
            Err(Error::NonConvergence { best: self.best_objective })
        }
    }
}

/// Objective of a parameter family: min over t of sigma_q^2.
struct Objective {
    family: Family,
    n: usize,
    m: usize,
    sector: Vec<Occupation>,
    basis: OrbitalBasis,
}

impl Objective {
    fn new(spec: &SearchSpec, trap: &TrapConfig) -> Result<Self> {
        let trap = TrapConfig { atom_count: spec.n, ..*trap };
        let sector = match spec.family {
            Family::FixedNPure => enumerate_occupations(spec.n, spec.m),
            Family::IndefiniteNCoherent => Vec::new(),
        };
        Ok(Objective { family: spec.family, n: spec.n, m: spec.m, sector, basis: OrbitalBasis::new(spec.m + PADDING, trap)? })
    }

    fn state(&self, x: &[f64]) -> Result<FockState> {
        let mut amps = Amplitudes::new();
        for (k, occ) in self.sector.iter().enumerate() {
            let mut o = occ.clone();
            o.resize(self.m + PADDING, 0);
            amps.insert(o, C64::new(x[2 * k], x[2 * k + 1]));
        }
        FockState::normalized(self.n, self.m + PADDING, amps)
    }

    fn amplitudes(&self, x: &[f64]) -> Option<Vec<C64>> {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return None;
        }
        let scale = (self.n as f64).sqrt() / norm;
        let mut a: Vec<C64> = x.chunks(2).map(|c| C64::new(c[0] * scale, c[1] * scale)).collect();
        a.resize(self.m + PADDING, C64::new(0.0, 0.0));
        Some(a)
    }

    fn harmonics(&self, x: &[f64]) -> Result<QuadratureHarmonics> {
        match self.family {
            Family::FixedNPure => quadrature_harmonics(&self.state(x)?, &self.basis),
            Family::IndefiniteNCoherent => {
                let a = self.amplitudes(x).ok_or_else(|| Error::InvalidParameter("zero amplitude vector".into()))?;
                QuadratureHarmonics::from_fn(self.basis.trap.trap_freq, |t| coherent_sigma_q_sq(&a, &self.basis, t))
            }
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.harmonics(x).map(|h| h.min()).unwrap_or(f64::INFINITY)
    }
}

/// State file over the searched orbitals only (the padding is empty).
fn unpadded(state: &FockState, m: usize) -> StateFile {
    let mut f = StateFile::from(state);
    f.m = m;
    for t in &mut f.terms {
        t.occ.truncate(m);
    }
    f
}

struct Simplex {
    best: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

/// Nelder-Mead with dimension-adapted coefficients.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], step: f64, max_iter: usize, tol: f64) -> Simplex {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        if (vals[n] - vals[0]).abs() <= tol * (1.0 + vals[0].abs()) {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n).map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / nf).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (pts[n][j] - centroid[j])).collect() };
        let xr = along(-alpha);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-alpha * beta);
            let fe = f(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let x = along(-alpha * gamma);
            let v = f(&x);
            (x, v)
        } else {
            let x = along(gamma);
            let v = f(&x);
            (x, v)
        };
        if fc < fr.min(vals[n]) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        for i in 1..=n {
            let p: Vec<f64> = (0..n).map(|j| pts[0][j] + delta * (pts[i][j] - pts[0][j])).collect();
            vals[i] = f(&p);
            pts[i] = p;
        }
    }
    let k = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    Simplex { best: pts[k].clone(), value: vals[k], iterations, converged }
}

/// Restarted simplex descent of min_t sigma_q^2 over the chosen family.
/// Restarts run in parallel and are reported in index order.
pub fn search_state(spec: &SearchSpec, trap: &TrapConfig, fb: Option<&FeedbackConfig>) -> Result<SearchReport> {
    spec.validate()?;
    trap.validate()?;
    let objective = Objective::new(spec, trap)?;
    let trap_n = TrapConfig { atom_count: spec.n, ..*trap };

    if spec.family == Family::FixedNPure && spec.n == 1 {
        // one atom carries no pair correlations: the objective is identically zero
        let mut x = vec![0.0; objective.sector.len() * 2];
        x[0] = 1.0;
        let state = objective.state(&x)?;
        return Ok(SearchReport {
            family: spec.family,
            n: spec.n,
            m: spec.m,
            best_objective: 0.0,
            mean_objective: 0.0,
            best_state: Some(unpadded(&state, spec.m)),
            best_amplitudes: None,
            positivity_ok: Some(true),
            criteria: None,
            restarts: Vec::new(),
        });
    }

    let dim = spec.parameter_count();
    let results: Vec<(Simplex, f64)> = (0..spec.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = trajectory_rng(spec.seed, r);
            let x0: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let start = objective.value(&x0);
            (nelder_mead(|x| objective.value(x), &x0, 0.5, spec.max_iter, spec.tol), start)
        })
        .collect();

    let best_idx = (0..results.len())
        .min_by(|&a, &b| results[a].0.value.total_cmp(&results[b].0.value))
        .unwrap_or(0);
    let best = &results[best_idx].0;
    let restarts: Vec<RestartResult> = results
        .iter()
        .map(|(s, start)| RestartResult { start_objective: *start, objective: s.value, iterations: s.iterations, converged: s.converged })
        .collect();
    let mean_objective = restarts.iter().map(|r| r.objective).sum::<f64>() / restarts.len() as f64;

    let (best_state, best_amplitudes, positivity_ok) = match spec.family {
        Family::FixedNPure => {
            let s = objective.state(&best.best)?;
            (Some(unpadded(&s, spec.m)), None, Some(best.value >= POSITIVITY_FLOOR))
        }
        Family::IndefiniteNCoherent => {
            let a = objective.amplitudes(&best.best).unwrap_or_default();
            (None, Some(a[..spec.m].iter().map(|z| (z.re, z.im)).collect()), None)
        }
    };
    let criteria = match fb {
        Some(fb) => {
            let scales = derive_scales(&trap_n, fb)?;
            Some(evaluate_criteria(&scales, &objective.harmonics(&best.best)?))
        }
        None => None,
    };
    Ok(SearchReport {
        family: spec.family,
        n: spec.n,
        m: spec.m,
        best_objective: best.value,
        mean_objective,
        best_state,
        best_amplitudes,
        positivity_ok,
        criteria,
        restarts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2) + 0.5;
        let s = nelder_mead(f, &[0.0, 0.0], 0.5, 5000, 1e-14);
        assert!(s.converged);
        assert!((s.best[0] - 1.0).abs() < 1e-5 && (s.best[1] + 2.0).abs() < 1e-5);
        assert!((s.value - 0.5).abs() < 1e-10);
        let rosen = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let r = nelder_mead(rosen, &[-1.2, 1.0], 0.5, 20000, 1e-16);
        assert!(r.value < 1e-8, "{}", r.value);
    }

    #[test]
    fn single_atom_objective_is_zero() {
        let spec = SearchSpec::defaults(1, 4);
        let r = search_state(&spec, &TrapConfig::unit(1), None).unwrap();
        assert_eq!(r.best_objective, 0.0);
        assert!(r.restarts.is_empty());
    }

    #[test]
    fn fixed_n_search_stays_nonnegative() {
        let spec = SearchSpec { restarts: 16, max_iter: 3000, ..SearchSpec::defaults(2, 3) };
        let r = search_state(&spec, &TrapConfig::unit(2), None).unwrap();
        assert!(r.best_objective >= POSITIVITY_FLOOR, "{}", r.best_objective);
        assert_eq!(r.positivity_ok, Some(true));
        for x in &r.restarts {
            assert!(x.objective <= x.start_objective);
        }
        let state = r.best_state.unwrap().to_state().unwrap();
        let h = quadrature_harmonics(&state.embed(5).unwrap(), &OrbitalBasis::new(5, TrapConfig::unit(2)).unwrap()).unwrap();
        assert!((h.min() - r.best_objective).abs() < 1e-9);
    }

    #[test]
    fn coherent_objective_matches_closed_form() {
        let spec = SearchSpec { family: Family::IndefiniteNCoherent, ..SearchSpec::defaults(2, 14) };
        let obj = Objective::new(&spec, &TrapConfig::unit(2)).unwrap();
        let basis = OrbitalBasis::new(14, TrapConfig::unit(2)).unwrap();
        let orb = crate::fock::displaced_ground_orbital(&basis, 1.0, 14);
        let x: Vec<f64> = orb.iter().flat_map(|z| [z.re, z.im]).collect();
        let h = obj.harmonics(&x).unwrap();
        assert!((h.eval(0.0) + 0.25).abs() < 1e-9, "{}", h.eval(0.0));
        // (1/2 + d^2 c^2)(1 - 1/N) - d^2 c^2 is smallest at c^2 = 1
        assert!((h.min() + 0.25).abs() < 1e-9);
    }

    #[test]
    fn coherent_search_goes_negative() {
        let spec = SearchSpec {
            family: Family::IndefiniteNCoherent,
            restarts: 4,
            max_iter: 1500,
            ..SearchSpec::defaults(2, 4)
        };
        let fb = FeedbackConfig::new(1.0, 0.5).unwrap();
        let r = search_state(&spec, &TrapConfig::unit(2), Some(&fb)).unwrap();
        assert!(r.best_objective < 0.0);
        assert!(r.criteria.unwrap().schwarz_violated);
        assert_eq!(r.best_amplitudes.unwrap().len(), 4);
    }

    #[test]
    fn deterministic_and_validated() {
        let spec = SearchSpec { restarts: 4, max_iter: 300, seed: 5, ..SearchSpec::defaults(2, 3) };
        let a = serde_json::to_string(&search_state(&spec, &TrapConfig::unit(2), None).unwrap()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| serde_json::to_string(&search_state(&spec, &TrapConfig::unit(2), None).unwrap()).unwrap());
        assert_eq!(a, b);
        assert!(SearchSpec { restarts: 0, ..spec.clone() }.validate().is_err());
        assert!(SearchSpec { tol: 0.0, ..spec.clone() }.validate().is_err());
        assert!(matches!(SearchSpec::defaults(4, 6).validate(), Err(Error::DimensionTooLarge { .. })));
    }
}
