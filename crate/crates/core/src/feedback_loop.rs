//! Discrete measure-and-kick loop.
//!
//! At each event the centre of mass is measured with Gaussian resolution
//! `sigma0`, giving `X_m`, and every atom is shifted by `-zeta0 X_m`.
//! Between events the trap rotates phase space. Conditional states stay
//! Gaussian, so a trajectory is a Kalman filter on (X, P); the ensemble
//! average tends to the continuous feedback dynamics with
//! `zeta = zeta0 gamma`, `sigma = sigma0 / sqrt(gamma)`.

use std::io::Write;
use std::ops::Range;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::JointMoments;
use crate::oracle::DensityMatrix;
use crate::output::CsvWriter;
use crate::scales::{FeedbackConfig, TrapConfig};

/// Resolutions below this many trap lengths are rejected.
pub const MIN_RESOLUTION_REL: f64 = 1e-9;
/// Event rate, in trap frequencies, below which timescales are not separated.
pub const MIN_RATE_RATIO: f64 = 20.0;
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    #[default]
    Regular,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub gamma: f64,
    pub sigma0: f64,
    pub zeta0: f64,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "K")]
    pub trajectories: usize,
}

impl LoopConfig {
    pub fn new(gamma: f64, sigma0: f64, zeta0: f64, trajectories: usize, seed: u64) -> Self {
        LoopConfig { gamma, sigma0, zeta0, schedule: Schedule::Regular, seed, trajectories }
    }

    /// Loop parameters that reproduce a continuous feedback configuration.
    pub fn from_continuous(fb: &FeedbackConfig, gamma: f64, trajectories: usize, seed: u64) -> Self {
        LoopConfig::new(gamma, fb.meas_resolution * gamma.sqrt(), fb.shift_rate / gamma, trajectories, seed)
    }

    pub fn validate(&self, trap: &TrapConfig) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::NonPositiveRate(self.gamma));
        }
        if !(self.sigma0 > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma0 must be positive, got {}", self.sigma0)));
        }
        if self.sigma0 < MIN_RESOLUTION_REL * trap_length(trap) {
            return Err(Error::MinResolution(self.sigma0));
        }
        if !(self.zeta0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("zeta0 must be non-negative, got {}", self.zeta0)));
        }
        if self.trajectories == 0 {
            return Err(Error::InvalidParameter("at least one trajectory is required".into()));
        }
        Ok(())
    }

    /// (zeta, sigma) of the continuous limit.
    pub fn continuous(&self) -> (f64, f64) {
        (self.zeta0 * self.gamma, self.sigma0 / self.gamma.sqrt())
    }

    pub fn warnings(&self, trap: &TrapConfig) -> Vec<String> {
        let mut w = Vec::new();
        if self.gamma < MIN_RATE_RATIO * trap.trap_freq {
            w.push(format!(
                "TimescaleViolation: event rate {} is below {} trap frequencies",
                self.gamma, MIN_RATE_RATIO
            ));
        }
        w
    }
}

fn trap_length(trap: &TrapConfig) -> f64 {
    (trap.hbar / (trap.mass * trap.trap_freq)).sqrt()
}

/// Conditional Gaussian state of the centre of mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmGaussian {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl CmGaussian {
    pub fn from_moments(m: &JointMoments) -> Self {
        let (mean, cov) = m.collective();
        CmGaussian { mean: Vector2::new(mean[0], mean[1]), cov: Matrix2::new(cov[(0, 0)], cov[(0, 1)], cov[(1, 0)], cov[(1, 1)]) }
    }
}

pub fn sample_measurement<R: Rng + ?Sized>(state: &CmGaussian, sigma0: f64, rng: &mut R) -> f64 {
    let sd = (state.cov[(0, 0)] + sigma0 * sigma0).sqrt();
    let z: f64 = rng.sample(StandardNormal);
    state.mean[0] + sd * z
}

fn back_action(trap: &TrapConfig, sigma0: f64) -> f64 {
    trap.hbar * trap.hbar / (4.0 * sigma0 * sigma0)
}

/// Gaussian conditioning on the outcome plus the momentum back-action of
/// the measurement.
pub fn measurement_update(state: &CmGaussian, x_m: f64, sigma0: f64, trap: &TrapConfig) -> Result<CmGaussian> {
    if !(sigma0 >= MIN_RESOLUTION_REL * trap_length(trap)) {
        return Err(Error::MinResolution(sigma0));
    }
    let s = state.cov[(0, 0)] + sigma0 * sigma0;
    let gain = state.cov.column(0) / s;
    let mean = state.mean + gain * (x_m - state.mean[0]);
    let mut cov = state.cov - gain * gain.transpose() * s;
    cov[(1, 1)] += back_action(trap, sigma0);
    Ok(CmGaussian { mean, cov: 0.5 * (cov + cov.transpose()) })
}

/// Rigid shift of every atom by `-zeta0 X_m`.
pub fn kick(state: &CmGaussian, x_m: f64, zeta0: f64) -> CmGaussian {
    let mut out = *state;
    out.mean[0] -= zeta0 * x_m;
    out
}

/// Same event on the joint (x, p, Xbar, Pbar) moments; its collective
/// projection equals [`measurement_update`] followed by [`kick`].
pub fn joint_event(m: &JointMoments, x_m: f64, sigma0: f64, zeta0: f64, trap: &TrapConfig) -> Result<JointMoments> {
    if !(sigma0 >= MIN_RESOLUTION_REL * trap_length(trap)) {
        return Err(Error::MinResolution(sigma0));
    }
    let d = m.dim();
    let n = m.atom_count as f64;
    let (h, u, shift) = if m.atom_count == 1 {
        (vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0])
    } else {
        (vec![1.0 / n, 0.0, (n - 1.0) / n, 0.0], vec![0.0, 1.0 / n, 0.0, (n - 1.0) / n], vec![1.0, 0.0, 1.0, 0.0])
    };
    let h = DVector::from_vec(h);
    let u = DVector::from_vec(u);
    let shift = DVector::from_vec(shift);
    let s = (h.transpose() * &m.cov * &h)[(0, 0)] + sigma0 * sigma0;
    let gain = &m.cov * &h / s;
    let innov = x_m - h.dot(&m.mean);
    let mean = &m.mean + &gain * innov - shift * (zeta0 * x_m);
    let cov = &m.cov - &gain * gain.transpose() * s + &u * u.transpose() * back_action(trap, sigma0);
    debug_assert_eq!(mean.len(), d);
    JointMoments::new(mean, cov, m.atom_count)
}

/// Free harmonic evolution of (X, P) over `tau`; the cm carries mass N m.
pub fn cm_rotation(trap: &TrapConfig, tau: f64) -> Matrix2<f64> {
    let mw = trap.n() * trap.mass * trap.trap_freq;
    let (s, c) = (trap.trap_freq * tau).sin_cos();
    Matrix2::new(c, s / mw, -mw * s, c)
}

fn rotate(state: &CmGaussian, r: &Matrix2<f64>) -> CmGaussian {
    CmGaussian { mean: r * state.mean, cov: r * state.cov * r.transpose() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoopRow {
    pub t: f64,
    pub mean_x: f64,
    pub var_x: f64,
    pub mean_p: f64,
    pub var_p: f64,
    pub n_events: f64,
    /// Standard error of `mean_x` over trajectories.
    #[serde(skip)]
    pub stderr_mean_x: f64,
}

/// Running sums over trajectories at each record time.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopAccumulator {
    times: Vec<f64>,
    count: usize,
    sums: Vec<[f64; 7]>,
}

impl LoopAccumulator {
    fn new(times: Vec<f64>) -> Self {
        let n = times.len();
        LoopAccumulator { times, count: 0, sums: vec![[0.0; 7]; n] }
    }

    fn add(&mut self, j: usize, s: &CmGaussian, events: usize) {
        let a = &mut self.sums[j];
        let (mx, mp) = (s.mean[0], s.mean[1]);
        a[0] += mx;
        a[1] += mx * mx;
        a[2] += s.cov[(0, 0)];
        a[3] += mp;
        a[4] += mp * mp;
        a[5] += s.cov[(1, 1)];
        a[6] += events as f64;
    }

    /// Combines two disjoint sets of trajectories.
    pub fn merge(&mut self, other: &LoopAccumulator) {
        self.count += other.count;
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            for k in 0..7 {
                a[k] += b[k];
            }
        }
    }

    pub fn trajectories(&self) -> usize {
        self.count
    }

    /// Unconditional moments by the law of total variance.
    pub fn rows(&self) -> Vec<LoopRow> {
        let k = self.count as f64;
        self.times
            .iter()
            .zip(&self.sums)
            .map(|(&t, a)| {
                let (mx, mp) = (a[0] / k, a[3] / k);
                let spread_x = (a[1] / k - mx * mx).max(0.0);
                let spread_p = (a[4] / k - mp * mp).max(0.0);
                LoopRow {
                    t,
                    mean_x: mx,
                    var_x: a[2] / k + spread_x,
                    mean_p: mp,
                    var_p: a[5] / k + spread_p,
                    n_events: a[6] / k,
                    stderr_mean_x: (spread_x / k).sqrt(),
                }
            })
            .collect()
    }
}

fn record_times(t_max: f64, record_dt: f64) -> Result<Vec<f64>> {
    if !(record_dt > 0.0) || !(t_max >= 0.0) {
        return Err(Error::InvalidParameter("record step must be positive and t_max non-negative".into()));
    }
    let n = (t_max / record_dt + 1e-9).floor() as usize;
    Ok((0..=n).map(|j| j as f64 * record_dt).collect())
}

/// RNG of trajectory `index`: the configured seed, stream `index`.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn run_one(
    init: &CmGaussian,
    cfg: &LoopConfig,
    trap: &TrapConfig,
    index: usize,
    acc: &mut LoopAccumulator,
) -> Result<()> {
    let mut rng = trajectory_rng(cfg.seed, index);
    let gap = Exp::new(cfg.gamma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let regular_step = cm_rotation(trap, 1.0 / cfg.gamma);
    let next_gap = |rng: &mut ChaCha8Rng| match cfg.schedule {
        Schedule::Regular => 1.0 / cfg.gamma,
        Schedule::Poisson => gap.sample(rng),
    };
    let mut state = *init;
    let mut t_state = 0.0;
    let mut events = 0usize;
    let mut k_regular = 1usize;
    let mut t_event = match cfg.schedule {
        Schedule::Regular => 1.0 / cfg.gamma,
        Schedule::Poisson => next_gap(&mut rng),
    };
    for j in 0..acc.times.len() {
        let t_rec = acc.times[j];
        let slack = 1e-12 * t_rec.max(1.0);
        while t_event <= t_rec + slack {
            let r = match cfg.schedule {
                Schedule::Regular if events > 0 => regular_step,
                _ => cm_rotation(trap, t_event - t_state),
            };
            state = rotate(&state, &r);
            let x_m = sample_measurement(&state, cfg.sigma0, &mut rng);
            state = kick(&measurement_update(&state, x_m, cfg.sigma0, trap)?, x_m, cfg.zeta0);
            t_state = t_event;
            events += 1;
            t_event = match cfg.schedule {
                Schedule::Regular => {
                    k_regular += 1;
                    k_regular as f64 / cfg.gamma
                }
                Schedule::Poisson => t_event + next_gap(&mut rng),
            };
        }
        let view = rotate(&state, &cm_rotation(trap, t_rec - t_state));
        acc.add(j, &view, events);
    }
    acc.count += 1;
    Ok(())
}

/// Simulates the trajectories with indices in `range`.
pub fn simulate_trajectories(
    init: &JointMoments,
    cfg: &LoopConfig,
    trap: &TrapConfig,
    t_max: f64,
    record_dt: f64,
    range: Range<usize>,
) -> Result<LoopAccumulator> {
    cfg.validate(trap)?;
    let times = record_times(t_max, record_dt)?;
    let init = CmGaussian::from_moments(init);
    let starts: Vec<usize> = range.clone().step_by(CHUNK).collect();
    let chunks: Vec<Result<LoopAccumulator>> = starts
        .par_iter()
        .map(|&s| {
            let mut acc = LoopAccumulator::new(times.clone());
            for i in s..(s + CHUNK).min(range.end) {
                run_one(&init, cfg, trap, i, &mut acc)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = LoopAccumulator::new(times);
    for c in chunks {
        total.merge(&c?);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopRun {
    pub rows: Vec<LoopRow>,
    pub warnings: Vec<String>,
    pub summary: LoopSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopSummary {
    pub gamma: f64,
    pub sigma0: f64,
    pub zeta0: f64,
    #[serde(rename = "K")]
    pub trajectories: usize,
    pub seed: u64,
}

/// Ensemble of `cfg.trajectories` trajectories, recorded every `record_dt`.
pub fn run_ensemble(init: &JointMoments, cfg: &LoopConfig, trap: &TrapConfig, t_max: f64, record_dt: f64) -> Result<LoopRun> {
    let acc = simulate_trajectories(init, cfg, trap, t_max, record_dt, 0..cfg.trajectories)?;
    Ok(LoopRun {
        rows: acc.rows(),
        warnings: cfg.warnings(trap),
        summary: LoopSummary {
            gamma: cfg.gamma,
            sigma0: cfg.sigma0,
            zeta0: cfg.zeta0,
            trajectories: cfg.trajectories,
            seed: cfg.seed,
        },
    })
}

pub fn write_loop_csv<W: Write>(out: W, rows: &[LoopRow]) -> Result<()> {
    let mut w = CsvWriter::new(out, &["t", "mean_X", "var_X", "mean_P", "var_P", "n_events"])?;
    for r in rows {
        w.row(&[r.t, r.mean_x, r.var_x, r.mean_p, r.var_p, r.n_events])?;
    }
    w.finish()
}

fn event_map(cfg: &LoopConfig, trap: &TrapConfig) -> (Matrix2<f64>, Matrix2<f64>) {
    let d = Matrix2::new(1.0 - cfg.zeta0, 0.0, 0.0, 1.0);
    let q = Matrix2::new(cfg.zeta0 * cfg.zeta0 * cfg.sigma0 * cfg.sigma0, 0.0, 0.0, back_action(trap, cfg.sigma0));
    (d, q)
}

fn solve_linear_2x2_map<F: Fn(&Matrix2<f64>) -> Matrix2<f64>>(f: F, rhs: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    // columns of the 4x4 operator from the action on basis matrices
    let mut op = DMatrix::zeros(4, 4);
    for k in 0..4 {
        let mut e = Matrix2::zeros();
        e[(k % 2, k / 2)] = 1.0;
        let col = f(&e);
        for r in 0..4 {
            op[(r, k)] = col[(r % 2, r / 2)];
        }
    }
    let b = DVector::from_iterator(4, (0..4).map(|r| rhs[(r % 2, r / 2)]));
    let x = op.lu().solve(&b).ok_or(Error::SingularLyapunov)?;
    let s = Matrix2::new(x[0], x[2], x[1], x[3]);
    Ok(0.5 * (s + s.transpose()))
}

/// Stationary unconditional cm covariance of the regular schedule, taken
/// immediately after an event: fixed point of `S -> D R S R^T D + Q`.
pub fn regular_stationary_cov(cfg: &LoopConfig, trap: &TrapConfig) -> Result<Matrix2<f64>> {
    cfg.validate(trap)?;
    let (d, q) = event_map(cfg, trap);
    let r = cm_rotation(trap, 1.0 / cfg.gamma);
    let f = d * r;
    solve_linear_2x2_map(|s| s - f * s * f.transpose(), &q)
}

/// Stationary unconditional cm covariance for Poisson events at rate gamma:
/// `A0 S + S A0^T + gamma (D S D + Q - S) = 0`.
pub fn poisson_stationary_cov(cfg: &LoopConfig, trap: &TrapConfig) -> Result<Matrix2<f64>> {
    cfg.validate(trap)?;
    let (d, q) = event_map(cfg, trap);
    let mw = trap.n() * trap.mass * trap.trap_freq;
    let a0 = Matrix2::new(0.0, trap.trap_freq / mw, -mw * trap.trap_freq, 0.0);
    let g = cfg.gamma;
    solve_linear_2x2_map(|s| -(a0 * s + s * a0.transpose()) - (d * s * d - s) * g, &(q * g))
}

/// Fock-space event for one or two atoms: `K = exp(-(X - X_m)^2 / 4 sigma0^2)`
/// conditions, then `exp(i zeta0 X_m P / hbar)` shifts every atom by
/// `-zeta0 X_m`. Returns the unnormalized post-event state, whose trace is
/// the outcome density (up to the Gaussian prefactor applied here).
pub struct KrausBackend {
    x_vals: DVector<f64>,
    x_vecs: DMatrix<C64>,
    p_vals: DVector<f64>,
    p_vecs: DMatrix<C64>,
    sigma0: f64,
    zeta0: f64,
    hbar: f64,
}

impl KrausBackend {
    pub fn new(x_cm: &DMatrix<C64>, p_cm: &DMatrix<C64>, sigma0: f64, zeta0: f64, hbar: f64) -> Result<Self> {
        if x_cm.nrows() > 200 {
            return Err(Error::DimensionTooLarge { dim: x_cm.nrows(), limit: 200 });
        }
        let xe = SymmetricEigen::new(x_cm.clone());
        let pe = SymmetricEigen::new(p_cm.clone());
        Ok(KrausBackend {
            x_vals: xe.eigenvalues,
            x_vecs: xe.eigenvectors,
            p_vals: pe.eigenvalues,
            p_vecs: pe.eigenvectors,
            sigma0,
            zeta0,
            hbar,
        })
    }

    fn kraus(&self, x_m: f64) -> DMatrix<C64> {
        let norm = (2.0 * std::f64::consts::PI * self.sigma0 * self.sigma0).powf(-0.25);
        let diag = self.x_vals.map(|l| C64::new(norm * (-(l - x_m).powi(2) / (4.0 * self.sigma0 * self.sigma0)).exp(), 0.0));
        &self.x_vecs * DMatrix::from_diagonal(&diag) * self.x_vecs.adjoint()
    }

    fn shift(&self, x_m: f64) -> DMatrix<C64> {
        let diag = self.p_vals.map(|l| C64::new(0.0, self.zeta0 * x_m * l / self.hbar).exp());
        &self.p_vecs * DMatrix::from_diagonal(&diag) * self.p_vecs.adjoint()
    }

    /// Post-event state for outcome `x_m`; its trace is the outcome density.
    pub fn conditional(&self, rho: &DensityMatrix, x_m: f64) -> DMatrix<C64> {
        let op = self.shift(x_m) * self.kraus(x_m);
        &op * &rho.matrix * op.adjoint()
    }

    /// Outcome-averaged event by trapezoidal quadrature over
    /// `center +- width` with `nodes` points.
    pub fn averaged(&self, rho: &DensityMatrix, center: f64, width: f64, nodes: usize) -> Result<DensityMatrix> {
        let d = rho.matrix.nrows();
        let mut out = DMatrix::zeros(d, d);
        let h = 2.0 * width / (nodes - 1) as f64;
        for k in 0..nodes {
            let x_m = center - width + h * k as f64;
            let w = if k == 0 || k == nodes - 1 { 0.5 * h } else { h };
            out += self.conditional(rho, x_m) * C64::new(w, 0.0);
        }
        DensityMatrix::new(out, rho.sector().clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{FockState, OrbitalBasis};
    use crate::moments::{build_generators, evolve, init_moments, stationary_cm};
    use crate::oracle::{build_generator, SectorOperator};

    fn trap(n: usize) -> TrapConfig {
        TrapConfig::unit(n)
    }

    fn ground(n: usize) -> JointMoments {
        let mut occ = vec![0u16; 3];
        occ[0] = n as u16;
        init_moments(&FockState::occupation(&occ).unwrap(), &OrbitalBasis::new(3, trap(n)).unwrap()).unwrap()
    }

    fn gauss(mx: f64, v: f64) -> CmGaussian {
        CmGaussian { mean: Vector2::new(mx, 0.0), cov: Matrix2::new(v, 0.0, 0.0, 0.5) }
    }

    #[test]
    fn measurement_statistics() {
        let s = gauss(0.3, 0.4);
        let mut rng = trajectory_rng(1, 0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_measurement(&s, 0.5, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let want = 0.4 + 0.25;
        assert!((mean - 0.3).abs() < 3.0 * (want / n as f64).sqrt());
        assert!((var - want).abs() < 3.0 * want * (2.0 / n as f64).sqrt());
        // sharp state: outcome spread is the resolution alone
        let sharp = CmGaussian { cov: Matrix2::zeros(), ..s };
        let ys: Vec<f64> = (0..n).map(|_| sample_measurement(&sharp, 2.0, &mut rng)).collect();
        let v = ys.iter().map(|y| (y - 0.3).powi(2)).sum::<f64>() / n as f64;
        assert!((v - 4.0).abs() < 3.0 * 4.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn update_examples() {
        let t = trap(1);
        let v = 0.36;
        let s = gauss(0.0, v);
        let post = measurement_update(&s, 0.2, v.sqrt(), &t).unwrap();
        assert!((post.cov[(0, 0)] - v / 2.0).abs() < 1e-15);
        assert!((post.mean[0] - 0.1).abs() < 1e-15);
        assert!((post.cov[(1, 1)] - (0.5 + 1.0 / (4.0 * v))).abs() < 1e-12);
        let loose = measurement_update(&s, 0.2, 1e8, &t).unwrap();
        assert!((loose.mean - s.mean).norm() < 1e-15 && (loose.cov - s.cov).norm() < 1e-15);
        assert!(matches!(measurement_update(&s, 0.2, 1e-12, &t), Err(Error::MinResolution(_))));
        for sigma0 in [0.1, 1.0, 5.0] {
            assert!(measurement_update(&s, 1.0, sigma0, &t).unwrap().cov[(0, 0)] <= v);
        }
    }

    #[test]
    fn kick_examples() {
        let s = gauss(0.7, 0.1);
        assert_eq!(kick(&s, 0.7, 0.0), s);
        let k = kick(&s, 0.7, 1.0);
        assert_eq!(k.mean[0], 0.0);
        assert_eq!(k.cov, s.cov);
        // nearly projective measurement of a sharp state followed by a full kick
        let t = trap(1);
        let sharp = CmGaussian { cov: Matrix2::new(1e-14, 0.0, 0.0, 0.5), ..s };
        let post = kick(&measurement_update(&sharp, 0.7, 1e-6, &t).unwrap(), 0.7, 1.0);
        assert!(post.mean[0].abs() < 1e-6);
    }

    #[test]
    fn averaged_update_is_unbiased() {
        let t = trap(2);
        let s = CmGaussian { mean: Vector2::new(0.4, -0.2), cov: Matrix2::new(0.3, 0.05, 0.05, 0.8) };
        let sigma0 = 0.6;
        let mut rng = trajectory_rng(9, 3);
        let n = 1_000_000;
        let (mut sm, mut sm2, mut sp, mut sp2) = (0.0, 0.0, 0.0, 0.0);
        let mut post_var = Matrix2::zeros();
        for _ in 0..n {
            let x_m = sample_measurement(&s, sigma0, &mut rng);
            let p = measurement_update(&s, x_m, sigma0, &t).unwrap();
            sm += p.mean[0];
            sm2 += p.mean[0] * p.mean[0];
            sp += p.mean[1];
            sp2 += p.mean[1] * p.mean[1];
            post_var = p.cov;
        }
        let nf = n as f64;
        let (mx, mp) = (sm / nf, sp / nf);
        let (vx, vp) = (sm2 / nf - mx * mx, sp2 / nf - mp * mp);
        assert!((mx - 0.4).abs() < 3.0 * (vx / nf).sqrt());
        assert!((mp + 0.2).abs() < 3.0 * (vp / nf).sqrt());
        // conditioning plus outcome spread restores the prior variance
        let total_x = post_var[(0, 0)] + vx;
        assert!((total_x - 0.3).abs() < 3.0 * vx * (2.0 / nf).sqrt());
        let total_p = post_var[(1, 1)] + vp;
        let want_p = 0.8 + 1.0 / (4.0 * sigma0 * sigma0);
        assert!((total_p - want_p).abs() < 3.0 * vp * (2.0 / nf).sqrt());
    }

    #[test]
    fn joint_event_projects_to_cm() {
        let t = trap(3);
        let mut rng = trajectory_rng(4, 0);
        let s = FockState::random(3, 3, 5, &mut rng).unwrap();
        let m = init_moments(&s, &OrbitalBasis::new(5, t.clone()).unwrap()).unwrap();
        let post = joint_event(&m, 0.3, 0.4, 0.2, &t).unwrap();
        let cm = kick(&measurement_update(&CmGaussian::from_moments(&m), 0.3, 0.4, &t).unwrap(), 0.3, 0.2);
        let direct = CmGaussian::from_moments(&post);
        assert!((direct.mean - cm.mean).norm() < 1e-13);
        assert!((direct.cov - cm.cov).norm() < 1e-13);
    }

    #[test]
    fn no_feedback_heats_at_backaction_rate() {
        let t = trap(2);
        let sigma0 = 2.0;
        let cfg = LoopConfig::new(100.0, sigma0, 0.0, 2000, 3);
        let run = run_ensemble(&ground(2), &cfg, &t, 4.0, 0.5).unwrap();
        // rotation conserves var_p + (N m w)^2 var_x; each event adds hbar^2 / 4 sigma0^2
        let kick_var = 1.0 / (4.0 * sigma0 * sigma0);
        let e0 = run.rows[0].var_p + 4.0 * run.rows[0].var_x;
        for r in &run.rows {
            let gained = r.var_p + 4.0 * r.var_x - e0;
            // the outcome-spread part is a sample variance over K trajectories
            let tol = 3.0 * (r.var_p + 4.0 * r.var_x) * (2.0 / 2000.0f64).sqrt() + 1e-10;
            assert!((gained - r.n_events * kick_var).abs() < tol, "{gained}");
            assert!(r.mean_x.abs() < 3.0 * r.stderr_mean_x + 1e-12);
        }
        assert_eq!(run.rows.last().unwrap().n_events, 400.0);
    }

    #[test]
    fn ensemble_mean_follows_continuous_moments() {
        let t = trap(1);
        let fb = FeedbackConfig::new(0.5, 0.8).unwrap();
        let basis = OrbitalBasis::new(30, t.clone()).unwrap();
        let orb = crate::fock::displaced_ground_orbital(&basis, 1.0, 29);
        let s = crate::fock::condensate_state(&orb, 1).unwrap().embed(30).unwrap();
        let m0 = init_moments(&s, &basis).unwrap();
        let cfg = LoopConfig::from_continuous(&fb, 100.0, 2000, 11);
        let run = run_ensemble(&m0, &cfg, &t, 6.0, 0.5).unwrap();
        let g = build_generators(&t, &fb).unwrap();
        for r in &run.rows {
            let want = evolve(&m0, &g, r.t).unwrap().collective().0[0];
            let tol = (0.02 * want.abs()).max(3.0 * r.stderr_mean_x) + 0.01;
            assert!((r.mean_x - want).abs() < tol, "t {} got {} want {}", r.t, r.mean_x, want);
        }
    }

    #[test]
    fn exact_discrete_stationary_states() {
        let t = trap(2);
        let fb = FeedbackConfig::new(1.0, 0.5).unwrap();
        let target = stationary_cm(&build_generators(&t, &fb).unwrap()).unwrap().powi(2);
        let mut prev_reg = f64::INFINITY;
        let mut prev_gap = f64::INFINITY;
        for gamma in [25.0, 50.0, 100.0, 200.0, 400.0] {
            let cfg = LoopConfig::from_continuous(&fb, gamma, 1, 0);
            let reg = regular_stationary_cov(&cfg, &t).unwrap()[(0, 0)];
            let poi = poisson_stationary_cov(&cfg, &t).unwrap()[(0, 0)];
            let err = (reg - target).abs();
            assert!(err < prev_reg);
            // first-order convergence: halving the spacing halves the error
            if prev_reg.is_finite() {
                assert!((prev_reg / err - 2.0).abs() < 0.2, "{}", prev_reg / err);
            }
            prev_reg = err;
            let gap = (reg - poi).abs();
            assert!(gap < prev_gap);
            prev_gap = gap;
        }
    }

    #[test]
    fn regular_ensemble_matches_exact_discrete_value() {
        let t = trap(2);
        let fb = FeedbackConfig::new(1.0, 0.5).unwrap();
        let cfg = LoopConfig::from_continuous(&fb, 50.0, 4000, 5);
        let want = regular_stationary_cov(&cfg, &t).unwrap()[(0, 0)];
        // records at event times, well after relaxation
        let run = run_ensemble(&ground(2), &cfg, &t, 16.0, 1.0 / 50.0).unwrap();
        let late: Vec<f64> = run.rows.iter().filter(|r| r.t > 12.0).map(|r| r.var_x).collect();
        let avg = late.iter().sum::<f64>() / late.len() as f64;
        assert!((avg / want - 1.0).abs() < 0.03, "{avg} vs {want}");
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let t = trap(2);
        let mut cfg = LoopConfig::new(40.0, 1.0, 0.02, 300, 77);
        cfg.schedule = Schedule::Poisson;
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let r = run_ensemble(&ground(2), &cfg, &t, 3.0, 0.25).unwrap();
                let mut buf = Vec::new();
                write_loop_csv(&mut buf, &r.rows).unwrap();
                buf
            })
        };
        let a = run(1);
        assert_eq!(a, run(4));
        assert_eq!(a, run(3));
    }

    #[test]
    fn warnings_and_validation() {
        let t = trap(1);
        assert!(!LoopConfig::new(10.0, 1.0, 0.1, 1, 0).warnings(&t).is_empty());
        assert!(LoopConfig::new(100.0, 1.0, 0.1, 1, 0).warnings(&t).is_empty());
        assert!(LoopConfig::new(0.0, 1.0, 0.1, 1, 0).validate(&t).is_err());
        assert!(LoopConfig::new(10.0, 1.0, -0.1, 1, 0).validate(&t).is_err());
        assert!(LoopConfig::new(10.0, 1.0, 0.1, 0, 0).validate(&t).is_err());
        let (z, s) = LoopConfig::new(100.0, 2.0, 0.01, 1, 0).continuous();
        assert!((z - 1.0).abs() < 1e-15 && (s - 0.2).abs() < 1e-15);
    }

    #[test]
    fn kraus_event_matches_gaussian_event() {
        let tr = trap(2);
        let basis = OrbitalBasis::new(16, tr.clone()).unwrap();
        let fb = FeedbackConfig::new(1.0, 1.0).unwrap();
        let gen = build_generator(&tr, &fb, &basis).unwrap();
        let sector = gen.sector().clone();
        let x = gen.x_cm().to_dense();
        let p = gen.p_cm().to_dense();
        let (sigma0, zeta0) = (1.5, 0.1);
        let backend = KrausBackend::new(&x, &p, sigma0, zeta0, 1.0).unwrap();
        let mut o = vec![0u16; 16];
        o[0] = 1;
        o[1] = 1;
        let rho = DensityMatrix::from_state(&FockState::occupation(&o).unwrap(), sector.clone()).unwrap();
        let before = CmGaussian::from_moments(&crate::moments::init_moments(&rho, &basis).unwrap());
        let after = backend.averaged(&rho, 0.0, 12.0, 481).unwrap();
        assert!((after.trace() - 1.0).abs() < 1e-9);
        let ex = |m: &DMatrix<C64>| (m * &after.matrix).trace().re;
        let mean_x = ex(&x);
        let var_x = ex(&(&x * &x)) - mean_x * mean_x;
        let var_p = ex(&(&p * &p)) - ex(&p).powi(2);
        let want_x = (1.0 - zeta0).powi(2) * before.cov[(0, 0)] + zeta0 * zeta0 * sigma0 * sigma0;
        let want_p = before.cov[(1, 1)] + 1.0 / (4.0 * sigma0 * sigma0);
        assert!(mean_x.abs() < 1e-9);
        assert!((var_x - want_x).abs() < 1e-6, "{var_x} vs {want_x}");
        assert!((var_p - want_p).abs() < 1e-6, "{var_p} vs {want_p}");
        let _ = SectorOperator::from_one_body(&basis.position(), &sector);
    }
}
