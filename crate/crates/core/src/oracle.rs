//! Brute-force integration of the N-atom feedback master equation on a
//! truncated fixed-N Fock sector, for one or two atoms.
//!
//! ```text
//! d rho/dt = -(i/hbar)[H, rho] + i (zeta/2hbar) [P, {X, rho}]
//!            - (1/8 sigma^2) [X, [X, rho]] - (zeta^2 sigma^2 / 2 hbar^2) [P, [P, rho]]
//! ```
//!
//! with `X = (1/N) sum x_ij a_i^dag a_j` and `P = sum p_ij a_i^dag a_j`. The
//! density matrix is dense; X and P are stored as sparse rows.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::{
    apply_one_body, enumerate_occupations, Amplitudes, FockState, ManyBody, Occupation, OneBodyDensity,
    OneBodyOperator, OrbitalBasis, StateEnsemble,
};
use crate::moments::{build_generators, evolve, init_moments_with, trajectory_row, JointMoments, TRAJECTORY_COLUMNS};
use crate::output::CsvWriter;
use crate::scales::{FeedbackConfig, TrapConfig};

pub const MAX_SECTOR_DIM: usize = 10_000;
/// Top-orbital population above which the truncation is declared broken.
pub const LEAK_LIMIT: f64 = 1e-6;
/// Most negative eigenvalue tolerated before reporting loss of positivity.
pub const POSITIVITY_LIMIT: f64 = -1e-6;
/// Leak tolerance used when mapping evolved density matrices to moments.
pub const MOMENT_LEAK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SectorBasis {
    atom_count: usize,
    mode_count: usize,
    occupations: Vec<Occupation>,
    index: HashMap<Occupation, usize>,
}

impl SectorBasis {
    pub fn new(atom_count: usize, mode_count: usize) -> Result<Self> {
        let dim = crate::fock::sector_dimension(atom_count, mode_count);
        if dim > MAX_SECTOR_DIM {
            return Err(Error::DimensionTooLarge { dim, limit: MAX_SECTOR_DIM });
        }
        let occupations = enumerate_occupations(atom_count, mode_count);
        let index = occupations.iter().enumerate().map(|(i, o)| (o.clone(), i)).collect();
        Ok(SectorBasis { atom_count, mode_count, occupations, index })
    }

    pub fn dim(&self) -> usize {
        self.occupations.len()
    }

    pub fn occupation(&self, i: usize) -> &Occupation {
        &self.occupations[i]
    }

    pub fn index_of(&self, occ: &Occupation) -> Option<usize> {
        self.index.get(occ).copied()
    }

    pub fn vector(&self, state: &FockState) -> Result<Vec<C64>> {
        if state.atom_count() != self.atom_count || state.mode_count() != self.mode_count {
            return Err(Error::InvalidParameter("state lies outside this sector".into()));
        }
        let mut v = vec![C64::new(0.0, 0.0); self.dim()];
        for (occ, a) in state.terms() {
            v[self.index[occ]] = *a;
        }
        Ok(v)
    }
}

/// Sector matrix in compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl SectorOperator {
    /// Second-quantized `sum_ij A_ij a_i^dag a_j` restricted to the sector.
    pub fn from_one_body(op: &OneBodyOperator, sector: &SectorBasis) -> Self {
        let dim = sector.dim();
        let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); dim];
        for col in 0..dim {
            let mut v = Amplitudes::new();
            v.insert(sector.occupation(col).clone(), C64::new(1.0, 0.0));
            for (occ, a) in apply_one_body(op, &v) {
                rows[sector.index[&occ]].push((col, a));
            }
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            for (c, a) in r {
                cols.push(c);
                vals.push(a);
            }
            row_ptr.push(cols.len());
        }
        SectorOperator { dim, row_ptr, cols, vals }
    }

    pub fn scaled(mut self, f: f64) -> Self {
        self.vals.iter_mut().for_each(|v| *v *= f);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `self * y` for a dense matrix `y`.
    pub fn mul_dense(&self, y: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.dim, y.ncols());
        for c in 0..y.ncols() {
            let col = y.column(c);
            for r in 0..self.dim {
                let mut acc = C64::new(0.0, 0.0);
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.vals[k] * col[self.cols[k]];
                }
                out[(r, c)] = acc;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[(r, self.cols[k])] += self.vals[k];
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub matrix: DMatrix<C64>,
    sector: Arc<SectorBasis>,
}

impl DensityMatrix {
    pub fn new(matrix: DMatrix<C64>, sector: Arc<SectorBasis>) -> Result<Self> {
        if matrix.shape() != (sector.dim(), sector.dim()) {
            return Err(Error::InvalidParameter("density matrix shape differs from sector dimension".into()));
        }
        Ok(DensityMatrix { matrix, sector })
    }

    pub fn from_state(state: &FockState, sector: Arc<SectorBasis>) -> Result<Self> {
        let v = nalgebra::DVector::from_vec(sector.vector(state)?);
        DensityMatrix::new(&v * v.adjoint(), sector)
    }

    pub fn from_ensemble(ens: &StateEnsemble, sector: Arc<SectorBasis>) -> Result<Self> {
        let d = sector.dim();
        let mut m = DMatrix::zeros(d, d);
        for (w, s) in ens.members() {
            let v = nalgebra::DVector::from_vec(sector.vector(s)?);
            m += &v * v.adjoint() * C64::new(*w, 0.0);
        }
        DensityMatrix::new(m, sector)
    }

    pub fn sector(&self) -> &Arc<SectorBasis> {
        &self.sector
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.matrix.clone()).eigenvalues.min()
    }

    fn hermitize(&mut self) {
        self.matrix = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
    }
}

impl ManyBody for DensityMatrix {
    fn atom_count(&self) -> usize {
        self.sector.atom_count
    }

    fn mode_count(&self) -> usize {
        self.sector.mode_count
    }

    // rho1[n][k] = Tr(rho a_k^dag a_n) = sum_i rho[i][j] <j|a_k^dag a_n|i>
    fn one_body_density(&self) -> OneBodyDensity {
        let m = self.sector.mode_count;
        let mut rho1 = DMatrix::zeros(m, m);
        for i in 0..self.sector.dim() {
            let occ = self.sector.occupation(i);
            let mut next = occ.clone();
            for n in 0..m {
                if occ[n] == 0 {
                    continue;
                }
                rho1[(n, n)] += self.matrix[(i, i)] * occ[n] as f64;
                for k in 0..m {
                    if k == n {
                        continue;
                    }
                    next[n] -= 1;
                    next[k] += 1;
                    let j = self.sector.index[&next];
                    let f = ((occ[n] as f64) * (occ[k] as f64 + 1.0)).sqrt();
                    rho1[(n, k)] += self.matrix[(i, j)] * f;
                    next[n] += 1;
                    next[k] -= 1;
                }
            }
        }
        OneBodyDensity { matrix: rho1, atom_count: self.sector.atom_count }
    }

    fn weight_from_orbital(&self, first: usize) -> f64 {
        (0..self.sector.dim())
            .filter(|&i| self.sector.occupation(i).iter().skip(first).any(|&v| v > 0))
            .map(|i| self.matrix[(i, i)].re)
            .sum()
    }

    fn raw_expectation(&self, ops: &[&OneBodyOperator]) -> C64 {
        let mut y = self.matrix.clone();
        for op in ops.iter().rev() {
            y = SectorOperator::from_one_body(op, &self.sector).mul_dense(&y);
        }
        y.trace()
    }
}

/// Which terms of the master equation are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorTerms {
    pub hamiltonian: bool,
    pub friction: bool,
    pub measurement: bool,
    pub feedback_noise: bool,
}

impl GeneratorTerms {
    pub const ALL: GeneratorTerms = GeneratorTerms { hamiltonian: true, friction: true, measurement: true, feedback_noise: true };
}

#[derive(Debug, Clone)]
pub struct LindbladGenerator {
    sector: Arc<SectorBasis>,
    energies: Vec<f64>,
    x_cm: SectorOperator,
    p_cm: SectorOperator,
    hbar: f64,
    friction: f64,
    measurement: f64,
    noise: f64,
    trap_freq: f64,
    basis: OrbitalBasis,
}

pub fn build_generator(trap: &TrapConfig, fb: &FeedbackConfig, basis: &OrbitalBasis) -> Result<LindbladGenerator> {
    build_generator_with(trap, fb, basis, GeneratorTerms::ALL)
}

pub fn build_generator_with(
    trap: &TrapConfig,
    fb: &FeedbackConfig,
    basis: &OrbitalBasis,
    terms: GeneratorTerms,
) -> Result<LindbladGenerator> {
    trap.validate()?;
    fb.validate()?;
    let n = trap.atom_count;
    if !(1..=2).contains(&n) {
        return Err(Error::InvalidN(format!("the exact integrator supports N <= 2, got {n}")));
    }
    let sector = Arc::new(SectorBasis::new(n, basis.mode_count)?);
    let h1 = basis.hamiltonian();
    let energies = (0..sector.dim())
        .map(|i| sector.occupation(i).iter().enumerate().map(|(k, &v)| h1.matrix()[(k, k)].re * v as f64).sum())
        .collect();
    let x_cm = SectorOperator::from_one_body(&basis.position(), &sector).scaled(1.0 / n as f64);
    let p_cm = SectorOperator::from_one_body(&basis.momentum(), &sector);
    let hbar = trap.hbar;
    let (zeta, s2) = (fb.shift_rate, fb.sigma_sq());
    let on = |b: bool, v: f64| if b { v } else { 0.0 };
    Ok(LindbladGenerator {
        sector,
        energies: if terms.hamiltonian { energies } else { vec![0.0; crate::fock::sector_dimension(n, basis.mode_count)] },
        x_cm,
        p_cm,
        hbar,
        friction: on(terms.friction, zeta / (2.0 * hbar)),
        measurement: on(terms.measurement, 1.0 / (8.0 * s2)),
        noise: on(terms.feedback_noise, zeta * zeta * s2 / (2.0 * hbar * hbar)),
        trap_freq: trap.trap_freq,
        basis: basis.clone(),
    })
}

impl LindbladGenerator {
    pub fn sector(&self) -> &Arc<SectorBasis> {
        &self.sector
    }

    pub fn x_cm(&self) -> &SectorOperator {
        &self.x_cm
    }

    pub fn p_cm(&self) -> &SectorOperator {
        &self.p_cm
    }

    /// Generator applied to a Hermitian matrix. Products `O Y` of Hermitian
    /// factors supply `Y O = (O Y)^dag`, so each term costs one sparse product.
    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let d = self.sector.dim();
        let i = C64::new(0.0, 1.0);
        let mut out = DMatrix::from_fn(d, d, |a, b| -i / self.hbar * (self.energies[a] - self.energies[b]) * rho[(a, b)]);
        let need_x = self.friction != 0.0 || self.measurement != 0.0;
        let xr = if need_x { self.x_cm.mul_dense(rho) } else { DMatrix::zeros(d, d) };
        if self.friction != 0.0 {
            let anti = &xr + xr.adjoint();
            let t = self.p_cm.mul_dense(&anti);
            out += (&t - t.adjoint()) * (i * self.friction);
        }
        if self.measurement != 0.0 {
            let c = &xr - xr.adjoint();
            let w = self.x_cm.mul_dense(&c);
            out -= (&w + w.adjoint()) * C64::new(self.measurement, 0.0);
        }
        if self.noise != 0.0 {
            let u = self.p_cm.mul_dense(rho);
            let c = &u - u.adjoint();
            let v = self.p_cm.mul_dense(&c);
            out -= (&v + v.adjoint()) * C64::new(self.noise, 0.0);
        }
        out
    }

    /// Largest step the integrator accepts: 2 pi / (500 omega).
    pub fn max_step(&self) -> f64 {
        2.0 * std::f64::consts::PI / (500.0 * self.trap_freq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub leak_limit: f64,
    pub positivity_limit: f64,
    /// Steps between eigenvalue checks.
    pub positivity_every: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { leak_limit: LEAK_LIMIT, positivity_limit: POSITIVITY_LIMIT, positivity_every: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSample {
    pub t: f64,
    pub mean_cm: f64,
    pub var_cm: f64,
    pub mean_x: f64,
    pub dx: f64,
    pub trace_err: f64,
    pub top_pop: f64,
}

pub struct Integrator<'g> {
    gen: &'g LindbladGenerator,
    rho: DensityMatrix,
    t: f64,
    steps: usize,
    opts: OracleOptions,
}

impl<'g> Integrator<'g> {
    pub fn new(rho0: DensityMatrix, gen: &'g LindbladGenerator, opts: OracleOptions) -> Result<Self> {
        if rho0.sector.as_ref() != gen.sector.as_ref() {
            return Err(Error::InvalidParameter("initial state and generator use different sectors".into()));
        }
        Ok(Integrator { gen, rho: rho0, t: 0.0, steps: 0, opts })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0) || dt > self.gen.max_step() * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!("step {dt} outside (0, {}]", self.gen.max_step())));
        }
        let r = &self.rho.matrix;
        let h = C64::new(dt, 0.0);
        let half = C64::new(0.5 * dt, 0.0);
        let k1 = self.gen.apply(r);
        let k2 = self.gen.apply(&(r + &k1 * half));
        let k3 = self.gen.apply(&(r + &k2 * half));
        let k4 = self.gen.apply(&(r + &k3 * h));
        self.rho.matrix += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
        self.rho.hermitize();
        self.t += dt;
        self.steps += 1;
        self.monitor()
    }

    fn monitor(&self) -> Result<()> {
        let top = self.top_population();
        if top > self.opts.leak_limit {
            return Err(Error::TruncationLeak { weight: top, tolerance: self.opts.leak_limit });
        }
        if self.opts.positivity_every > 0 && self.steps % self.opts.positivity_every == 0 {
            let lam = self.rho.min_eigenvalue();
            if lam < self.opts.positivity_limit {
                return Err(Error::PositivityLoss(lam));
            }
        }
        Ok(())
    }

    /// Advances to `t` with equal steps no longer than `dt_max`.
    pub fn advance_to(&mut self, t: f64, dt_max: f64) -> Result<()> {
        let span = t - self.t;
        if span <= 0.0 {
            return Ok(());
        }
        let n = (span / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let dt = span / n as f64;
        for _ in 0..n {
            self.step(dt)?;
        }
        self.t = t;
        Ok(())
    }

    pub fn top_population(&self) -> f64 {
        self.rho.weight_from_orbital(self.rho.sector.mode_count - 1)
    }

    pub fn sample(&self) -> OracleSample {
        let g = self.gen;
        let r = &self.rho.matrix;
        let xr = g.x_cm.mul_dense(r);
        let mean_cm = xr.trace().re;
        let var_cm = g.x_cm.mul_dense(&xr).trace().re - mean_cm * mean_cm;
        let rho1 = self.rho.one_body_density();
        let n = self.rho.sector.atom_count as f64;
        let mean_x = rho1.expectation(&g.basis.position()).re / n;
        let x2 = rho1.expectation(&g.basis.position_sq()).re / n;
        OracleSample {
            t: self.t,
            mean_cm,
            var_cm,
            mean_x,
            dx: (x2 - mean_x * mean_x).max(0.0).sqrt(),
            trace_err: (self.rho.trace() - 1.0).abs(),
            top_pop: self.top_population(),
        }
    }

    /// Joint moments of the current state.
    pub fn moments(&self) -> Result<JointMoments> {
        init_moments_with(&self.rho, &self.gen.basis, MOMENT_LEAK_TOL)
    }
}

/// Samples at every step of a fixed-step run to `t_max`.
pub fn integrate(rho0: DensityMatrix, gen: &LindbladGenerator, t_max: f64, dt: f64) -> Result<Vec<OracleSample>> {
    integrate_with(rho0, gen, t_max, dt, OracleOptions::default())
}

pub fn integrate_with(
    rho0: DensityMatrix,
    gen: &LindbladGenerator,
    t_max: f64,
    dt: f64,
    opts: OracleOptions,
) -> Result<Vec<OracleSample>> {
    if !(dt > 0.0) || dt > gen.max_step() * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!("step must lie in (0, {}], got {dt}", gen.max_step())));
    }
    let steps = (t_max / dt).round() as usize;
    let mut it = Integrator::new(rho0, gen, opts)?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(it.sample());
    for _ in 0..steps {
        it.step(dt)?;
        out.push(it.sample());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRecord {
    pub t: f64,
    pub moments: JointMoments,
    pub trace_err: f64,
    pub top_pop: f64,
}

/// Full moments every `stride` steps of size `dt`, `rows` rows in total.
pub fn record_trajectory(
    rho0: DensityMatrix,
    gen: &LindbladGenerator,
    dt: f64,
    stride: usize,
    rows: usize,
) -> Result<Vec<OracleRecord>> {
    let mut it = Integrator::new(rho0, gen, OracleOptions::default())?;
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        if r > 0 {
            for _ in 0..stride.max(1) {
                it.step(dt)?;
            }
        }
        let s = it.sample();
        out.push(OracleRecord { t: it.time(), moments: it.moments()?, trace_err: s.trace_err, top_pop: s.top_pop });
    }
    Ok(out)
}

pub fn write_oracle_csv<W: Write>(out: W, records: &[OracleRecord]) -> Result<()> {
    let mut header: Vec<&str> = TRAJECTORY_COLUMNS.to_vec();
    header.extend(["trace_err", "top_pop"]);
    let mut w = CsvWriter::new(out, &header)?;
    for r in records {
        let mut row = trajectory_row(r.t, &r.moments);
        row.extend([r.trace_err, r.top_pop]);
        w.row(&row)?;
    }
    w.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MomentDeviations {
    pub mean: f64,
    pub cov: f64,
    pub dx: f64,
    pub var_cm: f64,
}

/// Runs the exact integrator and the moment propagator from the same state
/// and reports the largest absolute differences over `t_grid`.
pub fn compare_with_moments(
    state: &FockState,
    trap: &TrapConfig,
    fb: &FeedbackConfig,
    basis: &OrbitalBasis,
    t_grid: &[f64],
    dt: f64,
) -> Result<MomentDeviations> {
    let gen = build_generator(trap, fb, basis)?;
    let g = build_generators(trap, fb)?;
    let rho0 = DensityMatrix::from_state(state, gen.sector.clone())?;
    let m0 = init_moments_with(&rho0, basis, MOMENT_LEAK_TOL)?;
    let mut it = Integrator::new(rho0, &gen, OracleOptions::default())?;
    let mut dev = MomentDeviations::default();
    for &t in t_grid {
        it.advance_to(t, dt)?;
        let exact = it.moments()?;
        let approx = evolve(&m0, &g, t)?;
        dev.mean = dev.mean.max((&exact.mean - &approx.mean).abs().max());
        dev.cov = dev.cov.max((&exact.cov - &approx.cov).abs().max());
        dev.dx = dev.dx.max((exact.var_x().sqrt() - approx.var_x().sqrt()).abs());
        dev.var_cm = dev.var_cm.max((exact.collective().1[(0, 0)] - approx.collective().1[(0, 0)]).abs());
    }
    Ok(dev)
}
