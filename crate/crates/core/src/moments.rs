//! Gaussian moment dynamics for one tagged atom and the centre of mass of
//! the other N-1 atoms.
//!
//! Variables are `(x, p, Xbar, Pbar)`: the tagged atom's position and
//! momentum, the mean position of the others and their total momentum, so
//! that `X = x/N + (N-1) Xbar/N` and `P = p + Pbar`. The feedback master
//! equation is quadratic in these, so first and second moments close:
//!
//! ```text
//! d mean / dt = A mean,      d cov / dt = A cov + cov A^T + 2 D.
//! ```
//!
//! With a single atom the state reduces to `(x, p)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fock::{few_body_expectation_with, ManyBody, OneBodyOperator, OrbitalBasis, DEFAULT_LEAK_TOL};
use crate::output::CsvWriter;
use crate::scales::{FeedbackConfig, TrapConfig};

/// Absolute PSD floor, in units of the largest covariance diagonal.
pub const PSD_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DriftDiffusion {
    pub drift: DMatrix<f64>,
    /// Diffusion D in `d cov/dt = A cov + cov A^T + 2 D`.
    pub diffusion: DMatrix<f64>,
    pub atom_count: usize,
    pub trap: TrapConfig,
    pub feedback: FeedbackConfig,
}

impl DriftDiffusion {
    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    /// Map from the joint variables to (X, P).
    pub fn collective_map(&self) -> DMatrix<f64> {
        collective_map(self.atom_count)
    }

    /// Drift and diffusion of (X, P) alone.
    pub fn collective(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.trap.n();
        let (m, w, zeta) = (self.trap.mass, self.trap.trap_freq, self.feedback.shift_rate);
        let a = DMatrix::from_row_slice(2, 2, &[-zeta, 1.0 / (n * m), -n * m * w * w, 0.0]);
        let (pos, mom) = noise_rates(&self.trap, &self.feedback);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5 * pos, 0.5 * mom]));
        (a, d)
    }
}

fn collective_map(atom_count: usize) -> DMatrix<f64> {
    if atom_count == 1 {
        return DMatrix::identity(2, 2);
    }
    let n = atom_count as f64;
    DMatrix::from_row_slice(2, 4, &[1.0 / n, 0.0, (n - 1.0) / n, 0.0, 0.0, 1.0, 0.0, 1.0])
}

/// Collective noise rates: position from the feedback shifts, momentum from
/// measurement back-action.
fn noise_rates(trap: &TrapConfig, fb: &FeedbackConfig) -> (f64, f64) {
    let s2 = fb.sigma_sq();
    let zeta = fb.shift_rate;
    (zeta * zeta * s2, trap.hbar * trap.hbar / (4.0 * s2))
}

pub fn build_generators(trap: &TrapConfig, fb: &FeedbackConfig) -> Result<DriftDiffusion> {
    trap.validate()?;
    fb.validate()?;
    let (m, w, zeta) = (trap.mass, trap.trap_freq, fb.shift_rate);
    let (pos, mom) = noise_rates(trap, fb);
    let (drift, diffusion) = if trap.atom_count == 1 {
        let a = DMatrix::from_row_slice(2, 2, &[-zeta, 1.0 / m, -m * w * w, 0.0]);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5 * pos, 0.5 * mom]));
        (a, d)
    } else {
        let n = trap.n();
        let f = (n - 1.0) / n;
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(4, 4, &[
            -zeta / n,  1.0 / m, -zeta * f,                   0.0,
            -m * w * w, 0.0,     0.0,                         0.0,
            -zeta / n,  0.0,     -zeta * f,                   1.0 / ((n - 1.0) * m),
            0.0,        0.0,     -(n - 1.0) * m * w * w,      0.0,
        ]);
        let v = [1.0, 0.0, 1.0, 0.0];
        let u = [0.0, 1.0 / n, 0.0, f];
        let d = DMatrix::from_fn(4, 4, |i, j| 0.5 * (pos * v[i] * v[j] + mom * u[i] * u[j]));
        (a, d)
    };
    Ok(DriftDiffusion { drift, diffusion, atom_count: trap.atom_count, trap: trap.clone(), feedback: fb.clone() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointMoments {
    pub mean: DVector<f64>,
    /// Symmetric (Weyl-ordered) covariance.
    pub cov: DMatrix<f64>,
    pub atom_count: usize,
}

impl JointMoments {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, atom_count: usize) -> Result<Self> {
        let dim = if atom_count == 1 { 2 } else { 4 };
        if atom_count == 0 || mean.len() != dim || cov.shape() != (dim, dim) {
            return Err(Error::InvalidN(format!("moments of dimension {} for N = {atom_count}", mean.len())));
        }
        let mut out = JointMoments { mean, cov, atom_count };
        out.symmetrize();
        out.check_psd()?;
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn var_x(&self) -> f64 {
        self.cov[(0, 0)]
    }

    /// Collective (X, P) means and 2x2 covariance.
    pub fn collective(&self) -> (DVector<f64>, DMatrix<f64>) {
        let c = collective_map(self.atom_count);
        (&c * &self.mean, &c * &self.cov * c.transpose())
    }

    fn symmetrize(&mut self) {
        self.cov = 0.5 * (&self.cov + self.cov.transpose());
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.cov.clone()).eigenvalues.min()
    }

    fn check_psd(&self) -> Result<()> {
        let scale = (0..self.dim()).map(|i| self.cov[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let lam = self.min_eigenvalue();
        if lam < -PSD_FLOOR * scale || self.var_x() < 0.0 {
            return Err(Error::StepRejected(lam));
        }
        Ok(())
    }
}

/// Joint moments of a fixed-N symmetric state.
///
/// With `<x1 x2>` the pair correlation of two distinct atoms,
///
/// ```text
/// <Qx Qx>   = N <x^2>_1 + N(N-1) <x1 x2>        (Qx = sum x_ij a_i^dag a_j)
/// <Xbar>    = <x>,        <Pbar> = (N-1) <p>
/// <x Xbar>  = <x1 x2>,    <x Pbar> = (N-1) <x1 p2>
/// <p Xbar>  = <x1 p2>,    <p Pbar> = (N-1) <p1 p2>
/// <Xbar^2>  = (<x^2> + (N-2) <x1 x2>) / (N-1)
/// <Xbar Pbar>_W = <sym(xp)> + (N-2) <x1 p2>
/// <Pbar^2>  = (N-1) <p^2> + (N-1)(N-2) <p1 p2>
/// ```
///
/// where single-atom brackets are `Tr(rho1 .)/N`. Only one- and two-operator
/// expectations are needed.
pub fn init_moments<S: ManyBody + ?Sized>(state: &S, basis: &OrbitalBasis) -> Result<JointMoments> {
    init_moments_with(state, basis, DEFAULT_LEAK_TOL)
}

pub fn init_moments_with<S: ManyBody + ?Sized>(state: &S, basis: &OrbitalBasis, leak_tol: f64) -> Result<JointMoments> {
    if state.mode_count() != basis.mode_count {
        return Err(Error::InvalidParameter("state and basis orbital counts differ".into()));
    }
    let n_atoms = state.atom_count();
    let n = n_atoms as f64;
    let rho = state.one_body_density();
    let x = basis.position();
    let p = basis.momentum();
    let one = |op: &OneBodyOperator| rho.expectation(op).re / n;
    let (mx, mp) = (one(&x), one(&p));
    let (xx, pp, xp) = (one(&basis.position_sq()), one(&basis.momentum_sq()), one(&basis.sym_xp()));

    if n_atoms == 1 {
        let mean = DVector::from_vec(vec![mx, mp]);
        let raw = DMatrix::from_row_slice(2, 2, &[xx, xp, xp, pp]);
        return JointMoments::new(mean.clone(), raw - &mean * mean.transpose(), 1);
    }

    // pair correlations of two distinct atoms
    let pair = |a: &OneBodyOperator, b: &OneBodyOperator| -> Result<f64> {
        let total = few_body_expectation_with(state, &[a, b], leak_tol)?.re;
        let same = rho.expectation(&a.product(b)).re;
        Ok((total - same) / (n * (n - 1.0)))
    };
    let x1x2 = pair(&x, &x)?;
    let x1p2 = pair(&x, &p)?;
    let p1p2 = pair(&p, &p)?;

    let mean = DVector::from_vec(vec![mx, mp, mx, (n - 1.0) * mp]);
    #[rustfmt::skip]
    let raw = DMatrix::from_row_slice(4, 4, &[
        xx,                 xp,                 x1x2,                                  (n - 1.0) * x1p2,
        xp,                 pp,                 x1p2,                                  (n - 1.0) * p1p2,
        x1x2,               x1p2,               (xx + (n - 2.0) * x1x2) / (n - 1.0),   xp + (n - 2.0) * x1p2,
        (n - 1.0) * x1p2,   (n - 1.0) * p1p2,   xp + (n - 2.0) * x1p2,                 (n - 1.0) * pp + (n - 1.0) * (n - 2.0) * p1p2,
    ]);
    JointMoments::new(mean.clone(), raw - &mean * mean.transpose(), n_atoms)
}

fn check_compatible(m: &JointMoments, g: &DriftDiffusion) -> Result<()> {
    if m.atom_count != g.atom_count || m.dim() != g.dim() {
        return Err(Error::InvalidN(format!("moments for N = {} with generator for N = {}", m.atom_count, g.atom_count)));
    }
    Ok(())
}

/// Exact one-interval propagator `(Phi, W)`: `mean -> Phi mean`,
/// `cov -> Phi cov Phi^T + W`, from the block exponential of
/// `[[-A, 2D], [0, A^T]] h`.
pub fn interval_propagator(g: &DriftDiffusion, h: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = g.dim();
    let mut block = DMatrix::zeros(2 * d, 2 * d);
    block.view_mut((0, 0), (d, d)).copy_from(&(-&g.drift * h));
    block.view_mut((0, d), (d, d)).copy_from(&(&g.diffusion * (2.0 * h)));
    block.view_mut((d, d), (d, d)).copy_from(&(g.drift.transpose() * h));
    let e = block.exp();
    let phi = e.view((d, d), (d, d)).transpose();
    let w = &phi * e.view((0, d), (d, d));
    let w = 0.5 * (&w + w.transpose());
    (phi, w)
}

fn substeps(g: &DriftDiffusion, t: f64) -> usize {
    let scale = g.drift.abs().row_sum().max().max(g.trap.trap_freq);
    ((t * scale / 2.0).ceil() as usize).max(1)
}

fn apply(m: &JointMoments, phi: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<JointMoments> {
    let mut out = JointMoments { mean: phi * &m.mean, cov: phi * &m.cov * phi.transpose() + w, atom_count: m.atom_count };
    out.symmetrize();
    out.check_psd()?;
    Ok(out)
}

/// Moments at time `t` by the exact matrix-exponential propagator.
pub fn evolve(m0: &JointMoments, g: &DriftDiffusion, t: f64) -> Result<JointMoments> {
    check_compatible(m0, g)?;
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("evolution time must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(m0.clone());
    }
    let k = substeps(g, t);
    let (phi, w) = interval_propagator(g, t / k as f64);
    let mut m = m0.clone();
    for _ in 0..k {
        m = apply(&m, &phi, &w)?;
    }
    Ok(m)
}

/// Independent Runge-Kutta path with step `2 pi / (1000 omega)`.
pub fn evolve_rk4(m0: &JointMoments, g: &DriftDiffusion, t: f64) -> Result<JointMoments> {
    check_compatible(m0, g)?;
    let h_max = 2.0 * std::f64::consts::PI / (1000.0 * g.trap.trap_freq);
    let steps = ((t / h_max).ceil() as usize).max(1);
    let h = t / steps as f64;
    let a = &g.drift;
    let two_d = &g.diffusion * 2.0;
    let f_cov = |c: &DMatrix<f64>| a * c + c * a.transpose() + &two_d;
    let mut mean = m0.mean.clone();
    let mut cov = m0.cov.clone();
    for _ in 0..steps {
        let k1 = a * &mean;
        let k2 = a * (&mean + &k1 * (0.5 * h));
        let k3 = a * (&mean + &k2 * (0.5 * h));
        let k4 = a * (&mean + &k3 * h);
        mean += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let c1 = f_cov(&cov);
        let c2 = f_cov(&(&cov + &c1 * (0.5 * h)));
        let c3 = f_cov(&(&cov + &c2 * (0.5 * h)));
        let c4 = f_cov(&(&cov + &c3 * h));
        cov += (c1 + c2 * 2.0 + c3 * 2.0 + c4) * (h / 6.0);
    }
    JointMoments::new(mean, cov, m0.atom_count)
}

/// Moments on a uniform grid `0, dt, ..., steps*dt`.
pub fn trajectory(m0: &JointMoments, g: &DriftDiffusion, dt: f64, steps: usize) -> Result<Vec<(f64, JointMoments)>> {
    check_compatible(m0, g)?;
    let k = substeps(g, dt);
    let (phi1, w1) = interval_propagator(g, dt / k as f64);
    // compose the k substeps into one exact interval map
    let mut phi = DMatrix::identity(g.dim(), g.dim());
    let mut w = DMatrix::zeros(g.dim(), g.dim());
    for _ in 0..k {
        w = &phi1 * &w * phi1.transpose() + &w1;
        phi = &phi1 * &phi;
    }
    let mut out = Vec::with_capacity(steps + 1);
    let mut m = m0.clone();
    out.push((0.0, m.clone()));
    for i in 1..=steps {
        m = apply(&m, &phi, &w)?;
        out.push((i as f64 * dt, m.clone()));
    }
    Ok(out)
}

/// Rms width of the single-atom density.
pub fn cloud_size(m: &JointMoments) -> f64 {
    m.var_x().max(0.0).sqrt()
}

/// Solves `A S + S A^T + Q = 0` through the Kronecker form.
pub fn lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let eye = DMatrix::<f64>::identity(d, d);
    let k = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let lu = k.lu();
    let det_scale = a.abs().max().powi((d * d) as i32).max(f64::MIN_POSITIVE);
    if lu.determinant().abs() <= 1e-14 * det_scale {
        return Err(Error::SingularLyapunov);
    }
    let v = lu.solve(&rhs).ok_or(Error::SingularLyapunov)?;
    let s = DMatrix::from_column_slice(d, d, v.as_slice());
    Ok(0.5 * (&s + s.transpose()))
}

/// Stationary rms spread of the centre of mass.
pub fn stationary_cm(g: &DriftDiffusion) -> Result<f64> {
    if !(g.feedback.shift_rate > 0.0) {
        return Err(Error::SingularLyapunov);
    }
    let (a, d) = g.collective();
    let s = lyapunov(&a, &(d * 2.0))?;
    Ok(s[(0, 0)].sqrt())
}

pub const TRAJECTORY_COLUMNS: [&str; 16] = [
    "t", "mean_x", "mean_p", "mean_Xbar", "mean_Pbar", "c_x_x", "c_x_p", "c_x_Xbar", "c_x_Pbar", "c_p_p", "c_p_Xbar",
    "c_p_Pbar", "c_Xbar_Xbar", "c_Xbar_Pbar", "c_Pbar_Pbar", "dx",
];

/// Fixed 16 numeric columns; a single atom leaves the Xbar/Pbar columns NaN.
pub fn trajectory_row(t: f64, m: &JointMoments) -> Vec<f64> {
    let mut mean = [f64::NAN; 4];
    let mut cov = DMatrix::from_element(4, 4, f64::NAN);
    for i in 0..m.dim() {
        mean[i] = m.mean[i];
        for j in 0..m.dim() {
            cov[(i, j)] = m.cov[(i, j)];
        }
    }
    let mut row = vec![t];
    row.extend_from_slice(&mean);
    for i in 0..4 {
        for j in i..4 {
            row.push(cov[(i, j)]);
        }
    }
    row.push(cloud_size(m));
    row
}

pub fn write_trajectory_csv<W: Write>(out: W, traj: &[(f64, JointMoments)]) -> Result<()> {
    let mut w = CsvWriter::new(out, &TRAJECTORY_COLUMNS)?;
    for (t, m) in traj {
        w.row(&trajectory_row(*t, m))?;
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::{quadrature_harmonics, QuadratureHarmonics};
    use crate::fock::{condensate_state, displaced_ground_orbital, few_body_expectation, FockState};
    use crate::scales::{derive_scales, TrapConfig};
    use crate::signal::{envelope_decay_rate, fit_second_harmonic};
    use nalgebra::Complex;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn gen(n: usize, zeta: f64, sigma: f64) -> DriftDiffusion {
        build_generators(&TrapConfig::unit(n), &FeedbackConfig::new(zeta, sigma).unwrap()).unwrap()
    }

    fn basis(m: usize, n: usize) -> OrbitalBasis {
        OrbitalBasis::new(m, TrapConfig::unit(n)).unwrap()
    }

    #[test]
    fn collective_projection() {
        for n in [2, 3, 7] {
            let g = gen(n, 0.7, 0.9);
            let c = g.collective_map();
            let (ac, dc) = g.collective();
            assert!((&c * &g.drift - &ac * &c).abs().max() < 1e-14);
            assert!((&c * &g.diffusion * c.transpose() - &dc).abs().max() < 1e-14);
            assert!((dc[(0, 0)] * 2.0 - 0.49 * 0.81).abs() < 1e-14);
            assert!((dc[(1, 1)] * 2.0 - 1.0 / (4.0 * 0.81)).abs() < 1e-14);
        }
    }

    #[test]
    fn collective_eigenvalues() {
        let zeta = 0.4;
        for n in [1, 2, 5] {
            let g = gen(n, zeta, 1.0);
            let (ac, _) = g.collective();
            let ev = ac.complex_eigenvalues();
            for z in ev.iter() {
                assert!((z.re + zeta / 2.0).abs() < 1e-12);
                assert!((z.im.abs() - (1.0 - zeta * zeta / 4.0).sqrt()).abs() < 1e-12);
            }
            assert!(g.drift.complex_eigenvalues().iter().all(|z| z.re <= 1e-12));
            assert!(SymmetricEigen::new(g.diffusion.clone()).eigenvalues.min() >= -1e-15);
        }
    }

    #[test]
    fn feedback_off_is_pure_rotation() {
        let g = gen(3, 0.0, 1e12);
        assert!(g.diffusion.abs().max() < 1e-20);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = FockState::random(3, 3, 5, &mut rng).unwrap();
        let m0 = init_moments(&s, &basis(5, 3)).unwrap();
        let a = evolve(&m0, &g, 0.77).unwrap();
        let b = evolve(&m0, &g, 0.77 + PI).unwrap();
        assert!((a.var_x() - b.var_x()).abs() < 1e-12);
    }

    #[test]
    fn stationary_matches_closed_form() {
        for eta in [0.1, 0.5, 1.0, 2.0, 10.0] {
            for n in [1, 2, 3, 10, 100] {
                let trap = TrapConfig::unit(n);
                let fb = FeedbackConfig::for_eta(&trap, 0.3, eta).unwrap();
                let g = build_generators(&trap, &fb).unwrap();
                let want = derive_scales(&trap, &fb).unwrap().stationary_cm;
                assert!((stationary_cm(&g).unwrap() / want - 1.0).abs() < 1e-10);
            }
        }
        let s = stationary_cm(&gen(1, 1.0, 2f64.sqrt())).unwrap();
        assert!((s - 0.5f64.sqrt() * 2.125f64.sqrt()).abs() < 1e-12);
        assert!((s - 1.030776).abs() < 1e-6);
        assert_eq!(stationary_cm(&gen(2, 0.0, 1.0)), Err(Error::SingularLyapunov));
    }

    #[test]
    fn full_stationary_covariance_matches_collective() {
        let g = gen(3, 0.5, 0.8);
        // the relative sector is undamped; only the collective block has a fixed point
        let (ac, dc) = g.collective();
        let sc = lyapunov(&ac, &(dc * 2.0)).unwrap();
        let m0 = init_moments(&FockState::occupation(&[3, 0, 0]).unwrap(), &basis(3, 3)).unwrap();
        let late = evolve(&m0, &g, 80.0).unwrap();
        let (_, cc) = late.collective();
        assert!((cc - sc).abs().max() < 1e-12);
    }

    #[test]
    fn ground_condensate_moments() {
        for n in [1, 2, 4] {
            let mut occ = vec![0u16; 3];
            occ[0] = n as u16;
            let m = init_moments(&FockState::occupation(&occ).unwrap(), &basis(3, n)).unwrap();
            assert!(m.mean.abs().max() < 1e-14);
            assert!((m.var_x() - 0.5).abs() < 1e-14);
            assert!((cloud_size(&m) - 0.5f64.sqrt()).abs() < 1e-14);
            let (_, cc) = m.collective();
            assert!((cc[(0, 0)] - 0.5 / n as f64).abs() < 1e-14);
            assert!((cc[(1, 1)] - 0.5 * n as f64).abs() < 1e-13);
        }
    }

    #[test]
    fn displaced_condensate_means() {
        let b = basis(40, 3);
        let orb = displaced_ground_orbital(&b, 0.6, 39);
        let s = condensate_state(&orb, 3).unwrap().embed(40).unwrap();
        let m = init_moments(&s, &b).unwrap();
        assert!((m.mean[0] - 0.6).abs() < 1e-10 && (m.mean[2] - 0.6).abs() < 1e-10);
        // a displaced condensate has the same spreads as the undisplaced one
        assert!((m.var_x() - 0.5).abs() < 1e-10);
        assert!((m.collective().1[(0, 0)] - 0.5 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn collective_variance_matches_fock() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [2, 3] {
            let b = basis(5, n);
            let s = FockState::random(n, 3, 5, &mut rng).unwrap();
            let m = init_moments(&s, &b).unwrap();
            let (mean, cc) = m.collective();
            let (x, p) = (b.position(), b.momentum());
            let nf = n as f64;
            let qx = few_body_expectation(&s, &[&x]).unwrap().re;
            let qxx = few_body_expectation(&s, &[&x, &x]).unwrap().re;
            let qpp = few_body_expectation(&s, &[&p, &p]).unwrap().re;
            let qp = few_body_expectation(&s, &[&p]).unwrap().re;
            let qxp = few_body_expectation(&s, &[&x, &p]).unwrap();
            assert!((mean[0] - qx / nf).abs() < 1e-12);
            assert!((cc[(0, 0)] - (qxx / (nf * nf) - (qx / nf).powi(2))).abs() < 1e-12);
            assert!((cc[(1, 1)] - (qpp - qp * qp)).abs() < 1e-12);
            // symmetric ordering: Re <X P>
            assert!((cc[(0, 1)] - (qxp.re / nf - qx * qp / nf)).abs() < 1e-12);
        }
    }

    #[test]
    fn exponential_and_rk4_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1, 2, 3] {
            let s = FockState::random(n, 3, 5, &mut rng).unwrap();
            let m0 = init_moments(&s, &basis(5, n)).unwrap();
            let g = gen(n, 0.3, 0.7);
            let t = 3.0 * 2.0 * PI;
            let a = evolve(&m0, &g, t).unwrap();
            let b = evolve_rk4(&m0, &g, t).unwrap();
            let scale = a.cov.abs().max();
            assert!((&a.cov - &b.cov).abs().max() < 1e-8 * scale);
            assert!((&a.mean - &b.mean).abs().max() < 1e-8 * a.mean.abs().max().max(1e-3));
        }
    }

    #[test]
    fn collective_mean_envelope_rate() {
        for n in [1, 2] {
            let b = basis(30, n);
            let orb = displaced_ground_orbital(&b, 1.0, 29);
            let s = condensate_state(&orb, n).unwrap().embed(30).unwrap();
            let m0 = init_moments(&s, &b).unwrap();
            let g = gen(n, 0.1, 1.0);
            let traj = trajectory(&m0, &g, 0.01, 8000).unwrap();
            let t: Vec<f64> = traj.iter().map(|r| r.0).collect();
            let x: Vec<f64> = traj.iter().map(|r| r.1.collective().0[0]).collect();
            let rate = envelope_decay_rate(&t, &x).unwrap();
            assert!((rate / 0.05 - 1.0).abs() < 0.01, "rate {rate}");
        }
    }

    #[test]
    fn single_atom_relaxes_to_stationary() {
        let g = gen(1, 0.5, 0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = FockState::random(1, 4, 5, &mut rng).unwrap();
        let m = evolve(&init_moments(&s, &basis(5, 1)).unwrap(), &g, 12.0 / 0.5 + 10.0).unwrap();
        assert!((cloud_size(&m) - stationary_cm(&g).unwrap()).abs() < 1e-3);
    }

    fn late_deviation(s: &FockState, n: usize, m: usize, zeta: f64) -> (Vec<f64>, Vec<f64>, QuadratureHarmonics, f64) {
        let b = basis(m, n);
        let g = gen(n, zeta, 0.6);
        let m0 = init_moments(s, &b).unwrap();
        let h = quadrature_harmonics(s, &b).unwrap();
        let ds2 = stationary_cm(&g).unwrap().powi(2);
        let traj = trajectory(&m0, &g, 0.02, (40.0 / zeta / 0.02) as usize).unwrap();
        let t: Vec<f64> = traj.iter().map(|r| r.0).collect();
        let dev: Vec<f64> = traj.iter().map(|(t, mm)| cloud_size(mm) - (ds2 + h.eval(*t)).sqrt()).collect();
        (t, dev, h, ds2)
    }

    #[test]
    fn asymptotic_law_for_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let zeta = 0.5;
        for n in [2, 3] {
            for _ in 0..4 {
                let s = FockState::random(n, 3, 5, &mut rng).unwrap();
                let (t, dev, _, _) = late_deviation(&s, n, 5, zeta);
                let sup = t
                    .iter()
                    .zip(&dev)
                    .filter(|(t, _)| **t >= 12.0 / zeta && **t <= 12.0 / zeta + PI)
                    .map(|(_, d)| d.abs())
                    .fold(0.0, f64::max);
                assert!(sup < 1e-3 * 0.5f64.sqrt(), "sup {sup}");
            }
        }
    }

    // The deviation is Var(X)(t) - DXs^2 divided by a bounded factor, and the
    // collective covariance relaxes at the full feedback rate.
    #[test]
    fn deviation_decays_at_feedback_rate() {
        let zeta = 0.2;
        let s = FockState::noon(2, 4, Complex::new(1.0, 0.0)).unwrap();
        let (t, dev, _, _) = late_deviation(&s, 2, 4, zeta);
        let (tt, dd): (Vec<f64>, Vec<f64>) = t.iter().zip(&dev).filter(|(t, _)| **t > 20.0 && **t < 120.0).unzip();
        let rate = envelope_decay_rate(&tt, &dd).unwrap();
        assert!((rate / zeta - 1.0).abs() < 0.05, "rate {rate}");
    }

    #[test]
    fn late_breathing_amplitude_is_constant() {
        let zeta = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = FockState::random(2, 3, 5, &mut rng).unwrap();
        let b = basis(5, 2);
        let g = gen(2, zeta, 0.6);
        let m0 = init_moments(&s, &b).unwrap();
        let t0 = 40.0 / zeta;
        let start = evolve(&m0, &g, t0).unwrap();
        let traj = trajectory(&start, &g, PI / 200.0, 1000).unwrap();
        let mut amps = Vec::new();
        for k in 0..5 {
            let slice = &traj[k * 200..(k + 1) * 200];
            let t: Vec<f64> = slice.iter().map(|r| r.0 + t0).collect();
            let v: Vec<f64> = slice.iter().map(|r| r.1.var_x()).collect();
            let (_, bb, cc) = fit_second_harmonic(&t, &v, 1.0).unwrap();
            amps.push(bb.hypot(cc));
        }
        let h = quadrature_harmonics(&s, &b).unwrap();
        for a in &amps {
            assert!((a - h.amplitude()).abs() < 1e-6);
        }
    }

    #[test]
    fn csv_layout() {
        let m0 = init_moments(&FockState::occupation(&[2, 0, 0]).unwrap(), &basis(3, 2)).unwrap();
        let traj = trajectory(&m0, &gen(2, 1.0, 0.5), 0.1, 3).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0].split(',').count(), 16);
        assert!(lines[1].starts_with("0,0,0,0,0,0.5,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn covariance_stays_psd(seed in 0u64..10_000, zeta in 0.05f64..2.0, sigma in 0.2f64..3.0, n in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = FockState::random(n, 3, 5, &mut rng).unwrap();
            let m0 = init_moments(&s, &basis(5, n)).unwrap();
            let g = gen(n, zeta, sigma);
            for (_, m) in trajectory(&m0, &g, 0.3, 40).unwrap() {
                let scale = m.cov.abs().max();
                prop_assert!(m.min_eigenvalue() >= -PSD_FLOOR * scale);
                prop_assert!((&m.cov - m.cov.transpose()).abs().max() == 0.0);
            }
        }
    }
}
