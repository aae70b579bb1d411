//! Real-space densities from the orbital representation.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::expect::{ManyBody, OneBodyDensity};
use super::operators::{OneBodyOperator, OrbitalBasis};
use crate::error::{Error, Result};

const NORM_ERR_LIMIT: f64 = 1e-4;

/// Normalized Hermite functions psi_0..psi_{count-1} at `x`, by upward
/// recurrence (no factorials).
pub fn hermite_functions(basis: &OrbitalBasis, x: f64, count: usize) -> Vec<f64> {
    let l = (basis.trap.hbar / (basis.trap.mass * basis.trap.trap_freq)).sqrt();
    let xi = x / l;
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    let psi0 = std::f64::consts::PI.powf(-0.25) / l.sqrt() * (-0.5 * xi * xi).exp();
    out.push(psi0);
    if count > 1 {
        out.push(2f64.sqrt() * xi * psi0);
    }
    for n in 1..count.saturating_sub(1) {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * xi * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
        out.push(next);
    }
    out
}

pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("grid must be strictly increasing with at least two points".into()));
    }
    Ok(())
}

/// Uniform grid spanning `+- widths` single-atom ground-state widths.
pub fn standard_grid(basis: &OrbitalBasis, widths: f64, points: usize) -> Vec<f64> {
    let half = widths * basis.trap.ground_var().sqrt();
    (0..points)
        .map(|i| -half + 2.0 * half * i as f64 / (points - 1) as f64)
        .collect()
}

/// P(x) = (1/N) sum_nm rho[n][m] psi_n(x) psi_m(x).
pub fn density_profile(rho: &OneBodyDensity, basis: &OrbitalBasis, grid: &[f64]) -> Result<Vec<f64>> {
    check_grid(grid)?;
    let m = rho.mode_count();
    let n = rho.atom_count as f64;
    let profile: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let psi = hermite_functions(basis, x, m);
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..m {
                for j in 0..m {
                    acc += rho.matrix[(i, j)] * psi[i] * psi[j];
                }
            }
            acc.re / n
        })
        .collect();
    let err = (trapezoid(grid, &profile) - 1.0).abs();
    if err > NORM_ERR_LIMIT {
        return Err(Error::GridTooCoarse(err));
    }
    Ok(profile)
}

/// Local density kernel `psi_i(x) psi_j(x)` as a one-body operator: the
/// truncated `phi^dag(x) phi(x)`.
pub fn density_kernel(basis: &OrbitalBasis, x: f64) -> OneBodyOperator {
    let m = basis.mode_count;
    let psi = hermite_functions(basis, x, m);
    let k = DMatrix::from_fn(m, m, |i, j| psi[i] * psi[j]);
    OneBodyOperator::from_real(&k).expect("square kernel")
}

/// Quasi joint density P(x, x') = <n(x) n(x')> / N^2 on `grid x grid`.
pub fn pair_distribution<S: ManyBody + ?Sized>(state: &S, basis: &OrbitalBasis, grid: &[f64]) -> Result<DMatrix<f64>> {
    check_grid(grid)?;
    let n = state.atom_count() as f64;
    let kernels: Vec<OneBodyOperator> = grid.iter().map(|&x| density_kernel(basis, x)).collect();
    let g = state.pair_matrix(&kernels);
    let p = g.map(|z| z.re / (n * n));
    let err = (trapezoid(grid, &pair_marginal(grid, &p)) - 1.0).abs();
    if err > NORM_ERR_LIMIT {
        return Err(Error::GridTooCoarse(err));
    }
    Ok(p)
}

/// Row marginal `int dx' P(x, x')` by the trapezoidal rule.
pub fn pair_marginal(grid: &[f64], pair: &DMatrix<f64>) -> Vec<f64> {
    (0..grid.len())
        .map(|i| trapezoid(grid, &pair.row(i).iter().cloned().collect::<Vec<_>>()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{FockState, ManyBody};
    use crate::scales::TrapConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(m: usize, n: usize) -> OrbitalBasis {
        OrbitalBasis::new(m, TrapConfig::unit(n)).unwrap()
    }

    #[test]
    fn hermite_orthonormal() {
        let b = unit(30, 1);
        let grid = standard_grid(&b, 16.0, 2401);
        let table: Vec<Vec<f64>> = grid.iter().map(|&x| hermite_functions(&b, x, 30)).collect();
        for i in 0..30 {
            for j in 0..30 {
                let vals: Vec<f64> = table.iter().map(|p| p[i] * p[j]).collect();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((trapezoid(&grid, &vals) - want).abs() < 1e-9, "({i},{j})");
            }
        }
    }

    #[test]
    fn ground_condensate_peak() {
        let b = unit(3, 2);
        let s = FockState::occupation(&[2, 0, 0]).unwrap();
        let grid = standard_grid(&b, 8.0, 801);
        let p = density_profile(&s.one_body_density(), &b, &grid).unwrap();
        assert!((p[400] - std::f64::consts::PI.powf(-0.5)).abs() < 1e-12);
        assert!((trapezoid(&grid, &p) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn one_one_profile_at_origin() {
        let b = unit(3, 2);
        let s = FockState::occupation(&[1, 1, 0]).unwrap();
        let grid = standard_grid(&b, 8.0, 801);
        let p = density_profile(&s.one_body_density(), &b, &grid).unwrap();
        assert!((p[400] - 0.282095).abs() < 1e-6);
    }

    #[test]
    fn coarse_grid_rejected() {
        let b = unit(3, 1);
        let s = FockState::occupation(&[1, 0, 0]).unwrap();
        let grid = standard_grid(&b, 1.0, 11);
        assert!(matches!(density_profile(&s.one_body_density(), &b, &grid), Err(Error::GridTooCoarse(_))));
        assert!(density_profile(&s.one_body_density(), &b, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn pair_marginals_reproduce_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let b = unit(4, 2);
            let s = FockState::random(2, 2, 4, &mut rng).unwrap();
            let grid = standard_grid(&b, 9.0, 181);
            let pair = pair_distribution(&s, &b, &grid).unwrap();
            let p = density_profile(&s.one_body_density(), &b, &grid).unwrap();
            for (a, want) in pair_marginal(&grid, &pair).iter().zip(&p) {
                assert!((a - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn single_atom_marginal() {
        let b = unit(3, 1);
        let s = FockState::occupation(&[0, 1, 0]).unwrap();
        let grid = standard_grid(&b, 9.0, 181);
        let pair = pair_distribution(&s, &b, &grid).unwrap();
        let p = density_profile(&s.one_body_density(), &b, &grid).unwrap();
        for (a, want) in pair_marginal(&grid, &pair).iter().zip(&p) {
            assert!((a - want).abs() < 1e-6);
        }
    }
}
