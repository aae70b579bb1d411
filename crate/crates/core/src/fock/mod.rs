//! Bosonic Fock space over harmonic-oscillator orbitals.
//!
//! States are sparse maps from occupation vectors to amplitudes. One-body
//! operators are M x M matrices in the orbital basis, applied in second
//! quantization as `sum_ij A[i][j] a_i^dag a_j`. Position, momentum and the
//! rotating quadrature connect neighbouring orbitals, so products of them are
//! only exact while the state stays away from the top orbital; that condition
//! is checked rather than assumed (see [`few_body_expectation`]).

mod expect;
pub mod io;
mod operators;
mod profile;
mod state;
mod thermal;

pub use expect::{
    few_body_expectation, few_body_expectation_with, one_body_density, ManyBody, OneBodyDensity,
    DEFAULT_LEAK_TOL,
};
pub use operators::{OneBodyOperator, OperatorKind, OrbitalBasis};
pub use profile::{
    density_kernel, density_profile, hermite_functions, pair_distribution, pair_marginal, standard_grid,
    trapezoid,
};
pub use state::{
    apply_one_body, condensate_state, enumerate_occupations, inner, sector_dimension, Amplitudes, FockState,
    Occupation, StateEnsemble,
};
pub use thermal::{thermal_ensemble, ThermalReport};

use num_complex::Complex64 as C64;

/// Coefficients of the trap ground state displaced by `d` (a coherent state
/// with amplitude d / (2 x_ground)), truncated to `m` orbitals and renormalized.
pub fn displaced_ground_orbital(basis: &OrbitalBasis, d: f64, m: usize) -> Vec<C64> {
    let beta = d / (2.0 * basis.trap.ground_var().sqrt());
    let mut c = Vec::with_capacity(m);
    let mut v = (-0.5 * beta * beta).exp();
    for n in 0..m {
        if n > 0 {
            v *= beta / (n as f64).sqrt();
        }
        c.push(C64::new(v, 0.0));
    }
    normalize(c)
}

/// Ground state squeezed in position by `exp(-2r)`, truncated to `m`
/// orbitals and renormalized.
pub fn squeezed_ground_orbital(r: f64, m: usize) -> Vec<C64> {
    let th = r.tanh();
    let mut c = vec![C64::new(0.0, 0.0); m];
    let mut v = 1.0 / r.cosh().sqrt();
    for k in 0..m.div_ceil(2) {
        if k > 0 {
            // ratio of sqrt((2k)!)/(2^k k!) terms
            let kf = k as f64;
            v *= -th * ((2.0 * kf - 1.0) * (2.0 * kf)).sqrt() / (2.0 * kf);
        }
        if 2 * k < m {
            c[2 * k] = C64::new(v, 0.0);
        }
    }
    normalize(c)
}

fn normalize(mut c: Vec<C64>) -> Vec<C64> {
    let s = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    c.iter_mut().for_each(|z| *z /= s);
    c
}
