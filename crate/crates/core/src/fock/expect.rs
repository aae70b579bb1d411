use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::operators::OneBodyOperator;
use super::state::{apply_one_body, inner, FockState, StateEnsemble};
use crate::error::{Error, Result};

/// Default bound on the weight a state may carry near the top orbital before
/// products of truncated operators are declared inexact.
pub const DEFAULT_LEAK_TOL: f64 = 1e-10;

/// `rho[n][m] = <a_m^dag a_n>`; trace N.
#[derive(Debug, Clone, PartialEq)]
pub struct OneBodyDensity {
    pub matrix: DMatrix<C64>,
    pub atom_count: usize,
}

impl OneBodyDensity {
    /// `Tr(rho A) = <sum_ij A_ij a_i^dag a_j>`.
    pub fn expectation(&self, op: &OneBodyOperator) -> C64 {
        op.trace_with(&self.matrix)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        nalgebra::linalg::SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mode_count(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Anything that can produce one-body densities and few-body expectation
/// values: pure Fock states, ensembles, and the oracle's density matrices.
pub trait ManyBody {
    fn atom_count(&self) -> usize;
    fn mode_count(&self) -> usize;
    fn one_body_density(&self) -> OneBodyDensity;
    /// Probability of occupying any orbital `>= first`.
    fn weight_from_orbital(&self, first: usize) -> f64;
    /// `<A_1 A_2 ...>` of second-quantized one-body operators, in order, with
    /// no truncation bookkeeping.
    fn raw_expectation(&self, ops: &[&OneBodyOperator]) -> C64;

    /// `G[a][b] = <A_a A_b>` for all pairs; implementors may share work.
    fn pair_matrix(&self, ops: &[OneBodyOperator]) -> DMatrix<C64> {
        DMatrix::from_fn(ops.len(), ops.len(), |a, b| self.raw_expectation(&[&ops[a], &ops[b]]))
    }
}

/// Products of truncated operators are exact when the state has no weight on
/// the orbitals the outer factors would push out of the basis.
fn leak_check<S: ManyBody + ?Sized>(state: &S, ops: &[&OneBodyOperator], tol: f64) -> Result<()> {
    if ops.len() < 2 {
        return Ok(());
    }
    let outer = [ops[0], ops[ops.len() - 1]];
    let reach = outer.iter().filter_map(|o| o.reach()).max().unwrap_or(0);
    if reach == 0 {
        return Ok(());
    }
    let m = state.mode_count();
    let weight = state.weight_from_orbital(m.saturating_sub(reach));
    if weight > tol {
        return Err(Error::TruncationLeak { weight, tolerance: tol });
    }
    Ok(())
}

/// `<A_1 (A_2 (A_3))>` for one to three one-body operators.
pub fn few_body_expectation<S: ManyBody + ?Sized>(state: &S, ops: &[&OneBodyOperator]) -> Result<C64> {
    few_body_expectation_with(state, ops, DEFAULT_LEAK_TOL)
}

pub fn few_body_expectation_with<S: ManyBody + ?Sized>(
    state: &S,
    ops: &[&OneBodyOperator],
    leak_tol: f64,
) -> Result<C64> {
    if ops.is_empty() || ops.len() > 3 {
        return Err(Error::InvalidParameter(format!("expected 1 to 3 operators, got {}", ops.len())));
    }
    if ops.iter().any(|o| o.dim() != state.mode_count()) {
        return Err(Error::InvalidParameter("operator dimension differs from mode count".into()));
    }
    leak_check(state, ops, leak_tol)?;
    Ok(state.raw_expectation(ops))
}

pub fn one_body_density<S: ManyBody + ?Sized>(state: &S) -> OneBodyDensity {
    state.one_body_density()
}

impl ManyBody for FockState {
    fn atom_count(&self) -> usize {
        FockState::atom_count(self)
    }

    fn mode_count(&self) -> usize {
        FockState::mode_count(self)
    }

    fn one_body_density(&self) -> OneBodyDensity {
        let m = FockState::mode_count(self);
        let mut rho = DMatrix::<C64>::zeros(m, m);
        // rho[n][k] = <a_k^dag a_n>: move one boson n -> k
        for (occ, &amp) in self.terms() {
            let mut next = occ.clone();
            for n in 0..m {
                if occ[n] == 0 {
                    continue;
                }
                for k in 0..m {
                    if k == n {
                        rho[(n, n)] += amp.norm_sqr() * occ[n] as f64;
                        continue;
                    }
                    next[n] -= 1;
                    next[k] += 1;
                    if let Some(b) = self.terms().get(&next) {
                        let f = ((occ[n] as f64) * (occ[k] as f64 + 1.0)).sqrt();
                        rho[(n, k)] += b.conj() * amp * f;
                    }
                    next[n] += 1;
                    next[k] -= 1;
                }
            }
        }
        OneBodyDensity { matrix: rho, atom_count: FockState::atom_count(self) }
    }

    fn weight_from_orbital(&self, first: usize) -> f64 {
        FockState::weight_from_orbital(self, first)
    }

    fn raw_expectation(&self, ops: &[&OneBodyOperator]) -> C64 {
        let psi = self.terms();
        match ops {
            [a] => inner(psi, &apply_one_body(a, psi)),
            [a, b] => {
                let left = apply_one_body(&a.adjoint(), psi);
                inner(&left, &apply_one_body(b, psi))
            }
            [a, b, c] => {
                let left = apply_one_body(&a.adjoint(), psi);
                let right = apply_one_body(b, &apply_one_body(c, psi));
                inner(&left, &right)
            }
            _ => unreachable!("few_body_expectation validates the operator count"),
        }
    }

    fn pair_matrix(&self, ops: &[OneBodyOperator]) -> DMatrix<C64> {
        let psi = self.terms();
        let right: Vec<_> = ops.iter().map(|o| apply_one_body(o, psi)).collect();
        let left: Vec<_> = ops
            .iter()
            .zip(&right)
            .map(|(o, r)| if o.is_hermitian() { r.clone() } else { apply_one_body(&o.adjoint(), psi) })
            .collect();
        DMatrix::from_fn(ops.len(), ops.len(), |a, b| inner(&left[a], &right[b]))
    }
}

impl ManyBody for StateEnsemble {
    fn atom_count(&self) -> usize {
        StateEnsemble::atom_count(self)
    }

    fn mode_count(&self) -> usize {
        StateEnsemble::mode_count(self)
    }

    fn one_body_density(&self) -> OneBodyDensity {
        let m = self.mode_count();
        let mut rho = DMatrix::<C64>::zeros(m, m);
        for (w, s) in self.members() {
            rho += s.one_body_density().matrix * C64::new(*w, 0.0);
        }
        OneBodyDensity { matrix: rho, atom_count: StateEnsemble::atom_count(self) }
    }

    fn weight_from_orbital(&self, first: usize) -> f64 {
        self.members().iter().map(|(w, s)| w * s.weight_from_orbital(first)).sum()
    }

    fn raw_expectation(&self, ops: &[&OneBodyOperator]) -> C64 {
        self.members().iter().map(|(w, s)| s.raw_expectation(ops) * *w).sum()
    }

    fn pair_matrix(&self, ops: &[OneBodyOperator]) -> DMatrix<C64> {
        let k = ops.len();
        let mut g = DMatrix::<C64>::zeros(k, k);
        for (w, s) in self.members() {
            g += s.pair_matrix(ops) * C64::new(*w, 0.0);
        }
        g
    }
}
