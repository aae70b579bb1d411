use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::scales::TrapConfig;

/// First `mode_count` harmonic-oscillator orbitals of the trap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitalBasis {
    pub mode_count: usize,
    pub trap: TrapConfig,
}

/// Which closed form produced a one-body matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorKind {
    Position,
    Momentum,
    PositionSq,
    MomentumSq,
    /// (xp + px) / 2
    SymXp,
    Quadrature { t: f64 },
    QuadratureSq { t: f64 },
    Custom,
}

/// A one-body operator `sum_ij A[i][j] a_i^dag a_j` given by its M x M matrix
/// in the orbital basis.
///
/// `reach` is the band half-width of the analytic kinds: a state with no
/// weight on the top `reach` orbitals is acted on exactly by the truncated
/// matrix. Custom operators carry no reach and are taken as defined on the
/// truncated space.
#[derive(Debug, Clone)]
pub struct OneBodyOperator {
    matrix: DMatrix<C64>,
    kind: OperatorKind,
    hermitian: bool,
    reach: Option<usize>,
    columns: Vec<Vec<(usize, C64)>>,
}

const HERMITIAN_TOL: f64 = 1e-14;

impl OneBodyOperator {
    fn build(matrix: DMatrix<C64>, kind: OperatorKind, reach: Option<usize>) -> Self {
        let scale = matrix.iter().fold(1.0f64, |m, z| m.max(z.norm()));
        let hermitian = (&matrix - matrix.adjoint()).iter().all(|z| z.norm() <= HERMITIAN_TOL * scale);
        let columns = (0..matrix.ncols())
            .map(|j| {
                (0..matrix.nrows())
                    .filter_map(|i| {
                        let a = matrix[(i, j)];
                        (a != C64::new(0.0, 0.0)).then_some((i, a))
                    })
                    .collect()
            })
            .collect();
        OneBodyOperator { matrix, kind, hermitian, reach, columns }
    }

    /// Wrap an arbitrary square matrix.
    pub fn custom(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() < 1 {
            return Err(Error::InvalidParameter("one-body matrix must be square".into()));
        }
        Ok(Self::build(matrix, OperatorKind::Custom, None))
    }

    pub fn from_real(matrix: &DMatrix<f64>) -> Result<Self> {
        Self::custom(matrix.map(|v| C64::new(v, 0.0)))
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn reach(&self) -> Option<usize> {
        self.reach
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Nonzero entries `(i, A[i][j])` of column `j`.
    pub fn column(&self, j: usize) -> &[(usize, C64)] {
        &self.columns[j]
    }

    pub fn adjoint(&self) -> OneBodyOperator {
        if self.hermitian {
            return self.clone();
        }
        let mut op = Self::build(self.matrix.adjoint(), self.kind, self.reach);
        op.kind = OperatorKind::Custom;
        op
    }

    /// Matrix product of two one-body matrices (the one-body part of the
    /// second-quantized product).
    pub fn product(&self, other: &OneBodyOperator) -> OneBodyOperator {
        let reach = match (self.reach, other.reach) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        let mut op = Self::build(&self.matrix * &other.matrix, OperatorKind::Custom, reach);
        op.kind = OperatorKind::Custom;
        op
    }

    /// Linear combination `sum_k c_k A_k` of operators of equal dimension.
    pub fn combine(terms: &[(f64, &OneBodyOperator)]) -> OneBodyOperator {
        let dim = terms[0].1.dim();
        let mut m = DMatrix::<C64>::zeros(dim, dim);
        let mut reach = Some(0);
        for (c, op) in terms {
            m += op.matrix.map(|z| z * *c);
            reach = match (reach, op.reach) {
                (Some(a), Some(b)) => Some(a.max(b)),
                _ => None,
            };
        }
        Self::build(m, OperatorKind::Custom, reach)
    }

    /// `Tr(A rho)` for a one-body density matrix with `rho[n][m] = <a_m^dag a_n>`.
    pub fn trace_with(&self, rho: &DMatrix<C64>) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..self.dim() {
            for &(i, a) in &self.columns[j] {
                acc += a * rho[(j, i)];
            }
        }
        acc
    }
}

impl OrbitalBasis {
    pub fn new(mode_count: usize, trap: TrapConfig) -> Result<Self> {
        if mode_count < 2 {
            return Err(Error::InvalidParameter(format!(
                "orbital basis needs at least 2 modes, got {mode_count}"
            )));
        }
        trap.validate()?;
        Ok(OrbitalBasis { mode_count, trap })
    }

    fn length(&self) -> f64 {
        self.trap.ground_var().sqrt()
    }

    fn momentum_scale(&self) -> f64 {
        (self.trap.hbar * self.trap.mass * self.trap.trap_freq / 2.0).sqrt()
    }

    fn zeros(&self) -> DMatrix<C64> {
        DMatrix::zeros(self.mode_count, self.mode_count)
    }

    /// x = sqrt(hbar / 2 m omega) (a + a^dag).
    pub fn position(&self) -> OneBodyOperator {
        let l = self.length();
        let mut m = self.zeros();
        for n in 0..self.mode_count - 1 {
            let v = C64::new(l * ((n + 1) as f64).sqrt(), 0.0);
            m[(n, n + 1)] = v;
            m[(n + 1, n)] = v;
        }
        OneBodyOperator::build(m, OperatorKind::Position, Some(1))
    }

    /// p = i sqrt(hbar m omega / 2) (a^dag - a).
    pub fn momentum(&self) -> OneBodyOperator {
        let s = self.momentum_scale();
        let mut m = self.zeros();
        for n in 0..self.mode_count - 1 {
            let v = s * ((n + 1) as f64).sqrt();
            m[(n, n + 1)] = C64::new(0.0, -v);
            m[(n + 1, n)] = C64::new(0.0, v);
        }
        OneBodyOperator::build(m, OperatorKind::Momentum, Some(1))
    }

    fn second_order(&self, diag: f64, off: f64, off_phase: C64, kind: OperatorKind) -> OneBodyOperator {
        // diag * (2n + 1) on the diagonal, off * sqrt((n+1)(n+2)) * phase on the
        // (n+2, n) entry and its conjugate on (n, n+2)
        let mut m = self.zeros();
        for n in 0..self.mode_count {
            m[(n, n)] = C64::new(diag * (2 * n + 1) as f64, 0.0);
            if n + 2 < self.mode_count {
                let v = off * (((n + 1) * (n + 2)) as f64).sqrt();
                m[(n + 2, n)] = off_phase * v;
                m[(n, n + 2)] = off_phase.conj() * v;
            }
        }
        OneBodyOperator::build(m, kind, Some(2))
    }

    /// Analytic x^2; exact on every retained orbital.
    pub fn position_sq(&self) -> OneBodyOperator {
        let g = self.trap.ground_var();
        self.second_order(g, g, C64::new(1.0, 0.0), OperatorKind::PositionSq)
    }

    pub fn momentum_sq(&self) -> OneBodyOperator {
        let s = self.trap.hbar * self.trap.mass * self.trap.trap_freq / 2.0;
        self.second_order(s, -s, C64::new(1.0, 0.0), OperatorKind::MomentumSq)
    }

    /// (xp + px)/2 = (i hbar / 2)(a^dag^2 - a^2).
    pub fn sym_xp(&self) -> OneBodyOperator {
        let h = self.trap.hbar / 2.0;
        self.second_order(0.0, h, C64::new(0.0, 1.0), OperatorKind::SymXp)
    }

    /// q(t) = x cos(omega t) + p sin(omega t) / (m omega).
    pub fn quadrature(&self, t: f64) -> OneBodyOperator {
        let (s, c) = (self.trap.trap_freq * t).sin_cos();
        let mw = self.trap.mass * self.trap.trap_freq;
        let m = self.position().matrix * C64::new(c, 0.0) + self.momentum().matrix * C64::new(s / mw, 0.0);
        OneBodyOperator::build(m, OperatorKind::Quadrature { t }, Some(1))
    }

    /// Analytic q(t)^2 from the analytic x^2, p^2 and sym(xp) kinds.
    pub fn quadrature_sq(&self, t: f64) -> OneBodyOperator {
        let (s, c) = (self.trap.trap_freq * t).sin_cos();
        let mw = self.trap.mass * self.trap.trap_freq;
        let m = self.position_sq().matrix * C64::new(c * c, 0.0)
            + self.sym_xp().matrix * C64::new(2.0 * c * s / mw, 0.0)
            + self.momentum_sq().matrix * C64::new(s * s / (mw * mw), 0.0);
        OneBodyOperator::build(m, OperatorKind::QuadratureSq { t }, Some(2))
    }

    /// Single-particle energies hbar omega (n + 1/2) as a diagonal operator.
    pub fn hamiltonian(&self) -> OneBodyOperator {
        let mut m = self.zeros();
        let hw = self.trap.hbar * self.trap.trap_freq;
        for n in 0..self.mode_count {
            m[(n, n)] = C64::new(hw * (n as f64 + 0.5), 0.0);
        }
        OneBodyOperator::build(m, OperatorKind::Custom, Some(0))
    }
}
