//! One outcome-averaged measurement and kick on a two-atom Fock state,
//! compared with the Gaussian event rules.

use bose_feedback::feedback_loop::KrausBackend;
use bose_feedback::fock::{FockState, OrbitalBasis};
use bose_feedback::oracle::{build_generator, DensityMatrix};
use bose_feedback::scales::{FeedbackConfig, TrapConfig};

fn main() -> bose_feedback::Result<()> {
    let trap = TrapConfig::unit(2);
    let basis = OrbitalBasis::new(14, trap)?;
    let gen = build_generator(&trap, &FeedbackConfig::new(1.0, 1.0)?, &basis)?;
    let x = gen.x_cm().to_dense();
    let p = gen.p_cm().to_dense();
    let (sigma0, zeta0) = (1.5, 0.1);
    let backend = KrausBackend::new(&x, &p, sigma0, zeta0, trap.hbar)?;
    let mut occ = vec![0u16; 14];
    occ[0] = 2;
    let rho = DensityMatrix::from_state(&FockState::occupation(&occ)?, gen.sector().clone())?;
    let after = backend.averaged(&rho, 0.0, 12.0, 481)?;
    let ex = |op: &nalgebra::DMatrix<num_complex::Complex64>, r: &DensityMatrix| (op * &r.matrix).trace().re;
    let (vx0, vp0) = (ex(&(&x * &x), &rho), ex(&(&p * &p), &rho));
    println!("Var(X): {:.8} -> {:.8} (Gaussian rule {:.8})", vx0, ex(&(&x * &x), &after), (1.0 - zeta0).powi(2) * vx0 + (zeta0 * sigma0).powi(2));
    println!("Var(P): {:.8} -> {:.8} (Gaussian rule {:.8})", vp0, ex(&(&p * &p), &after), vp0 + 0.25 / (sigma0 * sigma0));
    Ok(())
}
