//! Exact master-equation evolution of |1,1> against the Gaussian moments.

use bose_feedback::fock::{FockState, OrbitalBasis};
use bose_feedback::oracle::compare_with_moments;
use bose_feedback::scales::{FeedbackConfig, TrapConfig};

fn main() -> bose_feedback::Result<()> {
    let trap = TrapConfig::unit(2);
    let fb = FeedbackConfig::for_eta(&trap, 0.5, 1.0)?;
    let basis = OrbitalBasis::new(12, trap)?;
    let mut occ = vec![0u16; 12];
    occ[0] = 1;
    occ[1] = 1;
    let state = FockState::occupation(&occ)?;
    let grid: Vec<f64> = (0..=6).map(|k| k as f64 * std::f64::consts::PI).collect();
    let d = compare_with_moments(&state, &trap, &fb, &basis, &grid, 0.005)?;
    println!("max deviation over three periods: mean {:.2e}, covariance {:.2e}, dx {:.2e}", d.mean, d.cov, d.dx);
    Ok(())
}
