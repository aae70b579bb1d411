//! Density profile, pair distribution marginal and the classical Schwarz
//! inequality for a two-atom state.

use bose_feedback::criteria::classical_schwarz_check;
use bose_feedback::fock::{density_profile, one_body_density, pair_distribution, pair_marginal, standard_grid, FockState, OrbitalBasis};
use bose_feedback::scales::TrapConfig;

fn main() -> bose_feedback::Result<()> {
    let basis = OrbitalBasis::new(6, TrapConfig::unit(2))?;
    let state = FockState::occupation(&[1, 1, 0, 0, 0, 0])?;
    let grid = standard_grid(&basis, 6.0, 161);
    let profile = density_profile(&one_body_density(&state), &basis, &grid)?;
    let pair = pair_distribution(&state, &basis, &grid)?;
    let marginal = pair_marginal(&grid, &pair);
    let worst = profile.iter().zip(&marginal).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max |P(x) - int P(x, x') dx'| = {worst:.3e}");

    let q: Vec<f64> = grid.clone();
    let check = classical_schwarz_check(&grid, &profile, &q)?;
    println!("classical Schwarz: <q>^2 = {:.6} <= <q^2> = {:.6}: {}", check.lhs, check.rhs, check.satisfied);
    Ok(())
}
