//! Canonical thermal ensemble of three atoms and its correlation term.

use bose_feedback::criteria::quadrature_harmonics;
use bose_feedback::fock::{thermal_ensemble, OrbitalBasis};
use bose_feedback::scales::TrapConfig;

fn main() -> bose_feedback::Result<()> {
    let basis = OrbitalBasis::new(14, TrapConfig::unit(3))?;
    for kt in [0.0, 0.25, 0.5, 0.75] {
        let (ens, report) = thermal_ensemble(&basis, kt, 3, 12.0)?;
        let h = quadrature_harmonics(&ens, &basis)?;
        println!(
            "kT {kt:.2}: {} configurations, discarded weight {:.2e}, sigma_q^2 in [{:.6}, {:.6}]",
            report.member_count,
            report.weight_loss,
            h.min(),
            h.max()
        );
    }
    Ok(())
}
