//! Correlation term and the two criteria for a handful of two-atom states.

use bose_feedback::criteria::{evaluate_criteria, quadrature_harmonics};
use bose_feedback::fock::{condensate_state, squeezed_ground_orbital, FockState, OrbitalBasis};
use bose_feedback::scales::{derive_scales, FeedbackConfig, TrapConfig};
use num_complex::Complex64 as C64;

fn main() -> bose_feedback::Result<()> {
    let trap = TrapConfig::unit(2);
    let m = 24;
    let basis = OrbitalBasis::new(m, trap)?;
    let scales = derive_scales(&trap, &FeedbackConfig::new(1.0, 0.5)?)?;

    let states = [
        ("ground condensate", FockState::occupation(&occ(m, &[2]))?),
        ("|1,1>", FockState::occupation(&occ(m, &[1, 1]))?),
        ("NOON(+)", FockState::noon(2, m, C64::new(1.0, 0.0))?),
        ("NOON(-)", FockState::noon(2, m, C64::new(-1.0, 0.0))?),
        ("squeezed r=0.5", condensate_state(&squeezed_ground_orbital(0.5, 20), 2)?.embed(m)?),
    ];
    println!("{:<18} {:>10} {:>10} {:>10} {:>6} {:>8}", "state", "sigma(0)", "min", "min dxa", "QS", "Schwarz");
    for (name, s) in &states {
        let h = quadrature_harmonics(s, &basis)?;
        let r = evaluate_criteria(&scales, &h);
        println!(
            "{:<18} {:>10.6} {:>10.6} {:>10.6} {:>6} {:>8}",
            name,
            h.eval(0.0),
            h.min(),
            r.min_cloud_size.unwrap_or(f64::NAN),
            r.qs_violated,
            r.schwarz_violated
        );
    }
    Ok(())
}

fn occ(m: usize, head: &[u16]) -> Vec<u16> {
    let mut o = vec![0; m];
    o[..head.len()].copy_from_slice(head);
    o
}
