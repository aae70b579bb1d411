//! Plot-ready breathing curve of a squeezed condensate, with thresholds and
//! the transient cloud size, written to stdout as CSV.

use bose_feedback::driver::{breathing_curve, write_breathing_csv};
use bose_feedback::fock::{condensate_state, squeezed_ground_orbital, OrbitalBasis};
use bose_feedback::scales::{FeedbackConfig, TrapConfig};

fn main() -> bose_feedback::Result<()> {
    let trap = TrapConfig::unit(2);
    let basis = OrbitalBasis::new(24, trap)?;
    let state = condensate_state(&squeezed_ground_orbital(0.4, 20), 2)?.embed(24)?;
    let fb = FeedbackConfig::for_eta(&trap, 1.0, 1.0)?;
    let (h, rows) = breathing_curve(&state, &basis, &fb, 41, Some(4.0 * std::f64::consts::PI), true)?;
    eprintln!("sigma_q^2 breathes between {:.6} and {:.6}", h.min(), h.max());
    write_breathing_csv(std::io::stdout().lock(), &rows)
}
