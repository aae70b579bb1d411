//! Gaussian moment dynamics: damping of a displaced condensate and approach
//! to the stationary centre-of-mass spread.

use bose_feedback::fock::{condensate_state, displaced_ground_orbital, OrbitalBasis};
use bose_feedback::moments::{build_generators, cloud_size, init_moments, stationary_cm, trajectory};
use bose_feedback::scales::{derive_scales, FeedbackConfig, TrapConfig};
use bose_feedback::signal::envelope_decay_rate;

fn main() -> bose_feedback::Result<()> {
    let trap = TrapConfig::unit(2);
    let fb = FeedbackConfig::for_eta(&trap, 0.1, 1.0)?;
    let basis = OrbitalBasis::new(20, trap)?;
    let state = condensate_state(&displaced_ground_orbital(&basis, 1.0, 20), 2)?;
    let g = build_generators(&trap, &fb)?;
    let traj = trajectory(&init_moments(&state, &basis)?, &g, 0.05, 2000)?;

    let times: Vec<f64> = traj.iter().map(|(t, _)| *t).collect();
    let mean_x: Vec<f64> = traj.iter().map(|(_, m)| m.collective().0[0]).collect();
    println!("envelope decay rate {:.5} (zeta / 2 = {:.5})", envelope_decay_rate(&times, &mean_x)?, fb.shift_rate / 2.0);
    println!("stationary cm spread: Lyapunov {:.10}, closed form {:.10}", stationary_cm(&g)?, derive_scales(&trap, &fb)?.stationary_cm);
    for (t, m) in traj.iter().step_by(400) {
        println!("t {t:6.1}  <X> {:+.5}  dx {:.5}", m.collective().0[0], cloud_size(m));
    }
    Ok(())
}
