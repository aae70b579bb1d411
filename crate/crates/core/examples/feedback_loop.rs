//! Discrete measure-and-kick ensemble approaching the continuous stationary
//! spread as the event rate grows.

use bose_feedback::feedback_loop::{regular_stationary_cov, run_ensemble, LoopConfig};
use bose_feedback::fock::{FockState, OrbitalBasis};
use bose_feedback::moments::init_moments;
use bose_feedback::scales::{derive_scales, FeedbackConfig, TrapConfig};

fn main() -> bose_feedback::Result<()> {
    let trap = TrapConfig::unit(2);
    let fb = FeedbackConfig::new(1.0, 0.5)?;
    let target = derive_scales(&trap, &fb)?.stationary_cm.powi(2);
    let m0 = init_moments(&FockState::occupation(&[2, 0, 0])?, &OrbitalBasis::new(3, trap)?)?;
    println!("continuous stationary Var(X) = {target:.6}");
    for gamma in [25.0, 50.0, 100.0] {
        let cfg = LoopConfig::from_continuous(&fb, gamma, 2000, 1);
        let run = run_ensemble(&m0, &cfg, &trap, 12.0, 1.0 / gamma)?;
        let late: Vec<f64> = run.rows.iter().filter(|r| r.t > 8.0).map(|r| r.var_x).collect();
        let mc = late.iter().sum::<f64>() / late.len() as f64;
        let exact = regular_stationary_cov(&cfg, &trap)?[(0, 0)];
        println!("gamma {gamma:>5}: Monte Carlo {mc:.6}, exact discrete {exact:.6}, events {}", run.rows.last().map_or(0.0, |r| r.n_events));
    }
    Ok(())
}
