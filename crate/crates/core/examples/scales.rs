//! Length scales, eta and the threshold ordering for a few feedback settings.

use bose_feedback::scales::{classify_regime, derive_scales, regime_interval, FeedbackConfig, TrapConfig};

fn main() -> bose_feedback::Result<()> {
    for n in [1, 2, 10] {
        let trap = TrapConfig::unit(n);
        let (lo, hi) = regime_interval(n);
        println!("N = {n}: DXs <= dx0 for eta in [{lo:.6}, {hi:.6}]");
        for eta in [0.25, 1.0, 4.0] {
            let fb = FeedbackConfig::for_eta(&trap, 1.0, eta)?;
            let s = derive_scales(&trap, &fb)?;
            println!(
                "  eta {:>5.2}  dX0 {:.6}  dx0 {:.6}  DXs {:.6}  {:?}",
                s.eta,
                s.sql_cm,
                s.sql_atom,
                s.stationary_cm,
                classify_regime(n, eta).regime
            );
        }
    }
    Ok(())
}
