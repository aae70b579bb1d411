//! Searches for the smallest correlation term in both state families.

use bose_feedback::driver::{search_state, Family, SearchSpec};
use bose_feedback::scales::{FeedbackConfig, TrapConfig};

fn main() -> bose_feedback::Result<()> {
    let trap = TrapConfig::unit(2);
    let fb = FeedbackConfig::new(1.0, 0.5)?;
    for family in [Family::FixedNPure, Family::IndefiniteNCoherent] {
        let spec = SearchSpec { family, restarts: 8, seed: 2, ..SearchSpec::defaults(2, 4) };
        let r = search_state(&spec, &trap, Some(&fb))?;
        let converged = r.restarts.iter().filter(|x| x.converged).count();
        println!(
            "{family:?}: best {:.8}, restart mean {:.8}, {converged}/{} converged, Schwarz violated: {}",
            r.best_objective,
            r.mean_objective,
            r.restarts.len(),
            r.criteria.as_ref().is_some_and(|c| c.schwarz_violated)
        );
    }
    Ok(())
}
