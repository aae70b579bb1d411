//! Regime map over eta for several atom numbers, as CSV on stdout.

use bose_feedback::driver::{eta_grid, scan_eta, write_scan_csv};
use bose_feedback::scales::TrapConfig;

fn main() -> bose_feedback::Result<()> {
    let etas = eta_grid(0.05, 20.0, 9, true)?;
    let rows = scan_eta(&TrapConfig::unit(2), 1.0, &[1, 2, 4], &etas)?;
    write_scan_csv(std::io::stdout().lock(), &rows)
}
