use super::operators::OrbitalBasis;
use super::state::{FockState, Occupation, StateEnsemble};
use crate::error::{Error, Result};

const MIN_RETAINED: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalReport {
    /// Fraction of the exact canonical partition function kept by the
    /// truncation (orbital count and energy cutoff).
    pub retained_weight: f64,
    /// `1 - retained_weight`: an exact bound on the discarded probability.
    pub weight_loss: f64,
    pub member_count: usize,
}

/// Canonical ensemble of N ideal bosons over occupation configurations.
///
/// `kt` is the thermal energy k_B T; `energy_cutoff` bounds the excitation
/// energy above the ground configuration. The discarded weight is measured
/// against the exact canonical partition function of the untruncated ladder,
/// obtained from the recursion `Z_N = (1/N) sum_k z(k beta) Z_{N-k}`.
pub fn thermal_ensemble(
    basis: &OrbitalBasis,
    kt: f64,
    atom_count: usize,
    energy_cutoff: f64,
) -> Result<(StateEnsemble, ThermalReport)> {
    if !(kt >= 0.0) {
        return Err(Error::InvalidParameter(format!("temperature must be non-negative, got {kt}")));
    }
    if atom_count == 0 {
        return Err(Error::InvalidN("thermal ensemble needs at least one atom".into()));
    }
    let m = basis.mode_count;
    let hw = basis.trap.hbar * basis.trap.trap_freq;

    if kt == 0.0 {
        let mut occ = vec![0u16; m];
        occ[0] = atom_count as u16;
        let ens = StateEnsemble::pure(FockState::occupation(&occ)?);
        return Ok((ens, ThermalReport { retained_weight: 1.0, weight_loss: 0.0, member_count: 1 }));
    }

    // excitation quanta sum_k k n_k bounded by the cutoff
    let max_quanta = (energy_cutoff / hw + 1e-9).floor().max(0.0) as usize;
    let mut configs: Vec<(usize, Occupation)> = Vec::new();
    fn rec(k: usize, n_left: usize, quanta: usize, max_q: usize, cur: &mut Occupation, out: &mut Vec<(usize, Occupation)>) {
        let m = cur.len();
        if k == m - 1 {
            let q = quanta + k * n_left;
            if q <= max_q {
                cur[k] = n_left as u16;
                out.push((q, cur.clone()));
                cur[k] = 0;
            }
            return;
        }
        for v in 0..=n_left {
            let q = quanta + k * v;
            if q > max_q {
                break;
            }
            cur[k] = v as u16;
            rec(k + 1, n_left - v, q, max_q, cur, out);
        }
        cur[k] = 0;
    }
    let mut cur = vec![0u16; m];
    rec(0, atom_count, 0, max_quanta, &mut cur, &mut configs);

    let beta_hw = hw / kt;
    let retained: f64 = configs.iter().map(|(q, _)| (-beta_hw * *q as f64).exp()).sum();
    let exact = canonical_partition(atom_count, beta_hw);
    let retained_weight = retained / exact;
    if retained_weight < MIN_RETAINED {
        return Err(Error::CutoffTooTight { retained: retained_weight });
    }
    let members = configs
        .into_iter()
        .map(|(q, occ)| Ok(((-beta_hw * q as f64).exp() / retained, FockState::occupation(&occ)?)))
        .collect::<Result<Vec<_>>>()?;
    let member_count = members.len();
    let ens = StateEnsemble::from_unnormalized(members)?;
    Ok((ens, ThermalReport { retained_weight, weight_loss: 1.0 - retained_weight, member_count }))
}

/// Canonical partition function of N bosons on the ladder, energies measured
/// from the ground configuration.
fn canonical_partition(atom_count: usize, beta_hw: f64) -> f64 {
    let single = |k: usize| 1.0 / (1.0 - (-(k as f64) * beta_hw).exp());
    let mut z = vec![1.0f64];
    for n in 1..=atom_count {
        let mut acc = 0.0;
        // single-particle energies n hbar omega, so the ground configuration sits at zero
        for k in 1..=n {
            acc += single(k) * z[n - k];
        }
        z.push(acc / n as f64);
    }
    z[atom_count]
}
