//! Physical parameters of the trap and the feedback loop, and the length
//! scales derived from them.
//!
//! The two thresholds that matter for the breathing criteria are the
//! single-atom ground-state width `dx0` and the stationary centre-of-mass
//! noise `DXs`. Which one lies higher is decided by `eta` alone (for a given
//! atom number), see [`classify_regime`].

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative tolerance used for the discrete/continuous consistency check and
/// for the regime boundary.
pub const CLOSED_FORM_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    /// Number of atoms N.
    #[serde(rename = "n")]
    pub atom_count: usize,
    pub mass: f64,
    #[serde(rename = "omega")]
    pub trap_freq: f64,
    #[serde(default = "one")]
    pub hbar: f64,
}

fn one() -> f64 {
    1.0
}

impl TrapConfig {
    pub fn new(atom_count: usize, mass: f64, trap_freq: f64, hbar: f64) -> Result<Self> {
        let t = TrapConfig { atom_count, mass, trap_freq, hbar };
        t.validate()?;
        Ok(t)
    }

    /// Unit trap (hbar = m = omega = 1) with `n` atoms.
    pub fn unit(atom_count: usize) -> Self {
        TrapConfig { atom_count, mass: 1.0, trap_freq: 1.0, hbar: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.atom_count == 0 {
            return Err(Error::InvalidN("atom count must be at least 1".into()));
        }
        for (name, v) in [("mass", self.mass), ("omega", self.trap_freq), ("hbar", self.hbar)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> f64 {
        self.atom_count as f64
    }

    /// Single-atom ground-state position variance hbar / (2 m omega).
    pub fn ground_var(&self) -> f64 {
        self.hbar / (2.0 * self.mass * self.trap_freq)
    }

    /// Half trap period pi / omega, the period of the breathing.
    pub fn half_period(&self) -> f64 {
        std::f64::consts::PI / self.trap_freq
    }
}

/// Measurement-and-shift loop at rate gamma with per-event resolution sigma0
/// and gain zeta0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLoop {
    pub gamma: f64,
    pub sigma0: f64,
    pub zeta0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    /// Feedback shift rate zeta.
    #[serde(rename = "zeta")]
    pub shift_rate: f64,
    /// Time-integrated measurement resolution sigma.
    #[serde(rename = "sigma")]
    pub meas_resolution: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discrete: Option<DiscreteLoop>,
}

impl FeedbackConfig {
    pub fn new(shift_rate: f64, meas_resolution: f64) -> Result<Self> {
        let fb = FeedbackConfig { shift_rate, meas_resolution, discrete: None };
        fb.validate()?;
        Ok(fb)
    }

    /// Build the continuous parameters from a discrete loop, keeping the triple.
    pub fn from_discrete(gamma: f64, sigma0: f64, zeta0: f64) -> Result<Self> {
        let (sigma, zeta) = continuous_limit_params(gamma, sigma0, zeta0)?;
        let fb = FeedbackConfig {
            shift_rate: zeta,
            meas_resolution: sigma,
            discrete: Some(DiscreteLoop { gamma, sigma0, zeta0 }),
        };
        fb.validate()?;
        Ok(fb)
    }

    /// Feedback parameters giving a prescribed eta for the given trap.
    pub fn for_eta(trap: &TrapConfig, shift_rate: f64, eta: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
        }
        let sigma_sq = sql_cm(trap).powi(2) / (shift_rate * eta);
        FeedbackConfig::new(shift_rate, sigma_sq.sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shift_rate.is_finite() && self.shift_rate >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "zeta must be non-negative, got {}",
                self.shift_rate
            )));
        }
        if !(self.meas_resolution > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {}",
                self.meas_resolution
            )));
        }
        if let Some(d) = self.discrete {
            let (sigma, zeta) = continuous_limit_params(d.gamma, d.sigma0, d.zeta0)?;
            let rel = |a: f64, b: f64| (a - b).abs() <= CLOSED_FORM_RTOL * a.abs().max(b.abs());
            if !rel(sigma, self.meas_resolution) || !rel(zeta, self.shift_rate) {
                return Err(Error::DimensionalMismatch(format!(
                    "sigma0/sqrt(gamma) = {sigma}, zeta0*gamma = {zeta} vs sigma = {}, zeta = {}",
                    self.meas_resolution, self.shift_rate
                )));
            }
        }
        Ok(())
    }

    /// Measurement-induced momentum diffusion 1/sigma^2 vanishes in the limit
    /// sigma -> infinity; this is the flag used to treat that limit exactly.
    pub fn sigma_sq(&self) -> f64 {
        self.meas_resolution * self.meas_resolution
    }
}

/// sigma = sigma0 / sqrt(gamma), zeta = zeta0 * gamma.
pub fn continuous_limit_params(gamma: f64, sigma0: f64, zeta0: f64) -> Result<(f64, f64)> {
    if !(gamma > 0.0) {
        return Err(Error::NonPositiveRate(gamma));
    }
    if !(sigma0 > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma0 must be positive, got {sigma0}")));
    }
    if !(zeta0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("zeta0 must be non-negative, got {zeta0}")));
    }
    Ok((sigma0 / gamma.sqrt(), zeta0 * gamma))
}

/// Centre-of-mass ground-state width sqrt(hbar / (2 N m omega)).
pub fn sql_cm(trap: &TrapConfig) -> f64 {
    (trap.hbar / (2.0 * trap.n() * trap.mass * trap.trap_freq)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedScales {
    /// Centre-of-mass standard quantum limit.
    pub sql_cm: f64,
    /// Single-atom standard quantum limit, `sql_cm * sqrt(N)`.
    pub sql_atom: f64,
    pub eta: f64,
    /// Stationary rms centre-of-mass spread under feedback.
    pub stationary_cm: f64,
}

fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}

impl Serialize for DerivedScales {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("DerivedScales", 4)?;
        st.serialize_field("dX0", &round_sig(self.sql_cm, 15))?;
        st.serialize_field("dx0", &round_sig(self.sql_atom, 15))?;
        st.serialize_field("eta", &round_sig(self.eta, 15))?;
        st.serialize_field("DXs", &round_sig(self.stationary_cm, 15))?;
        st.end()
    }
}

/// Stationary cm spread for a given eta in units of the cm SQL.
pub fn stationary_ratio(eta: f64) -> f64 {
    (0.5 * (eta + 1.0 / eta)).sqrt()
}

pub fn derive_scales(trap: &TrapConfig, fb: &FeedbackConfig) -> Result<DerivedScales> {
    trap.validate()?;
    fb.validate()?;
    if fb.shift_rate == 0.0 {
        return Err(Error::ZeroShiftRate);
    }
    let d_x0 = sql_cm(trap);
    let eta = d_x0 * d_x0 / (fb.shift_rate * fb.sigma_sq());
    Ok(DerivedScales {
        sql_cm: d_x0,
        sql_atom: d_x0 * trap.n().sqrt(),
        eta,
        stationary_cm: d_x0 * stationary_ratio(eta),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// DXs <= dx0: squeezing threshold lies above the Schwarz threshold.
    QsThresholdAbove,
    /// DXs > dx0: Schwarz violation is reachable without single-atom squeezing.
    SchwarzThresholdAbove,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeClass {
    pub regime: Regime,
    pub lower: f64,
    pub upper: f64,
}

impl RegimeClass {
    /// Whether DXs <= dx0 holds (boundary included).
    pub fn stationary_below_atom_sql(&self) -> bool {
        !matches!(self.regime, Regime::SchwarzThresholdAbove)
    }
}

/// Endpoints N -/+ sqrt(N^2 - 1) of the eta interval where DXs <= dx0.
pub fn regime_interval(atom_count: usize) -> (f64, f64) {
    let n = atom_count as f64;
    let root = ((n - 1.0) * (n + 1.0)).sqrt();
    let upper = n + root;
    // lower * upper = 1; avoids cancellation for large N
    (1.0 / upper, upper)
}

pub fn classify_regime(atom_count: usize, eta: f64) -> RegimeClass {
    let (lower, upper) = regime_interval(atom_count);
    let near = |edge: f64| (eta - edge).abs() <= CLOSED_FORM_RTOL * edge;
    let regime = if near(lower) || near(upper) {
        Regime::Boundary
    } else if eta > lower && eta < upper {
        Regime::QsThresholdAbove
    } else {
        Regime::SchwarzThresholdAbove
    };
    RegimeClass { regime, lower, upper }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn single_atom_eta_one_hits_sql() {
        let trap = TrapConfig::unit(1);
        let fb = FeedbackConfig::new(1.0, 0.5f64.sqrt()).unwrap();
        let s = derive_scales(&trap, &fb).unwrap();
        assert!(close(s.eta, 1.0, 1e-14));
        assert!(close(s.stationary_cm, s.sql_cm, 1e-14));
        assert!(close(s.stationary_cm, 0.707107, 1e-6));
    }

    #[test]
    fn two_atoms_unit_scales() {
        let trap = TrapConfig::unit(2);
        assert!(close(sql_cm(&trap), 0.5, 1e-15));
        let fb = FeedbackConfig::for_eta(&trap, 1.0, 4.0).unwrap();
        let s = derive_scales(&trap, &fb).unwrap();
        assert!(close(s.sql_atom, 0.5f64.sqrt(), 1e-14));
        assert!(close(s.eta, 4.0, 1e-14));
        assert!(close(s.stationary_cm, 0.5 * 2.125f64.sqrt(), 1e-14));
        assert!((s.stationary_cm - 0.728869).abs() < 1e-6);
    }

    #[test]
    fn zero_shift_rate_rejected() {
        let fb = FeedbackConfig::new(0.0, 1.0).unwrap();
        assert_eq!(derive_scales(&TrapConfig::unit(1), &fb), Err(Error::ZeroShiftRate));
    }

    #[test]
    fn conflicting_discrete_triple_rejected() {
        let mut fb = FeedbackConfig::from_discrete(100.0, 1.0, 0.01).unwrap();
        fb.shift_rate = 2.0;
        assert!(matches!(fb.validate(), Err(Error::DimensionalMismatch(_))));
        assert!(matches!(
            derive_scales(&TrapConfig::unit(1), &fb),
            Err(Error::DimensionalMismatch(_))
        ));
    }

    #[test]
    fn continuous_limit_examples() {
        let (sigma, zeta) = continuous_limit_params(100.0, 1.0, 0.01).unwrap();
        assert!(close(sigma, 0.1, 1e-15));
        assert!(close(zeta, 1.0, 1e-15));
        assert_eq!(continuous_limit_params(1.0, 0.3, 0.7).unwrap(), (0.3, 0.7));
        assert_eq!(continuous_limit_params(0.0, 1.0, 1.0), Err(Error::NonPositiveRate(0.0)));
        assert_eq!(continuous_limit_params(-2.0, 1.0, 1.0), Err(Error::NonPositiveRate(-2.0)));
        let fb = FeedbackConfig::from_discrete(37.0, 0.4, 0.02).unwrap();
        assert!(fb.validate().is_ok());
    }

    #[test]
    fn regime_examples() {
        let c = classify_regime(2, 1.0);
        assert_eq!(c.regime, Regime::QsThresholdAbove);
        assert!((c.lower - (2.0 - 3f64.sqrt())).abs() < 1e-15);
        assert!((c.upper - (2.0 + 3f64.sqrt())).abs() < 1e-15);
        assert_eq!(classify_regime(2, 4.0).regime, Regime::SchwarzThresholdAbove);
        assert_eq!(classify_regime(1, 1.0).regime, Regime::Boundary);
        assert_eq!(classify_regime(1, 0.999).regime, Regime::SchwarzThresholdAbove);
        assert_eq!(classify_regime(1, 1.5).regime, Regime::SchwarzThresholdAbove);
        assert_eq!(classify_regime(2, 2.0 + 3f64.sqrt()).regime, Regime::Boundary);
    }

    #[test]
    fn boundary_matches_atom_sql() {
        for n in [1usize, 2, 3, 7, 50, 1000] {
            let trap = TrapConfig::unit(n);
            let (_, upper) = regime_interval(n);
            let fb = FeedbackConfig::for_eta(&trap, 0.3, upper).unwrap();
            let s = derive_scales(&trap, &fb).unwrap();
            assert!(close(s.stationary_cm, s.sql_atom, 1e-10), "N={n}");
        }
    }

    #[test]
    fn minimum_at_eta_one() {
        let h = 1e-4;
        let f = stationary_ratio;
        assert_eq!(f(1.0), 1.0);
        assert!(f(1.0 - h) > 1.0 && f(1.0 + h) > 1.0);
        // slope changes sign across eta = 1
        assert!(f(1.0 - h) - f(1.0 - 2.0 * h) < 0.0);
        assert!(f(1.0 + 2.0 * h) - f(1.0 + h) > 0.0);
    }

    #[test]
    fn serializes_flat_json() {
        let s = derive_scales(&TrapConfig::unit(2), &FeedbackConfig::new(1.0, 0.5).unwrap()).unwrap();
        let v: serde_json::Value = serde_json::to_value(s).unwrap();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<_> = obj.keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["DXs", "dX0", "dx0", "eta"]);
        assert_eq!(obj["eta"].as_f64().unwrap(), 1.0);
        assert_eq!(obj["DXs"].as_f64().unwrap(), 0.5);
        assert_eq!(obj["dx0"].as_f64().unwrap(), 0.707106781186548);
    }

    proptest! {
        #[test]
        fn eta_inversion_symmetry(eta in 1e-6f64..1e6) {
            let a = stationary_ratio(eta);
            let b = stationary_ratio(1.0 / eta);
            prop_assert!((a - b).abs() <= 1e-12 * a);
            prop_assert!(a >= 1.0);
        }

        #[test]
        fn classification_matches_direct_comparison(n in 1usize..=1_000_000, log_eta in -6.0f64..6.0) {
            let eta = 10f64.powf(log_eta);
            let trap = TrapConfig::unit(n);
            let fb = FeedbackConfig::for_eta(&trap, 1.0, eta).unwrap();
            let s = derive_scales(&trap, &fb).unwrap();
            let class = classify_regime(n, s.eta);
            if class.regime != Regime::Boundary {
                prop_assert_eq!(class.stationary_below_atom_sql(), s.stationary_cm <= s.sql_atom);
            }
        }
    }
}
