use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::operators::OneBodyOperator;
use crate::error::{Error, Result};

/// Occupation numbers `(n_0, ..., n_{M-1})` of the orbitals.
pub type Occupation = Vec<u16>;

/// Sparse many-boson vector keyed by occupation, ordered lexicographically.
pub type Amplitudes = BTreeMap<Occupation, C64>;

pub(crate) const NORM_TOL: f64 = 1e-12;

/// Normalized pure state of `n` bosons in `m` orbitals.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    n: usize,
    m: usize,
    terms: Amplitudes,
}

/// All occupations of `n` bosons in `m` orbitals, lexicographically ordered.
pub fn enumerate_occupations(n: usize, m: usize) -> Vec<Occupation> {
    fn rec(n_left: usize, k: usize, m: usize, cur: &mut Occupation, out: &mut Vec<Occupation>) {
        if k == m - 1 {
            cur[k] = n_left as u16;
            out.push(cur.clone());
            cur[k] = 0;
            return;
        }
        for v in 0..=n_left {
            cur[k] = v as u16;
            rec(n_left - v, k + 1, m, cur, out);
        }
        cur[k] = 0;
    }
    let mut out = Vec::new();
    let mut cur = vec![0u16; m];
    rec(n, 0, m, &mut cur, &mut out);
    out
}

/// Binomial coefficient C(n + m - 1, n): dimension of the fixed-N sector.
pub fn sector_dimension(n: usize, m: usize) -> usize {
    let mut acc: u128 = 1;
    for k in 1..=n as u128 {
        acc = acc * (m as u128 - 1 + k) / k;
    }
    acc as usize
}

pub(crate) fn norm_sq(v: &Amplitudes) -> f64 {
    v.values().map(|a| a.norm_sqr()).sum()
}

/// `<a|b>`.
pub fn inner(a: &Amplitudes, b: &Amplitudes) -> C64 {
    let (small, large, conj_small) = if a.len() <= b.len() { (a, b, true) } else { (b, a, false) };
    let mut acc = C64::new(0.0, 0.0);
    for (k, va) in small {
        if let Some(vb) = large.get(k) {
            acc += if conj_small { va.conj() * vb } else { vb.conj() * va };
        }
    }
    acc
}

/// Apply `sum_ij A[i][j] a_i^dag a_j` to a sparse vector.
pub fn apply_one_body(op: &OneBodyOperator, v: &Amplitudes) -> Amplitudes {
    let mut out: HashMap<Occupation, C64> = HashMap::with_capacity(v.len() * 4);
    for (occ, &amp) in v {
        let mut next = occ.clone();
        for (j, &nj) in occ.iter().enumerate() {
            if nj == 0 {
                continue;
            }
            for &(i, a) in op.column(j) {
                if i == j {
                    *out.entry(occ.clone()).or_default() += a * amp * nj as f64;
                } else {
                    let ni = occ[i];
                    let factor = ((nj as f64) * (ni as f64 + 1.0)).sqrt();
                    next[j] -= 1;
                    next[i] += 1;
                    *out.entry(next.clone()).or_default() += a * amp * factor;
                    next[j] += 1;
                    next[i] -= 1;
                }
            }
        }
    }
    out.into_iter().filter(|(_, a)| a.norm_sqr() > 0.0).collect()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl FockState {
    /// Validating constructor: every key sums to `n`, has length `m`, and the
    /// squared norm is 1 to 1e-12.
    pub fn new(n: usize, m: usize, terms: Amplitudes) -> Result<Self> {
        check_keys(n, m, &terms)?;
        let ns = norm_sq(&terms);
        if (ns - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(ns));
        }
        Ok(FockState { n, m, terms })
    }

    /// Like [`FockState::new`] but rescales to unit norm.
    pub fn normalized(n: usize, m: usize, terms: Amplitudes) -> Result<Self> {
        check_keys(n, m, &terms)?;
        let ns = norm_sq(&terms);
        if !(ns > 0.0) {
            return Err(Error::NotNormalized(ns));
        }
        let s = 1.0 / ns.sqrt();
        let terms = terms.into_iter().map(|(k, v)| (k, v * s)).collect();
        Ok(FockState { n, m, terms })
    }

    /// Single occupation-number state.
    pub fn occupation(occ: &[u16]) -> Result<Self> {
        let n = occ.iter().map(|&v| v as usize).sum();
        let mut terms = Amplitudes::new();
        terms.insert(occ.to_vec(), C64::new(1.0, 0.0));
        FockState::new(n, occ.len(), terms)
    }

    /// `(|n,0,...> + phase |0,n,...>)/sqrt(2)` in `m` orbitals.
    pub fn noon(n: usize, m: usize, phase: C64) -> Result<Self> {
        let mut a = vec![0u16; m];
        let mut b = vec![0u16; m];
        a[0] = n as u16;
        b[1] = n as u16;
        let mut terms = Amplitudes::new();
        terms.insert(a, C64::new(1.0, 0.0));
        terms.insert(b, phase);
        FockState::normalized(n, m, terms)
    }

    /// Uniformly random (Haar-like) state on the whole fixed-N sector of the
    /// first `occupied_modes` orbitals, embedded in `m >= occupied_modes` orbitals.
    pub fn random<R: Rng + ?Sized>(n: usize, occupied_modes: usize, m: usize, rng: &mut R) -> Result<Self> {
        let mut terms = Amplitudes::new();
        for occ in enumerate_occupations(n, occupied_modes) {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let mut key = occ;
            key.resize(m, 0);
            terms.insert(key, C64::new(re, im));
        }
        FockState::normalized(n, m, terms)
    }

    pub fn atom_count(&self) -> usize {
        self.n
    }

    pub fn mode_count(&self) -> usize {
        self.m
    }

    pub fn terms(&self) -> &Amplitudes {
        &self.terms
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.terms)
    }

    /// Same occupations padded with empty orbitals up to `m`.
    pub fn embed(&self, m: usize) -> Result<Self> {
        if m < self.m {
            return Err(Error::InvalidParameter(format!("cannot embed {} orbitals into {m}", self.m)));
        }
        let terms = self
            .terms
            .iter()
            .map(|(k, v)| {
                let mut k = k.clone();
                k.resize(m, 0);
                (k, *v)
            })
            .collect();
        Ok(FockState { n: self.n, m, terms })
    }

    /// Probability weight on occupations touching any orbital `>= first`.
    pub fn weight_from_orbital(&self, first: usize) -> f64 {
        self.terms
            .iter()
            .filter(|(k, _)| k.iter().skip(first).any(|&v| v > 0))
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }
}

fn check_keys(n: usize, m: usize, terms: &Amplitudes) -> Result<()> {
    for k in terms.keys() {
        if k.len() != m || k.iter().map(|&v| v as usize).sum::<usize>() != n {
            return Err(Error::InvalidParameter(format!(
                "occupation {k:?} incompatible with N = {n}, M = {m}"
            )));
        }
    }
    Ok(())
}

/// `(sum_n c_n a_n^dag)^N |vac> / sqrt(N!)`.
pub fn condensate_state(orbital: &[C64], n: usize) -> Result<FockState> {
    let m = orbital.len();
    if m < 1 {
        return Err(Error::InvalidParameter("empty orbital".into()));
    }
    let ns: f64 = orbital.iter().map(|c| c.norm_sqr()).sum();
    if (ns - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized(ns));
    }
    let support: Vec<usize> = (0..m).filter(|&k| orbital[k].norm_sqr() > 0.0).collect();
    let mut terms = Amplitudes::new();
    let nfact = factorial(n);

    fn rec(
        idx: usize,
        n_left: usize,
        support: &[usize],
        orbital: &[C64],
        cur: &mut Occupation,
        weight: C64,
        denom: f64,
        nfact: f64,
        out: &mut Amplitudes,
    ) {
        let k = support[idx];
        if idx == support.len() - 1 {
            cur[k] = n_left as u16;
            let w = weight * orbital[k].powu(n_left as u32);
            let d = denom * factorial(n_left);
            out.insert(cur.clone(), w * (nfact / d).sqrt());
            cur[k] = 0;
            return;
        }
        let mut pow = C64::new(1.0, 0.0);
        let mut fact = 1.0;
        for v in 0..=n_left {
            if v > 0 {
                pow *= orbital[k];
                fact *= v as f64;
            }
            cur[k] = v as u16;
            rec(idx + 1, n_left - v, support, orbital, cur, weight * pow, denom * fact, nfact, out);
        }
        cur[k] = 0;
    }

    let mut cur = vec![0u16; m];
    rec(0, n, &support, orbital, &mut cur, C64::new(1.0, 0.0), 1.0, nfact, &mut terms);
    terms.retain(|_, a| a.norm_sqr() > 0.0);
    Ok(FockState { n, m, terms })
}

/// Weighted mixture of fixed-N pure states sharing `(N, M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEnsemble {
    members: Vec<(f64, FockState)>,
}

impl StateEnsemble {
    pub fn new(members: Vec<(f64, FockState)>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty ensemble".into()))?;
        let (n, m) = (first.1.n, first.1.m);
        let mut total = 0.0;
        for (w, s) in &members {
            if !(*w >= 0.0) {
                return Err(Error::InvalidParameter(format!("negative ensemble weight {w}")));
            }
            if s.n != n || s.m != m {
                return Err(Error::InvalidParameter("ensemble members must share (N, M)".into()));
            }
            total += w;
        }
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(total));
        }
        Ok(StateEnsemble { members })
    }

    /// Normalizes the weights before validating.
    pub fn from_unnormalized(members: Vec<(f64, FockState)>) -> Result<Self> {
        let total: f64 = members.iter().map(|(w, _)| *w).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("ensemble weights sum to zero".into()));
        }
        StateEnsemble::new(members.into_iter().map(|(w, s)| (w / total, s)).collect())
    }

    pub fn pure(state: FockState) -> Self {
        StateEnsemble { members: vec![(1.0, state)] }
    }

    pub fn members(&self) -> &[(f64, FockState)] {
        &self.members
    }

    pub fn atom_count(&self) -> usize {
        self.members[0].1.n
    }

    pub fn mode_count(&self) -> usize {
        self.members[0].1.m
    }
}
