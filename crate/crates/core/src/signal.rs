//! Small time-series helpers: envelope decay rates, spectral peaks and
//! second-harmonic fits on sampled trajectories.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Interior local maxima of |v|, refined by a parabola through the three
/// neighbouring samples. Returns (time, |v|) pairs.
pub fn abs_peaks(times: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    let a: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let mut out = Vec::new();
    for i in 1..a.len().saturating_sub(1) {
        if a[i] > a[i - 1] && a[i] >= a[i + 1] {
            let (y0, y1, y2) = (a[i - 1], a[i], a[i + 1]);
            let denom = y0 - 2.0 * y1 + y2;
            let h = times[i + 1] - times[i];
            if denom < 0.0 {
                let s = 0.5 * (y0 - y2) / denom;
                out.push((times[i] + s * h, y1 - 0.25 * (y0 - y2) * s));
            } else {
                out.push((times[i], y1));
            }
        }
    }
    out
}

/// Least-squares slope of ln(value) against time, negated: the decay rate of
/// an exponential envelope through `points`.
pub fn log_linear_rate(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter("need at least two envelope points".into()));
    }
    if points.iter().any(|p| !(p.1 > 0.0)) {
        return Err(Error::InvalidParameter("envelope values must be positive".into()));
    }
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, v) in points {
        sxy += (t - mt) * (v.ln() - ml);
        sxx += (t - mt) * (t - mt);
    }
    Ok(-sxy / sxx)
}

/// Exponential decay rate of the oscillation envelope of `values`.
pub fn envelope_decay_rate(times: &[f64], values: &[f64]) -> Result<f64> {
    let peaks = abs_peaks(times, values);
    if peaks.len() < 3 {
        return Err(Error::InvalidParameter(format!("only {} envelope peaks found", peaks.len())));
    }
    log_linear_rate(&peaks)
}

/// Angular frequency and amplitude of the largest DFT bin of a uniformly
/// sampled, mean-removed signal. Bins are spaced 2 pi / T.
pub fn dominant_frequency(times: &[f64], values: &[f64]) -> Result<(f64, f64, f64)> {
    let n = values.len();
    if n < 4 || times.len() != n {
        return Err(Error::InvalidParameter("spectrum needs at least four samples".into()));
    }
    let dt = times[1] - times[0];
    let span = dt * n as f64;
    let mean = values.iter().sum::<f64>() / n as f64;
    let bin = 2.0 * std::f64::consts::PI / span;
    let mut best = (0.0, 0.0);
    for k in 1..n / 2 {
        let w = bin * k as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (t, v) in times.iter().zip(values) {
            let (s, c) = (w * (t - times[0])).sin_cos();
            re += (v - mean) * c;
            im -= (v - mean) * s;
        }
        let amp = 2.0 * re.hypot(im) / n as f64;
        if amp > best.1 {
            best = (w, amp);
        }
    }
    Ok((best.0, best.1, bin))
}

/// Least-squares fit of `a + b cos(2 omega t) + c sin(2 omega t)`.
pub fn fit_second_harmonic(times: &[f64], values: &[f64], omega: f64) -> Result<(f64, f64, f64)> {
    if times.len() < 3 || times.len() != values.len() {
        return Err(Error::InvalidParameter("harmonic fit needs at least three samples".into()));
    }
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for (t, v) in times.iter().zip(values) {
        let (s, c) = (2.0 * omega * t).sin_cos();
        let row = Vector3::new(1.0, c, s);
        ata += row * row.transpose();
        atb += row * *v;
    }
    let x = ata
        .lu()
        .solve(&atb)
        .ok_or_else(|| Error::InvalidParameter("degenerate sampling for harmonic fit".into()))?;
    Ok((x[0], x[1], x[2]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t_end: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn damped_cosine_rate() {
        let t = grid(80.0, 8001);
        let v: Vec<f64> = t.iter().map(|&s| (-0.05 * s).exp() * (0.998 * s + 0.3).cos()).collect();
        let r = envelope_decay_rate(&t, &v).unwrap();
        assert!((r - 0.05).abs() < 1e-5, "{r}");
    }

    #[test]
    fn spectrum_and_harmonics() {
        let t: Vec<f64> = (0..1000).map(|i| i as f64 * 0.01 * std::f64::consts::PI).collect();
        let v: Vec<f64> = t.iter().map(|&s| 0.3 + 0.1 * (2.0 * s).cos() - 0.05 * (2.0 * s).sin()).collect();
        let (w, amp, bin) = dominant_frequency(&t, &v).unwrap();
        assert!((w - 2.0).abs() <= bin);
        assert!((amp - 0.1f64.hypot(0.05)).abs() < 1e-3);
        let (a, b, c) = fit_second_harmonic(&t, &v, 1.0).unwrap();
        assert!((a - 0.3).abs() < 1e-12 && (b - 0.1).abs() < 1e-12 && (c + 0.05).abs() < 1e-12);
    }

    #[test]
    fn too_few_peaks_is_an_error() {
        let t = grid(1.0, 11);
        assert!(envelope_decay_rate(&t, &t).is_err());
    }
}
