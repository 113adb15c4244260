//! Waveform post-processing: average, rms, Fourier spectrum over one
//! period, and total harmonic distortion.
//!
//! All integrals are trapezoidal directly on the native (possibly
//! non-uniform) time grid, with no resampling step that would smear the
//! spectra of switched waveforms. Window endpoints falling between
//! samples are handled by linear interpolation.

use crate::error::{Error, Result};

/// Fourier spectrum over one period.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Fundamental frequency 1/T.
    pub f1: f64,
    /// DC term (window average).
    pub a0: f64,
    /// (order k, magnitude, phase) for k = 1..K.
    pub harmonics: Vec<(usize, f64, f64)>,
}

impl Spectrum {
    pub fn magnitude(&self, k: usize) -> f64 {
        self.harmonics[k - 1].1
    }

    /// Render the plain-text spectrum table.
    pub fn render(&self) -> String {
        use std::fmt::Write as _;
        let thd = thd(self).unwrap_or(f64::NAN);
        let mut out = format!("# f1={:.9e} a0={:.9e} thd={:.9e}\n", self.f1, self.a0, thd);
        for &(k, mag, phase) in &self.harmonics {
            let _ = writeln!(out, "{k} {:.9e} {:.9e} {:.9e}", k as f64 * self.f1, mag, phase);
        }
        out
    }
}

fn perr(message: impl Into<String>) -> Error {
    Error::Postproc { message: message.into() }
}

/// Locate the window and interpolate its end values.
///
/// Returns the index range of interior samples plus the interpolated
/// boundary samples at exactly t1 and t2.
fn window(time: &[f64], values: &[f64], t1: f64, t2: f64) -> Result<(usize, usize, f64, f64)> {
    if time.len() < 2 {
        return Err(perr("waveform has fewer than two samples"));
    }
    if !(t2 > t1) {
        return Err(perr(format!("empty window: t1={t1}, t2={t2}")));
    }
    let (lo, hi) = (time[0], time[time.len() - 1]);
    let tol = 1e-9 * (hi - lo).abs().max(f64::MIN_POSITIVE);
    if t1 < lo - tol || t2 > hi + tol {
        return Err(perr(format!(
            "window [{t1}, {t2}] outside the data span [{lo}, {hi}]"
        )));
    }
    let t1 = t1.max(lo);
    let t2 = t2.min(hi);
    let interp = |t: f64| -> f64 {
        let j = match time.binary_search_by(|probe| probe.partial_cmp(&t).unwrap()) {
            Ok(j) => return values[j],
            Err(j) => j,
        };
        let (ta, tb) = (time[j - 1], time[j]);
        let w = (t - ta) / (tb - ta);
        values[j - 1] * (1.0 - w) + values[j] * w
    };
    let v1 = interp(t1);
    let v2 = interp(t2);
    // first sample strictly after t1, last strictly before t2
    let start = time.partition_point(|&t| t <= t1);
    let end = time.partition_point(|&t| t < t2);
    Ok((start, end, v1, v2))
}

/// Trapezoidal integral of `f(t, v)` over `[t1, t2]` on the native grid.
fn integrate(
    time: &[f64],
    values: &[f64],
    t1: f64,
    t2: f64,
    f: &mut dyn FnMut(f64, f64) -> f64,
) -> Result<f64> {
    let (start, end, v1, v2) = window(time, values, t1, t2)?;
    let mut acc = 0.0;
    let mut prev_t = t1;
    let mut prev_f = f(t1, v1);
    for j in start..end {
        let ft = f(time[j], values[j]);
        acc += 0.5 * (prev_f + ft) * (time[j] - prev_t);
        prev_t = time[j];
        prev_f = ft;
    }
    acc += 0.5 * (prev_f + f(t2, v2)) * (t2 - prev_t);
    Ok(acc)
}

/// Mean value over `[t1, t2]`.
pub fn average(time: &[f64], values: &[f64], t1: f64, t2: f64) -> Result<f64> {
    let integral = integrate(time, values, t1, t2, &mut |_, v| v)?;
    Ok(integral / (t2 - t1))
}

/// Root-mean-square value over `[t1, t2]`.
pub fn rms(time: &[f64], values: &[f64], t1: f64, t2: f64) -> Result<f64> {
    let integral = integrate(time, values, t1, t2, &mut |_, v| v * v)?;
    Ok((integral / (t2 - t1)).sqrt())
}

/// Fourier spectrum of one period `[t1, t1+T]` with harmonics 1..=k_max:
/// `c_k = (2/T) * integral v(t) exp(-j 2 pi k t / T) dt`.
pub fn fourier(time: &[f64], values: &[f64], t1: f64, period: f64, k_max: usize) -> Result<Spectrum> {
    if k_max < 1 {
        return Err(perr("fourier requires K >= 1"));
    }
    if !(period > 0.0) {
        return Err(perr("fourier requires a positive period"));
    }
    let t2 = t1 + period;
    let a0 = average(time, values, t1, t2)?;
    let omega = 2.0 * std::f64::consts::PI / period;
    let mut harmonics = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let kw = k as f64 * omega;
        let re = integrate(time, values, t1, t2, &mut |t, v| v * (kw * t).cos())?;
        let im = integrate(time, values, t1, t2, &mut |t, v| -v * (kw * t).sin())?;
        let (re, im) = (2.0 * re / period, 2.0 * im / period);
        harmonics.push((k, (re * re + im * im).sqrt(), im.atan2(re)));
    }
    Ok(Spectrum { f1: 1.0 / period, a0, harmonics })
}

/// Total harmonic distortion: sqrt(sum_{k>=2} |c_k|^2) / |c_1|.
pub fn thd(spectrum: &Spectrum) -> Result<f64> {
    if spectrum.harmonics.len() < 2 {
        return Err(perr("thd requires at least two harmonics"));
    }
    let c1 = spectrum.harmonics[0].1;
    if !(c1 > 0.0) {
        return Err(perr("thd is undefined for a zero fundamental"));
    }
    let sum: f64 = spectrum.harmonics[1..].iter().map(|&(_, m, _)| m * m).sum();
    Ok(sum.sqrt() / c1)
}
