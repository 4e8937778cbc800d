//! Reconstruction quality: relative error, global SSIM and angular peak
//! picking.

use nalgebra::DVector;

use crate::error::{ensure_positive, invalid, Error, Result};
use crate::C64;

fn check_lengths(context: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { context, expected: b, found: a });
    }
    Ok(())
}

/// `‖Ê − E‖ / ‖E‖`.
pub fn relative_error(estimate: &DVector<C64>, truth: &DVector<C64>) -> Result<f64> {
    check_lengths("estimate vs truth", estimate.len(), truth.len())?;
    let norm = truth.norm();
    if norm == 0.0 {
        return Err(invalid("truth", "reference vector is zero"));
    }
    Ok((estimate - truth).norm() / norm)
}

/// Relative error after aligning the estimate's global phase with the truth.
pub fn relative_error_mod_phase(estimate: &DVector<C64>, truth: &DVector<C64>) -> Result<f64> {
    check_lengths("estimate vs truth", estimate.len(), truth.len())?;
    let inner = estimate.dotc(truth);
    let mag = inner.norm();
    if mag == 0.0 {
        return relative_error(estimate, truth);
    }
    let aligned = estimate * (inner / mag);
    relative_error(&aligned, truth)
}

/// Stabilising constants of [`ssim`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub c1: f64,
    pub c2: f64,
}

impl SsimParams {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        ensure_positive("c1", c1)?;
        ensure_positive("c2", c2)?;
        Ok(Self { c1, c2 })
    }

    /// `c1 = (0.01·L)²`, `c2 = (0.03·L)²` with `L` the truth map's maximum.
    pub fn for_truth(truth: &[f64]) -> Result<Self> {
        let peak = truth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(peak.is_finite() && peak > 0.0) {
            return Err(invalid("truth", "map needs a positive finite maximum to set SSIM constants"));
        }
        Self::new((0.01 * peak).powi(2), (0.03 * peak).powi(2))
    }
}

/// Single-window SSIM over the whole map, clamped to `[0, 1]`.
pub fn ssim(estimate: &[f64], truth: &[f64], params: &SsimParams) -> Result<f64> {
    check_lengths("estimate vs truth", estimate.len(), truth.len())?;
    if truth.is_empty() {
        return Err(invalid("map", "empty"));
    }
    if estimate.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(invalid("map", "values must be finite"));
    }
    let n = truth.len() as f64;
    let mean_e = estimate.iter().sum::<f64>() / n;
    let mean_t = truth.iter().sum::<f64>() / n;
    let mut var_e = 0.0;
    let mut var_t = 0.0;
    let mut cov = 0.0;
    for (&e, &t) in estimate.iter().zip(truth) {
        var_e += (e - mean_e).powi(2);
        var_t += (t - mean_t).powi(2);
        cov += (e - mean_e) * (t - mean_t);
    }
    var_e /= n;
    var_t /= n;
    cov /= n;
    let num = (2.0 * mean_e * mean_t + params.c1) * (2.0 * cov + params.c2);
    let den = (mean_e * mean_e + mean_t * mean_t + params.c1) * (var_e + var_t + params.c2);
    Ok((num / den).clamp(0.0, 1.0))
}

/// SSIM between `|Ê|` and `|E|` with constants derived from `|E|`.
pub fn amplitude_ssim(estimate: &DVector<C64>, truth: &DVector<C64>) -> Result<f64> {
    let e: Vec<f64> = estimate.iter().map(|z| z.norm()).collect();
    let t: Vec<f64> = truth.iter().map(|z| z.norm()).collect();
    ssim(&e, &t, &SsimParams::for_truth(&t)?)
}

/// Peaks returned by [`doa_peaks`].
#[derive(Debug, Clone, PartialEq)]
pub struct PeakList {
    /// `(angle, value)` pairs, strongest first.
    pub peaks: Vec<(f64, f64)>,
    /// Fewer local maxima existed than were requested.
    pub short: bool,
}

/// Top-`k` local maxima of a spectrum sampled on a strictly increasing grid.
///
/// An interior cell is a maximum when both neighbours are strictly smaller;
/// an edge cell needs only its one neighbour to be smaller. Equal values are
/// ordered toward the smaller angle.
pub fn doa_peaks(angles: &[f64], spectrum: &[f64], k: usize) -> Result<PeakList> {
    check_lengths("spectrum vs angle grid", spectrum.len(), angles.len())?;
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    if angles.is_empty() {
        return Err(invalid("angle grid", "empty"));
    }
    if angles.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("angle grid", "must be strictly increasing"));
    }
    if spectrum.iter().any(|v| v.is_nan()) {
        return Err(invalid("spectrum", "contains NaN"));
    }
    let n = spectrum.len();
    let mut maxima: Vec<(f64, f64)> = (0..n)
        .filter(|&i| {
            let left = i == 0 || spectrum[i - 1] < spectrum[i];
            let right = i + 1 == n || spectrum[i + 1] < spectrum[i];
            left && right
        })
        .map(|i| (angles[i], spectrum[i]))
        .collect();
    maxima.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    let short = maxima.len() < k;
    maxima.truncate(k);
    Ok(PeakList { peaks: maxima, short })
}
