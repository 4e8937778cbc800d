//! Singular spectra, rank ceilings, two-column Vandermonde closed forms and
//! the LS relative-error bound.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{ensure_finite, ensure_positive, invalid, Error, Result};
use crate::forward::SensingOperator;
use crate::C64;

/// Sorted singular values plus rank and conditioning derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Non-increasing.
    pub singular_values: Vec<f64>,
    /// Count of values above `tolerance · σ_max`.
    pub numeric_rank: usize,
    /// `σ_max` over the smallest value retained by the numeric rank.
    pub condition_number: f64,
    /// `σ_max / σ_min` over the whole spectrum (infinite if `σ_min = 0`).
    pub condition_number_full: f64,
    pub tolerance: f64,
}

impl SpectrumReport {
    pub fn from_values(mut values: Vec<f64>, tolerance: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("spectrum", "matrix is empty"));
        }
        if !(tolerance.is_finite() && tolerance >= 0.0) {
            return Err(invalid("rank tolerance", format!("must be finite and non-negative, got {tolerance}")));
        }
        if values.iter().any(|s| !s.is_finite()) {
            return Err(invalid("spectrum", "singular values are not finite"));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        let max = values[0];
        let cutoff = tolerance * max;
        let numeric_rank = values.iter().filter(|&&s| s > cutoff).count();
        let condition_number = if numeric_rank == 0 { f64::INFINITY } else { max / values[numeric_rank - 1] };
        let min = *values.last().expect("non-empty");
        let condition_number_full = if min > 0.0 { max / min } else { f64::INFINITY };
        Ok(Self { singular_values: values, numeric_rank, condition_number, condition_number_full, tolerance })
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values[0]
    }

    pub fn sigma_min(&self) -> f64 {
        *self.singular_values.last().expect("non-empty")
    }
}

/// Singular values of a complex matrix, in no particular order.
pub fn singular_values(matrix: &DMatrix<C64>) -> Vec<f64> {
    matrix.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Full singular spectrum of the operator's matrix.
pub fn spectrum(op: &SensingOperator, tolerance: f64) -> Result<SpectrumReport> {
    spectrum_of(&op.matrix, tolerance)
}

pub fn spectrum_of(matrix: &DMatrix<C64>, tolerance: f64) -> Result<SpectrumReport> {
    if matrix.is_empty() {
        return Err(invalid("spectrum", "matrix is empty"));
    }
    SpectrumReport::from_values(singular_values(matrix), tolerance)
}

/// Receiver arrangement for [`rank_upper_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode<'a> {
    /// Each panel has its own receiver and `measurements[k]` rows.
    Dedicated { measurements: &'a [usize] },
    /// All panels share one receiver with `measurements` rows.
    Shared { measurements: usize },
}

/// Dedicated: `min{M, Σ min(T_k, N_k)}`. Shared: `min{M, T, Σ N_k}`.
pub fn rank_upper_bound(mode: RankMode<'_>, cells: usize, elements: &[usize]) -> Result<usize> {
    if elements.is_empty() {
        return Err(invalid("element counts", "need at least one panel"));
    }
    if cells == 0 || elements.contains(&0) {
        return Err(invalid("rank bound", "counts must be positive"));
    }
    match mode {
        RankMode::Dedicated { measurements } => {
            if measurements.len() != elements.len() {
                return Err(Error::DimensionMismatch {
                    context: "measurement counts vs element counts",
                    expected: elements.len(),
                    found: measurements.len(),
                });
            }
            if measurements.contains(&0) {
                return Err(invalid("rank bound", "counts must be positive"));
            }
            let per_panel: usize = measurements.iter().zip(elements).map(|(&t, &n)| t.min(n)).sum();
            Ok(cells.min(per_panel))
        }
        RankMode::Shared { measurements } => {
            if measurements == 0 {
                return Err(invalid("rank bound", "counts must be positive"));
            }
            Ok(cells.min(measurements).min(elements.iter().sum()))
        }
    }
}

/// Phase step between the two steering columns, `π d (sinθ − sin(θ+Δ)) / λ`.
fn pair_phase_step(d_over_lambda: f64, theta: f64, delta: f64) -> f64 {
    // sin a − sin b written as a product to keep small separations accurate.
    -2.0 * PI * d_over_lambda * (theta + delta / 2.0).cos() * (delta / 2.0).sin()
}

/// `sin(Nψ)/sin(ψ)` with the removable singularity at `ψ = kπ` handled by
/// the quadratic expansion around the nearest multiple of `π`.
fn dirichlet_ratio(n: usize, psi: f64) -> f64 {
    let s = psi.sin();
    if s.abs() < 1e-9 {
        let k = (psi / PI).round();
        let eps = psi - k * PI;
        let sign = if (k as i64 * (n as i64 - 1)).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        sign * sin_ratio_quadratic(n, eps)
    } else {
        (n as f64 * psi).sin() / s
    }
}

/// `N − |sin(Nψ)/sin(ψ)|` evaluated without cancellation, using
/// `sin(Nψ)/sin(ψ) = Σ_n cos((N−1−2n)ψ)`.
fn dirichlet_gap(n: usize, psi: f64, ratio: f64) -> f64 {
    let half = |i: usize| (n as f64 - 1.0 - 2.0 * i as f64) * psi / 2.0;
    if ratio >= 0.0 {
        (0..n).map(|i| 2.0 * half(i).sin().powi(2)).sum()
    } else {
        (0..n).map(|i| 2.0 * half(i).cos().powi(2)).sum()
    }
}

/// Closed-form `(σ_max, σ_min)` of the `N×2` Vandermonde matrix whose columns
/// are steering vectors at `θ` and `θ + Δ`.
pub fn vandermonde_pair_singular_values(
    elements: usize,
    spacing: f64,
    wavelength: f64,
    theta: f64,
    delta: f64,
) -> Result<(f64, f64)> {
    if elements < 2 {
        return Err(invalid("element count", "need at least two elements"));
    }
    ensure_positive("spacing", spacing)?;
    ensure_positive("wavelength", wavelength)?;
    ensure_finite("theta", theta)?;
    ensure_finite("delta", delta)?;
    let psi = pair_phase_step(spacing / wavelength, theta, delta);
    let ratio = dirichlet_ratio(elements, psi);
    let n = elements as f64;
    let gap = dirichlet_gap(elements, psi, ratio);
    Ok(((n + ratio.abs()).sqrt(), gap.max(0.0).sqrt()))
}

/// Second-order expansion of `sin(Nx)/sin(x)` about `x = 0`.
pub fn sin_ratio_quadratic(elements: usize, x: f64) -> f64 {
    let n = elements as f64;
    n - n * (n * n - 1.0) * x * x / 6.0
}

/// Small-separation approximation
/// `σ_min ≈ (π/√6)(d/λ)·√(N(N²−1))·|Δ|·cosθ`.
pub fn sigma_min_vandermonde_approx(
    elements: usize,
    spacing: f64,
    wavelength: f64,
    theta: f64,
    delta: f64,
) -> Result<f64> {
    if elements < 2 {
        return Err(invalid("element count", "need at least two elements"));
    }
    ensure_positive("spacing", spacing)?;
    ensure_positive("wavelength", wavelength)?;
    ensure_finite("theta", theta)?;
    ensure_finite("delta", delta)?;
    let n = elements as f64;
    Ok(PI / 6f64.sqrt() * (spacing / wavelength) * (n * (n * n - 1.0)).sqrt() * delta.abs() * theta.cos())
}

/// Marchenko–Pastur edge estimate `√T − √N` of the smallest singular value of
/// a `T×N` random sign matrix.
pub fn mp_sigma_min_estimate(measurements: usize, elements: usize) -> Result<f64> {
    if elements == 0 {
        return Err(invalid("element count", "must be at least 1"));
    }
    if measurements <= elements {
        return Err(invalid(
            "measurement count",
            format!("must exceed the element count ({measurements} <= {elements})"),
        ));
    }
    Ok((measurements as f64).sqrt() - (elements as f64).sqrt())
}

/// Inputs to [`relative_error_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub elements: usize,
    pub measurements: usize,
    pub spacing: f64,
    pub wavelength: f64,
    pub receiver_distance: f64,
    pub source_distance: f64,
    pub tau_mag: f64,
    pub theta_i: f64,
    /// Angular separation, radians.
    pub delta: f64,
    /// Cross-range separation, meters.
    pub delta_cr: f64,
    /// Linear `‖E‖²/σ²`.
    pub snr: f64,
}

/// Which separation the bound is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundVariant {
    Angular,
    CrossRange,
}

/// Approximate upper bound on the LS relative error of a two-source scene.
///
/// Angular form:
/// `(√6/π) · r_s/|τ| · (λ/d) · (1 − √(N/T))⁻¹ · N^{−3/2} · |Δ|⁻¹ · (cosθ)⁻¹ · SNR^{−1/2}`.
/// The cross-range form substitutes `|Δ| = |Δ_CR| / r_i`.
pub fn relative_error_bound(variant: BoundVariant, p: &BoundInputs) -> Result<f64> {
    if p.elements == 0 {
        return Err(invalid("elements", "must be at least 1"));
    }
    if p.measurements <= p.elements {
        return Err(invalid(
            "measurements",
            format!("random-sign factor 1 − √(N/T) needs T > N ({} <= {})", p.measurements, p.elements),
        ));
    }
    ensure_positive("spacing", p.spacing)?;
    ensure_positive("wavelength", p.wavelength)?;
    ensure_positive("receiver_distance", p.receiver_distance)?;
    ensure_positive("tau_mag", p.tau_mag)?;
    ensure_finite("theta_i", p.theta_i)?;
    let cos = p.theta_i.cos();
    if cos <= f64::EPSILON {
        return Err(invalid("theta_i", format!("cos θ_i must be positive, got {cos}")));
    }
    if p.snr.is_nan() || p.snr <= 0.0 {
        return Err(invalid("snr", format!("must be positive, got {}", p.snr)));
    }
    let separation_factor = match variant {
        BoundVariant::Angular => {
            ensure_finite("delta", p.delta)?;
            if p.delta == 0.0 {
                return Err(invalid("delta", "angular separation must be non-zero"));
            }
            1.0 / p.delta.abs()
        }
        BoundVariant::CrossRange => {
            ensure_finite("delta_cr", p.delta_cr)?;
            if p.delta_cr == 0.0 {
                return Err(invalid("delta_cr", "cross-range separation must be non-zero"));
            }
            ensure_positive("source_distance", p.source_distance)?;
            p.source_distance / p.delta_cr.abs()
        }
    };
    let n = p.elements as f64;
    let mp = 1.0 - (n / p.measurements as f64).sqrt();
    Ok(6f64.sqrt() / PI * (p.receiver_distance / p.tau_mag) * (p.wavelength / p.spacing) / mp
        * n.powf(-1.5)
        * separation_factor
        / cos
        / p.snr.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{incident_phase_matrix, DirectionAngles, ElementArray};
    use crate::WaveContext;

    #[test]
    fn spectrum_of_scaled_orthonormal_columns() {
        let mut m = DMatrix::<C64>::zeros(5, 3);
        for i in 0..3 {
            m[(i, i)] = C64::new(0.0, 2.0);
        }
        let r = spectrum_of(&m, 1e-12).unwrap();
        assert_eq!(r.numeric_rank, 3);
        assert!((r.condition_number - 1.0).abs() < 1e-14);
        assert!(r.singular_values.iter().all(|s| (s - 2.0).abs() < 1e-14));
    }

    #[test]
    fn duplicated_column_drops_rank() {
        let m = DMatrix::from_fn(6, 3, |i, j| {
            C64::new((i * i + 1) as f64, (i as f64).sin() + if j == 2 { 0.0 } else { j as f64 })
        });
        let mut dup = m.clone();
        dup.set_column(2, &m.column(0));
        let r = spectrum_of(&dup, 1e-12).unwrap();
        assert_eq!(r.numeric_rank, 2);
        assert!(r.sigma_min() < 1e-12 * r.sigma_max());
        assert!(r.condition_number.is_finite());
        assert!(spectrum_of(&DMatrix::<C64>::zeros(0, 0), 1e-12).is_err());
    }

    #[test]
    fn rank_bound_cases() {
        let t = [50; 4];
        let n = [110; 4];
        assert_eq!(rank_upper_bound(RankMode::Dedicated { measurements: &t }, 400, &n).unwrap(), 200);
        assert_eq!(rank_upper_bound(RankMode::Dedicated { measurements: &n }, 400, &n).unwrap(), 400);
        assert_eq!(rank_upper_bound(RankMode::Shared { measurements: 440 }, 400, &n).unwrap(), 400);
        assert_eq!(rank_upper_bound(RankMode::Shared { measurements: 90 }, 400, &n).unwrap(), 90);
        assert!(rank_upper_bound(RankMode::Shared { measurements: 90 }, 400, &[]).is_err());
        assert!(rank_upper_bound(RankMode::Dedicated { measurements: &[1] }, 400, &n).is_err());
    }

    #[test]
    fn pair_closed_form_special_cases() {
        let (hi, lo) = vandermonde_pair_singular_values(7, 0.01, 0.05, 0.3, 0.0).unwrap();
        assert!((hi - 14f64.sqrt()).abs() < 1e-12);
        assert_eq!(lo, 0.0);
        // sinΔ = 1/2 from broadside at half-wavelength spacing: orthogonal columns.
        let (hi, lo) = vandermonde_pair_singular_values(4, 0.5, 1.0, 0.0, (0.5f64).asin()).unwrap();
        assert!((hi - 2.0).abs() < 1e-12);
        assert!((lo - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pair_closed_form_matches_incident_matrix() {
        let ctx = WaveContext::new(5.8e9).unwrap();
        let lam = ctx.wavelength();
        let array = ElementArray::uniform_linear("ula", 4, lam / 2.0, C64::new(1.0, 0.0)).unwrap();
        let angles = [DirectionAngles::broadside(0.0).unwrap(), DirectionAngles::broadside(PI / 6.0).unwrap()];
        let v = incident_phase_matrix(&array, &angles, &ctx).unwrap();
        let sv = spectrum_of(&v, 0.0).unwrap();
        let (hi, lo) = vandermonde_pair_singular_values(4, lam / 2.0, lam, 0.0, PI / 6.0).unwrap();
        assert!((sv.sigma_max() - hi).abs() < 1e-10);
        assert!((sv.sigma_min() - lo).abs() < 1e-10);
    }

    #[test]
    fn removable_singularity_uses_expansion() {
        // d = λ, θ = 0, sin(Δ) = −1 puts ψ exactly at π: columns coincide.
        let (hi, lo) = vandermonde_pair_singular_values(5, 1.0, 1.0, 0.0, -PI / 2.0).unwrap();
        assert!((hi - 10f64.sqrt()).abs() < 1e-7);
        assert!(lo < 1e-6);
    }

    #[test]
    fn quadratic_spot_values() {
        assert_eq!(sin_ratio_quadratic(5, 0.0), 5.0);
        assert!((sin_ratio_quadratic(3, 0.1) - 2.96).abs() < 1e-12);
        assert!((0.3f64.sin() / 0.1f64.sin() - 2.96).abs() < 2e-4);
        assert_eq!(sin_ratio_quadratic(1, 0.37), 1.0);
    }

    #[test]
    fn approximation_edge_cases() {
        assert_eq!(sigma_min_vandermonde_approx(10, 0.01, 0.05, 0.2, 0.0).unwrap(), 0.0);
        assert!(sigma_min_vandermonde_approx(10, 0.01, 0.05, PI / 2.0, 0.1).unwrap().abs() < 1e-16);
    }

    #[test]
    fn approximation_close_to_closed_form_at_defaults() {
        let lam = crate::SPEED_OF_LIGHT / 5.8e9;
        let delta = 0.02 / 6.0;
        let approx = sigma_min_vandermonde_approx(160, 0.026, lam, 0.0, delta).unwrap();
        let (_, exact) = vandermonde_pair_singular_values(160, 0.026, lam, 0.0, delta).unwrap();
        assert!((approx / exact - 1.0).abs() < 0.05, "{approx} vs {exact}");
    }

    #[test]
    fn mp_estimate() {
        assert!(mp_sigma_min_estimate(4, 4).is_err());
        assert_eq!(mp_sigma_min_estimate(4, 1).unwrap(), 1.0);
        assert!((mp_sigma_min_estimate(500, 160).unwrap() - (500f64.sqrt() - 160f64.sqrt())).abs() < 1e-15);
        assert!((mp_sigma_min_estimate(500, 160).unwrap() - 9.7116).abs() < 1e-4);
    }

    fn defaults() -> BoundInputs {
        let lam = crate::SPEED_OF_LIGHT / 5.8e9;
        BoundInputs {
            elements: 160,
            measurements: 500,
            spacing: 0.026,
            wavelength: lam,
            receiver_distance: 1.0,
            source_distance: 6.0,
            tau_mag: 0.16 * lam,
            theta_i: 0.0,
            delta: 0.02 / 6.0,
            delta_cr: 0.02,
            snr: 2000.0,
        }
    }

    #[test]
    fn bound_identities_and_guards() {
        let p = defaults();
        let cr = relative_error_bound(BoundVariant::CrossRange, &p).unwrap();
        let ang = relative_error_bound(BoundVariant::Angular, &p).unwrap();
        assert!((cr - ang).abs() < 1e-12 * cr);
        let inf = BoundInputs { snr: f64::INFINITY, ..p };
        assert_eq!(relative_error_bound(BoundVariant::CrossRange, &inf).unwrap(), 0.0);
        let err = relative_error_bound(BoundVariant::CrossRange, &BoundInputs { measurements: 160, ..p }).unwrap_err();
        assert!(err.to_string().contains("measurements"));
        let err = relative_error_bound(BoundVariant::Angular, &BoundInputs { delta: 0.0, ..p }).unwrap_err();
        assert!(err.to_string().contains("delta"));
        let err = relative_error_bound(BoundVariant::Angular, &BoundInputs { theta_i: PI / 2.0, ..p }).unwrap_err();
        assert!(err.to_string().contains("theta_i"));
    }
}
