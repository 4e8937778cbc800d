//! Geometric and electromagnetic primitives: propagation constants, element
//! layouts, steering vectors, path-loss factors and binary phase schedules.
//!
//! Angles follow the array-local convention: `theta` is measured from the
//! panel normal (local `z`), `phi` from the local `x` axis. Linear arrays lie
//! on the local `x` axis, so an in-plane direction has `phi = 0` (positive
//! broadside angle) or `phi = pi` (negative broadside angle).

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_finite, ensure_positive, invalid, Result};
use crate::C64;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Carrier frequency and the matching wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveContext {
    frequency: f64,
    wavelength: f64,
}

impl WaveContext {
    pub fn new(frequency: f64) -> Result<Self> {
        ensure_positive("frequency", frequency)?;
        Ok(Self { frequency, wavelength: SPEED_OF_LIGHT / frequency })
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// `2π/λ`.
    pub fn wavenumber(&self) -> f64 {
        TAU / self.wavelength
    }
}

/// Polar/azimuth pair in the array-local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionAngles {
    theta: f64,
    phi: f64,
}

impl DirectionAngles {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        ensure_finite("theta", theta)?;
        ensure_finite("phi", phi)?;
        if !(0.0..=PI).contains(&theta) {
            return Err(invalid("theta", format!("{theta} outside [0, π]")));
        }
        if !(-PI..=PI).contains(&phi) {
            return Err(invalid("phi", format!("{phi} outside [-π, π]")));
        }
        Ok(Self { theta, phi })
    }

    /// In-plane direction at a signed angle from the normal, positive toward
    /// the local `+x` axis.
    pub fn broadside(angle: f64) -> Result<Self> {
        ensure_finite("angle", angle)?;
        if angle.abs() > PI {
            return Err(invalid("angle", format!("{angle} outside [-π, π]")));
        }
        if angle >= 0.0 {
            Self::new(angle, 0.0)
        } else {
            Self::new(-angle, PI)
        }
    }

    /// Direction of a (not necessarily normalised) local-frame vector.
    pub fn from_vector(v: &Vector3<f64>) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(invalid("direction", "vector must be finite and non-zero"));
        }
        let theta = (v.z / norm).clamp(-1.0, 1.0).acos();
        let phi = v.y.atan2(v.x);
        Self::new(theta, phi)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Inverse of [`DirectionAngles::broadside`] for in-plane directions.
    pub fn signed_broadside(&self) -> f64 {
        if self.phi.abs() > PI / 2.0 {
            -self.theta
        } else {
            self.theta
        }
    }
}

/// `u(θ, φ) = [sinθ cosφ, sinθ sinφ, cosθ]`.
pub fn unit_direction(angles: DirectionAngles) -> Vector3<f64> {
    let (st, ct) = angles.theta.sin_cos();
    let (sp, cp) = angles.phi.sin_cos();
    Vector3::new(st * cp, st * sp, ct)
}

/// `p_n = origin + n·d·axis` for `n = 0..N-1`.
pub fn uniform_linear_positions(
    count: usize,
    spacing: f64,
    axis: Vector3<f64>,
    origin: Vector3<f64>,
) -> Result<Vec<Vector3<f64>>> {
    if count == 0 {
        return Err(invalid("element count", "must be at least 1"));
    }
    ensure_positive("spacing", spacing)?;
    let norm = axis.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
        return Err(invalid("axis", "must be a unit vector"));
    }
    Ok((0..count).map(|n| origin + axis * (n as f64 * spacing)).collect())
}

/// Rigid transform from a panel's local frame to the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub origin: Vector3<f64>,
    pub rotation: Rotation3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self { origin: Vector3::zeros(), rotation: Rotation3::identity() }
    }

    /// Pose whose local `x` is `axis` and local `z` is `normal`, both given in
    /// world coordinates. Local `y` completes a right-handed frame.
    pub fn from_axes(origin: Vector3<f64>, axis: Vector3<f64>, normal: Vector3<f64>) -> Result<Self> {
        let x = axis.try_normalize(1e-12).ok_or_else(|| invalid("axis", "must be non-zero"))?;
        let z = normal.try_normalize(1e-12).ok_or_else(|| invalid("normal", "must be non-zero"))?;
        if x.dot(&z).abs() > 1e-9 {
            return Err(invalid("normal", "must be orthogonal to the array axis"));
        }
        let y = z.cross(&x);
        let rotation = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
        Ok(Self { origin, rotation })
    }

    pub fn to_world(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.origin + self.rotation * local
    }

    pub fn to_local(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * (world - self.origin)
    }
}

/// One RIS panel: element positions in its local frame and the element
/// scattering coefficient `τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementArray {
    id: String,
    positions: Vec<Vector3<f64>>,
    spacing: Option<f64>,
    tau: C64,
}

impl ElementArray {
    pub fn new(id: impl Into<String>, positions: Vec<Vector3<f64>>, tau: C64) -> Result<Self> {
        if positions.is_empty() {
            return Err(invalid("element positions", "array needs at least one element"));
        }
        if positions.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(invalid("element positions", "all coordinates must be finite"));
        }
        if !(tau.re.is_finite() && tau.im.is_finite()) {
            return Err(invalid("tau", "must be finite"));
        }
        Ok(Self { id: id.into(), positions, spacing: None, tau })
    }

    /// Uniform linear array along local `x`, first element at the origin.
    pub fn uniform_linear(id: impl Into<String>, count: usize, spacing: f64, tau: C64) -> Result<Self> {
        let positions = uniform_linear_positions(count, spacing, Vector3::x(), Vector3::zeros())?;
        let mut array = Self::new(id, positions, tau)?;
        array.spacing = Some(spacing);
        Ok(array)
    }

    /// Uniform linear array along local `x` whose centroid is the origin.
    pub fn centered_linear(id: impl Into<String>, count: usize, spacing: f64, tau: C64) -> Result<Self> {
        let half = (count.max(1) - 1) as f64 * spacing / 2.0;
        let positions = uniform_linear_positions(count, spacing, Vector3::x(), Vector3::new(-half, 0.0, 0.0))?;
        let mut array = Self::new(id, positions, tau)?;
        array.spacing = Some(spacing);
        Ok(array)
    }

    /// Default element scattering coefficient, `0.16·λ`.
    pub fn default_tau(ctx: &WaveContext) -> C64 {
        C64::new(0.16 * ctx.wavelength(), 0.0)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn element_count(&self) -> usize {
        self.positions.len()
    }

    pub fn spacing(&self) -> Option<f64> {
        self.spacing
    }

    pub fn tau(&self) -> C64 {
        self.tau
    }

    pub fn with_tau(mut self, tau: C64) -> Self {
        self.tau = tau;
        self
    }

    /// Distance between the first and last element.
    pub fn aperture(&self) -> f64 {
        let first = self.positions[0];
        self.positions.iter().map(|p| (p - first).norm()).fold(0.0, f64::max)
    }

    /// Copy of the array with positions mapped into the world frame.
    pub fn to_world(&self, pose: &Pose) -> Self {
        Self {
            id: self.id.clone(),
            positions: self.positions.iter().map(|p| pose.to_world(p)).collect(),
            spacing: self.spacing,
            tau: self.tau,
        }
    }
}

/// `v_n = exp(j·2π·p_n·u(θ,φ)/λ)`.
pub fn steering_vector(array: &ElementArray, angles: DirectionAngles, ctx: &WaveContext) -> DVector<C64> {
    let u = unit_direction(angles);
    let k = ctx.wavenumber();
    DVector::from_iterator(array.element_count(), array.positions.iter().map(|p| C64::from_polar(1.0, k * p.dot(&u))))
}

/// Steering vectors for each angle, stacked as columns (`N×M`).
pub fn incident_phase_matrix(
    array: &ElementArray,
    angles: &[DirectionAngles],
    ctx: &WaveContext,
) -> Result<DMatrix<C64>> {
    if angles.is_empty() {
        return Err(invalid("incident angles", "need at least one direction"));
    }
    let n = array.element_count();
    let mut v = DMatrix::zeros(n, angles.len());
    for (m, &a) in angles.iter().enumerate() {
        v.set_column(m, &steering_vector(array, a, ctx));
    }
    Ok(v)
}

/// Spherical path-loss factor `l(r) = exp(−j·2π·r/λ)/r`.
pub fn path_loss(r: f64, ctx: &WaveContext) -> Result<C64> {
    ensure_positive("distance", r)?;
    Ok(C64::from_polar(1.0 / r, -ctx.wavenumber() * r))
}

/// `T×N` schedule of binary phases drawn from `{0, π}`.
///
/// Entries are stored as flags (`true` means `π`) so that `exp(jΩ)` is exactly
/// `±1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseConfigMatrix {
    rows: usize,
    cols: usize,
    flipped: Vec<bool>,
    seed: Option<u64>,
}

impl PhaseConfigMatrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("phase configuration", "needs at least one row and column"));
        }
        let mut flipped = Vec::with_capacity(rows * cols);
        for t in 0..rows {
            for n in 0..cols {
                flipped.push(f(t, n));
            }
        }
        Ok(Self { rows, cols, flipped, seed: None })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::from_fn(rows, cols, |_, _| false)
    }

    /// Builds a schedule from explicit phases; every entry must be `0` or `π`.
    pub fn from_phases(rows: usize, cols: usize, phases: &[f64]) -> Result<Self> {
        if phases.len() != rows * cols {
            return Err(crate::Error::DimensionMismatch {
                context: "phase configuration",
                expected: rows * cols,
                found: phases.len(),
            });
        }
        for &p in phases {
            if p != 0.0 && p != PI {
                return Err(invalid("phase", format!("{p} is not 0 or π")));
            }
        }
        Self::from_fn(rows, cols, |t, n| phases[t * cols + n] == PI)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn phase(&self, t: usize, n: usize) -> f64 {
        if self.flipped[t * self.cols + n] {
            PI
        } else {
            0.0
        }
    }

    /// `exp(jΩ_{t,n})`, exactly `+1` or `−1`.
    pub fn sign(&self, t: usize, n: usize) -> f64 {
        if self.flipped[t * self.cols + n] {
            -1.0
        } else {
            1.0
        }
    }

    pub fn row_phases(&self, t: usize) -> Vec<f64> {
        (0..self.cols).map(|n| self.phase(t, n)).collect()
    }

    /// `exp(jΩ)` as a real `±1` matrix.
    pub fn sign_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |t, n| self.sign(t, n))
    }

    /// `exp(jΩ)` as a complex matrix.
    pub fn to_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.rows, self.cols, |t, n| C64::new(self.sign(t, n), 0.0))
    }
}

/// Deterministic generator for all seeded draws in the crate.
///
/// ChaCha8 with `seed_from_u64`; the stream is fixed by the `rand_chacha`
/// algorithm definition and does not depend on platform or word size.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// I.i.d. uniform `{0, π}` phases, row-major, one bit per entry.
pub fn random_phase_config(rows: usize, cols: usize, seed: u64) -> Result<PhaseConfigMatrix> {
    let mut rng = seeded_rng(seed);
    let mut config = PhaseConfigMatrix::from_fn(rows, cols, |_, _| rng.random::<bool>())?;
    config.seed = Some(seed);
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ctx() -> WaveContext {
        WaveContext::new(5.8e9).unwrap()
    }

    #[test]
    fn wavelength_matches_speed_of_light() {
        let c = ctx();
        assert!((c.wavelength() * c.frequency() / SPEED_OF_LIGHT - 1.0).abs() < 1e-12);
        assert!(WaveContext::new(0.0).is_err());
        assert!(WaveContext::new(f64::NAN).is_err());
    }

    #[test]
    fn unit_direction_cases() {
        let pole = unit_direction(DirectionAngles::new(0.0, 1.234).unwrap());
        assert_abs_diff_eq!(pole, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
        let axis = unit_direction(DirectionAngles::new(PI / 2.0, 0.0).unwrap());
        assert_abs_diff_eq!(axis, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        let u = unit_direction(DirectionAngles::new(PI / 3.0, PI / 4.0).unwrap());
        assert!((u.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn direction_angles_reject_bad_input() {
        assert!(DirectionAngles::new(f64::NAN, 0.0).is_err());
        assert!(DirectionAngles::new(0.1, f64::INFINITY).is_err());
        assert!(DirectionAngles::new(-0.1, 0.0).is_err());
        assert!(DirectionAngles::new(0.1, 4.0).is_err());
    }

    #[test]
    fn broadside_round_trip() {
        for a in [-1.2, -0.1, 0.0, 0.3, 1.5] {
            let d = DirectionAngles::broadside(a).unwrap();
            assert!((d.signed_broadside() - a).abs() < 1e-15);
            let u = unit_direction(d);
            assert!((u.x - a.sin()).abs() < 1e-15);
            assert!((u.z - a.cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn from_vector_recovers_angles() {
        let d = DirectionAngles::new(0.7, -2.1).unwrap();
        let back = DirectionAngles::from_vector(&(unit_direction(d) * 3.5)).unwrap();
        assert!((back.theta() - 0.7).abs() < 1e-12);
        assert!((back.phi() + 2.1).abs() < 1e-12);
        assert!(DirectionAngles::from_vector(&Vector3::zeros()).is_err());
    }

    #[test]
    fn uniform_positions() {
        let one = uniform_linear_positions(1, 0.025, Vector3::y(), Vector3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(one, vec![Vector3::new(1.0, 2.0, 3.0)]);
        let three = uniform_linear_positions(3, 1.0, Vector3::x(), Vector3::zeros()).unwrap();
        let xs: Vec<f64> = three.iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 1.0, 2.0]);
        assert!(uniform_linear_positions(0, 1.0, Vector3::x(), Vector3::zeros()).is_err());
        assert!(uniform_linear_positions(2, 0.0, Vector3::x(), Vector3::zeros()).is_err());
        assert!(uniform_linear_positions(2, -1.0, Vector3::x(), Vector3::zeros()).is_err());
    }

    #[test]
    fn aperture_of_default_panel() {
        let a = ElementArray::uniform_linear("ris", 160, 0.026, C64::new(1.0, 0.0)).unwrap();
        assert!((a.aperture() - 4.134).abs() < 1e-12);
        for w in a.positions().windows(2) {
            assert!(((w[1] - w[0]).norm() - 0.026).abs() < 1e-12);
        }
        let c = ElementArray::centered_linear("ris", 160, 0.026, C64::new(1.0, 0.0)).unwrap();
        let centroid: Vector3<f64> = c.positions().iter().sum::<Vector3<f64>>() / 160.0;
        assert!(centroid.norm() < 1e-12);
    }

    #[test]
    fn steering_vector_cases() {
        let c = ctx();
        let tau = C64::new(1.0, 0.0);
        let planar = ElementArray::new(
            "planar",
            vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.3, -0.2, 0.0), Vector3::new(1.1, 0.7, 0.0)],
            tau,
        )
        .unwrap();
        let broad = steering_vector(&planar, DirectionAngles::new(0.0, 0.0).unwrap(), &c);
        for z in broad.iter() {
            assert_abs_diff_eq!(z.re, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-15);
        }

        let single = ElementArray::uniform_linear("one", 1, 0.01, tau).unwrap();
        let v = steering_vector(&single, DirectionAngles::new(0.4, 0.2).unwrap(), &c);
        assert_eq!(v.len(), 1);
        assert_abs_diff_eq!(v[0].re, 1.0, epsilon = 1e-15);

        // Half-wavelength spacing at endfire: phase advances by π per element.
        let half = ElementArray::uniform_linear("half", 4, c.wavelength() / 2.0, tau).unwrap();
        let v = steering_vector(&half, DirectionAngles::new(PI / 2.0, 0.0).unwrap(), &c);
        for (n, expected) in [1.0, -1.0, 1.0, -1.0].iter().enumerate() {
            assert_abs_diff_eq!(v[n].re, *expected, epsilon = 1e-12);
            assert_abs_diff_eq!(v[n].im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn incident_matrix_matches_vandermonde() {
        let c = ctx();
        let d = 0.026;
        let n = 12;
        let array = ElementArray::uniform_linear("ula", n, d, C64::new(1.0, 0.0)).unwrap();
        let thetas = [-0.9, -0.2, 0.0, 0.15, 1.1];
        let angles: Vec<_> = thetas.iter().map(|&t| DirectionAngles::broadside(t).unwrap()).collect();
        let v = incident_phase_matrix(&array, &angles, &c).unwrap();
        for (m, &t) in thetas.iter().enumerate() {
            for row in 0..n {
                let expected = C64::from_polar(1.0, TAU * row as f64 * d * t.sin() / c.wavelength());
                assert!((v[(row, m)] - expected).norm() < 1e-12);
            }
        }
        assert!(incident_phase_matrix(&array, &[], &c).is_err());
    }

    #[test]
    fn identical_angles_give_rank_one() {
        let c = ctx();
        let array = ElementArray::uniform_linear("ula", 8, 0.02, C64::new(1.0, 0.0)).unwrap();
        let a = DirectionAngles::broadside(0.3).unwrap();
        let v = incident_phase_matrix(&array, &[a, a, a], &c).unwrap();
        let sv = v.singular_values();
        assert!(sv[0] > 1.0);
        assert_eq!(sv.iter().filter(|&&s| s > 1e-12 * sv.max()).count(), 1);
    }

    #[test]
    fn path_loss_cases() {
        let c = ctx();
        let lam = c.wavelength();
        let one = path_loss(lam, &c).unwrap();
        assert!((one - C64::new(1.0 / lam, 0.0)).norm() < 1e-9 / lam);
        let half = path_loss(lam / 2.0, &c).unwrap();
        assert!((half.norm() - 2.0 / lam).abs() < 1e-9);
        assert!((half - C64::new(-2.0 / lam, 0.0)).norm() < 1e-9 / lam);
        assert!((path_loss(6.0, &c).unwrap().norm() - 1.0 / 6.0).abs() < 1e-15);
        assert!(path_loss(0.0, &c).is_err());
        assert!(path_loss(-1.0, &c).is_err());
    }

    #[test]
    fn pose_round_trip() {
        let pose =
            Pose::from_axes(Vector3::new(3.0, -1.0, 0.5), Vector3::new(0.0, 1.0, 0.0), Vector3::new(-1.0, 0.0, 0.0))
                .unwrap();
        let p = Vector3::new(0.3, 0.1, -2.0);
        assert_abs_diff_eq!(pose.to_local(&pose.to_world(&p)), p, epsilon = 1e-14);
        assert!((pose.rotation.matrix().determinant() - 1.0).abs() < 1e-12);
        assert!(Pose::from_axes(Vector3::zeros(), Vector3::x(), Vector3::x()).is_err());
    }

    #[test]
    fn phase_config_basics() {
        let one = random_phase_config(1, 1, 9).unwrap();
        assert!(one.phase(0, 0) == 0.0 || one.phase(0, 0) == PI);
        assert_eq!(random_phase_config(40, 30, 5).unwrap(), random_phase_config(40, 30, 5).unwrap());
        assert_ne!(random_phase_config(40, 30, 5).unwrap(), random_phase_config(40, 30, 6).unwrap());
        assert!(random_phase_config(0, 3, 1).is_err());

        let big = random_phase_config(200, 200, 11).unwrap();
        let mean: f64 = big.sign_matrix().iter().sum::<f64>() / 40_000.0;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!(PhaseConfigMatrix::from_phases(1, 2, &[0.0, 1.0]).is_err());
        let explicit = PhaseConfigMatrix::from_phases(1, 2, &[0.0, PI]).unwrap();
        assert_eq!(explicit.sign(0, 1), -1.0);
    }
}
