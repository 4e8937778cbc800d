//! Source recovery: truncated-SVD least squares for phased data and a
//! reweighted amplitude-flow iteration for magnitude-only data.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::em::seeded_rng;
use crate::error::{ensure_positive, invalid, Error, Result};
use crate::forward::{accurate_residual, SensingOperator};
use crate::spectral::SpectrumReport;
use crate::C64;

/// Thin SVD of an operator, computed once and reused for solving and
/// spectral reporting.
#[derive(Debug, Clone)]
pub struct OperatorSvd {
    u: DMatrix<C64>,
    sigma: Vec<f64>,
    v_t: DMatrix<C64>,
    rows: usize,
    cols: usize,
}

impl OperatorSvd {
    pub fn new(matrix: &DMatrix<C64>) -> Result<Self> {
        if matrix.is_empty() {
            return Err(invalid("operator", "matrix is empty"));
        }
        if matrix.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(invalid("operator", "matrix has non-finite entries"));
        }
        let svd = matrix.clone().svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => {
                return Err(Error::Numerical {
                    rows: matrix.nrows(),
                    cols: matrix.ncols(),
                    cond: f64::NAN,
                    reason: "SVD did not return singular vectors".into(),
                })
            }
        };
        Ok(Self {
            u,
            sigma: svd.singular_values.iter().copied().collect(),
            v_t,
            rows: matrix.nrows(),
            cols: matrix.ncols(),
        })
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma.iter().copied().fold(0.0, f64::max)
    }

    pub fn spectrum(&self, tolerance: f64) -> Result<SpectrumReport> {
        SpectrumReport::from_values(self.sigma.clone(), tolerance)
    }

    /// `H⁺ s` with singular values at or below `tolerance · σ_max` dropped.
    pub fn solve(&self, s: &DVector<C64>, tolerance: f64) -> Result<LsSolution> {
        if s.len() != self.rows {
            return Err(Error::DimensionMismatch {
                context: "measurements vs operator rows",
                expected: self.rows,
                found: s.len(),
            });
        }
        ensure_positive("rank tolerance", tolerance)?;
        let max = self.sigma_max();
        if max == 0.0 {
            return Err(Error::Numerical {
                rows: self.rows,
                cols: self.cols,
                cond: f64::INFINITY,
                reason: "operator is identically zero".into(),
            });
        }
        let cutoff = tolerance * max;
        let mut coeffs = self.u.adjoint() * s;
        let mut rank = 0;
        let mut smallest = max;
        for (c, &sv) in coeffs.iter_mut().zip(&self.sigma) {
            if sv > cutoff {
                *c /= sv;
                rank += 1;
                smallest = smallest.min(sv);
            } else {
                *c = C64::new(0.0, 0.0);
            }
        }
        let estimate = self.v_t.adjoint() * coeffs;
        Ok(LsSolution {
            estimate,
            numeric_rank: rank,
            condition_number: max / smallest,
            residual_norm: f64::NAN,
            tolerance_used: tolerance,
        })
    }

    /// [`OperatorSvd::solve`] followed by iterative refinement against
    /// `matrix`, the operator this SVD was computed from.
    ///
    /// Residuals are accumulated in double-double arithmetic, so the
    /// corrections recover the accuracy a plain solve loses to the condition
    /// number. The fixed point is the same truncated least-squares solution.
    pub fn solve_refined(&self, matrix: &DMatrix<C64>, s: &DVector<C64>, tolerance: f64) -> Result<LsSolution> {
        if matrix.shape() != (self.rows, self.cols) {
            return Err(Error::DimensionMismatch {
                context: "operator vs its SVD",
                expected: self.rows * self.cols,
                found: matrix.len(),
            });
        }
        let mut sol = self.solve(s, tolerance)?;
        for _ in 0..REFINE_STEPS {
            let r = accurate_residual(matrix, &sol.estimate, s);
            let step = self.solve(&r, tolerance)?.estimate;
            sol.estimate += &step;
            if step.norm() <= f64::EPSILON * sol.estimate.norm() {
                break;
            }
        }
        sol.residual_norm = accurate_residual(matrix, &sol.estimate, s).norm();
        Ok(sol)
    }

    /// `V Σ⁺ Uᴴ` with the same truncation rule as [`OperatorSvd::solve`].
    pub fn pseudo_inverse(&self, tolerance: f64) -> Result<DMatrix<C64>> {
        ensure_positive("rank tolerance", tolerance)?;
        let cutoff = tolerance * self.sigma_max();
        let mut u_h = self.u.adjoint();
        for (i, mut row) in u_h.row_iter_mut().enumerate() {
            let sv = self.sigma[i];
            if sv > cutoff {
                row /= C64::new(sv, 0.0);
            } else {
                row.fill(C64::new(0.0, 0.0));
            }
        }
        Ok(self.v_t.adjoint() * u_h)
    }
}

const REFINE_STEPS: usize = 3;

/// Least-squares estimate with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LsSolution {
    pub estimate: DVector<C64>,
    pub numeric_rank: usize,
    /// Over the retained singular values.
    pub condition_number: f64,
    /// `‖H·Ê − S‖`.
    pub residual_norm: f64,
    pub tolerance_used: f64,
}

/// Least-squares recovery `Ê = H⁺ S` through a truncated SVD with
/// iterative refinement.
pub fn ls_solve(op: &SensingOperator, s: &DVector<C64>, rank_tolerance: f64) -> Result<LsSolution> {
    if s.len() != op.rows() {
        return Err(Error::DimensionMismatch {
            context: "measurements vs operator rows",
            expected: op.rows(),
            found: s.len(),
        });
    }
    OperatorSvd::new(&op.matrix)?.solve_refined(&op.matrix, s, rank_tolerance)
}

/// Moore–Penrose pseudo-inverse with relative truncation.
pub fn pseudo_inverse(op: &SensingOperator, rank_tolerance: f64) -> Result<DMatrix<C64>> {
    OperatorSvd::new(&op.matrix)?.pseudo_inverse(rank_tolerance)
}

/// Starting point of the magnitude-only iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaselessInit {
    /// Leading eigenvector of `Σ_t |S_t|² h_t h_tᴴ`.
    #[default]
    Spectral,
    /// Seeded complex Gaussian vector.
    Random,
}

/// Knobs of the reweighted amplitude-flow solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaselessParams {
    pub max_iterations: usize,
    /// `None` means `0.5 / σ_max(H)²`.
    pub step_size: Option<f64>,
    pub reweight_epsilon: f64,
    pub init: PhaselessInit,
    /// Target for `‖|H·Ê| − |S|‖ / ‖|S|‖`.
    pub stop_tolerance: f64,
    pub seed: u64,
}

impl Default for PhaselessParams {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            step_size: None,
            reweight_epsilon: 0.1,
            init: PhaselessInit::Spectral,
            stop_tolerance: 1e-6,
            seed: 0,
        }
    }
}

impl PhaselessParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations", "must be at least 1"));
        }
        if let Some(step) = self.step_size {
            ensure_positive("step_size", step)?;
        }
        if !(self.reweight_epsilon.is_finite() && self.reweight_epsilon >= 0.0) {
            return Err(invalid("reweight_epsilon", "must be finite and non-negative"));
        }
        ensure_positive("stop_tolerance", self.stop_tolerance)
    }
}

/// Outcome of [`phaseless_solve_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct PhaselessReport {
    pub estimate: DVector<C64>,
    pub iterations: usize,
    /// `½ Σ (|h_tᴴ z| − |S_t|)²` at the start and after every accepted step.
    pub objective_history: Vec<f64>,
    pub amplitude_residual: f64,
    pub converged: bool,
}

const POWER_ITERATIONS: usize = 300;
const MAX_HALVINGS: usize = 40;

fn power_iteration(
    cols: usize,
    mut start: DVector<C64>,
    apply: impl Fn(&DVector<C64>) -> DVector<C64>,
) -> (DVector<C64>, f64) {
    let mut norm = start.norm();
    if norm == 0.0 {
        start = DVector::from_element(cols, C64::new(1.0, 0.0));
        norm = start.norm();
    }
    let mut v = start / C64::new(norm, 0.0);
    let mut eig = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let w = apply(&v);
        let wn = w.norm();
        if wn == 0.0 {
            return (v, 0.0);
        }
        let next = w / C64::new(wn, 0.0);
        let change = (eig - wn).abs();
        eig = wn;
        v = next;
        if change <= 1e-12 * wn {
            break;
        }
    }
    (v, eig)
}

fn random_vector(len: usize, seed: u64) -> DVector<C64> {
    let mut rng = seeded_rng(seed);
    DVector::from_fn(len, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C64::new(re, im)
    })
}

fn amplitude_objective(az: &DVector<C64>, y: &DVector<f64>) -> f64 {
    0.5 * az.iter().zip(y.iter()).map(|(z, &m)| (z.norm() - m).powi(2)).sum::<f64>()
}

fn amplitude_residual(az: &DVector<C64>, y: &DVector<f64>, y_norm: f64) -> f64 {
    az.iter().zip(y.iter()).map(|(z, &m)| (z.norm() - m).powi(2)).sum::<f64>().sqrt() / y_norm
}

/// Residual `Az − y ⊙ Az/|Az|`, optionally reweighted row by row.
fn amplitude_residual_vector(az: &DVector<C64>, y: &DVector<f64>, damping: Option<f64>) -> DVector<C64> {
    DVector::from_iterator(
        az.len(),
        az.iter().zip(y.iter()).map(|(&z, &m)| {
            let a = z.norm();
            if a == 0.0 {
                return C64::new(0.0, 0.0);
            }
            let r = z * (1.0 - m / a);
            match damping {
                Some(d) if a + d > 0.0 => r * (a / (a + d)),
                _ => r,
            }
        }),
    )
}

/// Magnitude-only recovery; the estimate is defined up to a global phase.
pub fn phaseless_solve(
    op: &SensingOperator,
    magnitudes: &DVector<f64>,
    params: &PhaselessParams,
) -> Result<DVector<C64>> {
    phaseless_solve_report(op, magnitudes, params).map(|r| r.estimate)
}

/// [`phaseless_solve`] with the objective trace and convergence flag.
pub fn phaseless_solve_report(
    op: &SensingOperator,
    magnitudes: &DVector<f64>,
    params: &PhaselessParams,
) -> Result<PhaselessReport> {
    params.validate()?;
    let a = &op.matrix;
    if magnitudes.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            context: "magnitudes vs operator rows",
            expected: a.nrows(),
            found: magnitudes.len(),
        });
    }
    if magnitudes.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(invalid("magnitudes", "must be finite and non-negative"));
    }
    let y = magnitudes;
    let y_norm = y.norm();
    if y_norm == 0.0 {
        return Err(invalid("magnitudes", "all magnitudes are zero"));
    }
    let a_h = a.adjoint();
    let m = a.ncols();

    let (_, sigma_max_sq) = power_iteration(m, random_vector(m, params.seed ^ 0x5bd1_e995), |v| &a_h * (a * v));
    if sigma_max_sq == 0.0 {
        return Err(Error::Numerical {
            rows: a.nrows(),
            cols: m,
            cond: f64::INFINITY,
            reason: "operator is identically zero".into(),
        });
    }
    let step = params.step_size.unwrap_or(0.5 / sigma_max_sq);

    let start = random_vector(m, params.seed);
    let direction = match params.init {
        PhaselessInit::Random => start,
        PhaselessInit::Spectral => {
            let y2 = y.map(|v| C64::new(v * v, 0.0));
            power_iteration(m, start, |v| &a_h * (a * v).component_mul(&y2)).0
        }
    };
    let projected = (a * &direction).norm();
    let mut z = if projected > 0.0 { &direction * C64::new(y_norm / projected, 0.0) } else { direction };

    let damping = params.reweight_epsilon * y.mean();
    let mut az = a * &z;
    let mut objective = amplitude_objective(&az, y);
    let mut history = vec![objective];
    let mut residual = amplitude_residual(&az, y, y_norm);
    let mut iterations = 0;
    let mut converged = residual < params.stop_tolerance;

    while !converged && iterations < params.max_iterations {
        let mut accepted = None;
        for weights in [Some(damping), None] {
            let grad = &a_h * amplitude_residual_vector(&az, y, weights);
            let grad_step = a * &grad;
            let mut mu = step;
            for _ in 0..MAX_HALVINGS {
                let trial_az = &az - &grad_step * C64::new(mu, 0.0);
                let trial_obj = amplitude_objective(&trial_az, y);
                if trial_obj <= objective {
                    accepted = Some((&z - &grad * C64::new(mu, 0.0), trial_az, trial_obj));
                    break;
                }
                mu /= 2.0;
            }
            if accepted.is_some() {
                break;
            }
        }
        let Some((next_z, next_az, next_obj)) = accepted else {
            break;
        };
        let stalled = objective - next_obj <= f64::EPSILON * objective;
        z = next_z;
        az = next_az;
        objective = next_obj;
        history.push(objective);
        iterations += 1;
        residual = amplitude_residual(&az, y, y_norm);
        converged = residual < params.stop_tolerance;
        if stalled {
            break;
        }
    }

    Ok(PhaselessReport { estimate: z, iterations, objective_history: history, amplitude_residual: residual, converged })
}

/// Phase grid used when aligning one block's twin against the others.
const TWIN_PHASE_STEPS: usize = 360;

/// Picks the sparsest of the magnitude-equivalent twins of `estimate`.
///
/// With real configuration matrices `|A_k z|` cannot tell `A_k z` from its
/// conjugate, and stacked blocks carry independent global phases. Every
/// combination is realised by `A⁺` applied to the blockwise conjugated and
/// rotated field; the one with the smallest ℓ1 norm is returned. Blocks after
/// the first are aligned greedily in order.
pub fn resolve_conjugate_twin(op: &SensingOperator, estimate: &DVector<C64>, tolerance: f64) -> Result<DVector<C64>> {
    if estimate.len() != op.cols() {
        return Err(Error::DimensionMismatch {
            context: "estimate vs operator columns",
            expected: op.cols(),
            found: estimate.len(),
        });
    }
    let svd = OperatorSvd::new(&op.matrix)?;
    let field = &op.matrix * estimate;
    let mut ranges = Vec::new();
    let mut start = 0;
    for b in &op.blocks {
        ranges.push(start..start + b.rows);
        start += b.rows;
    }
    if start != op.rows() || ranges.is_empty() {
        ranges = std::iter::once(0..op.rows()).collect();
    }
    let mut parts = Vec::with_capacity(ranges.len());
    for r in &ranges {
        let mut pair = Vec::with_capacity(2);
        for conjugate in [false, true] {
            let s = DVector::from_fn(op.rows(), |i, _| match (r.contains(&i), conjugate) {
                (false, _) => C64::new(0.0, 0.0),
                (true, false) => field[i],
                (true, true) => field[i].conj(),
            });
            pair.push(svd.solve(&s, tolerance)?.estimate);
        }
        parts.push(pair);
    }
    let l1 = |v: &DVector<C64>| v.iter().map(|z| z.norm()).sum::<f64>();
    let rotations: Vec<C64> = (0..TWIN_PHASE_STEPS)
        .map(|i| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * i as f64 / TWIN_PHASE_STEPS as f64))
        .collect();
    let mut best: Option<(f64, DVector<C64>)> = None;
    for first in &parts[0] {
        let mut acc = first.clone();
        for pair in &parts[1..] {
            let mut choice: Option<(f64, DVector<C64>)> = None;
            for part in pair {
                for &w in &rotations {
                    let trial = &acc + part * w;
                    let cost = l1(&trial);
                    if choice.as_ref().map_or(true, |(c, _)| cost < *c) {
                        choice = Some((cost, trial));
                    }
                }
            }
            acc = choice.map(|(_, v)| v).unwrap_or(acc);
        }
        let cost = l1(&acc);
        if best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, acc));
        }
    }
    Ok(best.map(|(_, v)| v).unwrap_or_else(|| estimate.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{relative_error, relative_error_mod_phase};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<C64> {
        let v = random_vector(rows * cols, seed);
        DMatrix::from_iterator(rows, cols, v.iter().copied())
    }

    #[test]
    fn scaled_orthonormal_operator_divides_by_scale() {
        let mut m = DMatrix::<C64>::zeros(4, 4);
        for i in 0..4 {
            m[(i, (i + 1) % 4)] = C64::new(3.0, 0.0);
        }
        let op = SensingOperator::from_matrix(m).unwrap();
        let s = DVector::from_fn(4, |i, _| C64::new(i as f64, 1.0));
        let sol = ls_solve(&op, &s, 1e-12).unwrap();
        let expected = DVector::from_fn(4, |i, _| s[(i + 3) % 4] / 3.0);
        assert!((sol.estimate - expected).norm() < 1e-14);
        assert_eq!(sol.numeric_rank, 4);
        assert!((sol.condition_number - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_full_rank_recovery() {
        let op = SensingOperator::from_matrix(random_matrix(40, 12, 1)).unwrap();
        let e = random_vector(12, 2);
        let s = &op.matrix * &e;
        let sol = ls_solve(&op, &s, 1e-12).unwrap();
        assert!((&sol.estimate - &e).norm() / e.norm() < 1e-8);
        let recomputed = (&op.matrix * &sol.estimate - &s).norm();
        assert!((recomputed - sol.residual_norm).abs() < 1e-10);
    }

    #[test]
    fn ls_errors() {
        let op = SensingOperator::from_matrix(DMatrix::zeros(3, 2)).unwrap();
        assert!(ls_solve(&op, &DVector::zeros(3), 1e-12).is_err());
        let op = SensingOperator::from_matrix(random_matrix(3, 2, 4)).unwrap();
        assert!(ls_solve(&op, &DVector::zeros(4), 1e-12).is_err());
        assert!(ls_solve(&op, &DVector::zeros(3), 0.0).is_err());
    }

    #[test]
    fn pseudo_inverse_identities() {
        let op = SensingOperator::from_matrix(random_matrix(30, 8, 7)).unwrap();
        let pinv = pseudo_inverse(&op, 1e-12).unwrap();
        let eye = DMatrix::<C64>::identity(8, 8);
        assert!((&pinv * &op.matrix - eye).norm() < 1e-10);
        let smallest = crate::spectral::spectrum(&op, 1e-12).unwrap().sigma_min();
        let pinv_norm = crate::spectral::spectrum_of(&pinv, 0.0).unwrap().sigma_max();
        assert!((pinv_norm - 1.0 / smallest).abs() < 1e-10);
    }

    #[test]
    fn phaseless_recovers_generic_vector() {
        let op = SensingOperator::from_matrix(random_matrix(120, 10, 11)).unwrap();
        let e = random_vector(10, 12);
        let y = (&op.matrix * &e).map(|z| z.norm());
        let report = phaseless_solve_report(&op, &y, &PhaselessParams::default()).unwrap();
        assert!(report.converged, "residual {}", report.amplitude_residual);
        assert!(relative_error_mod_phase(&report.estimate, &e).unwrap() < 1e-4);
        for w in report.objective_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn phaseless_random_init_and_guards() {
        let op = SensingOperator::from_matrix(random_matrix(60, 5, 21)).unwrap();
        let e = random_vector(5, 22);
        let y = (&op.matrix * &e).map(|z| z.norm());
        let params = PhaselessParams { init: PhaselessInit::Random, ..Default::default() };
        let report = phaseless_solve_report(&op, &y, &params).unwrap();
        for w in report.objective_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(phaseless_solve(&op, &DVector::zeros(60), &params).is_err());
        assert!(phaseless_solve(&op, &DVector::from_element(60, f64::NAN), &params).is_err());
        assert!(phaseless_solve(&op, &DVector::from_element(59, 1.0), &params).is_err());
        let bad = PhaselessParams { max_iterations: 0, ..Default::default() };
        assert!(phaseless_solve(&op, &y, &bad).is_err());
    }

    /// Real `±1` rows times an `n`-element half-wavelength Vandermonde block
    /// over `m > n` directions, so every element-space field is reachable.
    /// The direction grid is lopsided so a mirrored source falls between nodes.
    fn binary_vandermonde_operator(n: usize, m: usize, seed: u64) -> SensingOperator {
        let signs = crate::em::random_phase_config(4 * n, n, seed).unwrap().sign_matrix();
        let v = DMatrix::from_fn(n, m, |e, d| {
            let u = -0.9 + 1.5 * d as f64 / (m - 1) as f64;
            C64::from_polar(1.0, std::f64::consts::PI * e as f64 * u)
        });
        let re = &signs * v.map(|z| z.re);
        let im = &signs * v.map(|z| z.im);
        SensingOperator::from_matrix(re.zip_map(&im, C64::new)).unwrap()
    }

    fn projected_point(op: &SensingOperator, cell: usize) -> DVector<C64> {
        let point = DVector::from_fn(op.cols(), |m, _| C64::new(f64::from(u8::from(m == cell)), 0.0));
        ls_solve(op, &(&op.matrix * &point), 1e-12).unwrap().estimate
    }

    fn l1(v: &DVector<C64>) -> f64 {
        v.iter().map(|z| z.norm()).sum()
    }

    #[test]
    fn refinement_recovers_accuracy_lost_to_conditioning() {
        // Complex Hilbert-type block, condition number near 1e11.
        let a = DMatrix::from_fn(14, 9, |i, j| C64::new(1.0 / (i + j + 1) as f64, 0.5 / (i + 2 * j + 2) as f64));
        let x = random_vector(9, 21);
        let s = crate::forward::accurate_product(&a, &x);
        let svd = OperatorSvd::new(&a).unwrap();
        let plain = relative_error(&svd.solve(&s, 1e-15).unwrap().estimate, &x).unwrap();
        let refined = svd.solve_refined(&a, &s, 1e-15).unwrap();
        let err = relative_error(&refined.estimate, &x).unwrap();
        assert!(err < plain / 10.0, "plain {plain:e} refined {err:e}");
        assert!(refined.residual_norm < 1e-15 * s.norm());
        assert!(svd.solve_refined(&a.transpose(), &s, 1e-15).is_err());
    }

    #[test]
    fn conjugate_twin_keeps_magnitudes_and_never_grows_l1() {
        let op = binary_vandermonde_operator(8, 12, 11);
        let truth = projected_point(&op, 4);
        let field = &op.matrix * &truth;
        let twin = ls_solve(&op, &field.map(|z| z.conj()), 1e-12).unwrap().estimate;
        for (a, b) in field.iter().zip((&op.matrix * &twin).iter()) {
            assert!((a.norm() - b.norm()).abs() < 1e-10);
        }
        assert!(relative_error_mod_phase(&twin, &truth).unwrap() > 0.1);
        let from_truth = resolve_conjugate_twin(&op, &truth, 1e-12).unwrap();
        let from_twin = resolve_conjugate_twin(&op, &(&twin * C64::from_polar(1.0, 0.7)), 1e-12).unwrap();
        assert!(relative_error_mod_phase(&from_truth, &from_twin).unwrap() < 1e-9);
        assert!(l1(&from_truth) <= l1(&truth).min(l1(&twin)) + 1e-12);
        for (a, b) in field.iter().zip((&op.matrix * &from_twin).iter()) {
            assert!((a.norm() - b.norm()).abs() < 1e-10);
        }
        assert!(resolve_conjugate_twin(&op, &DVector::zeros(4), 1e-12).is_err());
    }

    #[test]
    fn conjugate_twin_mirrored_out_of_view_is_undone() {
        // The mirror of u = -0.82 lies beyond the grid's last node at 0.6.
        let op = binary_vandermonde_operator(16, 20, 5);
        let truth = projected_point(&op, 1);
        let field = &op.matrix * &truth;
        let twin = ls_solve(&op, &field.map(|z| z.conj()), 1e-12).unwrap().estimate;
        assert!(relative_error_mod_phase(&twin, &truth).unwrap() > 0.1);
        let fixed = resolve_conjugate_twin(&op, &(&twin * C64::from_polar(1.0, -1.3)), 1e-12).unwrap();
        assert!(relative_error_mod_phase(&fixed, &truth).unwrap() < 1e-9);
    }
}
