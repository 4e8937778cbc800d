//! Sensing-operator assembly, measurement simulation and the exact
//! spherical-wave field used to check the far-field factorisation.

use nalgebra::{DMatrix, DVector, Vector3};
use rand_distr::{Distribution, StandardNormal};

use crate::em::{
    incident_phase_matrix, path_loss, seeded_rng, steering_vector, DirectionAngles, ElementArray, PhaseConfigMatrix,
    Pose, WaveContext,
};
use crate::error::{ensure_positive, invalid, Error, Result};
use crate::C64;

/// Receiver placement relative to a panel: distance and local direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverSpec {
    pub distance: f64,
    pub angles: DirectionAngles,
}

impl ReceiverSpec {
    pub fn new(distance: f64, angles: DirectionAngles) -> Result<Self> {
        ensure_positive("receiver distance", distance)?;
        Ok(Self { distance, angles })
    }

    /// Receiver on the panel normal.
    pub fn on_normal(distance: f64) -> Result<Self> {
        Self::new(distance, DirectionAngles::broadside(0.0)?)
    }

    /// Receiver position in the panel's local frame.
    pub fn local_position(&self) -> Vector3<f64> {
        crate::em::unit_direction(self.angles) * self.distance
    }
}

/// How the cells of a [`SceneGrid`] are laid out.
#[derive(Debug, Clone, PartialEq)]
pub enum CellLayout {
    /// In-plane directions given as signed broadside angles, with optional
    /// per-cell ranges for the incident path loss.
    Angular { angles: Vec<f64>, ranges: Option<Vec<f64>> },
    /// Square voxels in the `z = 0` plane; cell `(ix, iy)` has index
    /// `iy·nx + ix`.
    Cartesian { centers: Vec<Vector3<f64>>, cell_size: (f64, f64), shape: (usize, usize) },
}

/// Discretised region of interest and its complex source amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGrid {
    layout: CellLayout,
    amplitudes: DVector<C64>,
}

impl SceneGrid {
    pub fn angular(angles: Vec<f64>, amplitudes: DVector<C64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(invalid("scene", "needs at least one cell"));
        }
        if angles.iter().any(|a| !a.is_finite() || a.abs() > std::f64::consts::PI) {
            return Err(invalid("scene angles", "must be finite and within [-π, π]"));
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("scene angles", "must be strictly increasing"));
        }
        Self::build(CellLayout::Angular { angles, ranges: None }, amplitudes)
    }

    /// Attaches a source range to every angular cell.
    pub fn with_ranges(mut self, ranges: Vec<f64>) -> Result<Self> {
        match &mut self.layout {
            CellLayout::Angular { angles, ranges: slot } => {
                if ranges.len() != angles.len() {
                    return Err(Error::DimensionMismatch {
                        context: "scene ranges",
                        expected: angles.len(),
                        found: ranges.len(),
                    });
                }
                for &r in &ranges {
                    ensure_positive("scene range", r)?;
                }
                *slot = Some(ranges);
                Ok(self)
            }
            CellLayout::Cartesian { .. } => Err(invalid("scene ranges", "only angular scenes take ranges")),
        }
    }

    /// Uniform `nx × ny` voxel grid of the given extent centred on `center`.
    pub fn cartesian(
        center: Vector3<f64>,
        extent: (f64, f64),
        shape: (usize, usize),
        amplitudes: DVector<C64>,
    ) -> Result<Self> {
        ensure_positive("roi width", extent.0)?;
        ensure_positive("roi height", extent.1)?;
        let (nx, ny) = shape;
        if nx == 0 || ny == 0 {
            return Err(invalid("roi cells", "need at least one cell per axis"));
        }
        let sx = extent.0 / nx as f64;
        let sy = extent.1 / ny as f64;
        let x0 = center.x - extent.0 / 2.0;
        let y0 = center.y - extent.1 / 2.0;
        let mut centers = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                centers.push(Vector3::new(x0 + (ix as f64 + 0.5) * sx, y0 + (iy as f64 + 0.5) * sy, center.z));
            }
        }
        Self::build(CellLayout::Cartesian { centers, cell_size: (sx, sy), shape }, amplitudes)
    }

    fn build(layout: CellLayout, amplitudes: DVector<C64>) -> Result<Self> {
        let grid = Self { layout, amplitudes: DVector::zeros(0) };
        grid.with_amplitudes(amplitudes)
    }

    /// Same cells, new amplitudes.
    pub fn with_amplitudes(mut self, amplitudes: DVector<C64>) -> Result<Self> {
        let m = self.cell_count();
        if amplitudes.len() != m {
            return Err(Error::DimensionMismatch { context: "scene amplitudes", expected: m, found: amplitudes.len() });
        }
        if amplitudes.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(invalid("scene amplitudes", "must be finite"));
        }
        self.amplitudes = amplitudes;
        Ok(self)
    }

    pub fn layout(&self) -> &CellLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn cell_count(&self) -> usize {
        match &self.layout {
            CellLayout::Angular { angles, .. } => angles.len(),
            CellLayout::Cartesian { centers, .. } => centers.len(),
        }
    }

    pub fn is_cartesian(&self) -> bool {
        matches!(self.layout, CellLayout::Cartesian { .. })
    }

    /// Voxel centres, or `None` for angular scenes.
    pub fn centers(&self) -> Option<&[Vector3<f64>]> {
        match &self.layout {
            CellLayout::Cartesian { centers, .. } => Some(centers),
            CellLayout::Angular { .. } => None,
        }
    }

    /// Signed broadside angles, or `None` for Cartesian scenes.
    pub fn angles(&self) -> Option<&[f64]> {
        match &self.layout {
            CellLayout::Angular { angles, .. } => Some(angles),
            CellLayout::Cartesian { .. } => None,
        }
    }

    /// Grid shape `(nx, ny)` of a Cartesian scene.
    pub fn shape(&self) -> Option<(usize, usize)> {
        match &self.layout {
            CellLayout::Cartesian { shape, .. } => Some(*shape),
            CellLayout::Angular { .. } => None,
        }
    }

    /// Index of the Cartesian cell containing `point`, if any.
    pub fn cell_containing(&self, point: &Vector3<f64>) -> Option<usize> {
        let CellLayout::Cartesian { centers, cell_size, shape } = &self.layout else {
            return None;
        };
        let x0 = centers[0].x - cell_size.0 / 2.0;
        let y0 = centers[0].y - cell_size.1 / 2.0;
        let fx = (point.x - x0) / cell_size.0;
        let fy = (point.y - y0) / cell_size.1;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        (ix < shape.0 && iy < shape.1).then_some(iy * shape.0 + ix)
    }
}

/// Receiver arrangement an operator was assembled for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorMode {
    Single,
    /// One receiver per panel, blocks stacked vertically.
    Stacked,
    /// One receiver shared by all panels, blocks summed.
    Summed,
}

/// Row and element counts contributed by one panel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockInfo {
    pub id: String,
    pub rows: usize,
    pub elements: usize,
}

/// Where an operator came from: scenario hash and the phase seeds used.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OperatorProvenance {
    pub scenario_hash: Option<String>,
    pub seeds: Vec<u64>,
}

/// Dense linear map from source amplitudes to measurements.
#[derive(Debug, Clone)]
pub struct SensingOperator {
    pub matrix: DMatrix<C64>,
    pub mode: OperatorMode,
    pub blocks: Vec<BlockInfo>,
    pub provenance: OperatorProvenance,
}

impl SensingOperator {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Wraps an arbitrary matrix as a single-block operator.
    pub fn from_matrix(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.is_empty() {
            return Err(invalid("operator", "matrix is empty"));
        }
        if matrix.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(invalid("operator", "matrix has non-finite entries"));
        }
        let blocks = vec![BlockInfo { id: "matrix".into(), rows: matrix.nrows(), elements: matrix.nrows() }];
        Ok(Self { matrix, mode: OperatorMode::Single, blocks, provenance: OperatorProvenance::default() })
    }

    /// Rank ceiling implied by the receiver arrangement and block sizes.
    pub fn rank_bound(&self) -> Result<usize> {
        let t: Vec<usize> = self.blocks.iter().map(|b| b.rows).collect();
        let n: Vec<usize> = self.blocks.iter().map(|b| b.elements).collect();
        let mode = match self.mode {
            OperatorMode::Summed => crate::spectral::RankMode::Shared { measurements: self.rows() },
            _ => crate::spectral::RankMode::Dedicated { measurements: &t },
        };
        crate::spectral::rank_upper_bound(mode, self.cols(), &n)
    }

    /// Fails if the numeric rank exceeds [`SensingOperator::rank_bound`].
    pub fn check_rank_bound(&self, tolerance: f64) -> Result<()> {
        let bound = self.rank_bound()?;
        let report = crate::spectral::spectrum(self, tolerance)?;
        if report.numeric_rank > bound {
            return Err(Error::Numerical {
                rows: self.rows(),
                cols: self.cols(),
                cond: report.condition_number_full,
                reason: format!("numeric rank {} exceeds bound {bound}", report.numeric_rank),
            });
        }
        Ok(())
    }

    pub fn with_provenance(mut self, provenance: OperatorProvenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// The operator with every column scaled to unit norm, plus the original
    /// column norms. Solving against it yields `diag(‖h_m‖)·E`.
    pub fn column_normalized(&self) -> Result<(Self, Vec<f64>)> {
        let norms: Vec<f64> = self.matrix.column_iter().map(|c| c.norm()).collect();
        if let Some(m) = norms.iter().position(|&n| n == 0.0) {
            return Err(invalid("operator", format!("column {m} is identically zero")));
        }
        let mut matrix = self.matrix.clone();
        for (mut col, &n) in matrix.column_iter_mut().zip(&norms) {
            col.unscale_mut(n);
        }
        Ok((Self { matrix, ..self.clone() }, norms))
    }
}

/// `e^{jΩ} · B`, with `e^{jΩ}` real, done as two real products.
fn apply_config(config: &PhaseConfigMatrix, b: &DMatrix<C64>) -> DMatrix<C64> {
    let signs = config.sign_matrix();
    let re = &signs * b.map(|z| z.re);
    let im = &signs * b.map(|z| z.im);
    re.zip_map(&im, C64::new)
}

fn check_config(array: &ElementArray, config: &PhaseConfigMatrix) -> Result<()> {
    if config.cols() != array.element_count() {
        return Err(Error::DimensionMismatch {
            context: "phase configuration columns vs array elements",
            expected: array.element_count(),
            found: config.cols(),
        });
    }
    Ok(())
}

/// `τ · l(r_s) · diag(v_s)` applied on the left of `v`.
fn scale_by_receiver(
    array: &ElementArray,
    receiver: &ReceiverSpec,
    ctx: &WaveContext,
    v: &mut DMatrix<C64>,
) -> Result<()> {
    let gain = array.tau() * path_loss(receiver.distance, ctx)?;
    let vs = steering_vector(array, receiver.angles, ctx);
    for (n, mut row) in v.row_iter_mut().enumerate() {
        row *= gain * vs[n];
    }
    Ok(())
}

/// Single-panel operator `τ · l(r_s) · e^{jΩ} · diag(v_s) · V`.
pub fn single_ris_operator(
    array: &ElementArray,
    config: &PhaseConfigMatrix,
    receiver: &ReceiverSpec,
    incident_angles: &[DirectionAngles],
    ctx: &WaveContext,
) -> Result<SensingOperator> {
    check_config(array, config)?;
    let mut b = incident_phase_matrix(array, incident_angles, ctx)?;
    scale_by_receiver(array, receiver, ctx, &mut b)?;
    Ok(SensingOperator {
        matrix: apply_config(config, &b),
        mode: OperatorMode::Single,
        blocks: vec![BlockInfo { id: array.id().to_string(), rows: config.rows(), elements: array.element_count() }],
        provenance: OperatorProvenance { scenario_hash: None, seeds: config.seed().into_iter().collect() },
    })
}

/// Incident path-loss factor `l(r_i)` for every cell.
///
/// Cartesian cells use their distance to `ris_origin`; angular cells use
/// their stored ranges and ignore `ris_origin`.
pub fn incident_attenuation(scene: &SceneGrid, ris_origin: &Vector3<f64>, ctx: &WaveContext) -> Result<DVector<C64>> {
    match scene.layout() {
        CellLayout::Cartesian { centers, .. } => {
            let mut out = DVector::zeros(centers.len());
            for (m, c) in centers.iter().enumerate() {
                let r = (c - ris_origin).norm();
                if r == 0.0 {
                    return Err(invalid("scene", format!("cell {m} coincides with the panel origin")));
                }
                out[m] = path_loss(r, ctx)?;
            }
            Ok(out)
        }
        CellLayout::Angular { ranges: Some(r), .. } => {
            r.iter().map(|&r| path_loss(r, ctx)).collect::<Result<Vec<_>>>().map(DVector::from_vec)
        }
        CellLayout::Angular { ranges: None, .. } => {
            Err(invalid("scene", "angular scene has no ranges, so incident path loss is undefined"))
        }
    }
}

/// One deployed panel: local-frame array, phase schedule, receiver and pose.
#[derive(Debug, Clone)]
pub struct Panel {
    pub array: ElementArray,
    pub config: PhaseConfigMatrix,
    pub receiver: ReceiverSpec,
    pub pose: Pose,
}

/// `H(Ω_k) · diag(l(r_i))` for one panel against a Cartesian scene.
fn panel_block(panel: &Panel, centers: &[Vector3<f64>], ctx: &WaveContext) -> Result<DMatrix<C64>> {
    check_config(&panel.array, &panel.config)?;
    let mut angles = Vec::with_capacity(centers.len());
    let mut loss = Vec::with_capacity(centers.len());
    for (m, c) in centers.iter().enumerate() {
        let local = panel.pose.to_local(c);
        let r = local.norm();
        if r == 0.0 {
            return Err(invalid("scene", format!("cell {m} coincides with panel {}", panel.array.id())));
        }
        angles.push(DirectionAngles::from_vector(&local)?);
        loss.push(path_loss(r, ctx)?);
    }
    let mut b = incident_phase_matrix(&panel.array, &angles, ctx)?;
    for (m, mut col) in b.column_iter_mut().enumerate() {
        col *= loss[m];
    }
    scale_by_receiver(&panel.array, &panel.receiver, ctx, &mut b)?;
    Ok(apply_config(&panel.config, &b))
}

fn panel_blocks(panels: &[Panel], scene: &SceneGrid, ctx: &WaveContext) -> Result<Vec<DMatrix<C64>>> {
    if panels.is_empty() {
        return Err(invalid("panels", "need at least one panel"));
    }
    let centers = scene.centers().ok_or_else(|| invalid("scene", "multi-panel operators need a Cartesian scene"))?;
    panels.iter().map(|p| panel_block(p, centers, ctx)).collect()
}

fn block_infos(panels: &[Panel]) -> (Vec<BlockInfo>, Vec<u64>) {
    let blocks = panels
        .iter()
        .map(|p| BlockInfo { id: p.array.id().to_string(), rows: p.config.rows(), elements: p.array.element_count() })
        .collect();
    let seeds = panels.iter().filter_map(|p| p.config.seed()).collect();
    (blocks, seeds)
}

/// Dedicated receivers: per-panel blocks stacked vertically.
pub fn multi_ris_stacked_operator(panels: &[Panel], scene: &SceneGrid, ctx: &WaveContext) -> Result<SensingOperator> {
    let parts = panel_blocks(panels, scene, ctx)?;
    let rows: usize = parts.iter().map(|b| b.nrows()).sum();
    let mut matrix = DMatrix::zeros(rows, scene.cell_count());
    let mut offset = 0;
    for b in &parts {
        matrix.rows_mut(offset, b.nrows()).copy_from(b);
        offset += b.nrows();
    }
    let (blocks, seeds) = block_infos(panels);
    Ok(SensingOperator {
        matrix,
        mode: OperatorMode::Stacked,
        blocks,
        provenance: OperatorProvenance { scenario_hash: None, seeds },
    })
}

/// One shared receiver: per-panel blocks summed.
pub fn multi_ris_summed_operator(panels: &[Panel], scene: &SceneGrid, ctx: &WaveContext) -> Result<SensingOperator> {
    if let Some(first) = panels.first() {
        let t = first.config.rows();
        if let Some(p) = panels.iter().find(|p| p.config.rows() != t) {
            return Err(Error::DimensionMismatch {
                context: "summed mode needs equal measurement counts",
                expected: t,
                found: p.config.rows(),
            });
        }
    }
    let parts = panel_blocks(panels, scene, ctx)?;
    let mut matrix = parts[0].clone();
    for b in &parts[1..] {
        matrix += b;
    }
    let (blocks, seeds) = block_infos(panels);
    Ok(SensingOperator {
        matrix,
        mode: OperatorMode::Summed,
        blocks,
        provenance: OperatorProvenance { scenario_hash: None, seeds },
    })
}

/// What the SNR is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseReference {
    /// `σ² = ‖E‖² / SNR`.
    #[default]
    Source,
    /// `σ² = ‖H·E‖² / (T · SNR)`, i.e. per-sample received power over noise.
    Measurement,
}

/// Noise level and reference. An infinite SNR means no noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub snr: f64,
    pub reference: NoiseReference,
    /// Explicit per-entry variance, used instead of the SNR ratio.
    pub variance_override: Option<f64>,
}

impl NoiseModel {
    pub fn source(snr: f64) -> Self {
        Self { snr, reference: NoiseReference::Source, variance_override: None }
    }

    pub fn noiseless() -> Self {
        Self::source(f64::INFINITY)
    }
}

/// Simulated measurement vector with its noise bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub values: DVector<C64>,
    pub snr: f64,
    pub noise_seed: u64,
    pub sigma2: f64,
}

impl MeasurementSet {
    pub fn magnitudes(&self) -> DVector<f64> {
        self.values.map(|z| z.norm())
    }
}

/// `S = H·E + n` with circular Gaussian noise of variance `‖E‖²/snr`.
pub fn simulate_measurements(
    op: &SensingOperator,
    scene: &SceneGrid,
    snr: f64,
    noise_seed: u64,
) -> Result<MeasurementSet> {
    simulate_measurements_with(op, scene.amplitudes(), &NoiseModel::source(snr), noise_seed)
}

/// [`simulate_measurements`] with an explicit noise model.
pub fn simulate_measurements_with(
    op: &SensingOperator,
    amplitudes: &DVector<C64>,
    noise: &NoiseModel,
    noise_seed: u64,
) -> Result<MeasurementSet> {
    if amplitudes.len() != op.cols() {
        return Err(Error::DimensionMismatch {
            context: "scene cells vs operator columns",
            expected: op.cols(),
            found: amplitudes.len(),
        });
    }
    if noise.snr.is_nan() || noise.snr <= 0.0 {
        return Err(invalid("snr", format!("must be positive, got {}", noise.snr)));
    }
    let clean = accurate_product(&op.matrix, amplitudes);
    let sigma2 = match noise.variance_override {
        Some(v) if !(v.is_finite() && v >= 0.0) => {
            return Err(invalid("noise variance", format!("must be finite and non-negative, got {v}")))
        }
        Some(v) => v,
        None if noise.snr.is_infinite() => 0.0,
        None => {
            let power = match noise.reference {
                NoiseReference::Source => amplitudes.norm_squared(),
                NoiseReference::Measurement => clean.norm_squared() / op.rows() as f64,
            };
            if power == 0.0 {
                return Err(invalid("noise variance", "signal power is zero, so an explicit variance is required"));
            }
            power / noise.snr
        }
    };
    let mut values = clean;
    if sigma2 > 0.0 {
        let scale = (sigma2 / 2.0).sqrt();
        let mut rng = seeded_rng(noise_seed);
        for z in values.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *z += C64::new(re, im) * scale;
        }
    }
    Ok(MeasurementSet { values, snr: noise.snr, noise_seed, sigma2 })
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Double-double accumulator.
#[derive(Clone, Copy)]
struct Dd(f64, f64);

impl Dd {
    fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let err = a.mul_add(b, -p);
        let (hi, lo) = two_sum(self.0, p);
        self.0 = hi;
        self.1 += lo + err;
    }

    fn value(self) -> f64 {
        self.0 + self.1
    }
}

/// `s − A·x` with every product and sum carried in double-double.
pub(crate) fn accurate_residual(matrix: &DMatrix<C64>, x: &DVector<C64>, s: &DVector<C64>) -> DVector<C64> {
    let mut re: Vec<Dd> = s.iter().map(|z| Dd(z.re, 0.0)).collect();
    let mut im: Vec<Dd> = s.iter().map(|z| Dd(z.im, 0.0)).collect();
    for (col, xj) in matrix.column_iter().zip(x.iter()) {
        for (i, a) in col.iter().enumerate() {
            re[i].add_product(-a.re, xj.re);
            re[i].add_product(a.im, xj.im);
            im[i].add_product(-a.re, xj.im);
            im[i].add_product(-a.im, xj.re);
        }
    }
    DVector::from_fn(s.len(), |i, _| C64::new(re[i].value(), im[i].value()))
}

/// `A·x` accumulated in double-double and rounded once per entry.
pub fn accurate_product(matrix: &DMatrix<C64>, x: &DVector<C64>) -> DVector<C64> {
    -accurate_residual(matrix, x, &DVector::zeros(matrix.nrows()))
}

fn check_row(array: &ElementArray, config_row: &[f64]) -> Result<()> {
    if config_row.len() != array.element_count() {
        return Err(Error::DimensionMismatch {
            context: "phase row vs array elements",
            expected: array.element_count(),
            found: config_row.len(),
        });
    }
    Ok(())
}

/// Received field with exact element-wise distances (no far-field
/// approximation). `array` positions are in the world frame.
pub fn exact_field_oracle(
    sources: &[(Vector3<f64>, C64)],
    array: &ElementArray,
    config_row: &[f64],
    receiver: &Vector3<f64>,
    ctx: &WaveContext,
) -> Result<C64> {
    check_row(array, config_row)?;
    let mut total = C64::new(0.0, 0.0);
    for (n, p) in array.positions().iter().enumerate() {
        let rs = (receiver - p).norm();
        if rs == 0.0 {
            return Err(invalid("receiver", format!("coincides with element {n}")));
        }
        let out = path_loss(rs, ctx)? * C64::from_polar(1.0, config_row[n]);
        for (m, (s, e)) in sources.iter().enumerate() {
            let ri = (s - p).norm();
            if ri == 0.0 {
                return Err(invalid("source", format!("source {m} coincides with element {n}")));
            }
            total += *e * path_loss(ri, ctx)? * out;
        }
    }
    Ok(total * array.tau())
}

/// Far-field factorised counterpart of [`exact_field_oracle`]: distances and
/// directions are taken from `reference`, element offsets enter only through
/// the steering phases.
pub fn factored_field(
    sources: &[(Vector3<f64>, C64)],
    array: &ElementArray,
    config_row: &[f64],
    receiver: &Vector3<f64>,
    reference: &Vector3<f64>,
    ctx: &WaveContext,
) -> Result<C64> {
    check_row(array, config_row)?;
    let k = ctx.wavenumber();
    let to_rx = receiver - reference;
    let rs = to_rx.norm();
    let us = to_rx / rs;
    let out = path_loss(rs, ctx)?;
    let mut total = C64::new(0.0, 0.0);
    for (s, e) in sources {
        let to_src = s - reference;
        let ri = to_src.norm();
        let ui = to_src / ri;
        let incident = path_loss(ri, ctx)?;
        let array_sum: C64 = array
            .positions()
            .iter()
            .zip(config_row)
            .map(|(p, &omega)| C64::from_polar(1.0, omega + k * (p - reference).dot(&(ui + us))))
            .sum();
        total += *e * incident * array_sum;
    }
    Ok(total * out * array.tau())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::random_phase_config;
    use std::f64::consts::PI;

    fn ctx() -> WaveContext {
        WaveContext::new(5.8e9).unwrap()
    }

    fn unit_tau() -> C64 {
        C64::new(1.0, 0.0)
    }

    #[test]
    fn trivial_single_element_operator() {
        let c = ctx();
        let tau = C64::new(0.3, -0.1);
        let array = ElementArray::uniform_linear("one", 1, 0.01, tau).unwrap();
        let config = PhaseConfigMatrix::zeros(1, 1).unwrap();
        let rx = ReceiverSpec::new(2.5, DirectionAngles::new(0.4, 1.0).unwrap()).unwrap();
        let op = single_ris_operator(&array, &config, &rx, &[DirectionAngles::broadside(0.2).unwrap()], &c).unwrap();
        let expected = tau * path_loss(2.5, &c).unwrap();
        assert!((op.matrix[(0, 0)] - expected).norm() < 1e-15);
    }

    #[test]
    fn zero_config_gives_identical_rows() {
        let c = ctx();
        let array = ElementArray::uniform_linear("ula", 6, 0.026, unit_tau()).unwrap();
        let config = PhaseConfigMatrix::zeros(5, 6).unwrap();
        let rx = ReceiverSpec::on_normal(1.0).unwrap();
        let op = single_ris_operator(&array, &config, &rx, &[DirectionAngles::broadside(0.0).unwrap()], &c).unwrap();
        for t in 1..5 {
            assert_eq!(op.matrix.row(t), op.matrix.row(0));
        }
    }

    #[test]
    fn single_operator_matches_row_evaluation() {
        let c = ctx();
        let tau = C64::new(0.16 * c.wavelength(), 0.0);
        let array = ElementArray::uniform_linear("ula", 9, 0.026, tau).unwrap();
        let config = random_phase_config(7, 9, 3).unwrap();
        let rx = ReceiverSpec::new(1.3, DirectionAngles::broadside(-0.3).unwrap()).unwrap();
        let angles: Vec<_> = [-0.5, 0.1, 0.7].iter().map(|&a| DirectionAngles::broadside(a).unwrap()).collect();
        let op = single_ris_operator(&array, &config, &rx, &angles, &c).unwrap();
        let vs = steering_vector(&array, rx.angles, &c);
        let ls = path_loss(rx.distance, &c).unwrap();
        for t in 0..7 {
            for (m, &a) in angles.iter().enumerate() {
                let vi = steering_vector(&array, a, &c);
                let mut acc = C64::new(0.0, 0.0);
                for n in 0..9 {
                    acc += C64::from_polar(1.0, config.phase(t, n)) * vs[n] * vi[n];
                }
                assert!((op.matrix[(t, m)] - tau * ls * acc).norm() < 1e-12);
            }
        }
        let bad = random_phase_config(7, 8, 3).unwrap();
        assert!(single_ris_operator(&array, &bad, &rx, &angles, &c).is_err());
    }

    #[test]
    fn attenuation_cases() {
        let c = ctx();
        let lam = c.wavelength();
        let one = SceneGrid::angular(vec![0.0], DVector::from_element(1, unit_tau()))
            .unwrap()
            .with_ranges(vec![lam])
            .unwrap();
        let l = incident_attenuation(&one, &Vector3::zeros(), &c).unwrap();
        assert!((l[0] - C64::new(1.0 / lam, 0.0)).norm() < 1e-9 / lam);

        let grid =
            SceneGrid::cartesian(Vector3::zeros(), (2.0, 1.0), (2, 1), DVector::from_element(2, unit_tau())).unwrap();
        let l = incident_attenuation(&grid, &Vector3::new(0.0, 5.0, 0.0), &c).unwrap();
        assert!((l[0].norm() - l[1].norm()).abs() < 1e-15);

        let bare = SceneGrid::angular(vec![0.0], DVector::from_element(1, unit_tau())).unwrap();
        assert!(incident_attenuation(&bare, &Vector3::zeros(), &c).is_err());
        let hit =
            SceneGrid::cartesian(Vector3::zeros(), (1.0, 1.0), (1, 1), DVector::from_element(1, unit_tau())).unwrap();
        assert!(incident_attenuation(&hit, &Vector3::zeros(), &c).is_err());
    }

    #[test]
    fn table_two_attenuation_range() {
        let c = WaveContext::new(20e9).unwrap();
        let grid =
            SceneGrid::cartesian(Vector3::zeros(), (10.0, 10.0), (20, 20), DVector::from_element(400, unit_tau()))
                .unwrap();
        let l = incident_attenuation(&grid, &Vector3::new(0.0, -15.0, 0.0), &c).unwrap();
        let max = l.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let min = l.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        let half_diag = 50f64.sqrt();
        assert!(max <= 1.0 / (15.0 - half_diag));
        assert!(min >= 1.0 / (15.0 + half_diag));
        // Nearest and farthest cell centres sit 0.25 m in from the edges.
        assert!((max - 1.0 / 10.25f64.hypot(0.25)).abs() < 1e-12);
        assert!((min - 1.0 / 19.75f64.hypot(4.75)).abs() < 1e-12);
    }

    #[test]
    fn scene_validation() {
        let one = DVector::from_element(2, unit_tau());
        assert!(SceneGrid::angular(vec![0.1, 0.1], one.clone()).is_err());
        assert!(SceneGrid::angular(vec![0.2, 0.1], one.clone()).is_err());
        assert!(SceneGrid::angular(vec![0.1], one.clone()).is_err());
        assert!(SceneGrid::cartesian(Vector3::zeros(), (1.0, 1.0), (0, 2), one).is_err());
        let g = SceneGrid::cartesian(Vector3::zeros(), (4.0, 2.0), (4, 2), DVector::zeros(8)).unwrap();
        assert_eq!(g.cell_containing(&Vector3::new(1.6, 0.3, 0.0)), Some(4 + 3));
        assert_eq!(g.cell_containing(&Vector3::new(-1.9, -0.9, 0.0)), Some(0));
        assert_eq!(g.cell_containing(&Vector3::new(2.1, 0.0, 0.0)), None);
    }

    fn panel(id: &str, n: usize, t: usize, seed: u64, pose: Pose) -> Panel {
        let c = ctx();
        Panel {
            array: ElementArray::centered_linear(id, n, 0.026, ElementArray::default_tau(&c)).unwrap(),
            config: random_phase_config(t, n, seed).unwrap(),
            receiver: ReceiverSpec::on_normal(1.0).unwrap(),
            pose,
        }
    }

    fn facing(origin: Vector3<f64>) -> Pose {
        let normal = -origin.normalize();
        let axis = Vector3::new(-normal.y, normal.x, 0.0);
        Pose::from_axes(origin, axis, normal).unwrap()
    }

    fn small_scene() -> SceneGrid {
        let m = 12;
        let amps = DVector::from_fn(m, |i, _| C64::new(1.0 + i as f64, 0.5));
        SceneGrid::cartesian(Vector3::zeros(), (3.0, 2.0), (4, 3), amps).unwrap()
    }

    #[test]
    fn stacked_single_panel_matches_single_operator() {
        let c = ctx();
        let scene = small_scene();
        let p = panel("a", 10, 8, 1, facing(Vector3::new(0.0, -12.0, 0.0)));
        let stacked = multi_ris_stacked_operator(std::slice::from_ref(&p), &scene, &c).unwrap();
        let angles: Vec<_> = scene
            .centers()
            .unwrap()
            .iter()
            .map(|x| DirectionAngles::from_vector(&p.pose.to_local(x)).unwrap())
            .collect();
        let single = single_ris_operator(&p.array, &p.config, &p.receiver, &angles, &c).unwrap();
        let l = incident_attenuation(&scene, &p.pose.origin, &c).unwrap();
        let expected = single.matrix * DMatrix::from_diagonal(&l);
        assert!((&stacked.matrix - expected).norm() < 1e-12 * stacked.cols() as f64);
    }

    #[test]
    fn stacked_blocks_and_summed_sum() {
        let c = ctx();
        let scene = small_scene();
        let panels = vec![
            panel("a", 10, 6, 1, facing(Vector3::new(0.0, -12.0, 0.0))),
            panel("b", 7, 6, 2, facing(Vector3::new(12.0, 0.0, 0.0))),
        ];
        let stacked = multi_ris_stacked_operator(&panels, &scene, &c).unwrap();
        assert_eq!(stacked.rows(), 12);
        let summed = multi_ris_summed_operator(&panels, &scene, &c).unwrap();
        let top = stacked.matrix.rows(0, 6).into_owned();
        let bottom = stacked.matrix.rows(6, 6).into_owned();
        assert!((summed.matrix.clone() - top.clone() - bottom).norm() < 1e-14);
        for k in 0..2 {
            let alone = multi_ris_stacked_operator(&panels[k..k + 1], &scene, &c).unwrap();
            assert_eq!(stacked.matrix.rows(6 * k, 6).into_owned(), alone.matrix);
        }

        let mut nulled = panels.clone();
        nulled[1].array = nulled[1].array.clone().with_tau(C64::new(0.0, 0.0));
        let summed_null = multi_ris_summed_operator(&nulled, &scene, &c).unwrap();
        assert!((summed_null.matrix - top).norm() < 1e-15);

        let mut uneven = panels;
        uneven[1].config = random_phase_config(5, 7, 2).unwrap();
        assert!(multi_ris_summed_operator(&uneven, &scene, &c).is_err());
        assert!(multi_ris_stacked_operator(&[], &scene, &c).is_err());
    }

    #[test]
    fn duplicated_panels_do_not_raise_rank() {
        let c = ctx();
        let scene = small_scene();
        let p = panel("a", 5, 4, 9, facing(Vector3::new(0.0, -12.0, 0.0)));
        let single = multi_ris_stacked_operator(std::slice::from_ref(&p), &scene, &c).unwrap();
        let double = multi_ris_stacked_operator(&[p.clone(), p], &scene, &c).unwrap();
        let r1 = crate::spectral::spectrum(&single, 1e-12).unwrap().numeric_rank;
        let r2 = crate::spectral::spectrum(&double, 1e-12).unwrap().numeric_rank;
        assert_eq!(r1, r2);
        double.check_rank_bound(1e-12).unwrap();
    }

    #[test]
    fn accurate_product_survives_cancellation() {
        let row = [C64::new(1e16, -3.0), C64::new(1.0, 1e16), C64::new(-1e16, 0.5)];
        let a = DMatrix::from_row_slice(1, 3, &row);
        let x = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
        let exact = C64::new(1.0, 1e16 - 2.5);
        assert_eq!(accurate_product(&a, &x)[0], exact);
        let i = C64::new(0.0, 1.0);
        let rotated = DVector::from_vec(vec![i, i, i]);
        assert_eq!(accurate_product(&a, &rotated)[0], exact * i);
    }

    #[test]
    fn noiseless_and_pure_noise() {
        let c = ctx();
        let scene = small_scene();
        let p = panel("a", 10, 30, 1, facing(Vector3::new(0.0, -12.0, 0.0)));
        let op = multi_ris_stacked_operator(std::slice::from_ref(&p), &scene, &c).unwrap();
        let clean = simulate_measurements(&op, &scene, f64::INFINITY, 4).unwrap();
        assert_eq!(clean.values, accurate_product(&op.matrix, scene.amplitudes()));
        let naive = &op.matrix * scene.amplitudes();
        assert!((&clean.values - &naive).norm() <= 1e-14 * naive.norm());
        assert_eq!(clean.sigma2, 0.0);

        let zero = DVector::zeros(op.cols());
        assert!(simulate_measurements_with(&op, &zero, &NoiseModel::source(10.0), 1).is_err());
        let model = NoiseModel { variance_override: Some(2.0), ..NoiseModel::source(10.0) };
        let noise = simulate_measurements_with(&op, &zero, &model, 1).unwrap();
        let ratio = noise.values.norm_squared() / (30.0 * 2.0);
        assert!((ratio - 1.0).abs() < 0.5, "ratio {ratio}");
        assert!(simulate_measurements(&op, &scene, 0.0, 1).is_err());
        assert!(simulate_measurements(&op, &scene, -3.0, 1).is_err());
    }

    #[test]
    fn measurement_referenced_noise_level() {
        let c = ctx();
        let scene = small_scene();
        let p = panel("a", 10, 30, 1, facing(Vector3::new(0.0, -12.0, 0.0)));
        let op = multi_ris_stacked_operator(std::slice::from_ref(&p), &scene, &c).unwrap();
        let model = NoiseModel { reference: NoiseReference::Measurement, ..NoiseModel::source(30.0) };
        let s = simulate_measurements_with(&op, scene.amplitudes(), &model, 2).unwrap();
        let signal = (&op.matrix * scene.amplitudes()).norm_squared() / 30.0;
        assert!((s.sigma2 - signal / 30.0).abs() < 1e-12 * signal);
    }

    #[test]
    fn oracle_single_element_and_linearity() {
        let c = ctx();
        let tau = C64::new(0.2, 0.0);
        let array = ElementArray::new("e", vec![Vector3::new(0.1, 0.0, 0.0)], tau).unwrap();
        let src = Vector3::new(1.0, 2.0, 3.0);
        let rx = Vector3::new(-1.0, 0.0, 1.0);
        let e = C64::new(0.5, -0.25);
        let s = exact_field_oracle(&[(src, e)], &array, &[PI], &rx, &c).unwrap();
        let p = array.positions()[0];
        let expected = -tau * e * path_loss((src - p).norm(), &c).unwrap() * path_loss((rx - p).norm(), &c).unwrap();
        assert!((s - expected).norm() < 1e-15);
        let doubled = exact_field_oracle(&[(src, e * 2.0)], &array, &[PI], &rx, &c).unwrap();
        assert!((doubled.norm() - 2.0 * s.norm()).abs() < 1e-15);
        assert!(exact_field_oracle(&[(p, e)], &array, &[0.0], &rx, &c).is_err());
    }

    #[test]
    fn factored_field_matches_operator_row() {
        let c = ctx();
        let tau = ElementArray::default_tau(&c);
        let array = ElementArray::uniform_linear("ula", 8, 0.026, tau).unwrap();
        let config = random_phase_config(3, 8, 5).unwrap();
        let theta_i: f64 = 0.3;
        let theta_s: f64 = -0.2;
        let ri = 40.0;
        let rs = 2.0;
        let src = Vector3::new(theta_i.sin(), 0.0, theta_i.cos()) * ri;
        let rx = Vector3::new(theta_s.sin(), 0.0, theta_s.cos()) * rs;
        let rx_spec = ReceiverSpec::new(rs, DirectionAngles::broadside(theta_s).unwrap()).unwrap();
        let op = single_ris_operator(&array, &config, &rx_spec, &[DirectionAngles::broadside(theta_i).unwrap()], &c)
            .unwrap();
        let li = path_loss(ri, &c).unwrap();
        for t in 0..3 {
            let f =
                factored_field(&[(src, C64::new(1.0, 0.0))], &array, &config.row_phases(t), &rx, &Vector3::zeros(), &c)
                    .unwrap();
            assert!((f - op.matrix[(t, 0)] * li).norm() < 1e-12 * f.norm());
        }
    }

    #[test]
    fn column_normalization_rescales_solution() {
        let m = DMatrix::from_fn(3, 2, |i, j| C64::new((i + 1) as f64 * (j + 2) as f64, i as f64 - j as f64));
        let op = SensingOperator::from_matrix(m.clone()).unwrap();
        let (unit, norms) = op.column_normalized().unwrap();
        for (j, col) in unit.matrix.column_iter().enumerate() {
            assert!((col.norm() - 1.0).abs() < 1e-14);
            assert!((norms[j] - m.column(j).norm()).abs() < 1e-12);
        }
        let e = DVector::from_vec(vec![C64::new(1.0, -1.0), C64::new(0.5, 2.0)]);
        let x = DVector::from_fn(2, |j, _| e[j] * norms[j]);
        assert!((&unit.matrix * x - &m * e).norm() < 1e-12);
        let zero = SensingOperator::from_matrix(DMatrix::zeros(2, 2)).unwrap();
        assert!(zero.column_normalized().is_err());
    }
}
