//! Landmark geometry, deployment strategies, ground-truth maps and panel
//! construction for the multi-panel studies.

use nalgebra::{DVector, Vector3};

use crate::em::{random_phase_config, ElementArray, Pose, WaveContext};
use crate::error::{ensure_finite, ensure_positive, invalid, Result};
use crate::forward::{Panel, ReceiverSpec};
use crate::harness::seeds::panel_seed;
use crate::C64;

pub const LANDMARK_LABELS: [char; 8] = ['A', 'B', 'C', 'D', 'E', 'F', 'G', 'H'];

/// Bearing of landmark `A` and the step between consecutive labels.
///
/// The default puts the eight landmarks on a 157.5° arc centred on the
/// RoI's south side (`−90°`), labelled counterclockwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkConvention {
    pub first_bearing_deg: f64,
    pub spacing_deg: f64,
}

impl Default for LandmarkConvention {
    fn default() -> Self {
        Self { first_bearing_deg: -168.75, spacing_deg: 22.5 }
    }
}

/// A candidate panel site on the circle around the RoI.
#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub label: char,
    /// Radians, counterclockwise from world `+x`, seen from the RoI centre.
    pub bearing: f64,
    pub pose: Pose,
}

/// Eight landmarks at distance `distance` from `roi_center`, default
/// convention.
pub fn landmark_layout(distance: f64, roi_center: Vector3<f64>) -> Result<Vec<Landmark>> {
    landmark_layout_with(distance, roi_center, &LandmarkConvention::default())
}

/// Eight landmarks on a circle, each panel tangent to it and facing the
/// centre. Panel local `x` runs along the tangent, local `z` points inward.
pub fn landmark_layout_with(
    distance: f64,
    roi_center: Vector3<f64>,
    convention: &LandmarkConvention,
) -> Result<Vec<Landmark>> {
    ensure_positive("landmark distance", distance)?;
    ensure_finite("first bearing", convention.first_bearing_deg)?;
    ensure_finite("bearing spacing", convention.spacing_deg)?;
    LANDMARK_LABELS
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let bearing = (convention.first_bearing_deg + i as f64 * convention.spacing_deg).to_radians();
            let (s, c) = bearing.sin_cos();
            let outward = Vector3::new(c, s, 0.0);
            let pose = Pose::from_axes(roi_center + outward * distance, Vector3::new(-s, c, 0.0), -outward)?;
            Ok(Landmark { label, bearing, pose })
        })
        .collect()
}

/// Landmark selections compared in the topology study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Strategy {
    I,
    II,
    III,
    IV,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::I, Strategy::II, Strategy::III, Strategy::IV];

    pub fn landmarks(self) -> &'static [char] {
        match self {
            Strategy::I => &['A'],
            Strategy::II => &['A', 'E'],
            Strategy::III => &['A', 'C', 'E', 'G'],
            Strategy::IV => &LANDMARK_LABELS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::I => "I",
            Strategy::II => "II",
            Strategy::III => "III",
            Strategy::IV => "IV",
        }
    }

    pub fn ordinal(self) -> usize {
        self as usize + 1
    }
}

/// Splits `total` into `parts` near-equal shares, extra units going to the
/// first shares.
pub fn split_evenly(total: usize, parts: usize) -> Result<Vec<usize>> {
    if parts == 0 {
        return Err(invalid("split", "need at least one part"));
    }
    if total < parts {
        return Err(invalid("split", format!("{total} cannot be shared by {parts} panels")));
    }
    let base = total / parts;
    let extra = total % parts;
    Ok((0..parts).map(|i| base + usize::from(i < extra)).collect())
}

/// Synthetic source maps on a Cartesian grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthMap {
    /// Three rectangles of different strength.
    Blocks,
    /// One unit source at a given cell.
    Point(usize),
}

const BLOCKS: [(f64, f64, f64, f64, f64); 3] =
    [(0.15, 0.40, 0.55, 0.85, 1.0), (0.55, 0.85, 0.20, 0.35, 0.7), (0.60, 0.70, 0.45, 0.80, 0.5)];

/// Real, non-negative amplitudes for an `nx × ny` grid (`iy·nx + ix`).
pub fn truth_amplitudes(map: TruthMap, shape: (usize, usize)) -> Result<DVector<C64>> {
    let (nx, ny) = shape;
    let m = nx * ny;
    match map {
        TruthMap::Point(i) if i >= m => Err(invalid("point source", format!("cell {i} outside {m} cells"))),
        TruthMap::Point(i) => Ok(DVector::from_fn(m, |j, _| C64::new(f64::from(u8::from(j == i)), 0.0))),
        TruthMap::Blocks => {
            let amps = DVector::from_fn(m, |j, _| {
                let fx = ((j % nx) as f64 + 0.5) / nx as f64;
                let fy = ((j / nx) as f64 + 0.5) / ny as f64;
                let a = BLOCKS
                    .iter()
                    .filter(|&&(x0, x1, y0, y1, _)| (x0..x1).contains(&fx) && (y0..y1).contains(&fy))
                    .map(|b| b.4)
                    .fold(0.0, f64::max);
                C64::new(a, 0.0)
            });
            if amps.iter().all(|z| z.re == 0.0) {
                return Err(invalid("roi cells", "grid too coarse for the block map"));
            }
            Ok(amps)
        }
    }
}

/// Per-panel build parameters for [`build_panels`].
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSpec {
    pub label: char,
    pub elements: usize,
    pub measurements: usize,
}

/// Uniform linear panels at the chosen landmarks with trial-seeded phases.
///
/// Panel `k` of the selection draws its schedule from
/// [`panel_seed`]`(master, trial, k)`, so the same trial index reproduces the
/// same schedules whatever else is swept.
#[allow(clippy::too_many_arguments)]
pub fn build_panels(
    landmarks: &[Landmark],
    specs: &[PanelSpec],
    spacing: f64,
    tau: C64,
    receiver_distance: f64,
    master_seed: u64,
    trial: u64,
) -> Result<Vec<Panel>> {
    specs
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let site = landmarks
                .iter()
                .find(|l| l.label == spec.label)
                .ok_or_else(|| invalid("landmark", format!("unknown label {}", spec.label)))?;
            let array = ElementArray::centered_linear(spec.label.to_string(), spec.elements, spacing, tau)?;
            let seed = panel_seed(master_seed, trial, k as u64);
            Ok(Panel {
                array,
                config: random_phase_config(spec.measurements, spec.elements, seed)?,
                receiver: ReceiverSpec::on_normal(receiver_distance)?,
                pose: site.pose.clone(),
            })
        })
        .collect()
}

/// `|τ|` default scaled by `tau_scale` wavelengths.
pub fn scaled_tau(ctx: &WaveContext, tau_scale: f64) -> C64 {
    C64::new(tau_scale * ctx.wavelength(), 0.0)
}
