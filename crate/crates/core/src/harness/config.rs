//! Scenario files: schema, per-experiment presets, layered overrides and
//! validation that reports every problem at once.
//!
//! Resolution order is preset, then the user file, then `--set` style dotted
//! overrides. The known-key schema is the serialised default configuration,
//! so the accepted keys always match the struct fields.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::forward::NoiseReference;
use crate::harness::layout::{LandmarkConvention, Strategy, LANDMARK_LABELS};
use crate::harness::Experiment;
use crate::solvers::{PhaselessInit, PhaselessParams};

/// One schema or semantic violation, tied to a dotted key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

impl ConfigIssue {
    fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: key.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReceiverMode {
    Stacked,
    Summed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrUnit {
    Linear,
    Db,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrReference {
    Source,
    Measurement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitName {
    Spectral,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapName {
    Blocks,
    Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveSection {
    /// Hz.
    pub frequency: f64,
}

impl Default for WaveSection {
    fn default() -> Self {
        Self { frequency: 20e9 }
    }
}

/// Where the grid nodes sit inside the RoI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridSampling {
    /// Nodes at the centres of `extent / cells` pixels.
    Centers,
    /// Outermost nodes on the RoI boundary, pitch `extent / (cells − 1)`.
    Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiSection {
    /// Width and height, meters.
    pub extent: [f64; 2],
    pub cells: [usize; 2],
    pub center: [f64; 2],
    pub sampling: GridSampling,
    pub map: MapName,
    /// Source position for the `point` map, meters.
    pub point: [f64; 2],
}

impl Default for RoiSection {
    fn default() -> Self {
        Self {
            extent: [10.0, 10.0],
            cells: [20, 20],
            center: [0.0, 0.0],
            sampling: GridSampling::Span,
            map: MapName::Blocks,
            point: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutSection {
    /// Landmark circle radius, meters.
    pub distance: f64,
    pub landmarks: Vec<String>,
    pub first_bearing_deg: f64,
    pub spacing_deg: f64,
}

impl Default for LayoutSection {
    fn default() -> Self {
        let c = LandmarkConvention::default();
        Self {
            distance: 15.0,
            landmarks: ["A", "C", "E", "G"].map(String::from).to_vec(),
            first_bearing_deg: c.first_bearing_deg,
            spacing_deg: c.spacing_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RisSection {
    /// Elements per panel.
    pub elements: usize,
    /// Measurements per panel.
    pub measurements: usize,
    /// Element spacing, meters.
    pub spacing: f64,
    /// `τ` in wavelengths.
    pub tau_scale: f64,
    pub receiver_distance: f64,
}

impl Default for RisSection {
    fn default() -> Self {
        Self { elements: 110, measurements: 110, spacing: 0.015, tau_scale: 0.16, receiver_distance: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    pub strategies: Vec<Strategy>,
    pub total_elements: usize,
    pub total_measurements: usize,
}

impl Default for TopologySection {
    fn default() -> Self {
        Self { strategies: Strategy::ALL.to_vec(), total_elements: 540, total_measurements: 540 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoSourceSection {
    pub elements: usize,
    pub measurements: usize,
    pub spacing: f64,
    pub theta_i_deg: f64,
    /// Cross-range separation, meters.
    pub delta_cr: f64,
    pub source_distance: f64,
    pub receiver_distance: f64,
    pub tau_scale: f64,
}

impl Default for TwoSourceSection {
    fn default() -> Self {
        Self {
            elements: 160,
            measurements: 500,
            spacing: 0.026,
            theta_i_deg: 0.0,
            delta_cr: 0.02,
            source_distance: 6.0,
            receiver_distance: 1.0,
            tau_scale: 0.16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrototypeSection {
    pub elements: usize,
    pub measurements: usize,
    pub spacing: f64,
    /// Distance between the two panel centres, meters.
    pub separation: f64,
    pub source: [f64; 2],
    pub roi_center: [f64; 2],
    pub roi_extent: [f64; 2],
    pub roi_cells: [usize; 2],
    /// Direction of the source as seen by each panel, degrees from normal.
    pub left_doa_deg: f64,
    pub right_doa_deg: f64,
    pub grid_min_deg: f64,
    pub grid_max_deg: f64,
    pub grid_step_deg: f64,
    /// Independent localization runs.
    pub runs: usize,
    pub receiver_distance: f64,
    /// Receiver direction from each panel, degrees from the normal.
    pub receiver_angle_deg: f64,
    /// Localize on the unit-column operator, so the map shows each cell's
    /// amplitude times its column gain.
    pub gain_equalized: bool,
    /// Replace each phaseless estimate by its sparsest conjugate twin.
    pub resolve_twin: bool,
}

impl Default for PrototypeSection {
    fn default() -> Self {
        Self {
            elements: 16,
            measurements: 500,
            spacing: 0.025,
            separation: 2.81,
            source: [0.0, 6.0],
            roi_center: [0.5, 6.5],
            roi_extent: [12.0, 12.0],
            roi_cells: [12, 12],
            left_doa_deg: -8.5,
            right_doa_deg: -13.25,
            grid_min_deg: -60.0,
            grid_max_deg: 60.0,
            grid_step_deg: 0.25,
            runs: 20,
            receiver_distance: 1.0,
            receiver_angle_deg: 40.0,
            gain_equalized: true,
            resolve_twin: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub max_iterations: usize,
    /// Step is `step_scale / σ_max(H)²`.
    pub step_scale: f64,
    pub reweight_epsilon: f64,
    pub stop_tolerance: f64,
    pub init: InitName,
}

impl Default for SolverSection {
    fn default() -> Self {
        let p = PhaselessParams::default();
        Self {
            max_iterations: p.max_iterations,
            step_scale: 0.5,
            reweight_epsilon: p.reweight_epsilon,
            stop_tolerance: p.stop_tolerance,
            init: InitName::Spectral,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Swept parameter, or `"none"`.
    pub param: String,
    pub values: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { param: "none".into(), values: Vec::new() }
    }
}

/// Complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub trials: usize,
    pub master_seed: u64,
    pub mode: ReceiverMode,
    /// Linear ratio or dB per `snr_unit`; `inf` disables noise.
    pub snr: f64,
    pub snr_unit: SnrUnit,
    pub snr_reference: SnrReference,
    pub rank_tolerance: f64,
    /// Check every assembled operator against its rank ceiling.
    pub validate_rank: bool,
    pub wave: WaveSection,
    pub roi: RoiSection,
    pub layout: LayoutSection,
    pub ris: RisSection,
    pub topology: TopologySection,
    pub two_source: TwoSourceSection,
    pub prototype: PrototypeSection,
    pub solver: SolverSection,
    pub sweep: SweepSection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            trials: 1,
            master_seed: 2024,
            mode: ReceiverMode::Stacked,
            snr: f64::INFINITY,
            snr_unit: SnrUnit::Linear,
            snr_reference: SnrReference::Source,
            rank_tolerance: 1e-12,
            validate_rank: false,
            wave: WaveSection::default(),
            roi: RoiSection::default(),
            layout: LayoutSection::default(),
            ris: RisSection::default(),
            topology: TopologySection::default(),
            two_source: TwoSourceSection::default(),
            prototype: PrototypeSection::default(),
            solver: SolverSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

/// Sweep parameters accepted by each experiment.
pub fn sweep_params(experiment: Experiment) -> &'static [&'static str] {
    match experiment {
        Experiment::BoundSweep => &["elements", "measurements", "spacing", "delta_cr", "theta_i", "snr"],
        Experiment::RankSweep => &["elements", "measurements"],
        Experiment::Distance => &["distance"],
        Experiment::Topology | Experiment::Prototype => &[],
    }
}

impl ScenarioConfig {
    /// Defaults tuned for one experiment.
    pub fn preset(experiment: Experiment) -> Self {
        let base = Self::default();
        match experiment {
            Experiment::BoundSweep => Self {
                trials: 500,
                snr: 2000.0,
                wave: WaveSection { frequency: 5.8e9 },
                sweep: SweepSection { param: "snr".into(), values: vec![500.0, 1000.0, 2000.0, 4000.0, 8000.0] },
                ..base
            },
            Experiment::RankSweep => Self {
                sweep: SweepSection { param: "measurements".into(), values: vec![50.0, 70.0, 90.0, 110.0] },
                ..base
            },
            Experiment::Topology => Self { trials: 20, snr: 30.0, snr_reference: SnrReference::Measurement, ..base },
            Experiment::Distance => Self {
                trials: 20,
                snr: 30.0,
                snr_reference: SnrReference::Measurement,
                sweep: SweepSection { param: "distance".into(), values: vec![10.0, 15.0, 20.0, 25.0] },
                ..base
            },
            Experiment::Prototype => Self { wave: WaveSection { frequency: 5.8e9 }, ..base },
        }
    }

    /// Linear SNR after applying `snr_unit`.
    pub fn linear_snr(&self) -> f64 {
        match self.snr_unit {
            SnrUnit::Linear => self.snr,
            SnrUnit::Db => 10f64.powf(self.snr / 10.0),
        }
    }

    pub fn noise_reference(&self) -> NoiseReference {
        match self.snr_reference {
            SnrReference::Source => NoiseReference::Source,
            SnrReference::Measurement => NoiseReference::Measurement,
        }
    }

    pub fn landmark_convention(&self) -> LandmarkConvention {
        LandmarkConvention { first_bearing_deg: self.layout.first_bearing_deg, spacing_deg: self.layout.spacing_deg }
    }

    pub fn landmark_labels(&self) -> Vec<char> {
        self.layout.landmarks.iter().filter_map(|s| s.chars().next()).collect()
    }

    /// Solver parameters for a given operator scale and seed.
    pub fn phaseless_params(&self, sigma_max: f64, seed: u64) -> PhaselessParams {
        PhaselessParams {
            max_iterations: self.solver.max_iterations,
            step_size: Some(self.solver.step_scale / (sigma_max * sigma_max)),
            reweight_epsilon: self.solver.reweight_epsilon,
            init: match self.solver.init {
                InitName::Spectral => PhaselessInit::Spectral,
                InitName::Random => PhaselessInit::Random,
            },
            stop_tolerance: self.solver.stop_tolerance,
            seed,
        }
    }

    /// Canonical TOML text of the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serialises")
    }

    /// SHA-256 of [`ScenarioConfig::to_toml`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Semantic checks; every violation is collected.
    pub fn validate(&self, experiment: Option<Experiment>) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let mut check = |ok: bool, key: &str, msg: &str| {
            if !ok {
                issues.push(ConfigIssue::new(key, msg));
            }
        };
        let pos = |v: f64| v.is_finite() && v > 0.0;

        check(self.trials >= 1, "trials", "must be at least 1");
        check(pos(self.rank_tolerance), "rank_tolerance", "must be positive and finite");
        match self.snr_unit {
            SnrUnit::Linear => check(self.snr > 0.0, "snr", "linear SNR must be positive (inf allowed)"),
            SnrUnit::Db => {
                check(!self.snr.is_nan() && self.snr != f64::NEG_INFINITY, "snr", "dB SNR must be a number or inf")
            }
        }
        check(pos(self.wave.frequency), "wave.frequency", "must be positive and finite");

        check(self.roi.extent.iter().all(|&v| pos(v)), "roi.extent", "both sides must be positive");
        check(self.roi.cells.iter().all(|&c| c >= 1), "roi.cells", "need at least one cell per axis");
        check(
            self.roi.sampling == GridSampling::Centers || self.roi.cells.iter().all(|&c| c >= 2),
            "roi.sampling",
            "span sampling needs at least two nodes per axis",
        );
        check(self.roi.center.iter().all(|v| v.is_finite()), "roi.center", "must be finite");
        check(self.roi.point.iter().all(|v| v.is_finite()), "roi.point", "must be finite");

        check(pos(self.layout.distance), "layout.distance", "must be positive and finite");
        check(self.layout.first_bearing_deg.is_finite(), "layout.first_bearing_deg", "must be finite");
        check(self.layout.spacing_deg.is_finite(), "layout.spacing_deg", "must be finite");
        check(!self.layout.landmarks.is_empty(), "layout.landmarks", "select at least one landmark");
        let labels_ok = self
            .layout
            .landmarks
            .iter()
            .all(|l| l.chars().count() == 1 && LANDMARK_LABELS.contains(&l.chars().next().unwrap_or('?')));
        check(labels_ok, "layout.landmarks", "labels must be single letters A..H");
        let mut sorted = self.layout.landmarks.clone();
        sorted.sort();
        sorted.dedup();
        check(sorted.len() == self.layout.landmarks.len(), "layout.landmarks", "labels must be distinct");

        check(self.ris.elements >= 1, "ris.elements", "must be at least 1");
        check(self.ris.measurements >= 1, "ris.measurements", "must be at least 1");
        check(pos(self.ris.spacing), "ris.spacing", "must be positive and finite");
        check(self.ris.tau_scale.is_finite(), "ris.tau_scale", "must be finite");
        check(pos(self.ris.receiver_distance), "ris.receiver_distance", "must be positive and finite");

        check(!self.topology.strategies.is_empty(), "topology.strategies", "select at least one strategy");
        let most_panels = self.topology.strategies.iter().map(|s| s.landmarks().len()).max().unwrap_or(1);
        check(self.topology.total_elements >= most_panels, "topology.total_elements", "fewer elements than panels");
        check(
            self.topology.total_measurements >= most_panels,
            "topology.total_measurements",
            "fewer measurements than panels",
        );

        let ts = &self.two_source;
        check(ts.elements >= 2, "two_source.elements", "need at least two elements");
        check(ts.measurements > ts.elements, "two_source.measurements", "must exceed two_source.elements");
        check(pos(ts.spacing), "two_source.spacing", "must be positive and finite");
        check(
            ts.theta_i_deg.is_finite() && ts.theta_i_deg.abs() < 90.0,
            "two_source.theta_i_deg",
            "must lie strictly within (-90, 90)",
        );
        check(ts.delta_cr.is_finite() && ts.delta_cr != 0.0, "two_source.delta_cr", "must be finite and non-zero");
        check(pos(ts.source_distance), "two_source.source_distance", "must be positive and finite");
        check(pos(ts.receiver_distance), "two_source.receiver_distance", "must be positive and finite");
        check(pos(ts.tau_scale), "two_source.tau_scale", "must be positive and finite");

        let p = &self.prototype;
        check(p.elements >= 1, "prototype.elements", "must be at least 1");
        check(p.measurements >= 1, "prototype.measurements", "must be at least 1");
        check(pos(p.spacing), "prototype.spacing", "must be positive and finite");
        check(pos(p.separation), "prototype.separation", "must be positive and finite");
        check(
            p.source.iter().chain(&p.roi_center).all(|v| v.is_finite()),
            "prototype.source",
            "coordinates must be finite",
        );
        check(p.roi_extent.iter().all(|&v| pos(v)), "prototype.roi_extent", "both sides must be positive");
        check(p.roi_cells.iter().all(|&c| c >= 1), "prototype.roi_cells", "need at least one cell per axis");
        check(
            p.left_doa_deg.abs() < 90.0 && p.right_doa_deg.abs() < 90.0,
            "prototype.left_doa_deg",
            "DoA must lie within (-90, 90)",
        );
        check(pos(p.grid_step_deg), "prototype.grid_step_deg", "must be positive and finite");
        check(
            p.grid_min_deg.is_finite()
                && p.grid_max_deg.is_finite()
                && p.grid_min_deg < p.grid_max_deg
                && p.grid_min_deg >= -90.0
                && p.grid_max_deg <= 90.0,
            "prototype.grid_min_deg",
            "grid must be an increasing range inside [-90, 90]",
        );
        check(p.runs >= 1, "prototype.runs", "must be at least 1");
        check(pos(p.receiver_distance), "prototype.receiver_distance", "must be positive and finite");
        check(p.receiver_angle_deg.abs() < 90.0, "prototype.receiver_angle_deg", "must lie within (-90, 90)");

        let s = &self.solver;
        check(s.max_iterations >= 1, "solver.max_iterations", "must be at least 1");
        check(pos(s.step_scale), "solver.step_scale", "must be positive and finite");
        check(
            s.reweight_epsilon.is_finite() && s.reweight_epsilon >= 0.0,
            "solver.reweight_epsilon",
            "must be finite and non-negative",
        );
        check(pos(s.stop_tolerance), "solver.stop_tolerance", "must be positive and finite");

        if self.sweep.param != "none" {
            check(!self.sweep.values.is_empty(), "sweep.values", "a sweep needs at least one value");
            check(
                self.sweep.values.iter().all(|v| v.is_finite() || *v == f64::INFINITY),
                "sweep.values",
                "values must be numbers",
            );
        }
        if let Some(exp) = experiment {
            let allowed = sweep_params(exp);
            let ok = if allowed.is_empty() {
                self.sweep.param == "none"
            } else {
                allowed.contains(&self.sweep.param.as_str())
            };
            if !ok {
                let msg = if allowed.is_empty() {
                    format!("{} takes no sweep; use \"none\"", exp.name())
                } else {
                    format!("{} sweeps one of {}", exp.name(), allowed.join(", "))
                };
                issues.push(ConfigIssue::new("sweep.param", msg));
            }
            let counts = matches!(self.sweep.param.as_str(), "elements" | "measurements");
            if counts && self.sweep.values.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
                issues.push(ConfigIssue::new("sweep.values", "counts must be positive integers"));
            }
            if exp == Experiment::Distance && self.sweep.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                issues.push(ConfigIssue::new("sweep.values", "distances must be positive"));
            }
        }
        issues
    }
}

/// Schema tree: the serialised default configuration.
fn schema() -> Table {
    Table::try_from(ScenarioConfig::default()).expect("default configuration serialises to a table")
}

fn unknown_keys(user: &Table, schema: &Table, prefix: &str, issues: &mut Vec<ConfigIssue>) {
    for (key, value) in user {
        let path = join(prefix, key);
        match schema.get(key) {
            None => issues.push(ConfigIssue::new(path, "unknown key")),
            Some(Value::Table(sub)) => match value {
                Value::Table(user_sub) => unknown_keys(user_sub, sub, &path, issues),
                other => issues.push(ConfigIssue::new(path, format!("expected a table, found {}", other.type_str()))),
            },
            Some(_) => {}
        }
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn leaves(table: &Table, prefix: &str, out: &mut Vec<(String, Value)>) {
    for (key, value) in table {
        let path = join(prefix, key);
        match value {
            Value::Table(sub) => leaves(sub, &path, out),
            other => out.push((path, other.clone())),
        }
    }
}

/// Writes `value` at a dotted path, creating intermediate tables.
fn set_path(table: &mut Table, path: &str, value: Value) -> std::result::Result<(), String> {
    let mut parts = path.split('.').peekable();
    let mut cur = table;
    while let Some(part) = parts.next() {
        if part.is_empty() {
            return Err("empty path segment".into());
        }
        if parts.peek().is_none() {
            cur.insert(part.to_string(), value);
            return Ok(());
        }
        let entry = cur.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            other => return Err(format!("{part} is a {}, not a table", other.type_str())),
        };
    }
    Err("empty key".into())
}

fn merge(base: &mut Table, overlay: Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn first_line(e: &impl fmt::Display) -> String {
    let text = e.to_string();
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    lines
        .find(|l| !l.starts_with("TOML parse error") && !l.trim_start().starts_with('|'))
        .unwrap_or(&text)
        .trim()
        .to_string()
}

/// Parses a `KEY=VALUE` override. The value is read as a TOML literal and
/// falls back to a bare string.
pub fn parse_override(spec: &str) -> std::result::Result<(String, Value), ConfigIssue> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigIssue::new(spec, "override must look like KEY=VALUE"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigIssue::new(spec, "override key is empty"));
    }
    let raw = raw.trim();
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Builds a configuration from a preset, an optional TOML document and
/// dotted overrides. All problems are returned together.
pub fn resolve(
    experiment: Option<Experiment>,
    document: Option<&str>,
    overrides: &[(String, Value)],
) -> std::result::Result<ScenarioConfig, Vec<ConfigIssue>> {
    let mut issues = Vec::new();
    let mut user = match document.map(toml::from_str::<Table>) {
        None => Table::new(),
        Some(Ok(t)) => t,
        Some(Err(e)) => return Err(vec![ConfigIssue::new("<file>", format!("not valid TOML: {}", first_line(&e)))]),
    };
    for (key, value) in overrides {
        if let Err(msg) = set_path(&mut user, key, value.clone()) {
            issues.push(ConfigIssue::new(key.clone(), msg));
        }
    }

    let schema = schema();
    unknown_keys(&user, &schema, "", &mut issues);

    let mut user_leaves = Vec::new();
    leaves(&user, "", &mut user_leaves);
    for (path, value) in &user_leaves {
        if issues.iter().any(|i| path.starts_with(&i.key)) {
            continue;
        }
        let mut probe = schema.clone();
        if let Err(msg) = set_path(&mut probe, path, value.clone()) {
            issues.push(ConfigIssue::new(path.clone(), msg));
        } else if let Err(e) = ScenarioConfig::deserialize(Value::Table(probe)) {
            issues.push(ConfigIssue::new(path.clone(), first_line(&e)));
        }
    }
    if !issues.is_empty() {
        return Err(issues);
    }

    let preset = experiment.map(ScenarioConfig::preset).unwrap_or_default();
    let mut merged = Table::try_from(preset).expect("preset serialises");
    merge(&mut merged, user);
    let config = ScenarioConfig::deserialize(Value::Table(merged))
        .map_err(|e| vec![ConfigIssue::new("<config>", first_line(&e))])?;
    let semantic = config.validate(experiment);
    if semantic.is_empty() {
        Ok(config)
    } else {
        Err(semantic)
    }
}

/// Reads and resolves a scenario file.
pub fn load(path: &Path, experiment: Option<Experiment>, overrides: &[(String, Value)]) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    resolve(experiment, Some(&text), overrides).map_err(Error::Config)
}

/// Checks a scenario file without running anything.
pub fn validate_config(path: &Path) -> Result<ScenarioConfig> {
    load(path, None, &[])
}
