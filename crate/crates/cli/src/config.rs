//! Scenario configuration: JSON schema types, parsing with field diagnostics,
//! semantic validation and conversion into internal units.

use std::fmt;

use nalgebra::Vector3;
use qpp_dbm::dbm::{CouplingKind, Emitter, DEFAULT_RANK_TOLERANCE};
use qpp_dbm::medium::{build_voxel_medium, Geometry, Location, LorentzTerm, PermittivityModel, VoxelMedium};
use qpp_dbm::modegrid::FrequencyRule;
use qpp_dbm::units::{Dimension, UnitSystem};
use qpp_dbm::Point;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub units: UnitsBlock,
    /// Omitted for free space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub medium: Option<MediumBlock>,
    pub emitters: Vec<EmitterBlock>,
    pub grids: GridsBlock,
    #[serde(default)]
    pub dbm: DbmBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsBlock>,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "system", rename_all = "snake_case", deny_unknown_fields)]
pub enum UnitsBlock {
    #[default]
    Natural,
    /// Lengths in metres, frequencies in rad/s, dipoles in C*m.
    /// `length_scale` (metres) sets the internal length unit.
    Si { length_scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumBlock {
    pub geometry: Geometry,
    pub material: PermittivityModel,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Keep the geometry but switch the material off (eps = 1).
    #[serde(default)]
    pub uncoupled: bool,
}

fn default_resolution() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterBlock {
    pub position: [f64; 3],
    pub dipole: [f64; 3],
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsBlock {
    pub window: [f64; 2],
    #[serde(default = "one")]
    pub panels: usize,
    pub order: usize,
    pub angular_order: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbmBlock {
    #[serde(default = "default_kind")]
    pub kind: CouplingKind,
    #[serde(default = "default_tau")]
    pub rank_tolerance: f64,
}

fn default_kind() -> CouplingKind {
    CouplingKind::Hybrid
}

fn default_tau() -> f64 {
    DEFAULT_RANK_TOLERANCE
}

impl Default for DbmBlock {
    fn default() -> Self {
        Self { kind: default_kind(), rank_tolerance: default_tau() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// Emitter amplitudes, normalized on use.
    Emitters(Vec<f64>),
    /// Bright photon `index` of the hybrid basis at frequency node `node`.
    BrightPhoton { node: usize, index: usize },
    /// Raw mode `mode` at node `node` with its bright component removed.
    DarkPhoton { node: usize, mode: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsBlock {
    pub initial: InitialState,
    pub horizon: f64,
    pub nodes: usize,
    /// Also propagate the full and double-bright models and report deviations.
    #[serde(default = "yes")]
    pub compare: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_dir() -> String {
    "results".into()
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv]
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: default_dir(), formats: default_formats() }
    }
}

/// One schema or cross-reference violation.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub field: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), line: None, column: None, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, "line {l}, column {c}: ")?;
        }
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Parses a config document, reporting the failing field path and position.
pub fn parse(text: &str) -> Result<ScenarioConfig, Diagnostic> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Diagnostic {
            field: if path == "." { "<root>".into() } else { path },
            line: Some(inner.line()),
            column: Some(inner.column()),
            message: strip_position(&inner.to_string()),
        }
    })
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// Everything a run needs, in internal units.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub units: UnitSystem,
    pub medium: VoxelMedium,
    pub emitters: Vec<Emitter>,
    pub window: (f64, f64),
    pub rule: FrequencyRule,
    pub angular_order: usize,
    pub kind: CouplingKind,
    pub rank_tolerance: f64,
    pub dynamics: Option<DynamicsSpec>,
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsSpec {
    pub initial: InitialState,
    pub times: Vec<f64>,
    pub compare: bool,
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl ScenarioConfig {
    pub fn unit_system(&self) -> UnitSystem {
        match self.units {
            UnitsBlock::Natural => UnitSystem::Natural,
            UnitsBlock::Si { length_scale } => UnitSystem::Si { length_scale },
        }
    }

    /// Checks every field and cross-reference and converts to internal units.
    /// No numerical work beyond voxelization happens here.
    pub fn resolve(&self) -> Result<Scenario, Vec<Diagnostic>> {
        let mut diags = Vec::new();
        if let UnitsBlock::Si { length_scale } = self.units {
            if !(length_scale > 0.0 && length_scale.is_finite()) {
                diags.push(Diagnostic::field("units.length_scale", format!("must be positive, got {length_scale}")));
                return Err(diags);
            }
        }
        let u = self.unit_system();
        let len = |v: f64| u.to_internal(v, Dimension::Length);
        let freq = |v: f64| u.to_internal(v, Dimension::Frequency);

        let g = &self.grids;
        let window = (freq(g.window[0]), freq(g.window[1]));
        if !finite(&g.window) || !(g.window[0] > 0.0 && g.window[1] > g.window[0]) {
            diags.push(Diagnostic::field("grids.window", format!("need 0 < lo < hi, got {:?}", g.window)));
        }
        if g.panels == 0 {
            diags.push(Diagnostic::field("grids.panels", "must be at least 1"));
        }
        if g.order == 0 {
            diags.push(Diagnostic::field("grids.order", "must be at least 1"));
        }
        if g.angular_order == 0 {
            diags.push(Diagnostic::field("grids.angular_order", "must be at least 1"));
        }

        let medium = match &self.medium {
            None => Some(VoxelMedium::empty()),
            Some(m) => self.resolve_medium(m, u, window, &mut diags),
        };

        if self.emitters.is_empty() {
            diags.push(Diagnostic::field("emitters", "at least one emitter is required"));
        }
        let mut emitters = Vec::with_capacity(self.emitters.len());
        for (i, e) in self.emitters.iter().enumerate() {
            let f = |name: &str| format!("emitters[{i}].{name}");
            if !finite(&e.position) {
                diags.push(Diagnostic::field(f("position"), "must be finite"));
            }
            if !finite(&e.dipole) || e.dipole.iter().all(|&d| d == 0.0) {
                diags.push(Diagnostic::field(f("dipole"), "must be nonzero and finite"));
            }
            if !(e.frequency >= g.window[0] && e.frequency <= g.window[1]) {
                diags.push(Diagnostic::field(
                    f("frequency"),
                    format!("transition frequency {} outside grids.window [{}, {}]", e.frequency, g.window[0], g.window[1]),
                ));
            }
            let pos = Point::from(e.position.map(len));
            if let Some(m) = &medium {
                if let Location::Center(v) | Location::Inside(v) = m.locate(&pos) {
                    diags.push(Diagnostic::field(f("position"), format!("inside voxel {v} of the medium")));
                }
            }
            let dip = Vector3::from(e.dipole.map(|d| u.to_internal(d, Dimension::Dipole)));
            emitters.push(Emitter::new(pos, dip, freq(e.frequency)));
        }

        let tau = self.dbm.rank_tolerance;
        if !(tau > 0.0 && tau < 1.0) {
            diags.push(Diagnostic::field("dbm.rank_tolerance", format!("must lie in (0, 1), got {tau}")));
        }

        let n_freq = g.panels * g.order;
        let dynamics = self.dynamics.as_ref().and_then(|d| {
            let before = diags.len();
            if !(d.horizon > 0.0 && d.horizon.is_finite()) {
                diags.push(Diagnostic::field("dynamics.horizon", format!("must be positive, got {}", d.horizon)));
            }
            if d.nodes < 2 {
                diags.push(Diagnostic::field("dynamics.nodes", "need at least two time points"));
            }
            match &d.initial {
                InitialState::Emitters(a) => {
                    if a.len() != self.emitters.len() {
                        diags.push(Diagnostic::field(
                            "dynamics.initial.emitters",
                            format!("{} amplitudes for {} emitters", a.len(), self.emitters.len()),
                        ));
                    } else if !finite(a) || a.iter().all(|&x| x == 0.0) {
                        diags.push(Diagnostic::field("dynamics.initial.emitters", "amplitudes must be finite and not all zero"));
                    }
                }
                InitialState::BrightPhoton { node, .. } | InitialState::DarkPhoton { node, .. } => {
                    if *node >= n_freq {
                        diags.push(Diagnostic::field(
                            "dynamics.initial",
                            format!("node {node} out of range, the grid has {n_freq} frequency nodes"),
                        ));
                    }
                    if matches!(d.initial, InitialState::DarkPhoton { .. }) && !d.compare {
                        diags.push(Diagnostic::field("dynamics.compare", "dark_photon states need the full model (compare = true)"));
                    }
                }
            }
            if diags.len() > before {
                return None;
            }
            let horizon = u.to_internal(d.horizon, Dimension::Time);
            let times = (0..d.nodes).map(|i| horizon * i as f64 / (d.nodes - 1) as f64).collect();
            Some(DynamicsSpec { initial: d.initial.clone(), times, compare: d.compare })
        });

        if self.output.formats.is_empty() {
            diags.push(Diagnostic::field("output.formats", "at least one format is required"));
        }

        if !diags.is_empty() {
            return Err(diags);
        }
        Ok(Scenario {
            units: u,
            medium: medium.expect("medium diagnostics are reported above"),
            emitters,
            window,
            rule: FrequencyRule { panels: g.panels, order: g.order },
            angular_order: g.angular_order,
            kind: self.dbm.kind,
            rank_tolerance: tau,
            dynamics,
            formats: self.output.formats.clone(),
        })
    }

    fn resolve_medium(
        &self,
        m: &MediumBlock,
        u: UnitSystem,
        window: (f64, f64),
        diags: &mut Vec<Diagnostic>,
    ) -> Option<VoxelMedium> {
        let material = convert_material(&m.material, u);
        if let Err(e) = material.validate(m.uncoupled) {
            diags.push(Diagnostic::field("medium.material", e.to_string()));
            return None;
        }
        if let (PermittivityModel::Tabulated { samples }, false) = (&material, m.uncoupled) {
            let (first, last) = (samples[0].0, samples[samples.len() - 1].0);
            if window.0 < first || window.1 > last {
                diags.push(Diagnostic::field(
                    "medium.material.samples",
                    format!("table covers [{first}, {last}] but grids.window needs [{}, {}]", window.0, window.1),
                ));
                return None;
            }
        }
        if m.resolution == 0 && !matches!(m.geometry, Geometry::Voxels { .. }) {
            diags.push(Diagnostic::field("medium.resolution", "must be at least 1"));
            return None;
        }
        let geometry = convert_geometry(&m.geometry, u);
        // lossless models are only meaningful together with `uncoupled`, and
        // the medium constructor insists on a valid lossy model
        let built = if m.uncoupled {
            build_voxel_medium(&geometry, PermittivityModel::Vacuum, m.resolution.max(1)).map(VoxelMedium::uncoupled)
        } else {
            build_voxel_medium(&geometry, material, m.resolution)
        };
        match built {
            Ok(v) => Some(v),
            Err(e) => {
                diags.push(Diagnostic::field("medium.geometry", e.to_string()));
                None
            }
        }
    }
}

fn convert_material(m: &PermittivityModel, u: UnitSystem) -> PermittivityModel {
    let f = |v: f64| u.to_internal(v, Dimension::Frequency);
    match m {
        PermittivityModel::Vacuum => PermittivityModel::Vacuum,
        PermittivityModel::Drude { plasma, damping } => PermittivityModel::Drude { plasma: f(*plasma), damping: f(*damping) },
        PermittivityModel::DrudeLorentz { terms } => PermittivityModel::DrudeLorentz {
            terms: terms
                .iter()
                .map(|t| LorentzTerm {
                    strength: t.strength / u.scale(Dimension::Frequency).powi(2),
                    resonance: f(t.resonance),
                    damping: f(t.damping),
                })
                .collect(),
        },
        PermittivityModel::Tabulated { samples } => {
            PermittivityModel::Tabulated { samples: samples.iter().map(|&(nu, re, im)| (f(nu), re, im)).collect() }
        }
    }
}

fn convert_geometry(g: &Geometry, u: UnitSystem) -> Geometry {
    let l = |v: f64| u.to_internal(v, Dimension::Length);
    match g {
        Geometry::Box { center, size } => Geometry::Box { center: center.map(l), size: size.map(l) },
        Geometry::Sphere { center, radius } => Geometry::Sphere { center: center.map(l), radius: l(*radius) },
        Geometry::Voxels { centers, volume } => Geometry::Voxels {
            centers: centers.iter().map(|c| c.map(l)).collect(),
            volume: volume / u.scale(Dimension::Length).powi(3),
        },
    }
}
