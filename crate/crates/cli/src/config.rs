//! Run configuration: a TOML document with one table per concern.
//!
//! ```toml
//! mode = "check-harnack"
//! seed = 7
//!
//! [backend]
//! kind = "torus"        # circle | torus | sphere
//! resolution = 32
//!
//! [pme]
//! p = 2.0
//! horizon = 1.0
//!
//! [initial]
//! preset = "gaussian-bump"
//! ```
//!
//! Every key is optional except where noted in [`RunConfig`]; unknown keys
//! are rejected.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use geoflow_core::identities::{Identity, IdentityLadder, LadderPreset};
use geoflow_core::{FlowKind, Geometry, GridSpec, HarnackConfig, InitialData, TimeFunction};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    VerifyIdentities,
    CheckHarnack,
    FlowZoo,
    Convergence,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::VerifyIdentities => "verify-identities",
            Self::CheckHarnack => "check-harnack",
            Self::FlowZoo => "flow-zoo",
            Self::Convergence => "convergence",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [Self::Simulate, Self::VerifyIdentities, Self::CheckHarnack, Self::FlowZoo, Self::Convergence]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Circle,
    Torus,
    Sphere,
}

/// Manifold and grid.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Nodes per axis.
    pub resolution: usize,
    /// Side length of the periodic domain.
    pub length: f64,
    /// Amplitude of the periodized gaussian in the conformal factor
    /// (`φ = 1 + a·bump` on the circle, `w = a·bump` on the torus).
    pub bump: f64,
    pub bump_width: f64,
    /// Sphere dimension and initial `r²`.
    pub dimension: usize,
    pub radius_sq: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Torus,
            resolution: 64,
            length: 1.0,
            bump: 0.0,
            bump_width: 0.25,
            dimension: 2,
            radius_sq: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowName {
    Static,
    Ricci,
    ScaledIdentity,
    List,
    Harmonic,
}

/// Flow kind and its parameters.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub kind: FlowName,
    /// `λ` of the scaled-identity flow.
    pub lambda: f64,
    /// `α(t)` knots `[[t, α], ...]` for the harmonic flow; a single knot is
    /// a constant.
    pub alpha: Vec<[f64; 2]>,
    /// Initial scalar map `f = a·sin(2πx/L)` for the list and harmonic flows.
    pub f_amplitude: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { kind: FlowName::Static, lambda: 0.0, alpha: vec![[0.0, 2.0]], f_amplitude: 0.3 }
    }
}

/// Porous medium run.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PmeConfig {
    pub p: f64,
    /// Solver step; `None` picks `0.2·h²·min(a)/max(p·u^{p−1})` from the
    /// initial data.
    pub dt: Option<f64>,
    pub t0: f64,
    pub horizon: f64,
    /// Number of recorded snapshots, both ends included.
    pub snapshots: usize,
}

impl Default for PmeConfig {
    fn default() -> Self {
        Self { p: 2.0, dt: None, t0: 0.0, horizon: 1.0, snapshots: 51 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Constant,
    GaussianBump,
    RandomSmooth,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub preset: Preset,
    pub value: f64,
    pub amplitude: f64,
    pub width: f64,
    pub center: [f64; 2],
    pub modes: usize,
    pub floor: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            preset: Preset::GaussianBump,
            value: 1.0,
            amplitude: 1.0,
            width: 0.12,
            center: [0.5, 0.5],
            modes: 3,
            floor: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnackSection {
    pub b: f64,
    pub d: f64,
    /// Ball radius; omit for the global form.
    pub rho: Option<f64>,
    pub c: [f64; 4],
    pub tolerance: f64,
    pub t_start: f64,
    pub center: Option<[f64; 2]>,
    /// Space-time pairs for the integrated estimate.
    pub pairs: usize,
}

impl Default for HarnackSection {
    fn default() -> Self {
        let h = HarnackConfig::default();
        Self { b: h.b, d: h.d, rho: None, c: h.c, tolerance: h.tolerance, t_start: h.t_start, center: None, pairs: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LadderName {
    StaticFlat,
    #[serde(rename = "ricci-2d")]
    Ricci2d,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentitiesConfig {
    pub ladders: Vec<LadderName>,
    pub levels: Vec<usize>,
    pub kappa: f64,
    pub t0: f64,
    /// Identities for the `convergence` mode; empty selects all.
    pub select: Vec<String>,
}

impl Default for IdentitiesConfig {
    fn default() -> Self {
        let l = IdentityLadder::new(LadderPreset::StaticFlat);
        Self {
            ladders: vec![LadderName::StaticFlat, LadderName::Ricci2d],
            levels: l.levels,
            kappa: l.kappa,
            t0: l.t0,
            select: Vec::new(),
        }
    }
}

/// A whole run. Only `mode` is required.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub pme: PmeConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub harnack: HarnackSection,
    #[serde(default)]
    pub identities: IdentitiesConfig,
}

/// 1-based line of `key` inside `[section]` (top level when `None`).
fn line_of(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = Some(name.trim().to_string());
            continue;
        }
        let Some((k, _)) = line.split_once('=') else { continue };
        if k.trim() == key && current.as_deref() == section {
            return Some(i + 1);
        }
    }
    None
}

fn unknown_key(message: &str) -> Option<&str> {
    message.strip_prefix("unknown field `")?.split_once('`').map(|(k, _)| k)
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let mut line = e.span().map(|s| text[..s.start].lines().count().max(1));
        // unknown keys are reported at their table header; point at the key instead
        if let (Some(start), Some(key)) = (line, unknown_key(e.message())) {
            line = text.lines().enumerate().skip(start - 1).find_map(|(i, l)| {
                let k = l.split_once('=')?.0.trim();
                (k == key).then_some(i + 1)
            }).or(line);
        }
        CliError::Config { line, message: e.message().to_string() }
    })?;
    cfg.validate().map_err(|(section, key, message)| CliError::Config { line: line_of(text, section, key), message })?;
    Ok(cfg)
}

type Violation = (Option<&'static str>, &'static str, String);

fn require(ok: bool, section: &'static str, key: &'static str, msg: impl FnOnce() -> String) -> Result<(), Violation> {
    if ok {
        Ok(())
    } else {
        Err((Some(section), key, msg()))
    }
}

impl RunConfig {
    /// Checks every numeric constraint before anything runs.
    pub fn validate(&self) -> Result<(), Violation> {
        let (b, p, h, id) = (&self.backend, &self.pme, &self.harnack, &self.identities);
        require(p.p > 1.0 && p.p.is_finite(), "pme", "p", || format!("p must satisfy p > 1, got {}", p.p))?;
        require(h.b >= 2.0 && h.b.is_finite(), "harnack", "b", || format!("b must lie in [2, ∞), got {}", h.b))?;
        require(h.d >= h.b && h.d.is_finite(), "harnack", "d", || format!("d must satisfy d ≥ b = {}, got {}", h.b, h.d))?;
        require(h.rho.map_or(true, |r| r > 0.0), "harnack", "rho", || "rho must be positive".into())?;
        require(h.c.iter().all(|c| *c > 0.0), "harnack", "c", || "c1..c4 must be positive".into())?;
        require(h.tolerance >= 0.0, "harnack", "tolerance", || "tolerance must be ≥ 0".into())?;
        require(h.t_start > 0.0, "harnack", "t_start", || "t_start must be positive".into())?;
        require(b.resolution >= 4, "backend", "resolution", || format!("resolution must be ≥ 4, got {}", b.resolution))?;
        require(b.length > 0.0, "backend", "length", || "length must be positive".into())?;
        require(b.bump_width > 0.0, "backend", "bump_width", || "bump_width must be positive".into())?;
        require(b.dimension >= 2, "backend", "dimension", || "sphere dimension must be ≥ 2".into())?;
        require(b.radius_sq > 0.0, "backend", "radius_sq", || "radius_sq must be positive".into())?;
        require(p.horizon > 0.0, "pme", "horizon", || "horizon must be positive".into())?;
        require(p.t0 >= 0.0, "pme", "t0", || "t0 must be ≥ 0".into())?;
        require(p.snapshots >= 3, "pme", "snapshots", || "at least 3 snapshots are needed".into())?;
        require(p.dt.map_or(true, |dt| dt > 0.0), "pme", "dt", || "dt must be positive".into())?;
        require(self.initial.floor > 0.0, "initial", "floor", || "floor must be positive".into())?;
        require(self.initial.width > 0.0, "initial", "width", || "width must be positive".into())?;
        require(self.initial.value > 0.0, "initial", "value", || "value must be positive".into())?;
        require(id.levels.len() >= 3, "identities", "levels", || "a ladder needs at least three levels".into())?;
        require(id.levels.iter().all(|&n| n >= 8 && n % 4 == 0), "identities", "levels", || {
            "ladder levels must be multiples of 4, at least 8".into()
        })?;
        require(id.kappa > 0.0, "identities", "kappa", || "kappa must be positive".into())?;
        require(id.t0 > 0.0, "identities", "t0", || "t0 must be positive".into())?;
        for name in &id.select {
            require(Identity::from_name(name).is_some(), "identities", "select", || format!("unknown identity `{name}`"))?;
        }
        require(!self.flow.alpha.is_empty(), "flow", "alpha", || "alpha needs at least one knot".into())?;
        let kind = self.flow_kind().map_err(|m| (Some("flow"), "alpha", m))?;
        let geom = self.geometry().map_err(|m| (Some("backend"), "kind", m))?;
        kind.validate(&geom, p.t0, p.t0 + p.horizon).map_err(|e| (Some("flow"), "kind", e.to_string()))?;
        if self.mode == Mode::CheckHarnack {
            require(h.t_start < p.t0 + p.horizon, "harnack", "t_start", || "t_start must fall inside the run".into())?;
        }
        Ok(())
    }

    pub fn flow_kind(&self) -> Result<FlowKind, String> {
        Ok(match self.flow.kind {
            FlowName::Static => FlowKind::Static,
            FlowName::Ricci => FlowKind::Ricci,
            FlowName::ScaledIdentity => FlowKind::ScaledIdentity(TimeFunction::constant(self.flow.lambda)),
            FlowName::List => FlowKind::ListExtended,
            FlowName::Harmonic => {
                let alpha = match self.flow.alpha.as_slice() {
                    [[_, a]] => TimeFunction::constant(*a),
                    knots => TimeFunction::table(knots.iter().map(|k| (k[0], k[1])).collect()).map_err(|e| e.to_string())?,
                };
                FlowKind::HarmonicScalar(alpha)
            }
        })
    }

    fn bump(&self, grid: GridSpec) -> Result<geoflow_core::ScalarField, String> {
        let b = &self.backend;
        let c = 0.5 * b.length;
        InitialData::GaussianBump { amplitude: 1.0, width: b.bump_width, center: [c, c], floor: 1.0 }
            .sample(grid)
            .map(|f| f.map(|x| b.bump * (x - 1.0)))
            .map_err(|e| e.to_string())
    }

    pub fn geometry(&self) -> Result<Geometry, String> {
        let b = &self.backend;
        let r = match b.kind {
            BackendKind::Circle => {
                let grid = GridSpec::line(b.resolution, b.length).map_err(|e| e.to_string())?;
                Geometry::circle(self.bump(grid)?.map(|x| 1.0 + x))
            }
            BackendKind::Torus => {
                let grid = GridSpec::square(b.resolution, b.length).map_err(|e| e.to_string())?;
                Geometry::torus(self.bump(grid)?)
            }
            BackendKind::Sphere => Geometry::sphere(b.dimension, b.radius_sq),
        };
        r.map_err(|e| e.to_string())
    }

    /// Initial data with the random preset seeded from `seed`.
    pub fn initial_data(&self, seed: u64) -> InitialData {
        let i = &self.initial;
        match i.preset {
            Preset::Constant => InitialData::Constant(i.value),
            Preset::GaussianBump => {
                InitialData::GaussianBump { amplitude: i.amplitude, width: i.width, center: i.center, floor: i.floor }
            }
            Preset::RandomSmooth => InitialData::RandomSmooth { seed, modes: i.modes, amplitude: i.amplitude, floor: i.floor },
        }
    }

    pub fn harnack_config(&self) -> HarnackConfig {
        let h = &self.harnack;
        HarnackConfig {
            b: h.b,
            d: h.d,
            rho: h.rho.unwrap_or(f64::INFINITY),
            c: h.c,
            tolerance: h.tolerance,
            t_start: h.t_start,
            center: h.center,
        }
    }

    pub fn ladders(&self) -> Vec<IdentityLadder> {
        self.identities
            .ladders
            .iter()
            .map(|l| {
                let preset = match l {
                    LadderName::StaticFlat => LadderPreset::StaticFlat,
                    LadderName::Ricci2d => LadderPreset::Ricci2D,
                };
                IdentityLadder {
                    p: self.pme.p,
                    b: self.harnack.b,
                    d: self.harnack.d,
                    levels: self.identities.levels.clone(),
                    kappa: self.identities.kappa,
                    t0: self.identities.t0,
                    ..IdentityLadder::new(preset)
                }
            })
            .collect()
    }

    pub fn selected_identities(&self) -> Vec<Identity> {
        if self.identities.select.is_empty() {
            Identity::ALL.to_vec()
        } else {
            self.identities.select.iter().filter_map(|n| Identity::from_name(n)).collect()
        }
    }
}
