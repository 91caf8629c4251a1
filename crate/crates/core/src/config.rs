//! Versioned JSON scenario configuration.
//!
//! Unknown keys are rejected everywhere. Parse errors carry serde_json's
//! line/column anchor; semantic checks name the offending key path.

use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SarError};
use crate::geometry::{FlightPath, HeightField, Interval, Rect, SarModel, SurfaceChart};
use crate::num::Vec3;
use crate::tolerances::Tolerances;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub name: String,
    pub surface: SurfaceSpec,
    pub path: PathSpec,
    pub window: WindowSpec,
    #[serde(default)]
    pub scene: Option<SceneSpec>,
    #[serde(default)]
    pub grids: GridSpec,
    pub analyses: Vec<AnalysisSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SurfaceSpec {
    Flat {
        #[serde(default)]
        height: f64,
        u_range: [f64; 2],
        v_range: [f64; 2],
    },
    Cylinder {
        #[serde(default = "one")]
        radius: f64,
        #[serde(default = "one")]
        axis_z: f64,
        #[serde(default = "zero_pi")]
        u_range: [f64; 2],
        v_range: [f64; 2],
    },
    HeightField {
        u_range: [f64; 2],
        v_range: [f64; 2],
        n_u: usize,
        n_v: usize,
        /// Row-major heights, index `iv * n_u + iu`.
        values: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

fn zero_pi() -> [f64; 2] {
    [0.0, std::f64::consts::PI]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathSpec {
    Straight {
        origin: [f64; 3],
        direction: [f64; 3],
        s_range: [f64; 2],
    },
    Circle {
        center: [f64; 3],
        radius: f64,
        s_range: [f64; 2],
    },
    Spline {
        nodes: Vec<f64>,
        points: Vec<[f64; 3]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub s: [f64; 2],
    pub t: [f64; 2],
    pub c0: f64,
}

/// Profile `f(u)` of a Heaviside-product scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Sin { k: f64 },
    Cos { k: f64 },
    Const { value: f64 },
}

impl Profile {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Profile::Sin { k } => (k * u).sin(),
            Profile::Cos { k } => (k * u).cos(),
            Profile::Const { value } => value,
        }
    }

    pub fn tag(&self) -> String {
        match *self {
            Profile::Sin { k } => format!("sin({k}u)"),
            Profile::Cos { k } => format!("cos({k}u)"),
            Profile::Const { value } => format!("const({value})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SceneSpec {
    /// `V = f(u) H(v)`.
    HeavisideProduct { f: Profile },
    /// A one-sided smooth bump `b((u - cu)/r, (v - cv)/r) H(v - cv)`, used as `V₁`
    /// of a symmetric pair.
    SymmetricPair { center: [f64; 2], radius: f64 },
    /// CSV of samples on the scene grid: one line per `v` node, `n_u` values each.
    File { path: PathBuf },
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub n_u: usize,
    pub n_v: usize,
    /// Scene grid extent; defaults to the chart domain.
    pub u_range: Option<[f64; 2]>,
    pub v_range: Option<[f64; 2]>,
    pub n_s: usize,
    pub n_t: usize,
    pub n_omega: usize,
    pub omega: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_u: 200,
            n_v: 200,
            u_range: None,
            v_range: None,
            n_s: 121,
            n_t: 96,
            n_omega: 256,
            omega: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimulateMode {
    DeltaShell,
    BandLimited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CancelMode {
    CylinderDemo,
    Symmetric,
}

/// Expected mirror-set counts, checked in assert mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirrorExpect {
    #[serde(default)]
    pub isolated: Option<usize>,
    #[serde(default)]
    pub families: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AnalysisSpec {
    Simulate {
        #[serde(default)]
        tag: Option<String>,
        #[serde(default = "delta_shell")]
        mode: SimulateMode,
    },
    Mirrors {
        #[serde(default)]
        tag: Option<String>,
        /// `(s, t, σ, τ)`.
        p: [f64; 4],
        #[serde(default = "default_grid_n")]
        grid_n: usize,
        /// `[[u0, u1], [v0, v1]]`; defaults to the visible-set bounding box.
        #[serde(default)]
        region: Option<[[f64; 2]; 2]>,
        #[serde(default)]
        expect: Option<MirrorExpect>,
    },
    Degeneracy {
        #[serde(default)]
        tag: Option<String>,
        s: f64,
        #[serde(default = "one")]
        tau: f64,
    },
    Cancel {
        #[serde(default)]
        tag: Option<String>,
        mode: CancelMode,
        /// `flat-reflect` or `cylinder-reflect` (symmetric mode only).
        #[serde(default)]
        isometry: Option<String>,
    },
    Selftest {
        #[serde(default)]
        tag: Option<String>,
        #[serde(default = "default_samples")]
        samples: usize,
    },
}

fn delta_shell() -> SimulateMode {
    SimulateMode::DeltaShell
}

fn default_grid_n() -> usize {
    120
}

fn default_samples() -> usize {
    8
}

impl AnalysisSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            AnalysisSpec::Simulate { .. } => "simulate",
            AnalysisSpec::Mirrors { .. } => "mirrors",
            AnalysisSpec::Degeneracy { .. } => "degeneracy",
            AnalysisSpec::Cancel { .. } => "cancel",
            AnalysisSpec::Selftest { .. } => "selftest",
        }
    }

    /// The configured tag, or the analysis position.
    pub fn tag(&self, index: usize) -> String {
        let tag = match self {
            AnalysisSpec::Simulate { tag, .. }
            | AnalysisSpec::Mirrors { tag, .. }
            | AnalysisSpec::Degeneracy { tag, .. }
            | AnalysisSpec::Cancel { tag, .. }
            | AnalysisSpec::Selftest { tag, .. } => tag,
        };
        tag.clone().unwrap_or_else(|| index.to_string())
    }
}

fn bad(key: &str, msg: impl std::fmt::Display) -> SarError {
    SarError::Config(format!("{key}: {msg}"))
}

fn range(key: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[1] > r[0]) {
        return Err(bad(key, format!("needs finite lo < hi (got [{}, {}])", r[0], r[1])));
    }
    Ok(())
}

fn positive(key: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(bad(key, format!("must be positive (got {x})")));
    }
    Ok(())
}

fn at_least(key: &str, n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(bad(key, format!("must be at least {min} (got {n})")));
    }
    Ok(())
}

fn tag_ok(key: &str, tag: &str) -> Result<()> {
    let ok = !tag.is_empty() && tag.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if !ok {
        return Err(bad(key, format!("'{tag}' may only contain ASCII letters, digits, '-' and '_'")));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| SarError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SarError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(bad("version", format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.version)));
        }
        tag_ok("name", &self.name)?;
        match &self.surface {
            SurfaceSpec::Flat { height, u_range, v_range } => {
                if !height.is_finite() {
                    return Err(bad("surface.height", "must be finite"));
                }
                range("surface.u_range", *u_range)?;
                range("surface.v_range", *v_range)?;
            }
            SurfaceSpec::Cylinder { radius, axis_z, u_range, v_range } => {
                positive("surface.radius", *radius)?;
                if !axis_z.is_finite() {
                    return Err(bad("surface.axis_z", "must be finite"));
                }
                range("surface.u_range", *u_range)?;
                range("surface.v_range", *v_range)?;
            }
            SurfaceSpec::HeightField { u_range, v_range, n_u, n_v, values } => {
                range("surface.u_range", *u_range)?;
                range("surface.v_range", *v_range)?;
                at_least("surface.n_u", *n_u, 3)?;
                at_least("surface.n_v", *n_v, 3)?;
                if values.len() != n_u * n_v {
                    return Err(bad("surface.values", format!("expected {} samples, got {}", n_u * n_v, values.len())));
                }
            }
        }
        match &self.path {
            PathSpec::Straight { s_range, direction, .. } => {
                range("path.s_range", *s_range)?;
                if direction.iter().all(|&d| d == 0.0) {
                    return Err(bad("path.direction", "must be nonzero"));
                }
            }
            PathSpec::Circle { radius, s_range, .. } => {
                positive("path.radius", *radius)?;
                range("path.s_range", *s_range)?;
            }
            PathSpec::Spline { nodes, points } => {
                if nodes.len() != points.len() || nodes.len() < 3 {
                    return Err(bad("path.nodes", "needs at least 3 nodes, one per point"));
                }
            }
        }
        range("window.s", self.window.s)?;
        range("window.t", self.window.t)?;
        positive("window.t", self.window.t[0])?;
        positive("window.c0", self.window.c0)?;
        let g = &self.grids;
        at_least("grids.n_u", g.n_u, 2)?;
        at_least("grids.n_v", g.n_v, 2)?;
        at_least("grids.n_s", g.n_s, 2)?;
        at_least("grids.n_t", g.n_t, 2)?;
        at_least("grids.n_omega", g.n_omega, 16)?;
        positive("grids.omega", g.omega)?;
        if let Some(r) = g.u_range {
            range("grids.u_range", r)?;
        }
        if let Some(r) = g.v_range {
            range("grids.v_range", r)?;
        }
        if let Some(SceneSpec::SymmetricPair { radius, .. }) = &self.scene {
            positive("scene.radius", *radius)?;
        }
        self.tolerances.validate().map_err(|e| SarError::Config(e.to_string()))?;
        if self.analyses.is_empty() {
            return Err(bad("analyses", "must list at least one analysis"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, a) in self.analyses.iter().enumerate() {
            let key = format!("analyses[{i}]");
            let tag = a.tag(i);
            tag_ok(&format!("{key}.tag"), &tag)?;
            if !seen.insert((a.kind(), tag.clone())) {
                return Err(bad(&format!("{key}.tag"), format!("duplicate {} tag '{tag}'", a.kind())));
            }
            match a {
                AnalysisSpec::Simulate { .. } => {
                    if self.scene.is_none() {
                        return Err(bad("scene", format!("required by {key} (simulate)")));
                    }
                }
                AnalysisSpec::Cancel { mode: CancelMode::CylinderDemo, .. } => {
                    if !matches!(self.scene, Some(SceneSpec::HeavisideProduct { .. })) {
                        return Err(bad("scene", format!("{key} (cylinder-demo) needs a heaviside-product scene")));
                    }
                }
                AnalysisSpec::Mirrors { p, grid_n, region, .. } => {
                    if p[3] == 0.0 {
                        return Err(bad(&format!("{key}.p"), "tau (fourth entry) must be nonzero"));
                    }
                    at_least(&format!("{key}.grid_n"), *grid_n, 2)?;
                    if let Some(r) = region {
                        range(&format!("{key}.region[0]"), r[0])?;
                        range(&format!("{key}.region[1]"), r[1])?;
                    }
                }
                AnalysisSpec::Degeneracy { tau, .. } => {
                    if *tau == 0.0 {
                        return Err(bad(&format!("{key}.tau"), "must be nonzero"));
                    }
                }
                AnalysisSpec::Cancel { mode: CancelMode::Symmetric, isometry, .. } => {
                    let Some(iso) = isometry else {
                        return Err(bad(&format!("{key}.isometry"), "required in symmetric mode"));
                    };
                    crate::cancellation::Isometry::parse(iso)
                        .map_err(|_| bad(&format!("{key}.isometry"), format!("unknown isometry '{iso}'")))?;
                    if self.scene.is_none() {
                        return Err(bad("scene", format!("required by {key} (symmetric cancel)")));
                    }
                }
                AnalysisSpec::Selftest { samples, .. } => at_least(&format!("{key}.samples"), *samples, 2)?,
            }
        }
        Ok(())
    }

    pub fn chart(&self) -> Result<SurfaceChart<f64>> {
        Ok(match &self.surface {
            SurfaceSpec::Flat { height, u_range, v_range } => {
                SurfaceChart::flat(*height, Rect::new((u_range[0], u_range[1]), (v_range[0], v_range[1]))?)
            }
            SurfaceSpec::Cylinder { radius, axis_z, u_range, v_range } => SurfaceChart::cylinder(
                *radius,
                *axis_z,
                Rect::new((u_range[0], u_range[1]), (v_range[0], v_range[1]))?,
            )?,
            SurfaceSpec::HeightField { u_range, v_range, n_u, n_v, values } => {
                SurfaceChart::HeightField(HeightField::from_samples(
                    Rect::new((u_range[0], u_range[1]), (v_range[0], v_range[1]))?,
                    *n_u,
                    *n_v,
                    values.clone(),
                )?)
            }
        })
    }

    pub fn flight_path(&self) -> Result<FlightPath<f64>> {
        let v3 = |a: &[f64; 3]| Vec3::new(a[0], a[1], a[2]);
        match &self.path {
            PathSpec::Straight { origin, direction, s_range } => {
                FlightPath::straight(v3(origin), v3(direction), Interval::new(s_range[0], s_range[1])?)
            }
            PathSpec::Circle { center, radius, s_range } => {
                FlightPath::circle(v3(center), *radius, Interval::new(s_range[0], s_range[1])?)
            }
            PathSpec::Spline { nodes, points } => Ok(FlightPath::Spline(crate::geometry::SplinePath::new(
                nodes.clone(),
                points.iter().map(v3).collect(),
            )?)),
        }
    }

    pub fn model(&self) -> Result<SarModel<f64>> {
        SarModel::with_tolerances(self.chart()?, self.flight_path()?, self.window.c0, self.tolerances.clone())
    }
}
