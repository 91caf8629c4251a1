//! Scenes with singular reflectivity whose data cancel.
//!
//! Two constructions are provided. On the unit cylinder with the axial path,
//! `V = f(u) H(v)` has data proportional to `∫ f`, so any `f` with zero mean
//! over `(0, π)` gives vanishing data. In geometries with a reflection `ι` of
//! the chart that preserves travel time, `V₂ = -V₁∘ι` cancels `V₁` exactly.

use serde::Serialize;

use crate::error::{Result, SarError};
use crate::forward::{cylinder_alpha, forward_sinogram, AmplitudeSpec, SceneField, Sinogram};
use crate::geometry::{AcquisitionWindow, FlightPath, SarModel, SurfaceChart};
use crate::grid::Grid2;
use crate::num::Real;
use crate::smoothness::{jump_detect, smoothness_score_scaled, JumpReport, SmoothnessScore};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpSummary {
    pub match_fraction: f64,
    pub max_jump: f64,
    pub threshold: f64,
    pub significant: bool,
}

impl From<&JumpReport> for JumpSummary {
    fn from(r: &JumpReport) -> Self {
        Self {
            match_fraction: r.match_fraction,
            max_jump: r.max_jump,
            threshold: r.threshold,
            significant: r.significant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CancellationReport {
    pub scenario: String,
    /// Max-abs of the non-cancelling control's data.
    pub reference_norm: f64,
    /// Max-abs of the cancelling configuration's data.
    pub residual_norm: f64,
    /// `residual_norm / reference_norm`; absent when the reference vanishes.
    pub ratio: Option<f64>,
    pub tol_cancel: f64,
    pub pass: bool,
    pub reference_smoothness: Option<SmoothnessScore>,
    pub residual_smoothness: Option<SmoothnessScore>,
    pub reference_jumps: Option<JumpSummary>,
    pub residual_jumps: Option<JumpSummary>,
    /// Largest first difference of the scene samples along `v`.
    pub reference_scene_jump: f64,
    pub residual_scene_jump: f64,
    pub notes: Vec<String>,
}

/// `V(u, v) = f(u) H(v)` with `f` given at the grid's `u` nodes; `H(0) = 1/2`.
pub fn heaviside_scene<T: Real>(grid: Grid2<T>, f_samples: &[T]) -> Result<SceneField<T>> {
    if f_samples.len() != grid.n_u {
        return Err(SarError::InvalidParameter(format!(
            "{} f samples for {} u nodes",
            f_samples.len(),
            grid.n_u
        )));
    }
    let half = T::lit(0.5);
    let mut values = Vec::with_capacity(grid.len());
    for iv in 0..grid.n_v {
        let v = grid.v_at(iv);
        let h = if v > T::zero() {
            T::one()
        } else if v == T::zero() {
            half
        } else {
            T::zero()
        };
        values.extend(f_samples.iter().map(|&f| f * h));
    }
    SceneField::new(grid, values)
}

/// Largest `|V(u, v_{j+1}) - V(u, v_j)|` over the grid.
pub fn scene_v_jump<T: Real>(scene: &SceneField<T>) -> f64 {
    let g = &scene.grid;
    let mut best = 0.0f64;
    for iv in 0..g.n_v - 1 {
        for iu in 0..g.n_u {
            best = best.max((scene.at(iu, iv + 1) - scene.at(iu, iv)).to_f64_lossy().abs());
        }
    }
    best
}

/// Grid sizes for the cylinder demo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoGrids<T> {
    pub n_u: usize,
    pub n_v: usize,
    pub v_range: (T, T),
    pub n_s: usize,
    pub n_t: usize,
}

/// Everything the cylinder demo computes.
#[derive(Debug, Clone)]
pub struct CylinderDemo<T> {
    pub report: CancellationReport,
    pub reference: Sinogram<T>,
    pub residual: Sinogram<T>,
    pub reference_jump_rows: JumpReport,
    pub residual_jump_rows: JumpReport,
}

fn smoothness_pair<T: Real>(
    model: &SarModel<T>,
    sino: &Sinogram<T>,
    scale: T,
    notes: &mut Vec<String>,
    label: &str,
) -> Option<SmoothnessScore> {
    match smoothness_score_scaled(sino, Some(scale), &model.tol) {
        Ok(s) => Some(s),
        Err(e) => {
            notes.push(format!("{label} smoothness not scored: {e}"));
            None
        }
    }
}

/// Data of `f(u) H(v)` against the `f = sin u` control on the unit cylinder.
///
/// The model must be a cylinder chart; `f` is sampled on `n_u` nodes over the
/// chart's `u` range.
pub fn cylinder_cancellation_demo<T: Real>(
    model: &SarModel<T>,
    f: impl Fn(T) -> T,
    window: &AcquisitionWindow<T>,
    grids: DemoGrids<T>,
) -> Result<CylinderDemo<T>> {
    let SurfaceChart::Cylinder { domain, .. } = model.chart else {
        return Err(SarError::Config("the cylinder demo needs a cylinder chart".into()));
    };
    let grid = Grid2::new((domain.u.lo, domain.u.hi), grids.n_u, grids.v_range, grids.n_v)?;
    let us = grid.us();
    let f_samples: Vec<T> = us.iter().map(|&u| f(u)).collect();
    let ref_samples: Vec<T> = us.iter().map(|&u| u.sin()).collect();
    let scene = heaviside_scene(grid, &f_samples)?;
    let control = heaviside_scene(grid, &ref_samples)?;

    let amplitude = AmplitudeSpec::Unit;
    let reference = forward_sinogram(model, &control, &amplitude, window, grids.n_s, grids.n_t)?;
    let residual = forward_sinogram(model, &scene, &amplitude, window, grids.n_s, grids.n_t)?;
    let reference_norm = reference.max_abs();
    if !(reference_norm.to_f64_lossy() > 0.0) {
        return Err(SarError::InvalidReference(
            "the f = sin u control produced no data in this window".into(),
        ));
    }
    let residual_norm = residual.max_abs();
    let ratio = (residual_norm / reference_norm).to_f64_lossy();

    let c0 = model.c0.to_f64_lossy();
    let curve = |t: f64| match cylinder_alpha(t, c0) {
        Ok(a) => vec![-a, a],
        Err(_) => Vec::new(),
    };
    let mut notes = Vec::new();
    let reference_smoothness = smoothness_pair(model, &reference, reference_norm, &mut notes, "reference");
    let residual_smoothness = smoothness_pair(model, &residual, reference_norm, &mut notes, "residual");
    let reference_jump_rows = jump_detect(&reference, curve, Some(reference_norm), &model.tol);
    let residual_jump_rows = jump_detect(&residual, curve, Some(reference_norm), &model.tol);
    if !reference_jump_rows.significant {
        notes.push("no significant jump found in the reference data".into());
    }
    if residual_jump_rows.significant {
        notes.push("significant jump found in the residual data".into());
    }
    let tol_cancel = model.tol.tol_cancel_quadrature;
    let report = CancellationReport {
        scenario: "cylinder-heaviside".into(),
        reference_norm: reference_norm.to_f64_lossy(),
        residual_norm: residual_norm.to_f64_lossy(),
        ratio: Some(ratio),
        tol_cancel,
        pass: ratio <= tol_cancel,
        reference_smoothness,
        residual_smoothness,
        reference_jumps: Some((&reference_jump_rows).into()),
        residual_jumps: Some((&residual_jump_rows).into()),
        reference_scene_jump: scene_v_jump(&control),
        residual_scene_jump: scene_v_jump(&scene),
        notes,
    };
    Ok(CylinderDemo {
        report,
        reference,
        residual,
        reference_jump_rows,
        residual_jump_rows,
    })
}

/// Chart reflections that preserve travel time for paths in the plane `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Isometry {
    /// `(u, v) ↦ (-u, v)` on a flat plane.
    FlatReflect,
    /// `(u, v) ↦ (π - u, v)` on a cylinder.
    CylinderReflect,
}

impl Isometry {
    pub fn tag(&self) -> &'static str {
        match self {
            Isometry::FlatReflect => "flat-reflect",
            Isometry::CylinderReflect => "cylinder-reflect",
        }
    }

    pub fn parse(tag: &str) -> Result<Self> {
        match tag {
            "flat-reflect" => Ok(Isometry::FlatReflect),
            "cylinder-reflect" => Ok(Isometry::CylinderReflect),
            other => Err(SarError::Config(format!(
                "unknown isometry '{other}' (expected flat-reflect or cylinder-reflect)"
            ))),
        }
    }

    /// Checks that the model and grid admit this reflection exactly.
    pub fn check<T: Real>(&self, model: &SarModel<T>, grid: &Grid2<T>) -> Result<()> {
        let in_plane = match &model.path {
            FlightPath::StraightLine { origin, direction, .. } => {
                origin.x() == T::zero() && direction.x() == T::zero()
            }
            _ => false,
        };
        if !in_plane {
            return Err(SarError::Config(format!(
                "{} needs a straight path in the plane x = 0",
                self.tag()
            )));
        }
        match (self, &model.chart) {
            (Isometry::FlatReflect, SurfaceChart::FlatPlane { .. }) => {
                if grid.u.lo != -grid.u.hi {
                    return Err(SarError::Config("flat-reflect needs a u-grid with u0 = -u1".into()));
                }
            }
            (Isometry::CylinderReflect, SurfaceChart::Cylinder { .. }) => {
                let gap = (grid.u.lo + grid.u.hi - T::PI()).abs();
                if gap > T::lit(1e-12) {
                    return Err(SarError::Config("cylinder-reflect needs a u-grid with u0 + u1 = π".into()));
                }
            }
            _ => {
                return Err(SarError::Config(format!(
                    "{} does not match the surface chart",
                    self.tag()
                )))
            }
        }
        Ok(())
    }

    /// `V∘ι` on a reflection-symmetric grid (node `iu ↦ n_u - 1 - iu`).
    pub fn pull_back<T: Real>(&self, scene: &SceneField<T>) -> SceneField<T> {
        let g = scene.grid;
        let mut values = Vec::with_capacity(g.len());
        for iv in 0..g.n_v {
            for iu in 0..g.n_u {
                values.push(scene.at(g.n_u - 1 - iu, iv));
            }
        }
        SceneField { grid: g, values }
    }
}

/// Outcome of [`symmetric_cancellation`].
#[derive(Debug, Clone)]
pub struct SymmetricCancellation<T> {
    pub v2: SceneField<T>,
    pub report: CancellationReport,
    pub reference: Sinogram<T>,
    pub residual: Sinogram<T>,
    /// `V₁∘ι = -V₁`: the pair sums to `2V₁` and cannot cancel.
    pub antisymmetric_input: bool,
}

/// Builds `V₂ = -V₁∘ι` and compares the data of `V₁ + V₂` with that of `V₁`.
pub fn symmetric_cancellation<T: Real>(
    model: &SarModel<T>,
    v1: &SceneField<T>,
    isometry: Isometry,
    window: &AcquisitionWindow<T>,
    n_s: usize,
    n_t: usize,
) -> Result<SymmetricCancellation<T>> {
    isometry.check(model, &v1.grid)?;
    let mirrored = isometry.pull_back(v1);
    let v2 = SceneField {
        grid: v1.grid,
        values: mirrored.values.iter().map(|&x| -x).collect(),
    };
    let antisymmetric_input = v2.values == v1.values && v1.values.iter().any(|&x| x != T::zero());
    let sum = v1.combine(T::one(), &v2, T::one())?;
    let amplitude = AmplitudeSpec::Unit;
    let reference = forward_sinogram(model, v1, &amplitude, window, n_s, n_t)?;
    let residual = forward_sinogram(model, &sum, &amplitude, window, n_s, n_t)?;
    let reference_norm = reference.max_abs();
    let residual_norm = residual.max_abs();
    let ratio = (reference_norm > T::zero()).then(|| (residual_norm / reference_norm).to_f64_lossy());

    let mut notes = Vec::new();
    if antisymmetric_input {
        notes.push(
            "V1 is antisymmetric under the isometry: V1 + V2 = 2 V1, so the control is not meaningful".into(),
        );
    }
    if ratio.is_none() {
        notes.push("reference data vanish; ratio undefined".into());
    }
    let scale = if reference_norm > T::zero() { reference_norm } else { T::one() };
    let reference_smoothness = smoothness_pair(model, &reference, scale, &mut notes, "reference");
    let residual_smoothness = smoothness_pair(model, &residual, scale, &mut notes, "residual");
    let tol_cancel = model.tol.tol_cancel_exact;
    let report = CancellationReport {
        scenario: format!("symmetric-{}", isometry.tag()),
        reference_norm: reference_norm.to_f64_lossy(),
        residual_norm: residual_norm.to_f64_lossy(),
        ratio,
        tol_cancel,
        pass: ratio.is_some_and(|r| r <= tol_cancel) && !antisymmetric_input,
        reference_smoothness,
        residual_smoothness,
        reference_jumps: None,
        residual_jumps: None,
        reference_scene_jump: scene_v_jump(v1),
        residual_scene_jump: scene_v_jump(&sum),
        notes,
    };
    Ok(SymmetricCancellation {
        v2,
        report,
        reference,
        residual,
        antisymmetric_input,
    })
}
