//! Pointwise canonical relation of the forward operator, its projection
//! Jacobians and the degenerate sets where either projection drops rank.
//!
//! A point of the relation is parameterized intrinsically by `(s, τ, u, v)`:
//!
//! ```text
//! t      = 2|R| / c0
//! σ      = (2τ/c0) R̂·γ'(s)
//! (ξ, η) = (2τ/c0) (R̂·ψ_u, R̂·ψ_v)
//! ```
//!
//! The left projection drops rank where the tangent covector is parallel to
//! `∇_{u,v}(R̂·γ')`, the right projection where it is parallel to its own
//! `s`-derivative.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SarError};
use crate::geometry::{eval_geometry, eval_geometry_unchecked, GeometryEval, SarModel};
use crate::grid::Grid2;
use crate::linalg::svd;
use crate::num::{norm2, normalized_cross2, Real};

/// Point of the data cotangent space: `(s, t, σ, τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DataCovector<T> {
    pub s: T,
    pub t: T,
    pub sigma: T,
    pub tau: T,
}

impl<T: Real> DataCovector<T> {
    pub fn new(s: T, t: T, sigma: T, tau: T) -> Result<Self> {
        if tau == T::zero() {
            return Err(SarError::ZeroTau);
        }
        Ok(Self { s, t, sigma, tau })
    }

    pub fn as_array(&self) -> [T; 4] {
        [self.s, self.t, self.sigma, self.tau]
    }

    /// Scales the fiber part `(σ, τ)` by `lambda`.
    pub fn scale_fiber(&self, lambda: T) -> Self {
        Self {
            sigma: self.sigma * lambda,
            tau: self.tau * lambda,
            ..*self
        }
    }
}

/// Point of the scene cotangent space: `(u, v, ξ, η)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SceneCovector<T> {
    pub u: T,
    pub v: T,
    pub xi: T,
    pub eta: T,
}

impl<T: Real> SceneCovector<T> {
    pub fn as_array(&self) -> [T; 4] {
        [self.u, self.v, self.xi, self.eta]
    }

    /// True when `(ξ, η) = (0, 0)`, i.e. the point is not in the punctured cotangent bundle.
    pub fn is_zero_section(&self) -> bool {
        self.xi == T::zero() && self.eta == T::zero()
    }
}

/// A paired data/scene covector of the canonical relation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationPoint<T> {
    pub data: DataCovector<T>,
    pub scene: SceneCovector<T>,
    /// Tangent covector vanished: `R̂` is normal to the surface.
    pub nadir: bool,
}

/// Degeneracy diagnostics at one `(u, v, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegeneracyReport<T> {
    /// Normalized cross product of the tangent covector and `∇_{u,v}(R̂·γ')`.
    pub sigma1_residual: T,
    /// Normalized cross product of the tangent covector and its `s`-derivative.
    pub sigma2_residual: T,
    pub nadir_flag: bool,
    /// Comparison vector of the left test vanished (parallel by degeneracy).
    pub sigma1_trivial: bool,
    /// Comparison vector of the right test vanished (parallel by degeneracy).
    pub sigma2_trivial: bool,
    pub minsv_pi_l: T,
    pub minsv_pi_r: T,
}

impl<T: Real> DegeneracyReport<T> {
    pub fn min_residual(&self) -> T {
        self.sigma1_residual.min(self.sigma2_residual)
    }

    pub fn in_sigma1(&self, eps_parallel: f64) -> bool {
        self.sigma1_residual <= T::lit(eps_parallel)
    }

    pub fn in_sigma2(&self, eps_parallel: f64) -> bool {
        self.sigma2_residual <= T::lit(eps_parallel)
    }
}

/// Pushes the scene point `(u, v)` and fiber `τ` at path parameter `s` through the relation.
pub fn lambda_forward<T: Real>(
    model: &SarModel<T>,
    u: T,
    v: T,
    s: T,
    tau: T,
) -> Result<RelationPoint<T>> {
    if tau == T::zero() {
        return Err(SarError::ZeroTau);
    }
    let g = eval_geometry(model, u, v, s)?;
    Ok(relation_from_geometry(&g, u, v, s, tau, model.c0))
}

fn lambda_unchecked<T: Real>(
    model: &SarModel<T>,
    u: T,
    v: T,
    s: T,
    tau: T,
) -> Result<RelationPoint<T>> {
    let g = eval_geometry_unchecked(model, u, v, s)?;
    Ok(relation_from_geometry(&g, u, v, s, tau, model.c0))
}

fn relation_from_geometry<T: Real>(
    g: &GeometryEval<T>,
    u: T,
    v: T,
    s: T,
    tau: T,
    c0: T,
) -> RelationPoint<T> {
    let two = T::lit(2.0);
    let k = two * tau / c0;
    let [a_u, a_v] = g.tangent_covector;
    RelationPoint {
        data: DataCovector {
            s,
            t: g.travel_time,
            sigma: k * g.doppler(),
            tau,
        },
        scene: SceneCovector {
            u,
            v,
            xi: k * a_u,
            eta: k * a_v,
        },
        nadir: a_u == T::zero() && a_v == T::zero(),
    }
}

/// Residuals of the two parallelism tests (projection Jacobians not filled).
pub fn degeneracy_residuals<T: Real>(
    model: &SarModel<T>,
    u: T,
    v: T,
    s: T,
) -> Result<DegeneracyReport<T>> {
    let g = eval_geometry(model, u, v, s)?;
    let h = T::lit(model.tol.fd_step);
    let two_h = h + h;
    let at = |du: T, dv: T, ds: T| eval_geometry_unchecked(model, u + du, v + dv, s + ds);
    let zero = T::zero();

    let grad_doppler = [
        (at(h, zero, zero)?.doppler() - at(-h, zero, zero)?.doppler()) / two_h,
        (at(zero, h, zero)?.doppler() - at(zero, -h, zero)?.doppler()) / two_h,
    ];
    let a_plus = at(zero, zero, h)?.tangent_covector;
    let a_minus = at(zero, zero, -h)?.tangent_covector;
    let ds_tangent = [(a_plus[0] - a_minus[0]) / two_h, (a_plus[1] - a_minus[1]) / two_h];

    let eps = T::lit(model.tol.eps_nadir);
    let a = g.tangent_covector;
    let nadir_flag = norm2(a) <= eps;
    let test = |b: [T; 2]| -> (T, bool) {
        if nadir_flag {
            (zero, false)
        } else if norm2(b) <= eps {
            (zero, true)
        } else {
            (normalized_cross2(a, b), false)
        }
    };
    let (sigma1_residual, sigma1_trivial) = test(grad_doppler);
    let (sigma2_residual, sigma2_trivial) = test(ds_tangent);
    Ok(DegeneracyReport {
        sigma1_residual,
        sigma2_residual,
        nadir_flag,
        sigma1_trivial,
        sigma2_trivial,
        minsv_pi_l: T::nan(),
        minsv_pi_r: T::nan(),
    })
}

/// Jacobians of the left and right projections in the coordinates `(s, τ, u, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionJacobians<T> {
    /// Rows `(s, t, σ, τ)`, columns `(s, τ, u, v)`.
    pub pi_l: [[T; 4]; 4],
    /// Rows `(u, v, ξ, η)`, columns `(s, τ, u, v)`.
    pub pi_r: [[T; 4]; 4],
    pub minsv_pi_l: T,
    pub minsv_pi_r: T,
}

/// Central-difference Jacobians of both projections with their smallest singular values.
pub fn projection_jacobians<T: Real>(
    model: &SarModel<T>,
    u: T,
    v: T,
    s: T,
    tau: T,
) -> Result<ProjectionJacobians<T>> {
    lambda_forward(model, u, v, s, tau)?;
    let rel = T::lit(model.tol.fd_step);
    let x = [s, tau, u, v];
    let mut pi_l = [[T::zero(); 4]; 4];
    let mut pi_r = [[T::zero(); 4]; 4];
    for col in 0..4 {
        let h = rel * x[col].abs().max(T::one());
        let mut xp = x;
        let mut xm = x;
        xp[col] = xp[col] + h;
        xm[col] = xm[col] - h;
        let p = lambda_unchecked(model, xp[2], xp[3], xp[0], xp[1])?;
        let m = lambda_unchecked(model, xm[2], xm[3], xm[0], xm[1])?;
        let (lp, lm) = (p.data.as_array(), m.data.as_array());
        let (rp, rm) = (p.scene.as_array(), m.scene.as_array());
        for row in 0..4 {
            pi_l[row][col] = (lp[row] - lm[row]) / (h + h);
            pi_r[row][col] = (rp[row] - rm[row]) / (h + h);
        }
    }
    Ok(ProjectionJacobians {
        pi_l,
        pi_r,
        minsv_pi_l: svd(&pi_l).min_singular_value(),
        minsv_pi_r: svd(&pi_r).min_singular_value(),
    })
}

/// Residuals plus projection-Jacobian singular values at one point.
pub fn degeneracy_report<T: Real>(
    model: &SarModel<T>,
    u: T,
    v: T,
    s: T,
    tau: T,
) -> Result<DegeneracyReport<T>> {
    let mut report = degeneracy_residuals(model, u, v, s)?;
    let jac = projection_jacobians(model, u, v, s, tau)?;
    report.minsv_pi_l = jac.minsv_pi_l;
    report.minsv_pi_r = jac.minsv_pi_r;
    Ok(report)
}

/// One evaluated cell of a degeneracy sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegeneracyCell<T> {
    pub u: T,
    pub v: T,
    pub report: DegeneracyReport<T>,
}

/// Batch sweep of [`degeneracy_report`] over a chart grid at fixed `(s, τ)`.
#[derive(Debug, Clone, Serialize)]
pub struct DegeneracyMap<T> {
    pub s: T,
    pub tau: T,
    pub n_u: usize,
    pub n_v: usize,
    /// Row-major over the grid, index `iv * n_u + iu`; `None` where evaluation failed.
    pub cells: Vec<Option<DegeneracyCell<T>>>,
    /// Indices of cells whose smaller residual is at most `eps_parallel` (nadir included).
    pub flagged: Vec<usize>,
    /// 1% of the median of `min(minsv_pi_l, minsv_pi_r)` over the evaluated cells.
    pub eps_graph: T,
}

impl<T: Real> DegeneracyMap<T> {
    pub fn flagged_fraction(&self) -> f64 {
        let evaluated = self.cells.iter().filter(|c| c.is_some()).count();
        if evaluated == 0 {
            0.0
        } else {
            self.flagged.len() as f64 / evaluated as f64
        }
    }
}

pub fn degeneracy_map<T: Real>(
    model: &SarModel<T>,
    grid: &Grid2<T>,
    s: T,
    tau: T,
) -> Result<DegeneracyMap<T>> {
    if tau == T::zero() {
        return Err(SarError::ZeroTau);
    }
    if !model.chart.domain().contains_rect(&grid.rect()) {
        return Err(SarError::InvalidParameter(
            "degeneracy grid must lie inside the chart domain".into(),
        ));
    }
    let iv = model.path.interval();
    if !(s >= iv.lo && s <= iv.hi) {
        return Err(SarError::InvalidParameter(format!(
            "s = {s} lies outside the path interval [{}, {}]",
            iv.lo, iv.hi
        )));
    }
    let cells: Vec<Option<DegeneracyCell<T>>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (u, v) = grid.point(k);
            degeneracy_report(model, u, v, s, tau)
                .ok()
                .map(|report| DegeneracyCell { u, v, report })
        })
        .collect();
    let eps_parallel = T::lit(model.tol.eps_parallel);
    let flagged = cells
        .iter()
        .enumerate()
        .filter_map(|(k, c)| c.filter(|c| c.report.min_residual() <= eps_parallel).map(|_| k))
        .collect();
    let mut minsv: Vec<T> = cells
        .iter()
        .flatten()
        .map(|c| c.report.minsv_pi_l.min(c.report.minsv_pi_r))
        .collect();
    minsv.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let eps_graph = if minsv.is_empty() {
        T::zero()
    } else {
        T::lit(0.01) * minsv[minsv.len() / 2]
    };
    Ok(DegeneracyMap {
        s,
        tau,
        n_u: grid.n_u,
        n_v: grid.n_v,
        cells,
        flagged,
        eps_graph,
    })
}
