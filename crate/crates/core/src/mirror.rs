//! Mirror sets: all scene covectors that the canonical relation sends to one
//! data covector `p`.
//!
//! For fixed `p = (s, t, σ, τ)` the base points `(u, v)` solve the
//! range–Doppler system
//!
//! ```text
//! g1 = 2|R(u, v, s)|/c0 - t            = 0
//! g2 = (2τ/c0) R̂(u, v, s)·γ'(s) - σ    = 0
//! ```
//!
//! and the fiber `(ξ, η)` follows from the relation. Isolated roots come from
//! a grid scan plus Newton; where the 2×2 Jacobian is singular along a whole
//! component, the solution set is a curve and is traced by continuation.

use rayon::prelude::*;
use serde::Serialize;

use crate::canonical::{degeneracy_report, lambda_forward, DataCovector, DegeneracyReport, SceneCovector};
use crate::error::{Result, SarError};
use crate::geometry::{eval_geometry, eval_geometry_unchecked, in_visible_set, AcquisitionWindow, Rect, SarModel};
use crate::grid::Grid2;
use crate::linalg::svd;
use crate::num::{norm2, Real};

// Finite-difference step of the residual Jacobian.
const JAC_STEP: f64 = 1e-6;
// Relative singular-value cutoff of the pseudo-inverse Newton step.
const PINV_RCOND: f64 = 1e-8;

/// One member of a mirror set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MirrorPoint<T> {
    pub scene: SceneCovector<T>,
    pub report: DegeneracyReport<T>,
    /// `|(g1, g2)|` at the point.
    pub residual: T,
    /// Condition number of the residual Jacobian.
    pub jacobian_cond: T,
}

/// A traced curve of mirror points, ordered along the curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyCurve<T> {
    pub points: Vec<MirrorPoint<T>>,
    pub max_residual: T,
    /// Set when continuation stopped on a corrector failure rather than at the region boundary.
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MirrorSet<T> {
    pub p: DataCovector<T>,
    /// Sorted lexicographically by `(u, v)`.
    pub isolated: Vec<MirrorPoint<T>>,
    pub families: Vec<FamilyCurve<T>>,
    pub region: Rect<T>,
    pub grid_n: usize,
    pub seeds: usize,
    /// Seeds whose Newton iteration failed to reach `tol_root` inside the region.
    pub discarded_seeds: usize,
}

impl<T: Real> MirrorSet<T> {
    pub fn is_empty(&self) -> bool {
        self.isolated.is_empty() && self.families.is_empty()
    }

    /// Counts by class, one `key: value` per line.
    pub fn summary(&self, eps_parallel: f64) -> String {
        let degenerate = self
            .isolated
            .iter()
            .filter(|m| m.report.in_sigma1(eps_parallel) || m.report.in_sigma2(eps_parallel) || m.report.nadir_flag)
            .count();
        let family_points: usize = self.families.iter().map(|f| f.points.len()).sum();
        format!(
            "p: s={} t={} sigma={} tau={}\nisolated: {}\nisolated_degenerate: {}\nisolated_nondegenerate: {}\nfamilies: {}\nfamily_points: {}\nseeds: {}\ndiscarded_seeds: {}\n",
            self.p.s,
            self.p.t,
            self.p.sigma,
            self.p.tau,
            self.isolated.len(),
            degenerate,
            self.isolated.len() - degenerate,
            self.families.len(),
            family_points,
            self.seeds,
            self.discarded_seeds
        )
    }
}

/// Range–Doppler residuals `(g1, g2)` of `(u, v)` against `p`.
pub fn mirror_residuals<T: Real>(
    model: &SarModel<T>,
    p: &DataCovector<T>,
    u: T,
    v: T,
) -> Result<[T; 2]> {
    let g = eval_geometry(model, u, v, p.s)?;
    Ok(residuals_from(model, p, g.travel_time, g.doppler()))
}

fn residuals_from<T: Real>(model: &SarModel<T>, p: &DataCovector<T>, travel_time: T, doppler: T) -> [T; 2] {
    let two = T::lit(2.0);
    [travel_time - p.t, two * p.tau / model.c0 * doppler - p.sigma]
}

fn residuals_unchecked<T: Real>(model: &SarModel<T>, p: &DataCovector<T>, x: [T; 2]) -> Option<[T; 2]> {
    let g = eval_geometry_unchecked(model, x[0], x[1], p.s).ok()?;
    Some(residuals_from(model, p, g.travel_time, g.doppler()))
}

fn residual_jacobian<T: Real>(model: &SarModel<T>, p: &DataCovector<T>, x: [T; 2]) -> Option<[[T; 2]; 2]> {
    let h = T::lit(JAC_STEP);
    let mut jac = [[T::zero(); 2]; 2];
    for col in 0..2 {
        let mut xp = x;
        let mut xm = x;
        xp[col] = xp[col] + h;
        xm[col] = xm[col] - h;
        let step = xp[col] - xm[col];
        let gp = residuals_unchecked(model, p, xp)?;
        let gm = residuals_unchecked(model, p, xm)?;
        for row in 0..2 {
            jac[row][col] = (gp[row] - gm[row]) / step;
        }
    }
    Some(jac)
}

// Damped Gauss–Newton with the minimum-norm (pseudo-inverse) step; converges
// to a nearby point of the solution set even where the Jacobian is singular.
fn newton<T: Real>(
    model: &SarModel<T>,
    p: &DataCovector<T>,
    mut x: [T; 2],
    target: T,
    max_iter: usize,
) -> Option<([T; 2], T)> {
    let mut g = residuals_unchecked(model, p, x)?;
    let mut norm = norm2(g);
    for _ in 0..max_iter {
        if norm <= target {
            return Some((x, norm));
        }
        let jac = residual_jacobian(model, p, x)?;
        let dec = svd(&jac);
        let dx = dec.solve_pinv(&jac, &g, T::lit(PINV_RCOND));
        let mut lambda = T::one();
        let mut accepted = false;
        for _ in 0..30 {
            let trial = [x[0] - lambda * dx[0], x[1] - lambda * dx[1]];
            if let Some(gt) = residuals_unchecked(model, p, trial) {
                let nt = norm2(gt);
                if nt < norm {
                    x = trial;
                    g = gt;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            lambda = lambda * T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    (norm <= target).then_some((x, norm))
}

fn jacobian_cond<T: Real>(model: &SarModel<T>, p: &DataCovector<T>, x: [T; 2]) -> T {
    residual_jacobian(model, p, x)
        .map(|j| svd(&j).condition_number())
        .unwrap_or(T::infinity())
}

fn mirror_point<T: Real>(model: &SarModel<T>, p: &DataCovector<T>, x: [T; 2], residual: T) -> Result<MirrorPoint<T>> {
    let rel = lambda_forward(model, x[0], x[1], p.s, p.tau)?;
    let report = degeneracy_report(model, x[0], x[1], p.s, p.tau)?;
    Ok(MirrorPoint {
        scene: rel.scene,
        report,
        residual,
        jacobian_cond: jacobian_cond(model, p, x),
    })
}

/// Bounding box of the visible set, sampled on an `n × n` grid over the chart
/// domain and padded by one sample spacing; `None` when nothing is visible.
pub fn default_region<T: Real>(model: &SarModel<T>, window: &AcquisitionWindow<T>, n: usize) -> Option<Rect<T>> {
    let domain = model.chart.domain();
    let grid = Grid2::from_rect(domain, n.max(2), n.max(2)).ok()?;
    let visible: Vec<(T, T)> = (0..grid.len())
        .into_par_iter()
        .filter_map(|k| {
            let (u, v) = grid.point(k);
            in_visible_set(model, window, u, v).then_some((u, v))
        })
        .collect();
    if visible.is_empty() {
        return None;
    }
    let fold = |f: fn(T, T) -> T, init: T, pick: fn(&(T, T)) -> T| visible.iter().map(pick).fold(init, f);
    let u_lo = fold(T::min, T::infinity(), |x| x.0) - grid.du();
    let u_hi = fold(T::max, T::neg_infinity(), |x| x.0) + grid.du();
    let v_lo = fold(T::min, T::infinity(), |x| x.1) - grid.dv();
    let v_hi = fold(T::max, T::neg_infinity(), |x| x.1) + grid.dv();
    Rect::new(
        (u_lo.max(domain.u.lo), u_hi.min(domain.u.hi)),
        (v_lo.max(domain.v.lo), v_hi.min(domain.v.hi)),
    )
    .ok()
}

/// Solves the range–Doppler system for `p` over `region`, scanned with
/// `grid_n × grid_n` cells.
pub fn find_mirror_set<T: Real>(
    model: &SarModel<T>,
    p: &DataCovector<T>,
    region: Rect<T>,
    grid_n: usize,
) -> Result<MirrorSet<T>> {
    if p.tau == T::zero() {
        return Err(SarError::ZeroTau);
    }
    if !model.chart.domain().contains_rect(&region) {
        return Err(SarError::InvalidParameter(
            "mirror search region must lie inside the chart domain".into(),
        ));
    }
    let grid = Grid2::from_rect(region, grid_n + 1, grid_n + 1)?;
    let values: Vec<Option<[T; 2]>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (u, v) = grid.point(k);
            residuals_unchecked(model, p, [u, v])
        })
        .collect();

    let ten = T::lit(10.0);
    let half = T::lit(0.5);
    let mut seeds = Vec::new();
    for iv in 0..grid_n {
        for iu in 0..grid_n {
            let corners = [
                values[grid.index(iu, iv)],
                values[grid.index(iu + 1, iv)],
                values[grid.index(iu, iv + 1)],
                values[grid.index(iu + 1, iv + 1)],
            ];
            if corners.iter().any(|c| c.is_none()) {
                continue;
            }
            let corners: Vec<[T; 2]> = corners.iter().map(|c| c.unwrap()).collect();
            let candidate = (0..2).all(|k| {
                let lo = corners.iter().map(|c| c[k]).fold(T::infinity(), T::min);
                let hi = corners.iter().map(|c| c[k]).fold(T::neg_infinity(), T::max);
                let smallest = corners.iter().map(|c| c[k].abs()).fold(T::infinity(), T::min);
                (lo <= T::zero() && hi >= T::zero()) || smallest <= ten * (hi - lo)
            });
            if candidate {
                let u = (grid.u_at(iu) + grid.u_at(iu + 1)) * half;
                let v = (grid.v_at(iv) + grid.v_at(iv + 1)) * half;
                seeds.push([u, v]);
            }
        }
    }

    let tol_root = T::lit(model.tol.tol_root);
    let refined: Vec<Option<([T; 2], T)>> = seeds
        .par_iter()
        .map(|&seed| {
            newton(model, p, seed, tol_root, model.tol.newton_max_iter)
                .filter(|(x, _)| region.contains(x[0], x[1]))
        })
        .collect();
    let discarded_seeds = refined.iter().filter(|r| r.is_none()).count();
    let mut roots: Vec<([T; 2], T)> = refined.into_iter().flatten().collect();
    roots.sort_by(|a, b| lex(a.0, b.0));

    // single-linkage clusters at Chebyshev distance <= 2 cells
    let (du, dv) = (grid.du(), grid.dv());
    let two = T::lit(2.0);
    let near = |a: [T; 2], b: [T; 2]| (a[0] - b[0]).abs() <= two * du && (a[1] - b[1]).abs() <= two * dv;
    let mut parent: Vec<usize> = (0..roots.len()).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        let mut k = i;
        while parent[k] != r {
            let next = parent[k];
            parent[k] = r;
            k = next;
        }
        r
    }
    for i in 0..roots.len() {
        for j in (i + 1)..roots.len() {
            // roots are sorted by u: stop once u separation exceeds two cells
            if roots[j].0[0] - roots[i].0[0] > two * du {
                break;
            }
            if near(roots[i].0, roots[j].0) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut cluster_of = vec![usize::MAX; roots.len()];
    for i in 0..roots.len() {
        let r = find(&mut parent, i);
        if cluster_of[r] == usize::MAX {
            cluster_of[r] = clusters.len();
            clusters.push(Vec::new());
        }
        clusters[cluster_of[r]].push(i);
    }

    let family_cond = T::lit(model.tol.family_cond);
    let mut families: Vec<FamilyCurve<T>> = Vec::new();
    let mut isolated_candidates = Vec::new();
    for members in &clusters {
        let singular = members
            .iter()
            .all(|&i| jacobian_cond(model, p, roots[i].0) > family_cond);
        if singular && members.len() >= model.tol.family_min_members {
            let covered = families
                .iter()
                .any(|f| f.points.iter().any(|q| near([q.scene.u, q.scene.v], roots[members[0]].0)));
            if covered {
                continue;
            }
            // seed from the member nearest the cluster centroid
            let n = T::from_usize(members.len()).unwrap();
            let cu = members.iter().map(|&i| roots[i].0[0]).sum::<T>() / n;
            let cv = members.iter().map(|&i| roots[i].0[1]).sum::<T>() / n;
            let &seed = members
                .iter()
                .min_by(|&&a, &&b| {
                    let da = (roots[a].0[0] - cu).hypot(roots[a].0[1] - cv);
                    let db = (roots[b].0[0] - cu).hypot(roots[b].0[1] - cv);
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            families.push(trace_family(model, p, roots[seed].0, region)?);
        } else {
            let &best = members
                .iter()
                .min_by(|&&a, &&b| roots[a].1.partial_cmp(&roots[b].1).unwrap())
                .unwrap();
            isolated_candidates.push(roots[best]);
        }
    }
    let mut isolated = Vec::new();
    for (x, residual) in isolated_candidates {
        let on_family = families
            .iter()
            .any(|f| f.points.iter().any(|q| near([q.scene.u, q.scene.v], x)));
        if !on_family {
            isolated.push(mirror_point(model, p, x, residual)?);
        }
    }
    isolated.sort_by(|a, b| lex([a.scene.u, a.scene.v], [b.scene.u, b.scene.v]));
    families.sort_by(|a, b| {
        let fa = a.points.first().map(|q| [q.scene.u, q.scene.v]);
        let fb = b.points.first().map(|q| [q.scene.u, q.scene.v]);
        match (fa, fb) {
            (Some(x), Some(y)) => lex(x, y),
            _ => std::cmp::Ordering::Equal,
        }
    });
    Ok(MirrorSet {
        p: *p,
        isolated,
        families,
        region,
        grid_n,
        seeds: seeds.len(),
        discarded_seeds,
    })
}

fn lex<T: Real>(a: [T; 2], b: [T; 2]) -> std::cmp::Ordering {
    a[0].partial_cmp(&b[0])
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a[1].partial_cmp(&b[1]).unwrap_or(std::cmp::Ordering::Equal))
}

/// Predictor–corrector continuation of the solution curve through `seed`.
///
/// The seed must sit where the residual Jacobian is singular. Steps of
/// `trace_step` along the null direction are corrected back onto the curve
/// with minimum-norm Newton; tracing stops at the region boundary, after
/// `trace_max_steps`, or when the corrector fails.
pub fn trace_family<T: Real>(
    model: &SarModel<T>,
    p: &DataCovector<T>,
    seed: [T; 2],
    region: Rect<T>,
) -> Result<FamilyCurve<T>> {
    let cond = jacobian_cond(model, p, seed);
    if !(cond > T::lit(model.tol.family_cond)) {
        return Err(SarError::TracePrecondition(format!(
            "residual Jacobian is nonsingular at the seed (condition number {:e}); the root is isolated",
            cond.to_f64_lossy()
        )));
    }
    let tol_root = T::lit(model.tol.tol_root);
    let tol_trace = T::lit(model.tol.tol_trace);
    let corrector_iter = 20;
    let (start, start_res) = match newton(model, p, seed, tol_root, corrector_iter) {
        Some(r) if region.contains(r.0[0], r.0[1]) => r,
        _ => {
            let residual = residuals_unchecked(model, p, seed).map(norm2).unwrap_or(T::infinity());
            return Err(SarError::CorrectorFailure {
                step: 0,
                residual: residual.to_f64_lossy(),
            });
        }
    };

    let step = T::lit(model.tol.trace_step);
    let null_at = |x: [T; 2]| residual_jacobian(model, p, x).map(|j| svd(&j).null_direction());
    let mut diagnostic = None;
    let mut branches: Vec<Vec<([T; 2], T)>> = Vec::new();
    let initial = null_at(start).ok_or(SarError::CorrectorFailure {
        step: 0,
        residual: start_res.to_f64_lossy(),
    })?;
    for sign in [T::one(), -T::one()] {
        let mut dir = [initial[0] * sign, initial[1] * sign];
        let mut x = start;
        let mut branch = Vec::new();
        for k in 1..=model.tol.trace_max_steps {
            let predicted = [x[0] + step * dir[0], x[1] + step * dir[1]];
            if !region.contains(predicted[0], predicted[1]) {
                break;
            }
            match newton(model, p, predicted, tol_root, corrector_iter) {
                Some((xc, res)) if res <= tol_trace && region.contains(xc[0], xc[1]) => {
                    let Some(n) = null_at(xc) else { break };
                    // keep orientation
                    dir = if n[0] * dir[0] + n[1] * dir[1] >= T::zero() { n } else { [-n[0], -n[1]] };
                    branch.push((xc, res));
                    x = xc;
                }
                _ => {
                    let residual = residuals_unchecked(model, p, predicted).map(norm2).unwrap_or(T::infinity());
                    diagnostic = Some(format!(
                        "corrector failed at step {k} near ({}, {}), residual {:e}",
                        predicted[0],
                        predicted[1],
                        residual.to_f64_lossy()
                    ));
                    break;
                }
            }
        }
        branches.push(branch);
    }
    let backward = branches.pop().unwrap();
    let forward = branches.pop().unwrap();
    let ordered: Vec<([T; 2], T)> = backward
        .into_iter()
        .rev()
        .chain(std::iter::once((start, start_res)))
        .chain(forward)
        .collect();
    let points = ordered
        .into_iter()
        .map(|(x, res)| mirror_point(model, p, x, res))
        .collect::<Result<Vec<_>>>()?;
    let max_residual = points.iter().map(|q| q.residual).fold(T::zero(), T::max);
    Ok(FamilyCurve {
        points,
        max_residual,
        diagnostic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

    fn flat() -> SarModel<f64> {
        SarModel::flat_straight(Rect::new((-3.0, 3.0), (-3.0, 3.0)).unwrap(), 1.0, (-3.0, 3.0), 2.0).unwrap()
    }

    fn cylinder() -> SarModel<f64> {
        SarModel::unit_cylinder((-3.0, 3.0), (-3.0, 3.0), 2.0).unwrap()
    }

    fn cyl_p() -> DataCovector<f64> {
        DataCovector::new(0.0, SQRT_2, 1.0 / SQRT_2, 1.0).unwrap()
    }

    #[test]
    fn residuals_on_flat_plane() {
        let m = flat();
        let p = DataCovector::new(0.0, SQRT_2, 0.0, 1.0).unwrap();
        let g = mirror_residuals(&m, &p, 1.0, 0.0).unwrap();
        assert!(g[0].abs() < 1e-15 && g[1].abs() < 1e-15);
        let g = mirror_residuals(&m, &p, 0.5, 0.0).unwrap();
        assert!((g[0] - (1.25f64.sqrt() - SQRT_2)).abs() < 1e-15);
        assert!((g[0] + 0.29618).abs() < 1e-5);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn residuals_on_cylinder_independent_of_u() {
        let m = cylinder();
        let p = cyl_p();
        for k in 0..=20 {
            let u = PI * k as f64 / 20.0;
            let g = mirror_residuals(&m, &p, u, 1.0).unwrap();
            assert!(g[0].abs() < 1e-15 && g[1].abs() < 1e-15);
        }
    }

    #[test]
    fn flat_left_right_pair() {
        let m = flat();
        let p = DataCovector::new(0.0, SQRT_2, 0.0, 1.0).unwrap();
        let set = find_mirror_set(&m, &p, m.chart.domain(), 120).unwrap();
        assert!(set.families.is_empty());
        assert_eq!(set.isolated.len(), 2);
        let (l, r) = (&set.isolated[0], &set.isolated[1]);
        assert!((l.scene.u + 1.0).abs() < 1e-9 && l.scene.v.abs() < 1e-9);
        assert!((r.scene.u - 1.0).abs() < 1e-9 && r.scene.v.abs() < 1e-9);
        assert!((l.scene.xi + 1.0 / SQRT_2).abs() < 1e-9 && l.scene.eta.abs() < 1e-9);
        assert!((r.scene.xi - 1.0 / SQRT_2).abs() < 1e-9);
        for q in &set.isolated {
            assert!(q.report.sigma1_residual >= 0.1 && q.report.sigma2_residual >= 0.1);
        }
    }

    #[test]
    fn below_minimum_travel_time_is_empty() {
        let m = flat();
        let p = DataCovector::new(0.0, 0.5, 0.0, 1.0).unwrap();
        let set = find_mirror_set(&m, &p, m.chart.domain(), 60).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn cylinder_family() {
        let m = cylinder();
        let set = find_mirror_set(&m, &cyl_p(), m.chart.domain(), 100).unwrap();
        assert!(set.isolated.is_empty(), "{:?}", set.isolated);
        assert_eq!(set.families.len(), 1);
        let fam = &set.families[0];
        assert!(fam.points.len() >= 50);
        for q in &fam.points {
            assert!((q.scene.v - 1.0).abs() <= 1e-8);
            assert!(q.scene.xi.abs() <= 1e-8);
            assert!((q.scene.eta - 1.0 / SQRT_2).abs() <= 1e-8);
            assert!(q.report.sigma2_residual <= 1e-6);
        }
        let umin = fam.points.iter().map(|q| q.scene.u).fold(f64::INFINITY, f64::min);
        let umax = fam.points.iter().map(|q| q.scene.u).fold(f64::NEG_INFINITY, f64::max);
        assert!(umin < 0.05 && umax > PI - 0.05);
    }

    #[test]
    fn trace_from_cylinder_seed() {
        let m = cylinder();
        let fam = trace_family(&m, &cyl_p(), [FRAC_PI_2, 1.0], m.chart.domain()).unwrap();
        assert!(fam.points.len() >= 50);
        assert!(fam.diagnostic.is_none());
        assert!(fam.max_residual <= 1e-8);
        // ordered along the curve
        for w in fam.points.windows(2) {
            assert!(w[1].scene.u > w[0].scene.u);
        }
    }

    #[test]
    fn trace_rejects_isolated_seed() {
        let m = flat();
        let p = DataCovector::new(0.0, SQRT_2, 0.0, 1.0).unwrap();
        assert!(matches!(
            trace_family(&m, &p, [1.0, 0.0], m.chart.domain()),
            Err(SarError::TracePrecondition(_))
        ));
    }

    #[test]
    fn trace_reports_corrector_failure() {
        let m = cylinder();
        let mut p = cyl_p();
        p.sigma += 0.1;
        assert!(matches!(
            trace_family(&m, &p, [FRAC_PI_2, 1.0], m.chart.domain()),
            Err(SarError::CorrectorFailure { step: 0, .. })
        ));
    }

    #[test]
    fn default_region_covers_visible_set() {
        let m = cylinder();
        let w = m.window((-1.0, 1.0), (1.05, 2.0)).unwrap();
        let r = default_region(&m, &w, 121).unwrap();
        // travel time <= 2 at s = ±1 reaches v = ±(1 + √3)
        assert!(r.v.lo <= -2.7 && r.v.hi >= 2.7);
        assert!(r.v.lo >= -3.0 && r.v.hi <= 3.0);
        let none = m.window((-1.0, 1.0), (100.0, 101.0)).unwrap();
        assert!(default_region(&m, &none, 41).is_none());
    }
}
