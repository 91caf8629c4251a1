//! Forward data simulation.
//!
//! The delta-shell mode integrates `A·V/|∇T|` over the iso-range curve
//! `{T(u, v, s) = t}` in chart coordinates, extracted cell by cell with
//! marching squares. The band-limited mode truncates the frequency integral
//! to `|ω| ≤ Ω` and sums over the scene grid directly.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SarError};
use crate::geometry::{eval_geometry_unchecked, AcquisitionWindow, SarModel};
use crate::grid::Grid2;
use crate::num::{linspace, norm2, Real, Vec3};

/// Reflectivity samples on a chart grid (row-major, index `iv * n_u + iu`).
#[derive(Debug, Clone, PartialEq)]
pub struct SceneField<T> {
    pub grid: Grid2<T>,
    pub values: Vec<T>,
}

impl<T: Real> SceneField<T> {
    pub fn new(grid: Grid2<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(SarError::InvalidParameter(format!(
                "scene has {} samples for a {}x{} grid",
                values.len(),
                grid.n_u,
                grid.n_v
            )));
        }
        if let Some(k) = values.iter().position(|x| !x.is_finite()) {
            return Err(SarError::InvalidParameter(format!("scene sample {k} is not finite")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid2<T>, f: impl Fn(T, T) -> T) -> Result<Self> {
        let values = (0..grid.len())
            .map(|k| {
                let (u, v) = grid.point(k);
                f(u, v)
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn zeros(grid: Grid2<T>) -> Self {
        Self {
            grid,
            values: vec![T::zero(); grid.len()],
        }
    }

    pub fn at(&self, iu: usize, iv: usize) -> T {
        self.values[self.grid.index(iu, iv)]
    }

    /// Bilinear interpolation; `None` outside the grid.
    pub fn sample(&self, u: T, v: T) -> Option<T> {
        let g = &self.grid;
        if !g.rect().contains(u, v) {
            return None;
        }
        let fu = (u - g.u.lo) / g.du();
        let fv = (v - g.v.lo) / g.dv();
        let iu = fu.floor().to_usize().unwrap_or(0).min(g.n_u - 2);
        let iv = fv.floor().to_usize().unwrap_or(0).min(g.n_v - 2);
        let a = fu - T::from_usize(iu).unwrap();
        let b = fv - T::from_usize(iv).unwrap();
        Some(self.bilinear(iu, iv, a, b))
    }

    fn bilinear(&self, iu: usize, iv: usize, a: T, b: T) -> T {
        let one = T::one();
        let v00 = self.at(iu, iv);
        let v10 = self.at(iu + 1, iv);
        let v01 = self.at(iu, iv + 1);
        let v11 = self.at(iu + 1, iv + 1);
        (one - b) * ((one - a) * v00 + a * v10) + b * ((one - a) * v01 + a * v11)
    }

    /// `a·self + b·other` on the same grid.
    pub fn combine(&self, a: T, other: &Self, b: T) -> Result<Self> {
        if self.grid != other.grid {
            return Err(SarError::InvalidParameter("scene fields live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&x, &y)| a * x + b * y)
            .collect();
        Self::new(self.grid, values)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }
}

/// Amplitude `A(u, v, s)`: identically one, or a smooth nonnegative taper.
#[derive(Clone)]
pub enum AmplitudeSpec<T> {
    Unit,
    Taper {
        name: String,
        f: Arc<dyn Fn(T, T, T) -> T + Send + Sync>,
    },
}

impl<T: Real> AmplitudeSpec<T> {
    pub fn taper(name: impl Into<String>, f: impl Fn(T, T, T) -> T + Send + Sync + 'static) -> Self {
        Self::Taper {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    #[inline]
    pub fn eval(&self, u: T, v: T, s: T) -> T {
        match self {
            Self::Unit => T::one(),
            Self::Taper { f, .. } => f(u, v, s),
        }
    }

    pub fn tag(&self) -> String {
        match self {
            Self::Unit => "unit".into(),
            Self::Taper { name, .. } => format!("taper:{name}"),
        }
    }
}

impl<T> fmt::Debug for AmplitudeSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Unit => write!(f, "Unit"),
            Self::Taper { name, .. } => write!(f, "Taper({name})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ForwardMode {
    /// Frequency-integrated (line integral) mode, paired with the delta directly.
    DeltaShell,
    /// Frequency band `|ω| ≤ omega`, trapezoid rule with `n_omega` nodes, carrying `1/2π`.
    BandLimited { omega: f64, n_omega: usize },
}

impl ForwardMode {
    pub fn tag(&self) -> String {
        match self {
            Self::DeltaShell => "delta-shell".into(),
            Self::BandLimited { omega, n_omega } => format!("band-limited(omega={omega},n_omega={n_omega})"),
        }
    }
}

/// Simulated data on a uniform `(s, t)` grid, row-major in `t`
/// (index `it * n_s + is`). Masked cells hold NaN.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sinogram<T> {
    pub s: Vec<T>,
    pub t: Vec<T>,
    pub values: Vec<T>,
    pub mask: Vec<bool>,
    /// Near-critical level-set segments skipped per cell.
    pub flagged: Vec<u32>,
    pub mode: ForwardMode,
    pub amplitude: String,
    pub c0: T,
}

impl<T: Real> Sinogram<T> {
    pub fn n_s(&self) -> usize {
        self.s.len()
    }

    pub fn n_t(&self) -> usize {
        self.t.len()
    }

    pub fn index(&self, is: usize, it: usize) -> usize {
        it * self.s.len() + is
    }

    pub fn at(&self, is: usize, it: usize) -> T {
        self.values[self.index(is, it)]
    }

    pub fn is_masked(&self, is: usize, it: usize) -> bool {
        self.mask[self.index(is, it)]
    }

    pub fn row(&self, it: usize) -> &[T] {
        let n = self.s.len();
        &self.values[it * n..(it + 1) * n]
    }

    /// Largest magnitude over unmasked cells.
    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| !m)
            .fold(T::zero(), |acc, (x, _)| acc.max(x.abs()))
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn flagged_total(&self) -> u64 {
        self.flagged.iter().map(|&f| f as u64).sum()
    }

    /// Same data multiplied by `c` (masked cells stay masked).
    pub fn scaled(&self, c: T) -> Self {
        let mut out = self.clone();
        for (x, &m) in out.values.iter_mut().zip(&self.mask) {
            if !m {
                *x = *x * c;
            }
        }
        out
    }
}

/// Value of one delta-shell evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellValue<T> {
    pub value: T,
    /// Segments skipped because `|∇T| ≤ eps_grad_t`.
    pub flagged_segments: u32,
}

fn check_scene<T: Real>(model: &SarModel<T>, scene: &SceneField<T>) -> Result<()> {
    if !model.chart.domain().contains_rect(&scene.grid.rect()) {
        return Err(SarError::InvalidParameter("scene grid must lie inside the chart domain".into()));
    }
    Ok(())
}

fn check_s<T: Real>(model: &SarModel<T>, s: T) -> Result<()> {
    let iv = model.path.interval();
    if !iv.contains(s) {
        return Err(SarError::OutOfDomain {
            what: "s",
            value: s.to_f64_lossy(),
            lo: iv.lo.to_f64_lossy(),
            hi: iv.hi.to_f64_lossy(),
        });
    }
    Ok(())
}

fn node_positions<T: Real>(model: &SarModel<T>, grid: &Grid2<T>) -> Vec<Vec3<T>> {
    (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (u, v) = grid.point(k);
            model.chart.eval_unchecked(u, v).position
        })
        .collect()
}

// Per-s precomputation shared by every t of that s.
struct ShellRow<T> {
    s: T,
    times: Vec<T>,
    min_range: T,
}

fn shell_row<T: Real>(model: &SarModel<T>, positions: &[Vec3<T>], s: T) -> ShellRow<T> {
    let gamma = model.path.eval_unchecked(s).position;
    let scale = T::lit(2.0) / model.c0;
    let mut min_range = T::infinity();
    let times = positions
        .iter()
        .map(|p| {
            let r = (*p - gamma).norm();
            min_range = min_range.min(r);
            scale * r
        })
        .collect();
    ShellRow { s, times, min_range }
}

/// Near-grazing guard: `sqrt(|(c0 t/2)² - d_min(s)²|) < eps_alpha`.
///
/// Times well below the minimum travel time have an empty level set and stay
/// unmasked (their value is exactly zero).
fn alpha_masked<T: Real>(model: &SarModel<T>, min_range: T, t: T) -> bool {
    let half = model.c0 * t / T::lit(2.0);
    let arg = half * half - min_range * min_range;
    !(arg.abs().sqrt() >= T::lit(model.tol.eps_alpha))
}

/// Adds every level in `levels` (ascending) crossing each cell into `acc`.
fn accumulate_shell<T: Real>(
    model: &SarModel<T>,
    scene: &SceneField<T>,
    amplitude: &AmplitudeSpec<T>,
    row: &ShellRow<T>,
    levels: &[T],
    active: &[bool],
    acc: &mut [T],
    flagged: &mut [u32],
) {
    let g = &scene.grid;
    let eps_grad = T::lit(model.tol.eps_grad_t);
    let grad_scale = T::lit(2.0) / model.c0;
    let half = T::lit(0.5);
    let (du, dv) = (g.du(), g.dv());
    for iv in 0..g.n_v - 1 {
        for iu in 0..g.n_u - 1 {
            let vals = [
                scene.at(iu, iv),
                scene.at(iu + 1, iv),
                scene.at(iu + 1, iv + 1),
                scene.at(iu, iv + 1),
            ];
            if vals.iter().all(|x| *x == T::zero()) {
                continue;
            }
            let tt = [
                row.times[g.index(iu, iv)],
                row.times[g.index(iu + 1, iv)],
                row.times[g.index(iu + 1, iv + 1)],
                row.times[g.index(iu, iv + 1)],
            ];
            let tmin = tt.iter().copied().fold(T::infinity(), T::min);
            let tmax = tt.iter().copied().fold(T::neg_infinity(), T::max);
            // a level crosses the cell iff tmin < level <= tmax
            let start = levels.partition_point(|&x| x <= tmin);
            let (u0, v0) = (g.u_at(iu), g.v_at(iv));
            let (u1, v1) = (g.u_at(iu + 1), g.v_at(iv + 1));
            let corners = [(u0, v0), (u1, v0), (u1, v1), (u0, v1)];
            for j in start..levels.len() {
                let level = levels[j];
                if level > tmax {
                    break;
                }
                if !active[j] {
                    continue;
                }
                for (pa, pb) in cell_segments(&corners, &tt, level).into_iter().flatten() {
                    let len = (pb.0 - pa.0).hypot(pb.1 - pa.1);
                    if len == T::zero() {
                        continue;
                    }
                    let (um, vm) = ((pa.0 + pb.0) * half, (pa.1 + pb.1) * half);
                    let a = ((um - u0) / du).max(T::zero()).min(T::one());
                    let b = ((vm - v0) / dv).max(T::zero()).min(T::one());
                    let value = scene.bilinear(iu, iv, a, b);
                    if value == T::zero() {
                        continue;
                    }
                    let grad = match eval_geometry_unchecked(model, um, vm, row.s) {
                        Ok(geo) => grad_scale * norm2(geo.tangent_covector),
                        Err(_) => T::zero(),
                    };
                    if !(grad > eps_grad) {
                        flagged[j] += 1;
                        continue;
                    }
                    acc[j] = acc[j] + len * amplitude.eval(um, vm, row.s) * value / grad;
                }
            }
        }
    }
}

type Pt<T> = (T, T);

/// Marching squares on one cell. Corners and values are counter-clockwise
/// from `(u0, v0)`; corner `k` is inside when its value is `>= level`.
fn cell_segments<T: Real>(corners: &[Pt<T>; 4], values: &[T; 4], level: T) -> [Option<(Pt<T>, Pt<T>)>; 2] {
    let inside = [
        values[0] >= level,
        values[1] >= level,
        values[2] >= level,
        values[3] >= level,
    ];
    let crossing = |k: usize| -> Pt<T> {
        let n = (k + 1) % 4;
        let (a, b) = (corners[k], corners[n]);
        let frac = (level - values[k]) / (values[n] - values[k]);
        (a.0 + frac * (b.0 - a.0), a.1 + frac * (b.1 - a.1))
    };
    let cut: Vec<usize> = (0..4).filter(|&k| inside[k] != inside[(k + 1) % 4]).collect();
    match cut.len() {
        2 => [Some((crossing(cut[0]), crossing(cut[1]))), None],
        4 => {
            // saddle: cut off the corners whose state differs from the cell centre
            let centre = (values[0] + values[1] + values[2] + values[3]) / T::lit(4.0) >= level;
            let mut out = [None, None];
            let mut slot = 0;
            for (k, &corner) in inside.iter().enumerate() {
                if corner != centre && slot < 2 {
                    out[slot] = Some((crossing((k + 3) % 4), crossing(k)));
                    slot += 1;
                }
            }
            out
        }
        _ => [None, None],
    }
}

/// Delta-shell data `FV(s, t)` at one data point.
pub fn delta_shell_forward<T: Real>(
    model: &SarModel<T>,
    scene: &SceneField<T>,
    amplitude: &AmplitudeSpec<T>,
    s: T,
    t: T,
) -> Result<ShellValue<T>> {
    check_scene(model, scene)?;
    check_s(model, s)?;
    if !(t > T::zero()) {
        return Err(SarError::InvalidParameter(format!("travel time must be positive (got {t})")));
    }
    let positions = node_positions(model, &scene.grid);
    let row = shell_row(model, &positions, s);
    if alpha_masked(model, row.min_range, t) {
        return Err(SarError::InvalidParameter(format!(
            "(s, t) = ({s}, {t}) violates the near-grazing guard eps_alpha = {}",
            model.tol.eps_alpha
        )));
    }
    let mut acc = [T::zero()];
    let mut flagged = [0u32];
    accumulate_shell(model, scene, amplitude, &row, &[t], &[true], &mut acc, &mut flagged);
    Ok(ShellValue {
        value: acc[0],
        flagged_segments: flagged[0],
    })
}

/// Delta-shell data on the `n_s × n_t` grid spanning `window` (endpoints included).
pub fn forward_sinogram<T: Real>(
    model: &SarModel<T>,
    scene: &SceneField<T>,
    amplitude: &AmplitudeSpec<T>,
    window: &AcquisitionWindow<T>,
    n_s: usize,
    n_t: usize,
) -> Result<Sinogram<T>> {
    model.check_window(window)?;
    check_scene(model, scene)?;
    check_s(model, window.s.lo)?;
    check_s(model, window.s.hi)?;
    if n_s < 2 || n_t < 2 {
        return Err(SarError::InvalidParameter(format!("sinogram needs n_s, n_t >= 2 (got {n_s}x{n_t})")));
    }
    let s_grid = linspace(window.s.lo, window.s.hi, n_s);
    let t_grid = linspace(window.t.lo, window.t.hi, n_t);
    let positions = node_positions(model, &scene.grid);
    let columns: Vec<(Vec<T>, Vec<bool>, Vec<u32>)> = s_grid
        .par_iter()
        .map(|&s| {
            let row = shell_row(model, &positions, s);
            let mask: Vec<bool> = t_grid.iter().map(|&t| alpha_masked(model, row.min_range, t)).collect();
            let active: Vec<bool> = mask.iter().map(|m| !m).collect();
            let mut acc = vec![T::zero(); n_t];
            let mut flagged = vec![0u32; n_t];
            accumulate_shell(model, scene, amplitude, &row, &t_grid, &active, &mut acc, &mut flagged);
            for (x, &m) in acc.iter_mut().zip(&mask) {
                if m {
                    *x = T::nan();
                }
            }
            (acc, mask, flagged)
        })
        .collect();
    Ok(assemble(s_grid, t_grid, columns, ForwardMode::DeltaShell, amplitude.tag(), model.c0))
}

fn assemble<T: Real>(
    s: Vec<T>,
    t: Vec<T>,
    columns: Vec<(Vec<T>, Vec<bool>, Vec<u32>)>,
    mode: ForwardMode,
    amplitude: String,
    c0: T,
) -> Sinogram<T> {
    let (n_s, n_t) = (s.len(), t.len());
    let mut values = vec![T::zero(); n_s * n_t];
    let mut mask = vec![false; n_s * n_t];
    let mut flagged = vec![0; n_s * n_t];
    for (is, (col, m, f)) in columns.into_iter().enumerate() {
        for it in 0..n_t {
            values[it * n_s + is] = col[it];
            mask[it * n_s + is] = m[it];
            flagged[it * n_s + is] = f[it];
        }
    }
    Sinogram {
        s,
        t,
        values,
        mask,
        flagged,
        mode,
        amplitude,
        c0,
    }
}

/// Trapezoid rule for `(1/2π) ∫_{-Ω}^{Ω} cos(ω x) dω` with `n` nodes.
///
/// Summed in closed form via the Dirichlet kernel; falls back to the explicit
/// sum where the denominator vanishes.
pub fn bandlimited_kernel<T: Real>(x: T, omega: T, n: usize) -> T {
    let two = T::lit(2.0);
    let nn = T::from_usize(n).unwrap();
    let dw = two * omega / (nn - T::one());
    let half = dw * x / two;
    let denom = half.sin();
    let dirichlet = if denom.abs() > T::lit(1e-6) {
        (nn * half).sin() / denom
    } else {
        (0..n)
            .map(|k| ((-omega + T::from_usize(k).unwrap() * dw) * x).cos())
            .sum()
    };
    dw * (dirichlet - (omega * x).cos()) / (two * T::PI())
}

fn check_band<T: Real>(omega: T, n_omega: usize) -> Result<()> {
    if !(omega > T::zero()) || !omega.is_finite() {
        return Err(SarError::Config(format!("omega must be positive (got {omega})")));
    }
    if n_omega < 16 {
        return Err(SarError::Config(format!("n_omega must be at least 16 (got {n_omega})")));
    }
    Ok(())
}

fn trapezoid_weights<T: Real>(n: usize, h: T) -> impl Fn(usize) -> T {
    move |i| if i == 0 || i + 1 == n { h / T::lit(2.0) } else { h }
}

fn bandlimited_at<T: Real>(
    model: &SarModel<T>,
    scene: &SceneField<T>,
    amplitude: &AmplitudeSpec<T>,
    positions: &[Vec3<T>],
    s: T,
    t: T,
    omega: T,
    n_omega: usize,
) -> T {
    let g = &scene.grid;
    let gamma = model.path.eval_unchecked(s).position;
    let scale = T::lit(2.0) / model.c0;
    let wu = trapezoid_weights(g.n_u, g.du());
    let wv = trapezoid_weights(g.n_v, g.dv());
    let mut acc = T::zero();
    for iv in 0..g.n_v {
        let mut row = T::zero();
        for iu in 0..g.n_u {
            let k = g.index(iu, iv);
            let value = scene.values[k];
            if value == T::zero() {
                continue;
            }
            let travel = scale * (positions[k] - gamma).norm();
            let (u, v) = g.point(k);
            row = row + wu(iu) * amplitude.eval(u, v, s) * value * bandlimited_kernel(t - travel, omega, n_omega);
        }
        acc = acc + wv(iv) * row;
    }
    acc
}

/// Band-limited data at one `(s, t)`: frequency trapezoid with `n_omega`
/// nodes on `[-Ω, Ω]`, trapezoid sum over the scene grid, real part.
pub fn bandlimited_forward<T: Real>(
    model: &SarModel<T>,
    scene: &SceneField<T>,
    amplitude: &AmplitudeSpec<T>,
    s: T,
    t: T,
    omega: T,
    n_omega: usize,
) -> Result<T> {
    check_band(omega, n_omega)?;
    check_scene(model, scene)?;
    check_s(model, s)?;
    let positions = node_positions(model, &scene.grid);
    Ok(bandlimited_at(model, scene, amplitude, &positions, s, t, omega, n_omega))
}

/// Band-limited data on the `n_s × n_t` grid spanning `window`. No cells are masked.
pub fn bandlimited_sinogram<T: Real>(
    model: &SarModel<T>,
    scene: &SceneField<T>,
    amplitude: &AmplitudeSpec<T>,
    window: &AcquisitionWindow<T>,
    n_s: usize,
    n_t: usize,
    omega: T,
    n_omega: usize,
) -> Result<Sinogram<T>> {
    check_band(omega, n_omega)?;
    model.check_window(window)?;
    check_scene(model, scene)?;
    check_s(model, window.s.lo)?;
    check_s(model, window.s.hi)?;
    if n_s < 2 || n_t < 2 {
        return Err(SarError::InvalidParameter(format!("sinogram needs n_s, n_t >= 2 (got {n_s}x{n_t})")));
    }
    let s_grid = linspace(window.s.lo, window.s.hi, n_s);
    let t_grid = linspace(window.t.lo, window.t.hi, n_t);
    let positions = node_positions(model, &scene.grid);
    let columns: Vec<(Vec<T>, Vec<bool>, Vec<u32>)> = s_grid
        .par_iter()
        .map(|&s| {
            let col = t_grid
                .iter()
                .map(|&t| bandlimited_at(model, scene, amplitude, &positions, s, t, omega, n_omega))
                .collect();
            (col, vec![false; n_t], vec![0; n_t])
        })
        .collect();
    let mode = ForwardMode::BandLimited {
        omega: omega.to_f64_lossy(),
        n_omega,
    };
    Ok(assemble(s_grid, t_grid, columns, mode, amplitude.tag(), model.c0))
}

/// `α(t) = sqrt(c0² t²/4 - 1)`, the half-width of the illuminated interval on the unit cylinder.
pub fn cylinder_alpha<T: Real>(t: T, c0: T) -> Result<T> {
    let half = c0 * t / T::lit(2.0);
    if !(half > T::one()) {
        return Err(SarError::OutOfDomain {
            what: "c0*t/2",
            value: half.to_f64_lossy(),
            lo: 1.0,
            hi: f64::INFINITY,
        });
    }
    Ok((half * half - T::one()).sqrt())
}

/// Exact data of `V = f(u) H(v)` on the unit cylinder with the axial path:
/// `(c0²/4) t [H(s+α) + H(s-α)] / α · ∫f`, with `H(0) = 1`.
pub fn cylinder_closed_form<T: Real>(s: T, t: T, integral_f: T, c0: T) -> Result<T> {
    let alpha = cylinder_alpha(t, c0)?;
    let h = |x: T| if x >= T::zero() { T::one() } else { T::zero() };
    Ok(c0 * c0 / T::lit(4.0) * t * (h(s + alpha) + h(s - alpha)) / alpha * integral_f)
}
