//! Surface charts, flight paths and the range geometry between them.
//!
//! Everything downstream is driven by the range vector
//! `R(u, v, s) = psi(u, v) - gamma(s)`, the two-way travel time `2|R|/c0`
//! and the chart components of the range direction `(R̂·psi_u, R̂·psi_v)`.

use serde::Serialize;

use crate::error::{domain_check, Result, SarError};
use crate::num::{linspace, Real, Vec3};
use crate::tolerances::Tolerances;

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Interval<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(SarError::InvalidParameter(format!(
                "interval requires finite lo < hi (got [{lo}, {hi}])"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    pub fn mid(&self) -> T {
        (self.lo + self.hi) / T::lit(2.0)
    }
}

/// Chart domain `u ∈ [u.lo, u.hi]`, `v ∈ [v.lo, v.hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rect<T> {
    pub u: Interval<T>,
    pub v: Interval<T>,
}

impl<T: Real> Rect<T> {
    pub fn new(u: (T, T), v: (T, T)) -> Result<Self> {
        Ok(Self {
            u: Interval::new(u.0, u.1)?,
            v: Interval::new(v.0, v.1)?,
        })
    }

    pub fn contains(&self, u: T, v: T) -> bool {
        self.u.contains(u) && self.v.contains(v)
    }

    pub fn check(&self, u: T, v: T) -> Result<()> {
        domain_check("u", u, self.u.lo, self.u.hi)?;
        domain_check("v", v, self.v.lo, self.v.hi)
    }

    pub fn contains_rect(&self, other: &Rect<T>) -> bool {
        self.contains(other.u.lo, other.v.lo) && self.contains(other.u.hi, other.v.hi)
    }
}

/// Position and tangent vectors of a surface chart at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint<T> {
    pub position: Vec3<T>,
    pub d_u: Vec3<T>,
    pub d_v: Vec3<T>,
}

/// Position and velocity of the flight path at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint<T> {
    pub position: Vec3<T>,
    pub velocity: Vec3<T>,
}

/// Parametric topography.
#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceChart<T> {
    /// `psi(u, v) = (u, v, height)`.
    FlatPlane { height: T, domain: Rect<T> },
    /// `psi(u, v) = (r cos u, v, axis_z - r sin u)`; the unit cylinder with
    /// `axis_z = 1` touches the plane `z = 0` along `u = π/2`.
    Cylinder { radius: T, axis_z: T, domain: Rect<T> },
    /// `psi(u, v) = (u, v, h(u, v))` with bicubic Hermite interpolation of samples.
    HeightField(HeightField<T>),
}

impl<T: Real> SurfaceChart<T> {
    pub fn flat(height: T, domain: Rect<T>) -> Self {
        SurfaceChart::FlatPlane { height, domain }
    }

    /// Unit-radius cylinder on `u ∈ [0, π]` with the given `v` range.
    pub fn unit_cylinder(v_range: (T, T)) -> Result<Self> {
        Self::cylinder(T::one(), T::one(), Rect::new((T::zero(), T::PI()), v_range)?)
    }

    pub fn cylinder(radius: T, axis_z: T, domain: Rect<T>) -> Result<Self> {
        if !(radius > T::zero()) {
            return Err(SarError::InvalidParameter(format!(
                "cylinder radius must be positive (got {radius})"
            )));
        }
        Ok(SurfaceChart::Cylinder {
            radius,
            axis_z,
            domain,
        })
    }

    pub fn domain(&self) -> Rect<T> {
        match self {
            SurfaceChart::FlatPlane { domain, .. } => *domain,
            SurfaceChart::Cylinder { domain, .. } => *domain,
            SurfaceChart::HeightField(hf) => hf.domain,
        }
    }

    /// Evaluation without the domain check; height fields extrapolate their edge cells.
    pub fn eval_unchecked(&self, u: T, v: T) -> SurfacePoint<T> {
        let (zero, one) = (T::zero(), T::one());
        match self {
            SurfaceChart::FlatPlane { height, .. } => SurfacePoint {
                position: Vec3::new(u, v, *height),
                d_u: Vec3::new(one, zero, zero),
                d_v: Vec3::new(zero, one, zero),
            },
            SurfaceChart::Cylinder { radius, axis_z, .. } => {
                let (sin_u, cos_u) = u.sin_cos();
                SurfacePoint {
                    position: Vec3::new(*radius * cos_u, v, *axis_z - *radius * sin_u),
                    d_u: Vec3::new(-*radius * sin_u, zero, -*radius * cos_u),
                    d_v: Vec3::new(zero, one, zero),
                }
            }
            SurfaceChart::HeightField(hf) => {
                let (h, h_u, h_v) = hf.eval(u, v);
                SurfacePoint {
                    position: Vec3::new(u, v, h),
                    d_u: Vec3::new(one, zero, h_u),
                    d_v: Vec3::new(zero, one, h_v),
                }
            }
        }
    }
}

/// Height samples on a uniform grid with node slopes for bicubic Hermite evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField<T> {
    pub domain: Rect<T>,
    pub n_u: usize,
    pub n_v: usize,
    /// Row-major samples, index `iv * n_u + iu`.
    pub values: Vec<T>,
    slope_u: Vec<T>,
    slope_v: Vec<T>,
    slope_uv: Vec<T>,
}

impl<T: Real> HeightField<T> {
    pub fn from_samples(domain: Rect<T>, n_u: usize, n_v: usize, values: Vec<T>) -> Result<Self> {
        if n_u < 3 || n_v < 3 {
            return Err(SarError::InvalidParameter(format!(
                "height field needs at least 3x3 samples (got {n_u}x{n_v})"
            )));
        }
        if values.len() != n_u * n_v {
            return Err(SarError::InvalidParameter(format!(
                "height field expects {} samples, got {}",
                n_u * n_v,
                values.len()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(SarError::InvalidParameter(
                "height field samples must be finite".into(),
            ));
        }
        let du = domain.u.width() / T::from_usize(n_u - 1).unwrap();
        let dv = domain.v.width() / T::from_usize(n_v - 1).unwrap();
        let at = |iu: usize, iv: usize| values[iv * n_u + iu];
        let mut slope_u = vec![T::zero(); n_u * n_v];
        let mut slope_v = vec![T::zero(); n_u * n_v];
        for iv in 0..n_v {
            for iu in 0..n_u {
                slope_u[iv * n_u + iu] = fd_slope(iu, n_u, du, |k| at(k, iv));
                slope_v[iv * n_u + iu] = fd_slope(iv, n_v, dv, |k| at(iu, k));
            }
        }
        let mut slope_uv = vec![T::zero(); n_u * n_v];
        for iv in 0..n_v {
            for iu in 0..n_u {
                slope_uv[iv * n_u + iu] = fd_slope(iv, n_v, dv, |k| slope_u[k * n_u + iu]);
            }
        }
        Ok(Self {
            domain,
            n_u,
            n_v,
            values,
            slope_u,
            slope_v,
            slope_uv,
        })
    }

    pub fn from_fn(domain: Rect<T>, n_u: usize, n_v: usize, h: impl Fn(T, T) -> T) -> Result<Self> {
        let us = linspace(domain.u.lo, domain.u.hi, n_u);
        let vs = linspace(domain.v.lo, domain.v.hi, n_v);
        let mut values = Vec::with_capacity(n_u * n_v);
        for &v in &vs {
            for &u in &us {
                values.push(h(u, v));
            }
        }
        Self::from_samples(domain, n_u, n_v, values)
    }

    /// Returns `(h, h_u, h_v)`.
    pub fn eval(&self, u: T, v: T) -> (T, T, T) {
        let du = self.domain.u.width() / T::from_usize(self.n_u - 1).unwrap();
        let dv = self.domain.v.width() / T::from_usize(self.n_v - 1).unwrap();
        let (iu, x) = locate(u, self.domain.u.lo, du, self.n_u);
        let (iv, y) = locate(v, self.domain.v.lo, dv, self.n_v);
        let (ax, bx, dax, dbx) = hermite(x);
        let (ay, by, day, dby) = hermite(y);
        let mut h = T::zero();
        let mut h_x = T::zero();
        let mut h_y = T::zero();
        for a in 0..2 {
            for b in 0..2 {
                let k = (iv + b) * self.n_u + iu + a;
                let f = self.values[k];
                let fx = self.slope_u[k] * du;
                let fy = self.slope_v[k] * dv;
                let fxy = self.slope_uv[k] * du * dv;
                h = h + f * ax[a] * ay[b] + fx * bx[a] * ay[b] + fy * ax[a] * by[b] + fxy * bx[a] * by[b];
                h_x = h_x
                    + f * dax[a] * ay[b]
                    + fx * dbx[a] * ay[b]
                    + fy * dax[a] * by[b]
                    + fxy * dbx[a] * by[b];
                h_y = h_y
                    + f * ax[a] * day[b]
                    + fx * bx[a] * day[b]
                    + fy * ax[a] * dby[b]
                    + fxy * bx[a] * dby[b];
            }
        }
        (h, h_x / du, h_y / dv)
    }
}

fn locate<T: Real>(x: T, lo: T, step: T, n: usize) -> (usize, T) {
    let f = ((x - lo) / step).floor();
    let max_cell = n - 2;
    let i = if f <= T::zero() {
        0
    } else {
        f.to_usize().unwrap_or(max_cell).min(max_cell)
    };
    let local = (x - lo) / step - T::from_usize(i).unwrap();
    (i, local)
}

// Cubic Hermite basis on [0, 1]: value weights (h00, h01), slope weights
// (h10, h11) and their derivatives.
#[allow(clippy::type_complexity)]
fn hermite<T: Real>(x: T) -> ([T; 2], [T; 2], [T; 2], [T; 2]) {
    let (two, three, four, six) = (T::lit(2.0), T::lit(3.0), T::lit(4.0), T::lit(6.0));
    let x2 = x * x;
    let x3 = x2 * x;
    let h00 = two * x3 - three * x2 + T::one();
    let h01 = -two * x3 + three * x2;
    let h10 = x3 - two * x2 + x;
    let h11 = x3 - x2;
    let d00 = six * x2 - six * x;
    let d01 = -six * x2 + six * x;
    let d10 = three * x2 - four * x + T::one();
    let d11 = three * x2 - two * x;
    ([h00, h01], [h10, h11], [d00, d01], [d10, d11])
}

// Second-order finite-difference slope at node i of a uniform sample line.
fn fd_slope<T: Real>(i: usize, n: usize, step: T, f: impl Fn(usize) -> T) -> T {
    let two = T::lit(2.0);
    if i == 0 {
        (-T::lit(3.0) * f(0) + T::lit(4.0) * f(1) - f(2)) / (two * step)
    } else if i == n - 1 {
        (T::lit(3.0) * f(n - 1) - T::lit(4.0) * f(n - 2) + f(n - 3)) / (two * step)
    } else {
        (f(i + 1) - f(i - 1)) / (two * step)
    }
}

/// Unit-speed flight path.
#[derive(Debug, Clone, PartialEq)]
pub enum FlightPath<T> {
    /// `gamma(s) = origin + s * direction`, direction normalized on construction.
    StraightLine {
        origin: Vec3<T>,
        direction: Vec3<T>,
        interval: Interval<T>,
    },
    /// Horizontal circle of the given radius, arc-length parameterized.
    Circle {
        center: Vec3<T>,
        radius: T,
        interval: Interval<T>,
    },
    /// Natural cubic spline through samples at the given parameter nodes.
    Spline(SplinePath<T>),
}

impl<T: Real> FlightPath<T> {
    pub fn straight(origin: Vec3<T>, direction: Vec3<T>, interval: Interval<T>) -> Result<Self> {
        let n = direction.norm();
        if !(n > T::zero()) {
            return Err(SarError::InvalidParameter(
                "straight path direction must be nonzero".into(),
            ));
        }
        Ok(FlightPath::StraightLine {
            origin,
            direction: direction.scale(T::one() / n),
            interval,
        })
    }

    /// The path `(0, s, altitude)` over the given interval.
    pub fn axial(altitude: T, interval: Interval<T>) -> Self {
        let (zero, one) = (T::zero(), T::one());
        FlightPath::StraightLine {
            origin: Vec3::new(zero, zero, altitude),
            direction: Vec3::new(zero, one, zero),
            interval,
        }
    }

    pub fn circle(center: Vec3<T>, radius: T, interval: Interval<T>) -> Result<Self> {
        if !(radius > T::zero()) {
            return Err(SarError::InvalidParameter(format!(
                "circle radius must be positive (got {radius})"
            )));
        }
        Ok(FlightPath::Circle {
            center,
            radius,
            interval,
        })
    }

    pub fn interval(&self) -> Interval<T> {
        match self {
            FlightPath::StraightLine { interval, .. } => *interval,
            FlightPath::Circle { interval, .. } => *interval,
            FlightPath::Spline(sp) => sp.interval(),
        }
    }

    pub fn eval_unchecked(&self, s: T) -> PathPoint<T> {
        match self {
            FlightPath::StraightLine {
                origin, direction, ..
            } => PathPoint {
                position: *origin + direction.scale(s),
                velocity: *direction,
            },
            FlightPath::Circle { center, radius, .. } => {
                let (sin_a, cos_a) = (s / *radius).sin_cos();
                PathPoint {
                    position: *center + Vec3::new(cos_a, sin_a, T::zero()).scale(*radius),
                    velocity: Vec3::new(-sin_a, cos_a, T::zero()),
                }
            }
            FlightPath::Spline(sp) => sp.eval(s),
        }
    }
}

/// Natural cubic spline through 3-D samples, one spline per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SplinePath<T> {
    nodes: Vec<T>,
    points: Vec<Vec3<T>>,
    // second derivatives at nodes
    moments: Vec<Vec3<T>>,
}

impl<T: Real> SplinePath<T> {
    pub fn new(nodes: Vec<T>, points: Vec<Vec3<T>>) -> Result<Self> {
        let n = nodes.len();
        if n < 2 || points.len() != n {
            return Err(SarError::InvalidParameter(format!(
                "spline path needs at least 2 nodes and one point per node (got {} nodes, {} points)",
                n,
                points.len()
            )));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SarError::InvalidParameter(
                "spline nodes must be strictly increasing".into(),
            ));
        }
        let mut moments = vec![Vec3::zero(); n];
        if n > 2 {
            // Thomas algorithm for the natural-spline moment system.
            let m = n - 2;
            let h: Vec<T> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
            let two = T::lit(2.0);
            let six = T::lit(6.0);
            for c in 0..3 {
                let mut diag = vec![T::zero(); m];
                let mut upper = vec![T::zero(); m];
                let mut rhs = vec![T::zero(); m];
                for k in 0..m {
                    let i = k + 1;
                    diag[k] = two * (h[i - 1] + h[i]);
                    upper[k] = h[i];
                    rhs[k] = six
                        * ((points[i + 1].0[c] - points[i].0[c]) / h[i]
                            - (points[i].0[c] - points[i - 1].0[c]) / h[i - 1]);
                }
                for k in 1..m {
                    let w = h[k] / diag[k - 1];
                    diag[k] = diag[k] - w * upper[k - 1];
                    rhs[k] = rhs[k] - w * rhs[k - 1];
                }
                let mut sol = vec![T::zero(); m];
                for k in (0..m).rev() {
                    let next = if k + 1 < m { upper[k] * sol[k + 1] } else { T::zero() };
                    sol[k] = (rhs[k] - next) / diag[k];
                }
                for k in 0..m {
                    moments[k + 1].0[c] = sol[k];
                }
            }
        }
        Ok(Self {
            nodes,
            points,
            moments,
        })
    }

    pub fn interval(&self) -> Interval<T> {
        Interval {
            lo: self.nodes[0],
            hi: self.nodes[self.nodes.len() - 1],
        }
    }

    pub fn eval(&self, s: T) -> PathPoint<T> {
        let n = self.nodes.len();
        let k = match self.nodes.iter().position(|&x| x > s) {
            Some(0) => 0,
            Some(i) => (i - 1).min(n - 2),
            None => n - 2,
        };
        let h = self.nodes[k + 1] - self.nodes[k];
        let a = (self.nodes[k + 1] - s) / h;
        let b = (s - self.nodes[k]) / h;
        let six = T::lit(6.0);
        let three = T::lit(3.0);
        let mut pos = [T::zero(); 3];
        let mut vel = [T::zero(); 3];
        for c in 0..3 {
            let (y0, y1) = (self.points[k].0[c], self.points[k + 1].0[c]);
            let (m0, m1) = (self.moments[k].0[c], self.moments[k + 1].0[c]);
            pos[c] = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / six;
            vel[c] = (y1 - y0) / h - (three * a * a - T::one()) / six * h * m0
                + (three * b * b - T::one()) / six * h * m1;
        }
        PathPoint {
            position: Vec3(pos),
            velocity: Vec3(vel),
        }
    }
}

/// Recorded data window `(s1, s2) × (t1, t2)` and propagation speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionWindow<T> {
    pub s: Interval<T>,
    pub t: Interval<T>,
    pub c0: T,
}

impl<T: Real> AcquisitionWindow<T> {
    pub fn new(s: (T, T), t: (T, T), c0: T) -> Result<Self> {
        let s = Interval::new(s.0, s.1)?;
        let t = Interval::new(t.0, t.1)?;
        if !(t.lo > T::zero()) {
            return Err(SarError::InvalidParameter(format!(
                "acquisition window needs t1 > 0 (got {})",
                t.lo
            )));
        }
        if !(c0 > T::zero()) {
            return Err(SarError::InvalidParameter(format!(
                "c0 must be positive (got {c0})"
            )));
        }
        Ok(Self { s, t, c0 })
    }
}

/// Chart, path and propagation speed together with the numerical tolerances.
#[derive(Debug, Clone)]
pub struct SarModel<T> {
    pub chart: SurfaceChart<T>,
    pub path: FlightPath<T>,
    pub c0: T,
    pub tol: Tolerances,
}

impl<T: Real> SarModel<T> {
    pub fn new(chart: SurfaceChart<T>, path: FlightPath<T>, c0: T) -> Result<Self> {
        Self::with_tolerances(chart, path, c0, Tolerances::default())
    }

    pub fn with_tolerances(
        chart: SurfaceChart<T>,
        path: FlightPath<T>,
        c0: T,
        tol: Tolerances,
    ) -> Result<Self> {
        if !(c0 > T::zero()) || !c0.is_finite() {
            return Err(SarError::InvalidParameter(format!(
                "c0 must be positive (got {c0})"
            )));
        }
        tol.validate()?;
        Ok(Self {
            chart,
            path,
            c0,
            tol,
        })
    }

    /// The unit cylinder on `u ∈ [0, π]` with the axial path `(0, s, 1)`.
    pub fn unit_cylinder(v_range: (T, T), s_range: (T, T), c0: T) -> Result<Self> {
        let chart = SurfaceChart::unit_cylinder(v_range)?;
        let path = FlightPath::axial(T::one(), Interval::new(s_range.0, s_range.1)?);
        Self::new(chart, path, c0)
    }

    /// The plane `z = 0` with the straight path `(0, s, altitude)`.
    pub fn flat_straight(
        domain: Rect<T>,
        altitude: T,
        s_range: (T, T),
        c0: T,
    ) -> Result<Self> {
        let chart = SurfaceChart::flat(T::zero(), domain);
        let path = FlightPath::axial(altitude, Interval::new(s_range.0, s_range.1)?);
        Self::new(chart, path, c0)
    }

    pub fn window(&self, s: (T, T), t: (T, T)) -> Result<AcquisitionWindow<T>> {
        AcquisitionWindow::new(s, t, self.c0)
    }

    pub(crate) fn check_window(&self, window: &AcquisitionWindow<T>) -> Result<()> {
        if window.c0 != self.c0 {
            return Err(SarError::InvalidParameter(format!(
                "window c0 {} differs from model c0 {}",
                window.c0, self.c0
            )));
        }
        Ok(())
    }

    pub(crate) fn eps_range(&self) -> T {
        T::lit(self.tol.eps_range)
    }
}

/// Range geometry at one `(u, v, s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryEval<T> {
    /// `psi(u, v) - gamma(s)`.
    pub r: Vec3<T>,
    pub range: T,
    pub rhat: Vec3<T>,
    /// `2 |R| / c0`.
    pub travel_time: T,
    /// `(R̂·psi_u, R̂·psi_v)`.
    pub tangent_covector: [T; 2],
    pub surface: SurfacePoint<T>,
    pub path: PathPoint<T>,
}

impl<T: Real> GeometryEval<T> {
    /// `R̂ · gamma'(s)`.
    pub fn doppler(&self) -> T {
        self.rhat.dot(&self.path.velocity)
    }
}

pub fn eval_surface<T: Real>(chart: &SurfaceChart<T>, u: T, v: T) -> Result<SurfacePoint<T>> {
    chart.domain().check(u, v)?;
    Ok(chart.eval_unchecked(u, v))
}

pub fn eval_path<T: Real>(path: &FlightPath<T>, s: T) -> Result<PathPoint<T>> {
    let iv = path.interval();
    domain_check("s", s, iv.lo, iv.hi)?;
    Ok(path.eval_unchecked(s))
}

/// Range geometry with domain checks on `(u, v)` and `s`.
pub fn eval_geometry<T: Real>(model: &SarModel<T>, u: T, v: T, s: T) -> Result<GeometryEval<T>> {
    let surface = eval_surface(&model.chart, u, v)?;
    let path = eval_path(&model.path, s)?;
    assemble(surface, path, model.c0, model.eps_range())
}

/// Range geometry without domain checks, used by finite-difference stencils
/// that may step just outside the chart.
pub fn eval_geometry_unchecked<T: Real>(
    model: &SarModel<T>,
    u: T,
    v: T,
    s: T,
) -> Result<GeometryEval<T>> {
    let surface = model.chart.eval_unchecked(u, v);
    let path = model.path.eval_unchecked(s);
    assemble(surface, path, model.c0, model.eps_range())
}

fn assemble<T: Real>(
    surface: SurfacePoint<T>,
    path: PathPoint<T>,
    c0: T,
    eps_range: T,
) -> Result<GeometryEval<T>> {
    let r = surface.position - path.position;
    let range = r.norm();
    if !(range > eps_range) {
        return Err(SarError::PathTouchesSurface {
            range: range.to_f64_lossy(),
            eps: eps_range.to_f64_lossy(),
        });
    }
    let rhat = r.scale(T::one() / range);
    Ok(GeometryEval {
        r,
        range,
        rhat,
        travel_time: T::lit(2.0) * range / c0,
        tangent_covector: [rhat.dot(&surface.d_u), rhat.dot(&surface.d_v)],
        surface,
        path,
    })
}

/// Two-way travel time only; `None` when the path touches the surface.
pub(crate) fn travel_time_unchecked<T: Real>(model: &SarModel<T>, u: T, v: T, s: T) -> Option<T> {
    let r = model.chart.eval_unchecked(u, v).position - model.path.eval_unchecked(s).position;
    let range = r.norm();
    (range > model.eps_range()).then(|| T::lit(2.0) * range / model.c0)
}

/// Whether some `s ∈ (s1, s2)` has travel time inside `(t1, t2)`.
pub fn in_visible_set<T: Real>(
    model: &SarModel<T>,
    window: &AcquisitionWindow<T>,
    u: T,
    v: T,
) -> bool {
    if !(window.t.hi > window.t.lo) || !(window.s.hi > window.s.lo) {
        return false;
    }
    let n = model.tol.visible_samples.max(2);
    let ds = window.s.width() / T::from_usize(n).unwrap();
    let half = T::lit(0.5);
    let samples: Vec<(T, T)> = (0..n)
        .filter_map(|i| {
            let s = window.s.lo + (T::from_usize(i).unwrap() + half) * ds;
            travel_time_unchecked(model, u, v, s).map(|t| (s, t))
        })
        .collect();
    if samples.is_empty() {
        return false;
    }
    if samples.iter().any(|&(_, t)| t > window.t.lo && t < window.t.hi) {
        return true;
    }
    let (imin, _) = samples
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
        .unwrap();
    let (imax, _) = samples
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
        .unwrap();
    let bracket = |i: usize| {
        let lo = if i == 0 { window.s.lo } else { samples[i - 1].0 };
        let hi = if i + 1 == samples.len() { window.s.hi } else { samples[i + 1].0 };
        (lo, hi)
    };
    let tt = |s: T| travel_time_unchecked(model, u, v, s).unwrap_or(T::nan());
    let (lo, hi) = bracket(imin);
    let tmin = golden_section(lo, hi, tt).min(samples[imin].1);
    let (lo, hi) = bracket(imax);
    let tmax = (-golden_section(lo, hi, |s| -tt(s))).max(samples[imax].1);
    tmin < window.t.hi && tmax > window.t.lo
}

// Minimum value of a unimodal function on [lo, hi].
fn golden_section<T: Real>(mut lo: T, mut hi: T, f: impl Fn(T) -> T) -> T {
    let inv_phi = T::lit(0.618_033_988_749_894_9);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    f1.min(f2).min(f(lo)).min(f(hi))
}

/// Maximum analytic-vs-central-difference discrepancy of the chart and path derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfTestReport<T> {
    pub surface_discrepancy: T,
    pub path_discrepancy: T,
    pub step: T,
    pub tol: T,
}

impl<T: Real> SelfTestReport<T> {
    pub fn max_discrepancy(&self) -> T {
        self.surface_discrepancy.max(self.path_discrepancy)
    }
}

/// Compares analytic `psi_u`, `psi_v`, `gamma'` against central differences.
///
/// Samples are `(u, v, s)` triples inside the chart and path domains.
pub fn derivative_selftest<T: Real>(
    model: &SarModel<T>,
    samples: &[(T, T, T)],
) -> Result<SelfTestReport<T>> {
    let h = T::lit(model.tol.selftest_step);
    let mut surface_discrepancy = T::zero();
    let mut path_discrepancy = T::zero();
    // central differences divided by the realized step (up - um)
    let central = |x: T, f: &dyn Fn(T) -> Vec3<T>| {
        let (up, um) = (x + h, x - h);
        (f(up) - f(um)).scale(T::one() / (up - um))
    };
    for &(u, v, s) in samples {
        let p = eval_surface(&model.chart, u, v)?;
        eval_path(&model.path, s)?;
        let fd_u = central(u, &|x| model.chart.eval_unchecked(x, v).position);
        let fd_v = central(v, &|x| model.chart.eval_unchecked(u, x).position);
        surface_discrepancy = surface_discrepancy
            .max(fd_u.max_abs_diff(&p.d_u))
            .max(fd_v.max_abs_diff(&p.d_v));
        let g = model.path.eval_unchecked(s);
        let fd_s = central(s, &|x| model.path.eval_unchecked(x).position);
        path_discrepancy = path_discrepancy.max(fd_s.max_abs_diff(&g.velocity));
    }
    let tol = T::lit(model.tol.selftest_tol);
    let report = SelfTestReport {
        surface_discrepancy,
        path_discrepancy,
        step: h,
        tol,
    };
    if !(report.max_discrepancy() <= tol) {
        let what = if surface_discrepancy > path_discrepancy {
            "surface"
        } else {
            "path"
        };
        return Err(SarError::SelfTestFailed {
            what: what.into(),
            discrepancy: report.max_discrepancy().to_f64_lossy(),
            tol: tol.to_f64_lossy(),
        });
    }
    Ok(report)
}

/// Regular `(u, v, s)` sample lattice over the chart domain and path interval.
pub fn selftest_samples<T: Real>(model: &SarModel<T>, n: usize) -> Vec<(T, T, T)> {
    let d = model.chart.domain();
    let iv = model.path.interval();
    // stay one FD step inside so the stencils never leave the chart
    let pad = T::lit(1e-3);
    let us = linspace(d.u.lo + pad * d.u.width(), d.u.hi - pad * d.u.width(), n);
    let vs = linspace(d.v.lo + pad * d.v.width(), d.v.hi - pad * d.v.width(), n);
    let ss = linspace(iv.lo + pad * iv.width(), iv.hi - pad * iv.width(), n);
    let mut out = Vec::with_capacity(n * n);
    for (k, &u) in us.iter().enumerate() {
        for (j, &v) in vs.iter().enumerate() {
            out.push((u, v, ss[(k + j) % n]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, SQRT_2};

    fn cylinder() -> SarModel<f64> {
        SarModel::unit_cylinder((-20.0, 20.0), (-10.0, 10.0), 2.0).unwrap()
    }

    fn flat() -> SarModel<f64> {
        SarModel::flat_straight(Rect::new((-10.0, 10.0), (-10.0, 10.0)).unwrap(), 1.0, (-10.0, 10.0), 2.0)
            .unwrap()
    }

    #[test]
    fn cylinder_chart_at_top() {
        let p = eval_surface(&cylinder().chart, FRAC_PI_2, 0.0).unwrap();
        assert!(p.position.max_abs_diff(&Vec3::new(0.0, 0.0, 0.0)) < 1e-15);
        assert!(p.d_u.max_abs_diff(&Vec3::new(-1.0, 0.0, 0.0)) < 1e-15);
        assert_eq!(p.d_v, Vec3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn unit_cylinder_formula() {
        let c = cylinder();
        for k in 0..50 {
            let u = 0.01 + 3.1 * k as f64 / 50.0;
            let v = -3.0 + 0.17 * k as f64;
            let p = eval_surface(&c.chart, u, v).unwrap();
            assert_eq!(p.position, Vec3::new(u.cos(), v, 1.0 - u.sin()));
            assert!(p.d_u.cross(&p.d_v).norm() > 0.0);
        }
    }

    #[test]
    fn flat_plane_chart() {
        let p = eval_surface(&flat().chart, 3.0, -2.0).unwrap();
        assert_eq!(p.position, Vec3::new(3.0, -2.0, 0.0));
        assert_eq!(p.d_u, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(p.d_v, Vec3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let c = cylinder();
        assert!(matches!(
            eval_surface(&c.chart, 4.0, 0.0),
            Err(SarError::OutOfDomain { what: "u", .. })
        ));
        assert!(matches!(
            eval_path(&c.path, 11.0),
            Err(SarError::OutOfDomain { what: "s", .. })
        ));
    }

    #[test]
    fn zero_height_field_matches_plane() {
        let d = Rect::new((-2.0, 2.0), (-3.0, 3.0)).unwrap();
        let hf = HeightField::from_fn(d, 17, 25, |_, _| 0.0).unwrap();
        let chart = SurfaceChart::HeightField(hf);
        let plane = SurfaceChart::flat(0.0, d);
        for k in 0..200 {
            let u = -2.0 + 4.0 * (k as f64 * 0.377).fract();
            let v = -3.0 + 6.0 * (k as f64 * 0.619).fract();
            let a = eval_surface(&chart, u, v).unwrap();
            let b = eval_surface(&plane, u, v).unwrap();
            assert!(a.position.max_abs_diff(&b.position) <= 1e-10);
            assert!(a.d_u.max_abs_diff(&b.d_u) <= 1e-10);
            assert!(a.d_v.max_abs_diff(&b.d_v) <= 1e-10);
        }
    }

    #[test]
    fn height_field_reproduces_bilinear_surface() {
        // Hermite with second-order slopes is exact for h = a + b u + c v + d u v.
        let d = Rect::new((0.0, 1.0), (0.0, 2.0)).unwrap();
        let h = |u: f64, v: f64| 0.3 + 0.5 * u - 0.25 * v + 0.125 * u * v;
        let hf = HeightField::from_fn(d, 9, 11, h).unwrap();
        let (z, zu, zv) = hf.eval(0.37, 1.21);
        assert!((z - h(0.37, 1.21)).abs() < 1e-13);
        assert!((zu - (0.5 + 0.125 * 1.21)).abs() < 1e-12);
        assert!((zv - (-0.25 + 0.125 * 0.37)).abs() < 1e-12);
    }

    #[test]
    fn straight_path_eval() {
        let p = eval_path(&flat().path, 2.0).unwrap();
        assert_eq!(p.position, Vec3::new(0.0, 2.0, 1.0));
        assert_eq!(p.velocity, Vec3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn circle_is_unit_speed() {
        let path = FlightPath::circle(Vec3::new(1.0, -2.0, 5.0), 3.7, Interval::new(-50.0, 50.0).unwrap())
            .unwrap();
        for k in 0..1000 {
            let s = -50.0 + 0.1 * k as f64;
            let g = eval_path(&path, s).unwrap();
            assert!((g.velocity.norm() - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn spline_through_line_samples_is_the_line() {
        let nodes: Vec<f64> = (0..11).map(|k| -5.0 + k as f64).collect();
        let points = nodes.iter().map(|&s| Vec3::new(0.0, s, 1.0)).collect();
        let spline = FlightPath::Spline(SplinePath::new(nodes, points).unwrap());
        let line = FlightPath::axial(1.0, Interval::new(-5.0, 5.0).unwrap());
        for k in 0..=1000 {
            let s = -5.0 + 0.01 * k as f64;
            let a = eval_path(&spline, s).unwrap();
            let b = eval_path(&line, s).unwrap();
            assert!(a.position.max_abs_diff(&b.position) <= 1e-6);
            assert!(a.velocity.max_abs_diff(&b.velocity) <= 1e-6);
        }
    }

    #[test]
    fn spline_interpolates_circle_samples() {
        // interpolation-error oracle: O(h^4) position error against the exact arc
        let rho = 4.0;
        let circle = FlightPath::circle(Vec3::new(0.0, 0.0, 3.0), rho, Interval::new(0.0, 6.0).unwrap())
            .unwrap();
        let nodes: Vec<f64> = (0..=60).map(|k| 0.1 * k as f64).collect();
        let points = nodes.iter().map(|&s| circle.eval_unchecked(s).position).collect();
        let spline = SplinePath::new(nodes, points).unwrap();
        for k in 0..=200 {
            let s = 1.0 + 0.02 * k as f64;
            let a = spline.eval(s);
            let b = circle.eval_unchecked(s);
            assert!(a.position.max_abs_diff(&b.position) <= 1e-6);
        }
    }

    #[test]
    fn geometry_on_cylinder() {
        let c = cylinder();
        let g = eval_geometry(&c, FRAC_PI_2, 3.0, 1.0).unwrap();
        assert!(g.r.max_abs_diff(&Vec3::new(0.0, 2.0, -1.0)) < 1e-15);
        assert!((g.range - 5f64.sqrt()).abs() < 1e-15);
        assert!((g.travel_time - 5f64.sqrt()).abs() < 1e-15);

        let g = eval_geometry(&c, FRAC_PI_3, 2.0, 1.0).unwrap();
        assert!(g.tangent_covector[0].abs() < 1e-15);
        assert!((g.tangent_covector[1] - 1.0 / SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn cylinder_tangent_covector_closed_form() {
        let c = cylinder();
        for k in 0..100 {
            let u = 0.05 + 3.0 * k as f64 / 100.0;
            let v = -4.0 + 0.08 * k as f64;
            let s = 1.5 - 0.03 * k as f64;
            let g = eval_geometry(&c, u, v, s).unwrap();
            let expect = (v - s) / ((v - s).powi(2) + 1.0).sqrt();
            assert!(g.tangent_covector[0].abs() < 1e-15);
            assert!((g.tangent_covector[1] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn geometry_on_flat_plane() {
        let f = flat();
        let g = eval_geometry(&f, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(g.r, Vec3::new(1.0, 0.0, -1.0));
        assert!((g.travel_time - SQRT_2).abs() < 1e-15);
        assert!((g.tangent_covector[0] - 1.0 / SQRT_2).abs() < 1e-15);
        assert_eq!(g.tangent_covector[1], 0.0);

        let nadir = eval_geometry(&f, 0.0, 0.7, 0.7).unwrap();
        assert_eq!(nadir.tangent_covector, [0.0, 0.0]);
    }

    #[test]
    fn path_touching_surface_is_rejected() {
        let chart = SurfaceChart::flat(0.0, Rect::new((-1.0, 1.0), (-1.0, 1.0)).unwrap());
        let path = FlightPath::axial(0.0, Interval::new(-1.0, 1.0).unwrap());
        let m = SarModel::new(chart, path, 2.0).unwrap();
        assert!(matches!(
            eval_geometry(&m, 0.0, 0.5, 0.5),
            Err(SarError::PathTouchesSurface { .. })
        ));
    }

    #[test]
    fn unit_vectors_and_doppler_bound() {
        let models = [cylinder(), flat()];
        for m in &models {
            for k in 0..400 {
                let x = k as f64;
                let u = 0.1 + 2.9 * (x * 0.618).fract();
                let v = -5.0 + 10.0 * (x * 0.414).fract();
                let s = -5.0 + 10.0 * (x * 0.732).fract();
                let g = eval_geometry(m, u, v, s).unwrap();
                assert!((g.rhat.norm() - 1.0).abs() <= 1e-12);
                assert!(g.doppler().abs() <= 1.0 + 1e-12);
                assert_eq!(g.travel_time, 2.0 * g.range / 2.0);
            }
        }
    }

    #[test]
    fn cylinder_geometry_independent_of_u() {
        let c = cylinder();
        for &(v, s) in &[(0.0, 0.0), (1.0, -2.0), (3.5, 0.25)] {
            let base = eval_geometry(&c, 0.0, v, s).unwrap();
            for k in 0..=100 {
                let u = std::f64::consts::PI * k as f64 / 100.0;
                let g = eval_geometry(&c, u, v, s).unwrap();
                assert!((g.range - base.range).abs() <= 1e-12);
                assert!((g.tangent_covector[1] - base.tangent_covector[1]).abs() <= 1e-12);
                assert!(g.tangent_covector[0].abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn visible_set_on_cylinder() {
        let c = cylinder();
        let w = c.window((-1.0, 1.0), (1.2, 3.0)).unwrap();
        assert!(in_visible_set(&c, &w, 1.0, 0.0));
        assert!(!in_visible_set(&c, &w, 1.0, 10.0));
        // min travel time at v = 10 is √82 ≈ 9.055
        let w2 = c.window((-1.0, 1.0), (9.0, 9.1)).unwrap();
        assert!(in_visible_set(&c, &w2, 1.0, 10.0));
    }

    #[test]
    fn visible_set_uses_refinement_between_samples() {
        // Window contains only travel times within 1e-6 of the minimum, which
        // is reached between two uniform samples.
        let mut c = cylinder();
        c.tol.visible_samples = 4;
        let w = c.window((-1.0, 1.0), (0.999_999_9, 1.000_000_1)).unwrap();
        assert!(in_visible_set(&c, &w, 1.0, 0.0));
    }

    #[test]
    fn degenerate_window_is_invisible() {
        let c = cylinder();
        let mut w = c.window((-1.0, 1.0), (1.5, 1.5 + 1e-9)).unwrap();
        assert!(in_visible_set(&c, &w, 1.0, 1.0));
        w.t.hi = w.t.lo;
        for k in 0..201 {
            let v = -4.0 + 0.04 * k as f64;
            assert!(!in_visible_set(&c, &w, 1.0, v));
        }
        assert!(c.window((-1.0, 1.0), (1.5, 1.5)).is_err());
    }

    #[test]
    fn selftest_on_builtins() {
        let c = cylinder();
        let r = derivative_selftest(&c, &selftest_samples(&c, 12)).unwrap();
        assert!(r.max_discrepancy() <= 1e-6);

        let f = flat();
        let r = derivative_selftest(&f, &selftest_samples(&f, 12)).unwrap();
        assert!(r.max_discrepancy() <= 1e-12);
    }

    #[test]
    fn selftest_on_gaussian_height_field() {
        let d = Rect::new((-3.0, 3.0), (-3.0, 3.0)).unwrap();
        let hf = HeightField::from_fn(d, 121, 121, |u: f64, v: f64| 0.5 * (-(u * u + v * v)).exp()).unwrap();
        let mut m = SarModel::new(
            SurfaceChart::HeightField(hf),
            FlightPath::axial(3.0, Interval::new(-3.0, 3.0).unwrap()),
            2.0,
        )
        .unwrap();
        m.tol.selftest_tol = 1e-5;
        let r = derivative_selftest(&m, &selftest_samples(&m, 15)).unwrap();
        assert!(r.max_discrepancy() <= 1e-5, "{:?}", r);
    }

    #[test]
    fn selftest_detects_wrong_derivative() {
        // coarse step: truncation error exceeds the tolerance
        let mut c = cylinder();
        c.tol.selftest_tol = 1e-15;
        c.tol.selftest_step = 1e-2;
        assert!(matches!(
            derivative_selftest(&c, &selftest_samples(&c, 5)),
            Err(SarError::SelfTestFailed { .. })
        ));
    }

    #[test]
    fn halving_step_reduces_fd_error() {
        let c = cylinder();
        let (u, v) = (0.7, 0.3);
        let p = c.chart.eval_unchecked(u, v);
        let err = |h: f64| {
            let fd = (c.chart.eval_unchecked(u + h, v).position - c.chart.eval_unchecked(u - h, v).position)
                .scale(0.5 / h);
            fd.max_abs_diff(&p.d_u)
        };
        for h in [1e-1, 5e-2, 2.5e-2] {
            assert!(err(h) / err(h / 2.0) >= 3.0);
        }
    }

    #[test]
    fn f32_geometry() {
        let c: SarModel<f32> = SarModel::unit_cylinder((-5.0, 5.0), (-5.0, 5.0), 2.0).unwrap();
        let g = eval_geometry(&c, std::f32::consts::FRAC_PI_2, 3.0, 1.0).unwrap();
        assert!((g.range - 5f32.sqrt()).abs() < 1e-6);
    }
}
