//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar the toolkit is generic over (`f32` or `f64`).
///
/// Tolerances are specified in `f64` and converted with [`Real::lit`]; with
/// `f32` the tightest tolerances are below machine precision and only the
/// geometric evaluation paths are meaningful.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    fn lit(x: f64) -> Self;

    /// Lossy conversion back to `f64` for reporting and export.
    fn to_f64_lossy(self) -> f64;
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

/// Three-component vector in ambient space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3<T>(pub [T; 3]);

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self([x, y, z])
    }

    pub fn zero() -> Self {
        Self([T::zero(); 3])
    }

    pub fn x(&self) -> T {
        self.0[0]
    }

    pub fn y(&self) -> T {
        self.0[1]
    }

    pub fn z(&self) -> T {
        self.0[2]
    }

    pub fn dot(&self, other: &Self) -> T {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn cross(&self, other: &Self) -> Self {
        let [a0, a1, a2] = self.0;
        let [b0, b1, b2] = other.0;
        Self([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, k: T) -> Self {
        Self([self.0[0] * k, self.0[1] * k, self.0[2] * k])
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        (0..3)
            .map(|i| (self.0[i] - other.0[i]).abs())
            .fold(T::zero(), T::max)
    }
}

impl<T: Real> std::ops::Add for Vec3<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self([self.0[0] + rhs.0[0], self.0[1] + rhs.0[1], self.0[2] + rhs.0[2]])
    }
}

impl<T: Real> std::ops::Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self([self.0[0] - rhs.0[0], self.0[1] - rhs.0[1], self.0[2] - rhs.0[2]])
    }
}

/// Magnitude of the 2-D cross product of `a` and `b`, divided by `|a||b|`.
pub fn normalized_cross2<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    let cross = (a[0] * b[1] - a[1] * b[0]).abs();
    cross / (norm2(a) * norm2(b))
}

pub fn norm2<T: Real>(a: [T; 2]) -> T {
    a[0].hypot(a[1])
}

/// `n` points from `lo` to `hi` inclusive.
///
/// Node `i` is `(lo*(n-1-i) + hi*i)/(n-1)`, so a grid with `lo == -hi` is
/// exactly antisymmetric in floating point.
pub fn linspace<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| node(lo, hi, n, i)).collect(),
    }
}

#[inline]
pub fn node<T: Real>(lo: T, hi: T, n: usize, i: usize) -> T {
    if n < 2 {
        return lo;
    }
    let last = T::from_usize(n - 1).unwrap();
    let a = T::from_usize(n - 1 - i).unwrap();
    let b = T::from_usize(i).unwrap();
    (lo * a + hi * b) / last
}
