use crate::error::{Result, SarError};
use crate::geometry::{Interval, Rect};
use crate::num::{linspace, node, Real};

/// Uniform node grid over a chart rectangle, row-major in `v` (index `iv * n_u + iu`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2<T> {
    pub u: Interval<T>,
    pub n_u: usize,
    pub v: Interval<T>,
    pub n_v: usize,
}

impl<T: Real> Grid2<T> {
    pub fn new(u: (T, T), n_u: usize, v: (T, T), n_v: usize) -> Result<Self> {
        if n_u < 2 || n_v < 2 {
            return Err(SarError::InvalidParameter(format!(
                "grid needs at least 2 nodes per axis (got {n_u}x{n_v})"
            )));
        }
        Ok(Self {
            u: Interval::new(u.0, u.1)?,
            n_u,
            v: Interval::new(v.0, v.1)?,
            n_v,
        })
    }

    pub fn from_rect(rect: Rect<T>, n_u: usize, n_v: usize) -> Result<Self> {
        Self::new((rect.u.lo, rect.u.hi), n_u, (rect.v.lo, rect.v.hi), n_v)
    }

    pub fn rect(&self) -> Rect<T> {
        Rect {
            u: self.u,
            v: self.v,
        }
    }

    pub fn len(&self) -> usize {
        self.n_u * self.n_v
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn u_at(&self, iu: usize) -> T {
        node(self.u.lo, self.u.hi, self.n_u, iu)
    }

    pub fn v_at(&self, iv: usize) -> T {
        node(self.v.lo, self.v.hi, self.n_v, iv)
    }

    pub fn us(&self) -> Vec<T> {
        linspace(self.u.lo, self.u.hi, self.n_u)
    }

    pub fn vs(&self) -> Vec<T> {
        linspace(self.v.lo, self.v.hi, self.n_v)
    }

    pub fn du(&self) -> T {
        self.u.width() / T::from_usize(self.n_u - 1).unwrap()
    }

    pub fn dv(&self) -> T {
        self.v.width() / T::from_usize(self.n_v - 1).unwrap()
    }

    pub fn index(&self, iu: usize, iv: usize) -> usize {
        iv * self.n_u + iu
    }

    pub fn point(&self, k: usize) -> (T, T) {
        (self.u_at(k % self.n_u), self.v_at(k / self.n_u))
    }

    /// Same extent with `factor` times as many cells per axis.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n_u: (self.n_u - 1) * factor + 1,
            n_v: (self.n_v - 1) * factor + 1,
            ..*self
        }
    }
}
