#![allow(clippy::needless_range_loop)]
//! Small dense singular value decompositions (one-sided Jacobi).

use crate::Real;

/// Singular values (descending) and right singular vectors of a square matrix.
///
/// `v[k]` is the right singular vector paired with `sigma[k]`.
#[derive(Debug, Clone, Copy)]
pub struct Svd<T, const N: usize> {
    pub sigma: [T; N],
    pub v: [[T; N]; N],
}

impl<T: Real, const N: usize> Svd<T, N> {
    pub fn min_singular_value(&self) -> T {
        self.sigma[N - 1]
    }

    /// Ratio of the largest to the smallest singular value (infinite when singular).
    pub fn condition_number(&self) -> T {
        let smin = self.sigma[N - 1];
        if smin > T::zero() {
            self.sigma[0] / smin
        } else {
            T::infinity()
        }
    }

    /// Right singular vector of the smallest singular value.
    pub fn null_direction(&self) -> [T; N] {
        self.v[N - 1]
    }

    /// Minimum-norm least-squares solution of `A x = b`, dropping singular
    /// values below `rcond * sigma_max`.
    pub fn solve_pinv(&self, a: &[[T; N]; N], b: &[T; N], rcond: T) -> [T; N] {
        let cutoff = self.sigma[0] * rcond;
        let mut x = [T::zero(); N];
        for k in 0..N {
            let s = self.sigma[k];
            if s <= cutoff || s == T::zero() {
                continue;
            }
            // u_k = A v_k / s_k
            let vk = self.v[k];
            let mut coef = T::zero();
            for i in 0..N {
                let mut uik = T::zero();
                for j in 0..N {
                    uik = uik + a[i][j] * vk[j];
                }
                coef = coef + uik / s * b[i];
            }
            for j in 0..N {
                x[j] = x[j] + coef / s * vk[j];
            }
        }
        x
    }
}

/// One-sided Jacobi SVD of a square matrix given row-major.
pub fn svd<T: Real, const N: usize>(a: &[[T; N]; N]) -> Svd<T, N> {
    // Work on columns of A: w[j] is column j.
    let mut w = [[T::zero(); N]; N];
    for i in 0..N {
        for j in 0..N {
            w[j][i] = a[i][j];
        }
    }
    let mut v = [[T::zero(); N]; N];
    for (j, col) in v.iter_mut().enumerate() {
        col[j] = T::one();
    }
    let eps = T::epsilon();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..N {
            for q in (p + 1)..N {
                let mut alpha = T::zero();
                let mut beta = T::zero();
                let mut gamma = T::zero();
                for i in 0..N {
                    alpha = alpha + w[p][i] * w[p][i];
                    beta = beta + w[q][i] * w[q][i];
                    gamma = gamma + w[p][i] * w[q][i];
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..N {
                    let wp = w[p][i];
                    let wq = w[q][i];
                    w[p][i] = c * wp - s * wq;
                    w[q][i] = s * wp + c * wq;
                }
                for i in 0..N {
                    let vp = v[p][i];
                    let vq = v[q][i];
                    v[p][i] = c * vp - s * vq;
                    v[q][i] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: [usize; N] = [0; N];
    for (k, o) in order.iter_mut().enumerate() {
        *o = k;
    }
    let norms: Vec<T> = (0..N)
        .map(|j| w[j].iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt())
        .collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));
    let mut sigma = [T::zero(); N];
    let mut vs = [[T::zero(); N]; N];
    for (k, &j) in order.iter().enumerate() {
        sigma[k] = norms[j];
        vs[k] = v[j];
    }
    Svd { sigma, v: vs }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix() {
        let a = [[3.0_f64, 0.0], [0.0, -0.5]];
        let d = svd(&a);
        assert!((d.sigma[0] - 3.0).abs() < 1e-15);
        assert!((d.sigma[1] - 0.5).abs() < 1e-15);
        assert!((d.null_direction()[1].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rank_one_has_zero_singular_value() {
        let a = [[1.0_f64, 2.0], [2.0, 4.0]];
        let d = svd(&a);
        assert!(d.min_singular_value() < 1e-14);
        let n = d.null_direction();
        assert!((n[0] * 1.0 + n[1] * 2.0).abs() < 1e-14);
    }

    #[test]
    fn matches_frobenius_norm_4x4() {
        let a = [
            [1.0_f64, 2.0, 0.5, -1.0],
            [0.0, 1.0, 3.0, 2.0],
            [4.0, -1.0, 0.0, 1.0],
            [1.0, 1.0, 1.0, 1.0],
        ];
        let d = svd(&a);
        let fro: f64 = a.iter().flatten().map(|x| x * x).sum();
        let sv2: f64 = d.sigma.iter().map(|s| s * s).sum();
        assert!((fro - sv2).abs() < 1e-12);
        // A v_k has norm sigma_k
        for k in 0..4 {
            let mut n2 = 0.0;
            for row in &a {
                let y: f64 = (0..4).map(|j| row[j] * d.v[k][j]).sum();
                n2 += y * y;
            }
            assert!((n2.sqrt() - d.sigma[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn pinv_solves_regular_system() {
        let a = [[2.0_f64, 1.0], [1.0, 3.0]];
        let b = [3.0, 5.0];
        let d = svd(&a);
        let x = d.solve_pinv(&a, &b, 1e-12);
        assert!((2.0 * x[0] + x[1] - 3.0).abs() < 1e-13);
        assert!((x[0] + 3.0 * x[1] - 5.0).abs() < 1e-13);
    }
}
