//! Every numerical threshold used by the toolkit, with its default.
//!
//! Scenario configs may override any field under the `tolerances` key.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Minimum range |R| before evaluation refuses (path touching the surface).
    pub eps_range: f64,
    /// Tangent covector or comparison vector below this norm is treated as zero.
    pub eps_nadir: f64,
    /// Normalized 2-D cross product at or below this marks two vectors parallel.
    pub eps_parallel: f64,
    /// Smallest singular value at or below this marks a rank drop.
    pub eps_rank: f64,
    /// Finite-difference step for residual gradients and Jacobians.
    pub fd_step: f64,
    /// Finite-difference step used by the derivative self-test.
    pub selftest_step: f64,
    /// Maximum analytic-vs-finite-difference discrepancy accepted by the self-test.
    pub selftest_tol: f64,
    /// Uniform s-samples used when testing membership in the visible set.
    pub visible_samples: usize,
    /// Newton residual target |(g1, g2)| for mirror points.
    pub tol_root: f64,
    /// Residual bound every traced family point must satisfy.
    pub tol_trace: f64,
    /// Condition number above which the mirror residual Jacobian counts as singular.
    pub family_cond: f64,
    /// Minimum cluster size for a solution component to be reported as a family.
    pub family_min_members: usize,
    /// Arc-length step of family continuation, chart units.
    pub trace_step: f64,
    /// Maximum continuation steps per direction.
    pub trace_max_steps: usize,
    /// Newton iterations per seed.
    pub newton_max_iter: usize,
    /// Near-critical |grad T| below which a level-set segment is skipped.
    pub eps_grad_t: f64,
    /// Sinogram cells whose grazing half-width falls below this are masked.
    pub eps_alpha: f64,
    /// Relative cancellation tolerance for quadrature-limited demonstrations.
    pub tol_cancel_quadrature: f64,
    /// Relative cancellation tolerance for exact-symmetry demonstrations.
    pub tol_cancel_exact: f64,
    /// Smooth verdict when high-frequency ratio <= this multiple of the calibration value.
    pub smooth_ratio_factor: f64,
    /// Significant jump when the normalized jump exceeds this multiple of the calibration value.
    pub jump_factor: f64,
    /// Fields whose max-abs is below this fraction of the reference scale are numerically zero.
    pub zero_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eps_range: 1e-9,
            eps_nadir: 1e-9,
            eps_parallel: 1e-6,
            eps_rank: 1e-6,
            fd_step: 1e-5,
            selftest_step: 1e-5,
            selftest_tol: 1e-6,
            visible_samples: 256,
            tol_root: 1e-10,
            tol_trace: 1e-8,
            family_cond: 1e8,
            family_min_members: 8,
            trace_step: 0.02,
            trace_max_steps: 10_000,
            newton_max_iter: 60,
            eps_grad_t: 1e-9,
            eps_alpha: 0.05,
            tol_cancel_quadrature: 1e-3,
            tol_cancel_exact: 1e-9,
            smooth_ratio_factor: 3.0,
            jump_factor: 3.0,
            zero_floor: 1e-9,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> crate::Result<()> {
        let positive = [
            ("eps_range", self.eps_range),
            ("eps_nadir", self.eps_nadir),
            ("eps_parallel", self.eps_parallel),
            ("eps_rank", self.eps_rank),
            ("fd_step", self.fd_step),
            ("selftest_step", self.selftest_step),
            ("selftest_tol", self.selftest_tol),
            ("tol_root", self.tol_root),
            ("tol_trace", self.tol_trace),
            ("family_cond", self.family_cond),
            ("trace_step", self.trace_step),
            ("eps_grad_t", self.eps_grad_t),
            ("eps_alpha", self.eps_alpha),
            ("tol_cancel_quadrature", self.tol_cancel_quadrature),
            ("tol_cancel_exact", self.tol_cancel_exact),
            ("smooth_ratio_factor", self.smooth_ratio_factor),
            ("jump_factor", self.jump_factor),
            ("zero_floor", self.zero_floor),
        ];
        for (key, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(crate::SarError::Config(format!(
                    "tolerances.{key} must be positive and finite (got {value})"
                )));
            }
        }
        let counts = [
            ("visible_samples", self.visible_samples),
            ("family_min_members", self.family_min_members),
            ("trace_max_steps", self.trace_max_steps),
            ("newton_max_iter", self.newton_max_iter),
        ];
        for (key, value) in counts {
            if value == 0 {
                return Err(crate::SarError::Config(format!(
                    "tolerances.{key} must be at least 1"
                )));
            }
        }
        Ok(())
    }
}
