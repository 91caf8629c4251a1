//! Grid-scale smoothness proxies for simulated data.
//!
//! Slices are taken along `s` at fixed `t`. A slice's high-frequency ratio is
//! the share of its periodic DFT energy at `|k| > N/4`. Thresholds come from a
//! Gaussian field sampled on the same grid.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Result, SarError};
use crate::forward::Sinogram;
use crate::num::Real;
use crate::tolerances::Tolerances;

pub const MIN_SLICE_SAMPLES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Smooth,
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessScore {
    /// Mean over slices of the high-band energy share, in `[0, 1]`.
    pub highfreq_ratio: f64,
    /// Largest first difference along `s`, divided by the field scale.
    pub max_cell_jump: f64,
    pub verdict: Verdict,
    pub calibration_ratio: f64,
    pub threshold: f64,
    pub rows_used: usize,
    /// Every sample was below `zero_floor` times the field scale.
    pub numerically_zero: bool,
}

fn high_band_share(planner: &mut FftPlanner<f64>, row: &[f64]) -> Option<f64> {
    let n = row.len();
    let mut buf: Vec<Complex<f64>> = row.iter().map(|&x| Complex::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let mut total = 0.0;
    let mut high = 0.0;
    for (k, c) in buf.iter().enumerate() {
        let e = c.norm_sqr();
        total += e;
        // signed frequency |k| in the periodic sense
        if k.min(n - k) * 4 > n {
            high += e;
        }
    }
    (total > 0.0).then(|| high / total)
}

fn mean_share(rows: &[Vec<f64>]) -> f64 {
    let shares: Vec<Option<f64>> = rows
        .par_iter()
        .map_init(FftPlanner::new, |planner, row| high_band_share(planner, row))
        .collect();
    let (sum, count) = shares
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn max_first_difference(rows: &[Vec<f64>]) -> f64 {
    rows.iter()
        .flat_map(|r| r.windows(2).map(|w| (w[1] - w[0]).abs()))
        .fold(0.0, f64::max)
}

/// Unmasked `t`-rows as `f64` slices.
fn clean_rows<T: Real>(sino: &Sinogram<T>) -> Vec<Vec<f64>> {
    (0..sino.n_t())
        .filter(|&it| (0..sino.n_s()).all(|is| !sino.is_masked(is, it)))
        .map(|it| sino.row(it).iter().map(|x| x.to_f64_lossy()).collect())
        .collect()
}

/// Gaussian centred in the window with widths of one eighth of each span.
pub fn calibration_field<T: Real>(s: &[T], t: &[T]) -> Vec<Vec<f64>> {
    let s: Vec<f64> = s.iter().map(|x| x.to_f64_lossy()).collect();
    let t: Vec<f64> = t.iter().map(|x| x.to_f64_lossy()).collect();
    let (s0, s1) = (s[0], s[s.len() - 1]);
    let (t0, t1) = (t[0], t[t.len() - 1]);
    let (sm, tm) = ((s0 + s1) / 2.0, (t0 + t1) / 2.0);
    let (ws, wt) = ((s1 - s0) / 8.0, ((t1 - t0) / 8.0).max(f64::MIN_POSITIVE));
    t.iter()
        .map(|&tv| {
            s.iter()
                .map(|&sv| (-((sv - sm) / ws).powi(2) / 2.0 - ((tv - tm) / wt).powi(2) / 2.0).exp())
                .collect()
        })
        .collect()
}

/// Calibration values `(high-band share, normalized max jump)` for an `s`/`t` grid.
pub fn calibration<T: Real>(s: &[T], t: &[T]) -> (f64, f64) {
    let field = calibration_field(s, t);
    let scale = field.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    (mean_share(&field), max_first_difference(&field) / scale)
}

/// Scores `sino` with the field scale set to its own max-abs.
pub fn smoothness_score<T: Real>(sino: &Sinogram<T>, tol: &Tolerances) -> Result<SmoothnessScore> {
    smoothness_score_scaled(sino, None, tol)
}

/// Scores `sino`; with `reference_scale` given, data below `zero_floor ×
/// reference_scale` everywhere counts as numerically zero (and smooth).
pub fn smoothness_score_scaled<T: Real>(
    sino: &Sinogram<T>,
    reference_scale: Option<T>,
    tol: &Tolerances,
) -> Result<SmoothnessScore> {
    if sino.n_s() < MIN_SLICE_SAMPLES {
        return Err(SarError::UndefinedScore(format!(
            "slices need at least {MIN_SLICE_SAMPLES} samples (got {})",
            sino.n_s()
        )));
    }
    let rows = clean_rows(sino);
    if rows.is_empty() {
        return Err(SarError::UndefinedScore("every t-row contains masked cells".into()));
    }
    let own = rows.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = reference_scale.map(|r| r.to_f64_lossy()).unwrap_or(own);
    let (calibration_ratio, _) = calibration(&sino.s, &sino.t);
    let threshold = tol.smooth_ratio_factor * calibration_ratio;
    let numerically_zero = own == 0.0 || own <= tol.zero_floor * scale;
    let (highfreq_ratio, max_cell_jump) = if numerically_zero {
        (0.0, 0.0)
    } else {
        (mean_share(&rows), max_first_difference(&rows) / scale)
    };
    let verdict = if highfreq_ratio <= threshold {
        Verdict::Smooth
    } else {
        Verdict::Singular
    };
    Ok(SmoothnessScore {
        highfreq_ratio,
        max_cell_jump,
        verdict,
        calibration_ratio,
        threshold,
        rows_used: rows.len(),
        numerically_zero,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpRow {
    pub t: f64,
    /// Midpoint of the largest first difference.
    pub s_jump: f64,
    /// Its size divided by the field scale.
    pub magnitude: f64,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpReport {
    pub rows: Vec<JumpRow>,
    /// Share of unmasked rows whose jump lies within one cell of a candidate.
    pub match_fraction: f64,
    pub max_jump: f64,
    /// `jump_factor` times the calibration field's normalized max jump.
    pub threshold: f64,
    pub significant: bool,
}

impl JumpReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,s_jump,magnitude,matched\n");
        for r in &self.rows {
            out.push_str(&format!("{:.16e},{:.16e},{:.16e},{}\n", r.t, r.s_jump, r.magnitude, r.matched as u8));
        }
        out
    }
}

/// Locates the largest `s`-jump of every unmasked row and compares it with
/// the candidate positions `curve(t)`.
pub fn jump_detect<T: Real>(
    sino: &Sinogram<T>,
    curve: impl Fn(f64) -> Vec<f64>,
    reference_scale: Option<T>,
    tol: &Tolerances,
) -> JumpReport {
    let n_s = sino.n_s();
    let s: Vec<f64> = sino.s.iter().map(|x| x.to_f64_lossy()).collect();
    let cell = if n_s > 1 { (s[n_s - 1] - s[0]) / (n_s - 1) as f64 } else { 0.0 };
    let own = sino.max_abs().to_f64_lossy();
    let scale = reference_scale.map(|r| r.to_f64_lossy()).unwrap_or(own);
    let (_, calib_jump) = if n_s > 1 && sino.n_t() > 1 {
        calibration(&sino.s, &sino.t)
    } else {
        (0.0, 0.0)
    };
    let threshold = tol.jump_factor * calib_jump;
    let numerically_zero = own == 0.0 || own <= tol.zero_floor * scale;

    let mut rows = Vec::new();
    for it in 0..sino.n_t() {
        if (0..n_s).any(|is| sino.is_masked(is, it)) {
            continue;
        }
        let row = sino.row(it);
        let mut best = (0usize, 0.0f64);
        for i in 0..n_s.saturating_sub(1) {
            let d = (row[i + 1] - row[i]).to_f64_lossy().abs();
            if d > best.1 {
                best = (i, d);
            }
        }
        let t = sino.t[it].to_f64_lossy();
        let s_jump = (s[best.0] + s[(best.0 + 1).min(n_s - 1)]) / 2.0;
        let matched = best.1 > 0.0 && curve(t).iter().any(|&c| (c - s_jump).abs() <= cell);
        let magnitude = if scale > 0.0 { best.1 / scale } else { 0.0 };
        rows.push(JumpRow {
            t,
            s_jump,
            magnitude: if numerically_zero { 0.0 } else { magnitude },
            matched,
        });
    }
    let matched = rows.iter().filter(|r| r.matched).count();
    let match_fraction = if rows.is_empty() { 0.0 } else { matched as f64 / rows.len() as f64 };
    let max_jump = rows.iter().map(|r| r.magnitude).fold(0.0, f64::max);
    JumpReport {
        rows,
        match_fraction,
        max_jump,
        threshold,
        significant: max_jump > threshold,
    }
}

/// Circular `[1, 2, 1]/4` smoothing along `s` of every unmasked row.
pub fn smooth3<T: Real>(sino: &Sinogram<T>) -> Sinogram<T> {
    let mut out = sino.clone();
    let n = sino.n_s();
    let quarter = T::lit(0.25);
    let two = T::lit(2.0);
    for it in 0..sino.n_t() {
        if (0..n).any(|is| sino.is_masked(is, it)) {
            continue;
        }
        let row = sino.row(it);
        for is in 0..n {
            let l = row[(is + n - 1) % n];
            let r = row[(is + 1) % n];
            out.values[it * n + is] = (l + two * row[is] + r) * quarter;
        }
    }
    out
}
