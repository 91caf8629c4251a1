//! Text artifacts: CSV tables, SVG heat maps and the mirror summary.
//!
//! Floats are written with 17 significant digits (`{:.16e}`) so files are
//! bit-stable and round-trip exactly; NaN is written as `nan`.

use std::fmt::Write as _;

use crate::canonical::DegeneracyMap;
use crate::forward::Sinogram;
use crate::mirror::MirrorSet;
use crate::num::Real;

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn f<T: Real>(x: T) -> String {
    fmt_f64(x.to_f64_lossy())
}

/// Header row `t\s,s_0,...`, then one row per `t`.
pub fn sinogram_csv<T: Real>(sino: &Sinogram<T>) -> String {
    let mut out = String::from("t\\s");
    for &s in &sino.s {
        out.push(',');
        out.push_str(&f(s));
    }
    out.push('\n');
    for it in 0..sino.n_t() {
        out.push_str(&f(sino.t[it]));
        for is in 0..sino.n_s() {
            out.push(',');
            if sino.is_masked(is, it) {
                out.push_str("nan");
            } else {
                out.push_str(&f(sino.at(is, it)));
            }
        }
        out.push('\n');
    }
    out
}

/// One row per solution; isolated points carry an empty `family_id`.
pub fn mirror_csv<T: Real>(set: &MirrorSet<T>) -> String {
    let mut out = String::from("u,v,xi,eta,sigma1_residual,sigma2_residual,family_id\n");
    let mut row = |q: &crate::mirror::MirrorPoint<T>, id: Option<usize>| {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            f(q.scene.u),
            f(q.scene.v),
            f(q.scene.xi),
            f(q.scene.eta),
            f(q.report.sigma1_residual),
            f(q.report.sigma2_residual),
            id.map(|i| i.to_string()).unwrap_or_default()
        );
    };
    for q in &set.isolated {
        row(q, None);
    }
    for (i, fam) in set.families.iter().enumerate() {
        for q in &fam.points {
            row(q, Some(i));
        }
    }
    out
}

pub fn degeneracy_csv<T: Real>(map: &DegeneracyMap<T>) -> String {
    let mut out = String::from("u,v,sigma1_residual,sigma2_residual,nadir,minsv_pi_l,minsv_pi_r,flagged\n");
    let mut flagged = vec![false; map.cells.len()];
    for &k in &map.flagged {
        flagged[k] = true;
    }
    for (k, cell) in map.cells.iter().enumerate() {
        if let Some(c) = cell {
            let r = &c.report;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                f(c.u),
                f(c.v),
                f(r.sigma1_residual),
                f(r.sigma2_residual),
                r.nadir_flag as u8,
                f(r.minsv_pi_l),
                f(r.minsv_pi_r),
                flagged[k] as u8
            );
        }
    }
    out
}

/// Row-major field for [`heatmap_svg`]; NaN cells are left transparent.
pub struct Field<'a> {
    pub n_x: usize,
    pub n_y: usize,
    pub values: &'a [f64],
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
}

/// Standalone SVG 1.1 heat map on a linear grayscale ramp (black = min, white = max).
/// Row 0 is drawn at the bottom.
pub fn heatmap_svg(field: &Field<'_>) -> String {
    let finite = field.values.iter().copied().filter(|x| x.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let cell = (600.0 / field.n_x.max(field.n_y) as f64).clamp(1.0, 16.0);
    let (w, h) = (cell * field.n_x as f64, cell * field.n_y as f64);
    let margin = 40.0;
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}">"#,
        w + 2.0 * margin,
        h + 2.0 * margin,
        w + 2.0 * margin,
        h + 2.0 * margin
    );
    let _ = writeln!(out, "<title>{}</title>", escape(field.title));
    let _ = writeln!(out, r#"<g shape-rendering="crispEdges" transform="translate({margin},{margin})">"#);
    let level = |x: f64| -> Option<u8> {
        if !x.is_finite() {
            None
        } else if hi > lo {
            Some(((x - lo) / (hi - lo) * 255.0).round() as u8)
        } else {
            Some(128)
        }
    };
    for iy in 0..field.n_y {
        let y = h - (iy + 1) as f64 * cell;
        let mut ix = 0;
        while ix < field.n_x {
            let g = level(field.values[iy * field.n_x + ix]);
            let mut run = 1;
            while ix + run < field.n_x && level(field.values[iy * field.n_x + ix + run]) == g {
                run += 1;
            }
            if let Some(g) = g {
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="rgb({g},{g},{g})"/>"#,
                    ix as f64 * cell,
                    y,
                    run as f64 * cell,
                    cell
                );
            }
            ix += run;
        }
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(
        out,
        r#"<text x="{margin}" y="{:.0}" font-family="monospace" font-size="12">{}</text>"#,
        margin - 22.0,
        escape(field.title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{margin}" y="{:.0}" font-family="monospace" font-size="11">min {} (black)  max {} (white)</text>"#,
        margin - 8.0,
        fmt_f64(lo),
        fmt_f64(hi)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.0}" y="{:.0}" font-family="monospace" font-size="11">{} →</text>"#,
        margin,
        h + margin + 16.0,
        escape(field.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="12" y="{:.0}" font-family="monospace" font-size="11" transform="rotate(-90 12 {:.0})">{} →</text>"#,
        h + margin,
        h + margin,
        escape(field.y_label)
    );
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn sinogram_svg<T: Real>(sino: &Sinogram<T>, title: &str) -> String {
    let values: Vec<f64> = sino
        .values
        .iter()
        .zip(&sino.mask)
        .map(|(x, &m)| if m { f64::NAN } else { x.to_f64_lossy() })
        .collect();
    heatmap_svg(&Field {
        n_x: sino.n_s(),
        n_y: sino.n_t(),
        values: &values,
        title,
        x_label: "s",
        y_label: "t",
    })
}

/// One SVG per residual field: `(sigma1, sigma2)`.
pub fn degeneracy_svgs<T: Real>(map: &DegeneracyMap<T>, title: &str) -> (String, String) {
    let pick = |g: fn(&crate::canonical::DegeneracyReport<T>) -> T| -> Vec<f64> {
        map.cells
            .iter()
            .map(|c| c.map(|c| g(&c.report).to_f64_lossy()).unwrap_or(f64::NAN))
            .collect()
    };
    let s1 = pick(|r| r.sigma1_residual);
    let s2 = pick(|r| r.sigma2_residual);
    let t1 = format!("{title}: sigma1 residual");
    let t2 = format!("{title}: sigma2 residual");
    let svg = |values: &[f64], t: &str| {
        heatmap_svg(&Field {
            n_x: map.n_u,
            n_y: map.n_v,
            values,
            title: t,
            x_label: "u",
            y_label: "v",
        })
    };
    (svg(&s1, &t1), svg(&s2, &t2))
}
