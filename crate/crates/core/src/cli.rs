//! Batch front end: runs the analyses of a scenario config and writes artifacts.

use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cancellation::{
    cylinder_cancellation_demo, heaviside_scene, symmetric_cancellation, CancellationReport, DemoGrids, Isometry,
};
use crate::canonical::{degeneracy_map, DataCovector};
use crate::config::{AnalysisSpec, CancelMode, Profile, ScenarioConfig, SceneSpec, SimulateMode};
use crate::error::{Result, SarError};
use crate::export::{degeneracy_csv, degeneracy_svgs, fmt_f64, mirror_csv, sinogram_csv, sinogram_svg};
use crate::forward::{bandlimited_sinogram, forward_sinogram, AmplitudeSpec, SceneField, Sinogram};
use crate::geometry::{derivative_selftest, selftest_samples, AcquisitionWindow, Rect, SarModel};
use crate::grid::Grid2;
use crate::mirror::{default_region, find_mirror_set};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_ASSERT: i32 = 2;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub assert: bool,
    pub svg: bool,
    pub json: bool,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    /// Ran, but an acceptance check did not hold.
    CheckFailed,
    /// Raised an error.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisRecord {
    pub kind: String,
    pub tag: String,
    pub status: Status,
    pub message: Option<String>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub schema: u32,
    pub scenario: String,
    pub analyses: Vec<AnalysisRecord>,
    pub outputs: Vec<OutputEntry>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub manifest: Manifest,
}

struct Writer {
    dir: PathBuf,
    outputs: Vec<OutputEntry>,
}

impl Writer {
    fn write(&mut self, name: String, content: &str) -> Result<String> {
        let path = self.dir.join(&name);
        std::fs::write(&path, content)
            .map_err(|e| SarError::Config(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(OutputEntry {
            file: name.clone(),
            bytes: content.len(),
            sha256: hex::encode(Sha256::digest(content.as_bytes())),
        });
        Ok(name)
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

fn scene_grid(cfg: &ScenarioConfig, model: &SarModel<f64>) -> Result<Grid2<f64>> {
    let d = model.chart.domain();
    let u = cfg.grids.u_range.unwrap_or([d.u.lo, d.u.hi]);
    let v = cfg.grids.v_range.unwrap_or([d.v.lo, d.v.hi]);
    let grid = Grid2::new((u[0], u[1]), cfg.grids.n_u, (v[0], v[1]), cfg.grids.n_v)?;
    if !d.contains_rect(&grid.rect()) {
        return Err(SarError::Config("grids.u_range/v_range: scene grid must lie inside the surface domain".into()));
    }
    Ok(grid)
}

fn step(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x == 0.0 {
        0.5
    } else {
        0.0
    }
}

/// Smooth bump supported on the unit disc.
pub fn bump(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

fn read_scene_file(path: &FsPath, grid: Grid2<f64>) -> Result<SceneField<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SarError::Config(format!("scene.path: cannot read {}: {e}", path.display())))?;
    let mut values = Vec::with_capacity(grid.len());
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|x| x.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| SarError::Config(format!("{} line {}: {e}", path.display(), lineno + 1)))?;
        if row.len() != grid.n_u {
            return Err(SarError::Config(format!(
                "{} line {}: expected {} values, got {}",
                path.display(),
                lineno + 1,
                grid.n_u,
                row.len()
            )));
        }
        values.extend(row);
        rows += 1;
    }
    if rows != grid.n_v {
        return Err(SarError::Config(format!(
            "{}: expected {} rows (grids.n_v), got {rows}",
            path.display(),
            grid.n_v
        )));
    }
    SceneField::new(grid, values)
}

fn build_scene(cfg: &ScenarioConfig, base: &FsPath, model: &SarModel<f64>) -> Result<SceneField<f64>> {
    let grid = scene_grid(cfg, model)?;
    match cfg.scene.as_ref() {
        None | Some(SceneSpec::Zero) => Ok(SceneField::zeros(grid)),
        Some(SceneSpec::HeavisideProduct { f }) => {
            let samples: Vec<f64> = grid.us().iter().map(|&u| f.eval(u)).collect();
            heaviside_scene(grid, &samples)
        }
        Some(SceneSpec::SymmetricPair { center, radius }) => SceneField::from_fn(grid, |u, v| {
            bump((u - center[0]) / radius, (v - center[1]) / radius) * step(v - center[1])
        }),
        Some(SceneSpec::File { path }) => read_scene_file(&base.join(path), grid),
    }
}

fn sinogram_summary(sino: &Sinogram<f64>) -> serde_json::Value {
    serde_json::json!({
        "mode": sino.mode,
        "amplitude": sino.amplitude,
        "n_s": sino.n_s(),
        "n_t": sino.n_t(),
        "max_abs": sino.max_abs(),
        "masked_cells": sino.masked_count(),
        "flagged_segments": sino.flagged_total(),
    })
}

pub fn cancellation_text(r: &CancellationReport) -> String {
    let mut out = String::new();
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_else(|| "undefined".into());
    let _ = writeln!(out, "scenario: {}", r.scenario);
    let _ = writeln!(out, "reference_norm: {}", fmt_f64(r.reference_norm));
    let _ = writeln!(out, "residual_norm: {}", fmt_f64(r.residual_norm));
    let _ = writeln!(out, "ratio: {}", opt(r.ratio));
    let _ = writeln!(out, "tol_cancel: {}", fmt_f64(r.tol_cancel));
    let _ = writeln!(out, "pass: {}", r.pass);
    for (label, score) in [("reference", &r.reference_smoothness), ("residual", &r.residual_smoothness)] {
        if let Some(s) = score {
            let _ = writeln!(
                out,
                "{label}_smoothness: verdict={:?} highfreq_ratio={} threshold={} max_cell_jump={}",
                s.verdict,
                fmt_f64(s.highfreq_ratio),
                fmt_f64(s.threshold),
                fmt_f64(s.max_cell_jump)
            );
        }
    }
    for (label, jumps) in [("reference", &r.reference_jumps), ("residual", &r.residual_jumps)] {
        if let Some(j) = jumps {
            let _ = writeln!(
                out,
                "{label}_jumps: significant={} match_fraction={} max_jump={} threshold={}",
                j.significant,
                fmt_f64(j.match_fraction),
                fmt_f64(j.max_jump),
                fmt_f64(j.threshold)
            );
        }
    }
    let _ = writeln!(out, "reference_scene_jump: {}", fmt_f64(r.reference_scene_jump));
    let _ = writeln!(out, "residual_scene_jump: {}", fmt_f64(r.residual_scene_jump));
    for n in &r.notes {
        let _ = writeln!(out, "note: {n}");
    }
    let _ = writeln!(out, "caveat: smoothness verdicts are grid-scale evidence only");
    out
}

struct Ctx<'a> {
    cfg: &'a ScenarioConfig,
    base: &'a FsPath,
    model: &'a SarModel<f64>,
    window: &'a AcquisitionWindow<f64>,
    opts: &'a RunOptions,
}

/// Runs one analysis; `Ok(Some(msg))` is a failed acceptance check.
fn run_analysis(ctx: &Ctx<'_>, spec: &AnalysisSpec, tag: &str, w: &mut Writer) -> Result<(Vec<String>, Option<String>)> {
    let cfg = ctx.cfg;
    let model = ctx.model;
    let prefix = format!("{}_{tag}", spec.kind());
    let mut files = Vec::new();
    let mut check = None;
    match spec {
        AnalysisSpec::Simulate { mode, .. } => {
            let scene = build_scene(cfg, ctx.base, model)?;
            let g = &cfg.grids;
            let sino = match mode {
                SimulateMode::DeltaShell => forward_sinogram(model, &scene, &AmplitudeSpec::Unit, ctx.window, g.n_s, g.n_t)?,
                SimulateMode::BandLimited => bandlimited_sinogram(
                    model,
                    &scene,
                    &AmplitudeSpec::Unit,
                    ctx.window,
                    g.n_s,
                    g.n_t,
                    g.omega,
                    g.n_omega,
                )?,
            };
            files.push(w.write(format!("{prefix}.csv"), &sinogram_csv(&sino))?);
            if ctx.opts.svg {
                files.push(w.write(format!("{prefix}.svg"), &sinogram_svg(&sino, &format!("{} {prefix}", cfg.name)))?);
            }
            if ctx.opts.json {
                files.push(w.write(format!("{prefix}.json"), &to_json(&sinogram_summary(&sino)))?);
            }
        }
        AnalysisSpec::Mirrors { p, grid_n, region, expect, .. } => {
            let p = DataCovector::new(p[0], p[1], p[2], p[3])?;
            let region = match region {
                Some(r) => Some(Rect::new((r[0][0], r[0][1]), (r[1][0], r[1][1]))?),
                None => default_region(model, ctx.window, 121),
            };
            let set = match region {
                Some(r) => Some(find_mirror_set(model, &p, r, *grid_n)?),
                None => None,
            };
            let (csv, summary) = match &set {
                Some(set) => (mirror_csv(set), set.summary(model.tol.eps_parallel)),
                None => (
                    "u,v,xi,eta,sigma1_residual,sigma2_residual,family_id\n".to_string(),
                    "visible set empty: no search region\nisolated: 0\nfamilies: 0\n".to_string(),
                ),
            };
            files.push(w.write(format!("{prefix}.csv"), &csv)?);
            files.push(w.write(format!("{prefix}_summary.txt"), &summary)?);
            if ctx.opts.json {
                files.push(w.write(format!("{prefix}.json"), &to_json(&set))?);
            }
            if let Some(e) = expect {
                let (iso, fam) = set.as_ref().map(|s| (s.isolated.len(), s.families.len())).unwrap_or((0, 0));
                let mut problems = Vec::new();
                if e.isolated.is_some_and(|n| n != iso) {
                    problems.push(format!("expected {} isolated points, found {iso}", e.isolated.unwrap()));
                }
                if e.families.is_some_and(|n| n != fam) {
                    problems.push(format!("expected {} families, found {fam}", e.families.unwrap()));
                }
                if !problems.is_empty() {
                    check = Some(problems.join("; "));
                }
            }
        }
        AnalysisSpec::Degeneracy { s, tau, .. } => {
            let grid = scene_grid(cfg, model)?;
            let map = degeneracy_map(model, &grid, *s, *tau)?;
            files.push(w.write(format!("{prefix}.csv"), &degeneracy_csv(&map))?);
            if ctx.opts.svg {
                let (a, b) = degeneracy_svgs(&map, &format!("{} {prefix}", cfg.name));
                files.push(w.write(format!("{prefix}_sigma1.svg"), &a)?);
                files.push(w.write(format!("{prefix}_sigma2.svg"), &b)?);
            }
            if ctx.opts.json {
                let summary = serde_json::json!({
                    "s": map.s,
                    "tau": map.tau,
                    "n_u": map.n_u,
                    "n_v": map.n_v,
                    "flagged_cells": map.flagged.len(),
                    "flagged_fraction": map.flagged_fraction(),
                    "eps_graph": map.eps_graph,
                });
                files.push(w.write(format!("{prefix}.json"), &to_json(&summary))?);
            }
        }
        AnalysisSpec::Cancel { mode, isometry, .. } => {
            let (report, reference, residual) = match mode {
                CancelMode::CylinderDemo => {
                    let Some(SceneSpec::HeavisideProduct { f }) = &cfg.scene else {
                        return Err(SarError::Config("scene: cylinder-demo needs a heaviside-product scene".into()));
                    };
                    let d = model.chart.domain();
                    let v = cfg.grids.v_range.unwrap_or([d.v.lo, d.v.hi]);
                    let grids = DemoGrids {
                        n_u: cfg.grids.n_u,
                        n_v: cfg.grids.n_v,
                        v_range: (v[0], v[1]),
                        n_s: cfg.grids.n_s,
                        n_t: cfg.grids.n_t,
                    };
                    let f: Profile = f.clone();
                    let demo = cylinder_cancellation_demo(model, move |u| f.eval(u), ctx.window, grids)?;
                    files.push(w.write(format!("{prefix}_jumps.csv"), &demo.reference_jump_rows.to_csv())?);
                    (demo.report, demo.reference, demo.residual)
                }
                CancelMode::Symmetric => {
                    let iso = Isometry::parse(isometry.as_deref().unwrap_or_default())?;
                    let v1 = build_scene(cfg, ctx.base, model)?;
                    let out = symmetric_cancellation(model, &v1, iso, ctx.window, cfg.grids.n_s, cfg.grids.n_t)?;
                    (out.report, out.reference, out.residual)
                }
            };
            files.push(w.write(format!("{prefix}_reference.csv"), &sinogram_csv(&reference))?);
            files.push(w.write(format!("{prefix}_residual.csv"), &sinogram_csv(&residual))?);
            files.push(w.write(format!("{prefix}.txt"), &cancellation_text(&report))?);
            if ctx.opts.svg {
                files.push(w.write(format!("{prefix}_reference.svg"), &sinogram_svg(&reference, &format!("{prefix} reference")))?);
                files.push(w.write(format!("{prefix}_residual.svg"), &sinogram_svg(&residual, &format!("{prefix} residual")))?);
            }
            if ctx.opts.json {
                files.push(w.write(format!("{prefix}.json"), &to_json(&report))?);
            }
            if !report.pass {
                check = Some(format!(
                    "cancellation ratio {} exceeds {}",
                    report.ratio.map(fmt_f64).unwrap_or_else(|| "undefined".into()),
                    fmt_f64(report.tol_cancel)
                ));
            }
        }
        AnalysisSpec::Selftest { samples, .. } => {
            let pts = selftest_samples(model, *samples);
            let (text, failure) = match derivative_selftest(model, &pts) {
                Ok(r) => (
                    format!(
                        "surface_discrepancy: {}\npath_discrepancy: {}\nstep: {}\ntol: {}\npass: true\n",
                        fmt_f64(r.surface_discrepancy),
                        fmt_f64(r.path_discrepancy),
                        fmt_f64(r.step),
                        fmt_f64(r.tol)
                    ),
                    None,
                ),
                Err(e) => (format!("pass: false\nerror: {e}\n"), Some(e.to_string())),
            };
            files.push(w.write(format!("{prefix}.txt"), &text)?);
            check = failure;
        }
    }
    Ok((files, check))
}

fn resolve_out_dir(cfg: &ScenarioConfig, base: &FsPath, opts: &RunOptions) -> PathBuf {
    if let Some(out) = &opts.out {
        out.clone()
    } else if let Some(dir) = &cfg.output_dir {
        base.join(dir)
    } else {
        PathBuf::from("sarml-out").join(&cfg.name)
    }
}

/// Loads a config, runs it and writes `manifest.json` last.
///
/// Configuration problems (including an unwritable output directory) are
/// returned as errors; analysis failures are recorded in the manifest.
pub fn run_scenario(config_path: &FsPath, opts: &RunOptions) -> Result<RunOutcome> {
    let cfg = ScenarioConfig::load(config_path)?;
    let base = config_path.parent().map(FsPath::to_path_buf).unwrap_or_default();
    let model = cfg.model().map_err(|e| SarError::Config(e.to_string()))?;
    let window = AcquisitionWindow::new(
        (cfg.window.s[0], cfg.window.s[1]),
        (cfg.window.t[0], cfg.window.t[1]),
        cfg.window.c0,
    )
    .map_err(|e| SarError::Config(format!("window: {e}")))?;
    let dir = resolve_out_dir(&cfg, &base, opts);
    std::fs::create_dir_all(&dir)
        .map_err(|e| SarError::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
    let mut writer = Writer { dir: dir.clone(), outputs: Vec::new() };
    let ctx = Ctx {
        cfg: &cfg,
        base: &base,
        model: &model,
        window: &window,
        opts,
    };
    let mut records = Vec::new();
    let mut any_failure = false;
    for (i, spec) in cfg.analyses.iter().enumerate() {
        let tag = spec.tag(i);
        let record = match run_analysis(&ctx, spec, &tag, &mut writer) {
            Ok((files, None)) => AnalysisRecord {
                kind: spec.kind().into(),
                tag,
                status: Status::Ok,
                message: None,
                files,
            },
            Ok((files, Some(msg))) => {
                any_failure = true;
                AnalysisRecord {
                    kind: spec.kind().into(),
                    tag,
                    status: Status::CheckFailed,
                    message: Some(msg),
                    files,
                }
            }
            Err(e) => {
                // write failures are configuration problems, not analysis results
                if let SarError::Config(msg) = &e {
                    if msg.starts_with("cannot write") {
                        return Err(e);
                    }
                }
                any_failure = true;
                AnalysisRecord {
                    kind: spec.kind().into(),
                    tag,
                    status: Status::Failed,
                    message: Some(e.to_string()),
                    files: Vec::new(),
                }
            }
        };
        records.push(record);
    }
    let manifest = Manifest {
        schema: crate::config::SCHEMA_VERSION,
        scenario: cfg.name.clone(),
        analyses: records,
        outputs: writer.outputs.clone(),
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, to_json(&manifest))
        .map_err(|e| SarError::Config(format!("cannot write {}: {e}", path.display())))?;
    let exit_code = if opts.assert && any_failure { EXIT_ASSERT } else { EXIT_OK };
    Ok(RunOutcome {
        exit_code,
        out_dir: dir,
        manifest,
    })
}

/// One line of the built-in self-check.
#[derive(Debug, Clone)]
pub struct SelfCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Fast end-to-end checks against closed forms.
pub fn builtin_selftest() -> Vec<SelfCheck> {
    use crate::forward::cylinder_closed_form;
    let mut out = Vec::new();
    let mut push = |name: &'static str, r: Result<(bool, String)>| {
        let (pass, detail) = r.unwrap_or_else(|e| (false, e.to_string()));
        out.push(SelfCheck { name, pass, detail });
    };

    push("derivatives", (|| {
        let flat = SarModel::<f64>::flat_straight(Rect::new((-3.0, 3.0), (-3.0, 3.0))?, 1.0, (-3.0, 3.0), 2.0)?;
        let cyl = SarModel::<f64>::unit_cylinder((-3.0, 3.0), (-3.0, 3.0), 2.0)?;
        let a = derivative_selftest(&flat, &selftest_samples(&flat, 6))?;
        let b = derivative_selftest(&cyl, &selftest_samples(&cyl, 6))?;
        let worst = a.max_discrepancy().max(b.max_discrepancy());
        Ok((true, format!("max discrepancy {worst:e}")))
    })());

    push("closed_form", (|| {
        let v = cylinder_closed_form(0.0, 2.0, 2.0, 2.0)?;
        let err = (v - 4.0 / 3f64.sqrt()).abs();
        Ok((err < 1e-12, format!("(0, 2, 2, 2) -> {v}")))
    })());

    push("delta_shell", (|| {
        let model = SarModel::<f64>::unit_cylinder((-6.0, 6.0), (-3.0, 3.0), 2.0)?;
        let grid = Grid2::new((0.0, std::f64::consts::PI), 101, (-6.0, 6.0), 201)?;
        let samples: Vec<f64> = grid.us().iter().map(|u| u.sin()).collect();
        let scene = heaviside_scene(grid, &samples)?;
        let v = crate::forward::delta_shell_forward(&model, &scene, &AmplitudeSpec::Unit, 0.0, 2.0)?.value;
        let exact = 4.0 / 3f64.sqrt();
        let rel = (v - exact).abs() / exact;
        Ok((rel < 1e-2, format!("relative error {rel:e}")))
    })());

    push("mirror_pair", (|| {
        let model = SarModel::<f64>::flat_straight(Rect::new((-3.0, 3.0), (-3.0, 3.0))?, 1.0, (-3.0, 3.0), 2.0)?;
        let p = DataCovector::new(0.0, std::f64::consts::SQRT_2, 0.0, 1.0)?;
        let set = find_mirror_set(&model, &p, model.chart.domain(), 60)?;
        let ok = set.isolated.len() == 2
            && set.families.is_empty()
            && set.isolated.iter().all(|q| (q.scene.u.abs() - 1.0).abs() < 1e-8 && q.scene.v.abs() < 1e-8);
        Ok((ok, format!("{} isolated, {} families", set.isolated.len(), set.families.len())))
    })());

    push("mirror_family", (|| {
        let model = SarModel::<f64>::unit_cylinder((-3.0, 3.0), (-3.0, 3.0), 2.0)?;
        let p = DataCovector::new(0.0, std::f64::consts::SQRT_2, std::f64::consts::FRAC_1_SQRT_2, 1.0)?;
        let set = find_mirror_set(&model, &p, model.chart.domain(), 60)?;
        let ok = set.isolated.is_empty() && set.families.len() == 1 && set.families[0].points.len() >= 50;
        Ok((ok, format!("{} isolated, {} families", set.isolated.len(), set.families.len())))
    })());
    out
}
