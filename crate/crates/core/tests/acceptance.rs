//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
//!
//! Every reference value here is computed by an oracle written in this file
//! (closed forms, exact symmetries) rather than by the library routine under test.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::path::{Path as FsPath, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sarml::cancellation::{cylinder_cancellation_demo, heaviside_scene, symmetric_cancellation, DemoGrids, Isometry};
use sarml::canonical::{degeneracy_map, lambda_forward, DataCovector};
use sarml::forward::{bandlimited_forward, delta_shell_forward, forward_sinogram, AmplitudeSpec, SceneField, Sinogram};
use sarml::geometry::{AcquisitionWindow, Rect, SarModel};
use sarml::grid::Grid2;
use sarml::mirror::find_mirror_set;
use sarml::smoothness::Verdict;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cylinder(v_range: (f64, f64)) -> SarModel<f64> {
    SarModel::unit_cylinder(v_range, (-3.0, 3.0), 2.0).unwrap()
}

fn flat() -> SarModel<f64> {
    SarModel::flat_straight(Rect::new((-3.0, 3.0), (-3.0, 3.0)).unwrap(), 1.0, (-3.0, 3.0), 2.0).unwrap()
}

// Closed-form cylinder data for V = f(u) H(v), c0 = 2: |R| = t, front at |s| = sqrt(t^2 - 1).
fn cylinder_oracle(s: f64, t: f64, integral_f: f64) -> f64 {
    let alpha = (t * t - 1.0).sqrt();
    let h = |x: f64| if x >= 0.0 { 1.0 } else { 0.0 };
    t * (h(s + alpha) + h(s - alpha)) / alpha * integral_f
}

struct Comparison {
    worst: f64,
    excluded: usize,
    compared: usize,
}

fn compare_closed_form(sino: &Sinogram<f64>, band: f64) -> Comparison {
    let scale = (0..sino.n_t())
        .flat_map(|it| (0..sino.n_s()).map(move |is| (is, it)))
        .map(|(is, it)| cylinder_oracle(sino.s[is], sino.t[it], 2.0).abs())
        .fold(0.0, f64::max);
    let mut out = Comparison { worst: 0.0, excluded: 0, compared: 0 };
    for it in 0..sino.n_t() {
        let t = sino.t[it];
        let alpha = (t * t - 1.0).sqrt();
        for is in 0..sino.n_s() {
            if sino.is_masked(is, it) {
                continue;
            }
            let s = sino.s[is];
            // cells whose front position falls within one scene cell are sampled across the jump
            if (s - alpha).abs() < band || (s + alpha).abs() < band {
                out.excluded += 1;
                continue;
            }
            let exact = cylinder_oracle(s, t, 2.0);
            let got = sino.at(is, it);
            let err = if exact == 0.0 { got.abs() / scale } else { (got - exact).abs() / exact.abs() };
            out.worst = out.worst.max(err);
            out.compared += 1;
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let model = cylinder((-6.0, 6.0));
    let window = AcquisitionWindow::new((-3.0, 3.0), (1.1, 3.0), 2.0).unwrap();
    let run = |n: usize| {
        let grid = Grid2::new((0.0, PI), n, (-6.0, 6.0), n).unwrap();
        let f: Vec<f64> = grid.us().iter().map(|u| u.sin()).collect();
        let scene = heaviside_scene(grid, &f).unwrap();
        let start = Instant::now();
        let sino = forward_sinogram(&model, &scene, &AmplitudeSpec::Unit, &window, 121, 96).unwrap();
        (sino, start.elapsed().as_secs_f64(), grid.dv())
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (base, secs, dv) = pool.install(|| run(400));
    let (fine, _, dv_fine) = run(1600);
    let a = compare_closed_form(&base, dv);
    let b = compare_closed_form(&fine, dv_fine);
    check(
        a.worst <= 1e-2 && b.worst <= 1e-3 && secs <= 60.0 && a.compared > 0 && b.compared > 0,
        format!(
            "400x400 max rel err {:.3e} ({} cells, {} at the front excluded), 1600x1600 {:.3e}, single-thread {secs:.2} s",
            a.worst, a.compared, a.excluded, b.worst
        ),
    )
}

fn criterion_2() -> Outcome {
    let model = cylinder((-6.0, 6.0));
    let window = AcquisitionWindow::new((-3.0, 3.0), (1.1, 3.0), 2.0).unwrap();
    let grids = DemoGrids { n_u: 400, n_v: 400, v_range: (-6.0, 6.0), n_s: 121, n_t: 96 };
    let demo = cylinder_cancellation_demo(&model, |u: f64| (2.0 * u).sin(), &window, grids).unwrap();
    let r = &demo.report;
    // the sin 2u scene must still jump by max|sin 2u| = 1 across v = 0, like the reference
    let grid = Grid2::new((0.0, PI), 400, (-6.0, 6.0), 400).unwrap();
    let expected_jump = grid.us().iter().map(|u| (2.0 * u).sin().abs()).fold(0.0, f64::max);
    let ratio = r.ratio.unwrap_or(f64::INFINITY);
    let ref_verdict = r.reference_smoothness.as_ref().map(|s| s.verdict);
    let res_verdict = r.residual_smoothness.as_ref().map(|s| s.verdict);
    let ok = ratio <= 1e-3
        && (r.residual_scene_jump - expected_jump).abs() <= 1e-12
        && (r.residual_scene_jump - r.reference_scene_jump).abs() <= 1e-3
        && ref_verdict == Some(Verdict::Singular)
        && res_verdict == Some(Verdict::Smooth);
    check(
        ok,
        format!(
            "ratio {ratio:.3e}, scene jump {:.6} (reference {:.6}), verdicts reference {ref_verdict:?} residual {res_verdict:?}",
            r.residual_scene_jump, r.reference_scene_jump
        ),
    )
}

fn criterion_3() -> Outcome {
    let model = flat();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_base, mut worst_round, mut wrong_count) = (0.0f64, 0.0f64, 0);
    for _ in 0..100 {
        // admissible p: pick range, along-track offset and cross-track distance inside the domain
        let s: f64 = rng.gen_range(-1.0..1.0);
        let w: f64 = rng.gen_range(-1.2..1.2);
        let u_abs: f64 = rng.gen_range(0.2..2.5);
        let tau: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(0.5..2.0);
        let rho = (u_abs * u_abs + w * w + 1.0).sqrt();
        let p = DataCovector::new(s, rho, tau * w / rho, tau).unwrap();
        // closed-form inverse: |R| = t, v - s = sigma t / tau, u = ±sqrt(t^2 - (v-s)^2 - 1)
        let vv = p.s + p.sigma * p.t / p.tau;
        let uu = (p.t * p.t - (vv - p.s).powi(2) - 1.0).sqrt();
        let expected = [(-uu, vv), (uu, vv)];
        let set = find_mirror_set(&model, &p, model.chart.domain(), 120).unwrap();
        if set.isolated.len() != 2 || !set.families.is_empty() {
            wrong_count += 1;
            continue;
        }
        for (q, e) in set.isolated.iter().zip(expected) {
            worst_base = worst_base.max((q.scene.u - e.0).abs().max((q.scene.v - e.1).abs()));
            let xi = p.tau * e.0 / p.t;
            let eta = p.tau * (e.1 - p.s) / p.t;
            let back = lambda_forward(&model, q.scene.u, q.scene.v, p.s, p.tau).unwrap();
            let round = [
                back.data.t - p.t,
                back.data.sigma - p.sigma,
                back.scene.xi - xi,
                back.scene.eta - eta,
                q.scene.xi - xi,
                q.scene.eta - eta,
            ]
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs()));
            worst_round = worst_round.max(round);
        }
    }
    check(
        wrong_count == 0 && worst_base <= 1e-8 && worst_round <= 1e-8,
        format!("100 covectors, {wrong_count} wrong counts, base-point err {worst_base:.2e}, round-trip err {worst_round:.2e}"),
    )
}

#[allow(clippy::approx_constant)]
fn criterion_4() -> Outcome {
    let model = cylinder((-3.0, 3.0));
    // 0.70711 is 1/sqrt(2) rounded; the family exists only at the exact value
    let p = DataCovector::new(0.0, SQRT_2, FRAC_1_SQRT_2, 1.0).unwrap();
    let set = find_mirror_set(&model, &p, model.chart.domain(), 120).unwrap();
    let literal = DataCovector::new(0.0, SQRT_2, 0.70711, 1.0).unwrap();
    let literal_set = find_mirror_set(&model, &literal, model.chart.domain(), 120).unwrap();
    let eps = model.tol.eps_parallel;
    let Some(fam) = set.families.first() else {
        return Err(format!("{} isolated, 0 families", set.isolated.len()));
    };
    let dv = fam.points.iter().map(|q| (q.scene.v - 1.0).abs()).fold(0.0, f64::max);
    let dxi = fam.points.iter().map(|q| q.scene.xi.abs()).fold(0.0, f64::max);
    let all_sigma2 = fam.points.iter().all(|q| q.report.in_sigma2(eps));
    check(
        set.isolated.is_empty() && set.families.len() == 1 && fam.points.len() >= 50 && dv <= 1e-8 && dxi <= 1e-8 && all_sigma2,
        format!(
            "{} isolated, {} family of {} points, max|v-1| {dv:.2e}, max|xi| {dxi:.2e}, all in Sigma2 {all_sigma2} (literal 0.70711: {} families)",
            set.isolated.len(),
            set.families.len(),
            fam.points.len(),
            literal_set.families.len()
        ),
    )
}

fn criterion_5() -> Outcome {
    let eps_rank = 1e-6;
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, model, grid) in [
        ("flat", flat(), Grid2::new((-3.0, 3.0), 121, (-3.0, 3.0), 121).unwrap()),
        ("cylinder", cylinder((-3.0, 3.0)), Grid2::new((0.0, PI), 121, (-3.0, 3.0), 121).unwrap()),
    ] {
        let map = degeneracy_map(&model, &grid, 0.0, 1.0).unwrap();
        let eps = model.tol.eps_parallel;
        let du = grid.du();
        let mut strip_ok = true;
        let mut sv_ok = true;
        let mut graph_ok = true;
        let mut non_nadir = 0;
        let mut sigma2 = 0;
        for (k, cell) in map.cells.iter().enumerate() {
            let Some(c) = cell else {
                strip_ok = false;
                continue;
            };
            let r = &c.report;
            let flagged = map.flagged.contains(&k);
            if name == "flat" {
                // flat plane under a straight path: degenerate exactly where u = 0
                let on_axis = c.u.abs() < 1e-12;
                if flagged != on_axis || (flagged && c.u.abs() > du) {
                    strip_ok = false;
                }
            } else if !r.nadir_flag {
                non_nadir += 1;
                if r.in_sigma2(eps) || r.sigma2_trivial {
                    sigma2 += 1;
                }
            }
            if r.in_sigma1(eps) && !r.nadir_flag && r.minsv_pi_l > eps_rank {
                sv_ok = false;
            }
            if r.in_sigma2(eps) && !r.nadir_flag && r.minsv_pi_r > eps_rank {
                sv_ok = false;
            }
            if r.nadir_flag && r.minsv_pi_l.min(r.minsv_pi_r) > eps_rank {
                sv_ok = false;
            }
            if r.sigma1_residual >= 0.1 && r.sigma2_residual >= 0.1 && r.minsv_pi_l.min(r.minsv_pi_r) <= map.eps_graph {
                graph_ok = false;
            }
        }
        if name == "cylinder" {
            strip_ok = non_nadir > 0 && sigma2 == non_nadir;
            notes.push(format!("cylinder Sigma2 {sigma2}/{non_nadir}"));
        } else {
            notes.push(format!("flat flagged {} cells in the u = 0 column", map.flagged.len()));
        }
        notes.push(format!("{name} minsv ok {sv_ok}, graph ok {graph_ok} (eps_graph {:.2e})", map.eps_graph));
        ok &= strip_ok && sv_ok && graph_ok;
    }
    check(ok, notes.join(", "))
}

fn random_singular_scene(rng: &mut ChaCha8Rng, grid: Grid2<f64>, u_center: f64, u_half: f64) -> SceneField<f64> {
    let bumps: Vec<[f64; 6]> = (0..3)
        .map(|_| {
            [
                rng.gen_range(u_center - 0.6 * u_half..u_center + 0.6 * u_half),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.3..0.8),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(0.5..2.0),
            ]
        })
        .collect();
    SceneField::from_fn(grid, |u, v| {
        bumps
            .iter()
            .map(|&[cu, cv, r, slope, off, amp]| {
                let x = (u - cu) / r;
                let y = (v - cv) / r;
                let d = x * x + y * y;
                let smooth = if d < 1.0 { (-1.0 / (1.0 - d)).exp() } else { 0.0 };
                // jump across a tilted line through the bump
                let edge = if v - cv - slope * (u - cu) - off * r > 0.0 { 1.0 } else { 0.0 };
                amp * smooth * (0.5 + edge)
            })
            .sum()
    })
    .unwrap()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut runs = 0;
    let flat_window = AcquisitionWindow::new((-2.0, 2.0), (1.1, 4.0), 2.0).unwrap();
    let cyl_window = AcquisitionWindow::new((-2.0, 2.0), (1.1, 3.0), 2.0).unwrap();
    let flat_model = flat();
    let cyl_model = cylinder((-3.0, 3.0));
    for n in [81, 161] {
        for _ in 0..10 {
            let fg = Grid2::new((-2.5, 2.5), n, (-2.5, 2.5), n).unwrap();
            let v1 = random_singular_scene(&mut rng, fg, 0.0, 2.5);
            let out = symmetric_cancellation(&flat_model, &v1, Isometry::FlatReflect, &flat_window, 61, 48).unwrap();
            worst = worst.max(out.report.ratio.unwrap_or(f64::INFINITY));
            let cg = Grid2::new((0.0, PI), n, (-2.5, 2.5), n).unwrap();
            let v1 = random_singular_scene(&mut rng, cg, PI / 2.0, PI / 2.0);
            let out = symmetric_cancellation(&cyl_model, &v1, Isometry::CylinderReflect, &cyl_window, 61, 48).unwrap();
            worst = worst.max(out.report.ratio.unwrap_or(f64::INFINITY));
            runs += 2;
        }
    }
    check(worst <= 1e-9, format!("{runs} runs (2 grids, 2 isometries), worst ratio {worst:.3e}"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rel = |a: f64, b: f64, scale: f64| (a - b).abs() / scale.max(f64::MIN_POSITIVE);
    let mut worst_h = 0.0f64;
    let models = [flat(), cylinder((-3.0, 3.0))];
    for i in 0..1000 {
        let model = &models[i % 2];
        let d = model.chart.domain();
        let u = rng.gen_range(d.u.lo..d.u.hi);
        let v = rng.gen_range(d.v.lo..d.v.hi);
        let s = rng.gen_range(-3.0..3.0);
        let tau = rng.gen_range(0.1..5.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let c = rng.gen_range(0.1..10.0);
        let a = lambda_forward(model, u, v, s, tau).unwrap();
        let b = lambda_forward(model, u, v, s, c * tau).unwrap();
        let pairs = [
            (b.data.s, a.data.s),
            (b.data.t, a.data.t),
            (b.data.sigma, c * a.data.sigma),
            (b.data.tau, c * a.data.tau),
            (b.scene.u, a.scene.u),
            (b.scene.v, a.scene.v),
            (b.scene.xi, c * a.scene.xi),
            (b.scene.eta, c * a.scene.eta),
        ];
        let scale = pairs.iter().fold(0.0f64, |m, p| m.max(p.1.abs()));
        for (x, y) in pairs {
            worst_h = worst_h.max(rel(x, y, scale));
        }
    }

    let model = cylinder((-3.0, 3.0));
    let grid = Grid2::new((0.0, PI), 96, (-3.0, 3.0), 96).unwrap();
    let random_field = |rng: &mut ChaCha8Rng| {
        let values = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SceneField::new(grid, values).unwrap()
    };
    let fields: Vec<SceneField<f64>> = (0..4).map(|_| random_field(&mut rng)).collect();
    let mut worst_l = 0.0f64;
    for i in 0..1000 {
        let (v1, v2) = (&fields[i % 4], &fields[(i + 1) % 4]);
        let a = rng.gen_range(-3.0..3.0);
        let b = rng.gen_range(-3.0..3.0);
        let s = rng.gen_range(-2.0..2.0);
        let t = rng.gen_range(1.1..3.0);
        let combo = v1.combine(a, v2, b).unwrap();
        let f = |v: &SceneField<f64>| delta_shell_forward(&model, v, &AmplitudeSpec::Unit, s, t).unwrap().value;
        let (f1, f2, f12) = (f(v1), f(v2), f(&combo));
        let scale = (a * f1).abs() + (b * f2).abs();
        if scale > 0.0 {
            worst_l = worst_l.max(rel(f12, a * f1 + b * f2, scale));
        }
    }
    check(
        worst_h <= 1e-12 && worst_l <= 1e-12,
        format!("homogeneity worst rel {worst_h:.2e} over 1000, linearity worst rel {worst_l:.2e} over 1000"),
    )
}

// C-infinity step: 1 for x <= 0, 0 for x >= 1.
fn smooth_off(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x >= 1.0 {
        0.0
    } else {
        let a = (-1.0 / (1.0 - x)).exp();
        let b = (-1.0 / x).exp();
        a / (a + b)
    }
}

fn criterion_8() -> Outcome {
    let model = cylinder((-1.0, 6.0));
    let grid = Grid2::new((0.0, PI), 257, (-1.0, 6.0), 3501).unwrap();
    let scene = SceneField::from_fn(grid, |u, v| {
        let h = if v > 0.0 {
            1.0
        } else if v == 0.0 {
            0.5
        } else {
            0.0
        };
        u.sin() * h * smooth_off((v - 3.5) / 2.0)
    })
    .unwrap();
    // probes sit on the singular front shifted by whole periods of the coarsest band
    let probes: Vec<(f64, f64)> = [(-0.4, 3.0), (-0.8, 3.0), (-1.2, 3.0), (-1.6, 3.0), (-2.0, 2.0)]
        .iter()
        .map(|&(s, k)| (s, (1.0f64 + s * s).sqrt() + 2.0 * PI * k / 25.0))
        .collect();
    let mut lines = Vec::new();
    let mut ok = true;
    for (s, t) in probes {
        let exact = delta_shell_forward(&model, &scene, &AmplitudeSpec::Unit, s, t).unwrap().value;
        let errs: Vec<f64> = [25.0, 100.0, 400.0]
            .iter()
            .map(|&w: &f64| {
                let n = 4 * w as usize + 1;
                (bandlimited_forward(&model, &scene, &AmplitudeSpec::Unit, s, t, w, n).unwrap() - exact).abs()
            })
            .collect();
        ok &= errs[1] < errs[0] && errs[2] < errs[1];
        lines.push(format!("({s:.1},{t:.3}) {:.2e}>{:.2e}>{:.2e}", errs[0], errs[1], errs[2]));
    }
    check(ok, lines.join("; "))
}

fn scenario_dir() -> PathBuf {
    FsPath::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn read_dir_sorted(dir: &FsPath) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut snapshots = Vec::new();
    for scenario in ["cylinder_cancel", "flat_mirrors", "cylinder_family", "symmetric_flat"] {
        let config = scenario_dir().join(format!("{scenario}.json"));
        let mut runs = Vec::new();
        for (rep, threads) in [(0, 1), (1, 1), (0, 4), (1, 4)] {
            let out = tmp.path().join(format!("{scenario}_{threads}_{rep}"));
            let status = Command::new(env!("CARGO_BIN_EXE_sarml"))
                .args(["run", config.to_str().unwrap(), "--svg", "--json", "--threads", &threads.to_string(), "--out"])
                .arg(&out)
                .output()
                .unwrap();
            if !status.status.success() {
                return Err(format!("{scenario}: exit {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)));
            }
            runs.push(read_dir_sorted(&out));
        }
        let identical = runs.windows(2).all(|w| w[0] == w[1]);
        snapshots.push((scenario, runs[0].len(), identical));
    }
    let ok = snapshots.iter().all(|s| s.2 && s.1 > 1);
    let detail = snapshots
        .iter()
        .map(|(name, n, same)| format!("{name}: {n} files identical={same}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(ok, format!("threads 1 and 4, two runs each; {detail}"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 cylinder closed form", criterion_1),
        ("2 cylinder cancellation", criterion_2),
        ("3 flat mirror pairs", criterion_3),
        ("4 cylinder mirror family", criterion_4),
        ("5 degeneracy maps", criterion_5),
        ("6 symmetric realization", criterion_6),
        ("7 homogeneity and linearity", criterion_7),
        ("8 band-limited convergence", criterion_8),
        ("9 determinism", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(d) => println!("PASS criterion {name}: {d} [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
