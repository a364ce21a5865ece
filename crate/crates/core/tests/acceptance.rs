//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in [`KNOWN_RED`] are evaluated as stated and expected to
//! fail; they do not affect the exit status. Any other failure exits 1.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::props;
use common::*;
use llgs_core::analytic::{chart_coefficients, chart_equilibria, homogeneous_speed_frequency, ChartId};
use llgs_core::bvp::{BvpConfig, Profile};
use llgs_core::classification::{thresholds, RegimeKind};
use llgs_core::continuation::{codim2_wall, htilde_sweep, StepPolicy, Termination};
use llgs_core::freezing::{run_selection, FreezeConfig};
use llgs_core::hamiltonian::{center_point, htilde_quadratic};
use llgs_core::melnikov::{melnikov_integrals_closed, splitting_matrix, splitting_matrix_at, splitting_value};
use llgs_core::par::Execution;
use llgs_core::{MaterialParams, Param, WaveFrame};
use num_complex::Complex64;

const KNOWN_RED: &[&str] = &["4d", "5b", "9c", "10b", "11e"];

type Verdict = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn all(parts: Vec<Verdict>) -> Verdict {
    let ok = parts.iter().all(|p| p.is_ok());
    let text: Vec<String> = parts.into_iter().map(|p| p.unwrap_or_else(|e| e)).collect();
    ensure(ok, text.join("; "))
}

fn mp(h: f64, c: f64) -> MaterialParams {
    MaterialParams::new(0.5, 0.1, -1.0, h, c).unwrap()
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

struct Report {
    unexpected: Vec<String>,
}

impl Report {
    fn run(&mut self, id: &str, name: &str, check: impl FnOnce() -> Verdict) {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let red = KNOWN_RED.contains(&id);
        match verdict {
            Ok(d) => println!("PASS {id} {name}: {d} [{secs:.1}s]{}", if red { " (listed as known red)" } else { "" }),
            Err(d) => {
                println!("FAIL {id} {name}: {d} [{secs:.1}s]{}", if red { " (known red)" } else { "" });
                if !red {
                    self.unexpected.push(id.to_string());
                }
            }
        }
    }
}

fn homogeneous_values() -> Verdict {
    let (_, hi) = thresholds(0.5, 0.1, -1.0).unwrap();
    let a = homogeneous_speed_frequency(&mp(50.0, 0.0)).unwrap();
    let b = homogeneous_speed_frequency(&mp(10.2, 0.0)).unwrap();
    all(vec![
        ensure((hi - 10.2).abs() <= 1e-12, format!("h^* = {hi}")),
        ensure(
            (a.s - 19.92).abs() <= 1e-12 && (a.omega - 40.04).abs() <= 1e-12,
            format!("h=50: ({}, {})", a.s, a.omega),
        ),
        ensure((b.s - 4.0).abs() <= 1e-12 && (b.omega - 8.2).abs() <= 1e-12, format!("h=10.2: ({}, {})", b.s, b.omega)),
    ])
}

fn double_center() -> Verdict {
    let s = (3960.0f64 / 199.0).sqrt();
    let mp = MaterialParams::new(0.5, 0.1, -1.0, 10.0, -0.99).unwrap();
    let wf = WaveFrame::new(s, 2000.0 / 199.0);
    let g0 = chart_coefficients(ChartId::Zero, &mp, &wf).gamma;
    let gp = chart_coefficients(ChartId::Pi, &mp, &wf).gamma;
    let five = |x: f64, w: f64| (x - w).abs() <= 5e-6 * 1.0001;
    all(vec![
        ensure(five(g0.re, 3.33551) && g0.im.abs() < 1e-10, format!("gamma0 = {g0}")),
        ensure(five(gp.re, 3.27469) && gp.im.abs() < 1e-10, format!("gammapi = {gp}")),
    ])
}

fn equilibria() -> Verdict {
    let mut parts = Vec::new();
    for (h, z0, zp) in [(10.2, c(-3.0, -4.0), c(1.0, 4.0)), (50.0, c(-10.96, -19.92), c(8.96, 19.92))] {
        let m = mp(h, 0.0);
        let wf = homogeneous_speed_frequency(&m).unwrap();
        let (a, _) = chart_equilibria(ChartId::Zero, &m, &wf).unwrap();
        let (b, _) = chart_equilibria(ChartId::Pi, &m, &wf).unwrap();
        let e = (a.z - z0).norm().max((b.z - zp).norm());
        parts.push(ensure(e <= 1e-10, format!("h={h}: z0+ = {}, zpi+ = {}, err {e:.1e}", a.z, b.z)));
    }
    all(parts)
}

const REFERENCE_MATRIX: [[f64; 3]; 2] = [[-0.00147567, -0.499245, 0.245945], [-0.000577908, -0.245945, -0.499245]];

fn reference_matrix() -> Verdict {
    let sm = splitting_matrix(&mp(0.5, 0.0)).unwrap();
    let mut worst = 0.0f64;
    for (i, row) in REFERENCE_MATRIX.iter().enumerate() {
        for (j, w) in row.iter().enumerate() {
            worst = worst.max((sm.m[(i, j)] - w).abs());
        }
    }
    ensure(worst <= 1e-6, format!("max entry deviation {worst:.2e}"))
}

fn kernel_direction() -> Verdict {
    let sm = splitting_matrix(&mp(0.5, 0.0)).unwrap();
    let (ds, dom) = sm.kernel_slope().unwrap();
    ensure(
        (ds + 0.00283744).abs() <= 1e-6 && (dom - 0.000240252).abs() <= 1e-6,
        format!("(ds, dOmega)/c_cp = ({ds:.9}, {dom:.9})"),
    )
}

fn zero_speed_matrix() -> Verdict {
    let mut bad = Vec::new();
    for (alpha, beta, mu) in [(0.5, 0.1, -1.0), (0.3, 0.7, -2.5), (1.7, 0.0, -0.3), (2.0, 1.0, -4.0)] {
        let sm = splitting_matrix_at(alpha, beta, mu, 0.0).unwrap();
        let d = (-mu as f64).sqrt();
        let want = [[0.0, -0.5, alpha / (2.0 * d)], [0.0, -alpha / 2.0, -1.0 / (2.0 * d)]];
        for i in 0..2 {
            for j in 0..3 {
                if sm.m[(i, j)] != want[i][j] {
                    bad.push(format!("({alpha},{beta},{mu}) entry ({i},{j})"));
                }
            }
        }
    }
    ensure(bad.is_empty(), if bad.is_empty() { "4 parameter sets, bitwise equal".into() } else { bad.join(", ") })
}

fn closed_vs_quadrature() -> Verdict {
    let names = ["I_C", "I_S", "I_CC", "I_CS"];
    let mut worst = [(0.0f64, (0.0, 0.0, 0.0)); 4];
    for (alpha, mu, s0) in melnikov_grid() {
        let cl = melnikov_integrals_closed(alpha, mu, s0).unwrap();
        let q = melnikov_quadrature(alpha, mu, s0);
        let scale = q.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (k, got) in [cl.i_c, cl.i_s, cl.i_cc, cl.i_cs].into_iter().enumerate() {
            let e = rel_err(got, q[k], 1e-6 * scale);
            if e > worst[k].0 {
                worst[k] = (e, (alpha, mu, s0));
            }
        }
    }
    all(names
        .iter()
        .zip(worst)
        .map(|(n, (e, at))| ensure(e <= 1e-9, format!("{n} worst rel {e:.1e} at {at:?}")))
        .collect())
}

fn evaluation(dev: [f64; 3], want: [f64; 2]) -> Verdict {
    let sm = splitting_matrix(&mp(0.5, 0.0)).unwrap();
    let v = splitting_value(&sm, dev);
    ensure(
        (v[0] - want[0]).abs() <= 1e-5 && (v[1] - want[1]).abs() <= 1e-5,
        format!("M{dev:?} = ({:.8}, {:.8}), reference ({}, {})", v[0], v[1], want[0], want[1]),
    )
}

fn center_coefficients() -> Verdict {
    let qf = htilde_quadratic(0.5, -1.0).unwrap();
    let (s0, h0) = center_point(0.5, 0.1, -1.0).unwrap();
    let got = qf.expand_about(s0, h0);
    let want = [-0.006612, 0.00673, -0.00183, -0.00134, -0.000086, 0.00077];
    let worst = got.iter().zip(want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    ensure(worst <= 1e-5, format!("coefficients {got:.6?}, max deviation {worst:.1e}"))
}

fn property(cases: u32, f: impl FnOnce(u32) -> Result<(), String>) -> Verdict {
    f(cases).map(|_| format!("{cases} cases"))
}

fn family_shooting() -> Verdict {
    let errs = shooting_family_errors();
    let worst = errs.iter().map(|e| e.1).fold(0.0, f64::max);
    ensure(worst < 1e-6, format!("{} fields, worst sup error {worst:.1e}", errs.len()))
}

fn family_collocation() -> Verdict {
    let errs = collocation_family_errors();
    let worst = errs.iter().map(|e| e.1).fold(0.0, f64::max);
    ensure(worst < 1e-6, format!("{} fields, worst sup error {worst:.1e}", errs.len()))
}

fn endpoint(h: f64, c_cp: f64, cfg: &BvpConfig) -> (f64, f64) {
    let br = codim2_wall(&mp(h, 0.0), c_cp, cfg, &StepPolicy::default()).unwrap();
    assert_eq!(br.terminated, Termination::ReachedTarget, "branch h={h} to c_cp={c_cp} stopped at {}", br.last().value);
    (br.final_profile.wf.s, br.final_profile.wf.omega)
}

fn near(got: (f64, f64), want: (f64, f64), tol: f64, label: &str) -> Verdict {
    ensure(
        (got.0 - want.0).abs() <= tol && (got.1 - want.1).abs() <= tol,
        format!("{label}: ({:.6}, {:.6})", got.0, got.1),
    )
}

const FIG8: [(f64, (f64, f64)); 2] = [(-0.5, (3.99541, 8.05973)), (0.5, (4.08089, 8.22402))];

fn robustness() -> Verdict {
    let base = BvpConfig::default();
    let variants = [
        ("n_mesh x2", BvpConfig { n_mesh: 2 * base.n_mesh, ..base }),
        ("L=70", BvpConfig { l: 70.0, ..base }),
    ];
    let cases = [(0.5, 0.5), (10.1, FIG8[0].0), (10.1, FIG8[1].0)];
    let mut worst = 0.0f64;
    for (h, c_cp) in cases {
        let e0 = endpoint(h, c_cp, &base);
        for (_, cfg) in &variants {
            let e = endpoint(h, c_cp, cfg);
            worst = worst.max((e.0 - e0.0).abs()).max((e.1 - e0.1).abs());
        }
    }
    ensure(worst < 1e-6, format!("max endpoint shift {worst:.1e} over 3 branches x 2 variants"))
}

fn center_start(cfg: &BvpConfig) -> Profile {
    let (_, h0) = center_point(0.5, 0.1, -1.0).unwrap();
    let m = mp(h0, 0.0);
    Profile::homogeneous(cfg.mesh(), m, homogeneous_speed_frequency(&m).unwrap(), RegimeKind::Center)
}

fn center_c_sweep() -> Verdict {
    let cfg = BvpConfig::default();
    let start = center_start(&cfg);
    let mut parts = Vec::new();
    for target in [-0.5, 0.5] {
        let pts = htilde_sweep(&start, Param::CCp, target, &cfg, &StepPolicy::default()).unwrap();
        let end = pts.last().unwrap().1;
        let inner: Vec<(f64, f64)> = pts.iter().copied().filter(|(c, g)| c.abs() >= 0.05 && *g != 0.0).collect();
        let slope = loglog_slope(&inner);
        let h0 = pts[0].1;
        parts.push(ensure(
            h0.abs() < 1e-10 && slope >= 2.0 && end.abs() >= 1e-7 && end.abs() <= 1e-5,
            format!("to {target}: H(0) = {h0:.1e}, H(end) = {end:.3e}, log-log slope {slope:.2}"),
        ));
    }
    all(parts)
}

/// Relative error of the measured `H̃` against the quadratic at `|Δ| ≤ 0.3`
/// and the log-log slope of the absolute error.
fn center_sweep(param: Param) -> Verdict {
    let cfg = BvpConfig::default();
    let start = center_start(&cfg);
    let (s0, h0) = center_point(0.5, 0.1, -1.0).unwrap();
    let qf = htilde_quadratic(0.5, -1.0).unwrap();
    let base = if param == Param::S { s0 } else { h0 };
    let mut parts = Vec::new();
    for sign in [-1.0, 1.0] {
        let pts = htilde_sweep(&start, param, base + sign * 0.3, &cfg, &StepPolicy::default()).unwrap();
        let mut worst = 0.0f64;
        let mut errs = Vec::new();
        for (v, g) in pts {
            let dv = v - base;
            if dv.abs() < 0.02 {
                continue;
            }
            let pred = if param == Param::S { qf.eval(dv, 0.0) } else { qf.eval(0.0, dv) };
            worst = worst.max(((g - pred) / pred).abs());
            errs.push((dv, g - pred));
        }
        let slope = loglog_slope(&errs);
        parts.push(ensure(
            worst <= 0.2 && (slope - 3.0).abs() <= 0.5,
            format!("{}{:+}: max rel err {:.1}%, error slope {slope:.2}", param.name(), sign * 0.3, 100.0 * worst),
        ));
    }
    all(parts)
}

fn main() {
    let mut r = Report { unexpected: Vec::new() };
    let exec = Execution::default();

    r.run("1", "thresholds and family values", homogeneous_values);
    r.run("2", "double-center gammas", double_center);
    r.run("3", "chart equilibria", equilibria);
    r.run("4a", "reference splitting matrix", reference_matrix);
    r.run("4b", "kernel direction", kernel_direction);
    r.run("4c", "zero-speed matrix", zero_speed_matrix);
    r.run("4d", "closed forms vs quadrature", closed_vs_quadrature);
    r.run("5a", "splitting evaluation c_cp=-0.5", || evaluation([-0.5, -0.007788, 0.000771], [0.00481558, 0.00181945]));
    r.run("5b", "splitting evaluation c_cp=+0.5", || evaluation([0.5, -0.007973, 0.007173], [0.00648248, -0.00133122]));
    r.run("6a", "center expansion coefficients", center_coefficients);
    r.run("6b", "negative definiteness", || {
        property(2000, |n| props::check(n, props::quadratic_point(), props::quadratic_negative_definite))
    });
    r.run("7a", "shooting reproduces the homogeneous family", family_shooting);
    r.run("7b", "collocation reproduces the homogeneous family", family_collocation);
    r.run("8a", "continuation endpoint h=0.5", || {
        near(endpoint(0.5, 0.5, &BvpConfig::default()), (0.112027, 0.447173), 1e-3, "c_cp=0.5")
    });
    r.run("8b", "continuation endpoints h=10.1", || {
        all(FIG8.iter().map(|&(c, w)| near(endpoint(10.1, c, &BvpConfig::default()), w, 1e-2, &format!("c_cp={c}"))).collect())
    });
    r.run("8c", "mesh and L robustness", robustness);
    r.run("9a", "H along the c_cp branch", center_c_sweep);
    r.run("9b", "H along the h sweep", || center_sweep(Param::H));
    r.run("9c", "H along the s sweep", || center_sweep(Param::S));

    let fig4 = catch_unwind(AssertUnwindSafe(|| run_selection(&mp(50.0, 0.0), &FreezeConfig::default(), exec)));
    let fig4 = match fig4 {
        Ok(Ok(series)) => Ok(series),
        Ok(Err(e)) => Err(e.to_string()),
        Err(_) => Err("panicked".to_string()),
    };
    r.run("10a", "freezing selection", || {
        let series = fig4.as_ref().map_err(|e| e.clone())?;
        let (s, om) = series.selected(FreezeConfig::default().window);
        ensure(
            ((s - 12.5) / 12.5).abs() <= 0.1 && ((om - 78.28) / 78.28).abs() <= 0.1,
            format!("selected ({s:.3}, {om:.3}), max norm defect {:.1e}", series.max_norm_defect),
        )
    });
    r.run("10b", "terminal q-oscillation", || {
        let t = &fig4.as_ref().map_err(|e| e.clone())?.terminal;
        ensure(
            t.tail_q_extrema >= 2 && t.tail_q_amplitude > 1e-3,
            format!("{} q extrema on the theta->pi side, half range {:.3}", t.tail_q_extrema, t.tail_q_amplitude),
        )
    });

    r.run("11a", "chart invariance", || property(500, |n| props::check(n, props::chart_point(), props::pole_charts_invariant)));
    r.run("11b", "Hamiltonian conservation", || {
        property(60, |n| props::check(n, props::orbit_start(), props::hamiltonian_conserved))
    });
    r.run("11c", "coordinate consistency", || {
        property(500, |n| props::check(n, props::interior_point(), props::coordinates_agree))
    });
    r.run("11d", "rank-2 splitting", || property(500, |n| props::check(n, props::splitting_point(), props::splitting_rank_two)));
    r.run("11e", "determinant identity", || {
        property(200, |n| props::check(n, props::identity_point(), props::determinant_identity_stated))
    });
    r.run("11f", "tail coefficients", || property(500, |n| props::check(n, props::tail_point(), props::tail_zero_iff_center)));
    r.run("11g", "unit norm in the PDE", || property(60, |n| props::check(n, props::twisted_wall(), props::step_keeps_unit_norm)));

    if r.unexpected.is_empty() {
        println!("acceptance: no unexpected failures (known red: {})", KNOWN_RED.join(", "));
    } else {
        println!("acceptance: unexpected failures: {}", r.unexpected.join(", "));
        std::process::exit(1);
    }
}
