//! Property bodies shared by the proptest suite and the acceptance harness.

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestError, TestRng, TestRunner};
use std::f64::consts::PI;

use llgs_core::analytic::{chart_coefficients, chart_equilibria, ChartId};
use llgs_core::freezing::{dt_max, freeze_step, FrameMode, LineState};
use llgs_core::hamiltonian::{
    center_frequency, hamiltonian, htilde_quadratic, periodic_neighborhood, tail_oscillation_coefficients,
};
use llgs_core::integrator::{dopri5, Options};
use llgs_core::melnikov::{determinant_identity_check, determinant_identity_corrected, splitting_matrix_at};
use llgs_core::model::{desingularized_rhs, singular_rhs};
use llgs_core::par::Execution;
use llgs_core::{ChartState, MaterialParams, WaveFrame};

pub type Outcome = Result<(), TestCaseError>;

/// Runs `test` on `cases` draws from a fixed seed.
pub fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Outcome) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let rng = TestRng::deterministic_rng(RngAlgorithm::ChaCha);
    let mut runner = TestRunner::new_with_rng(Config { cases, failure_persistence: None, ..Config::default() }, rng);
    runner.run(&strategy, test).map_err(|e| match e {
        TestError::Fail(why, v) => format!("{why} at {v:?}"),
        TestError::Abort(why) => format!("aborted: {why}"),
    })
}

pub fn params() -> impl Strategy<Value = MaterialParams> {
    (0.1f64..2.0, 0.0f64..1.0, -3.0f64..-0.2, -5.0f64..20.0, -0.9f64..0.9)
        .prop_map(|(a, b, m, h, c)| MaterialParams::new(a, b, m, h, c).unwrap())
}

pub fn frame() -> impl Strategy<Value = WaveFrame> {
    (-5.0f64..5.0, -10.0f64..20.0).prop_map(|(s, o)| WaveFrame::new(s, o))
}

pub fn chart_point() -> impl Strategy<Value = (MaterialParams, WaveFrame, f64, f64)> {
    (params(), frame(), -5.0f64..5.0, -5.0f64..5.0)
}

pub fn pole_charts_invariant((mp, wf, p, q): (MaterialParams, WaveFrame, f64, f64)) -> Outcome {
    let f0 = desingularized_rhs(&ChartState::new(0.0, p, q), &mp, &wf);
    prop_assert_eq!(f0[0], 0.0);
    let fp = desingularized_rhs(&ChartState::new(PI, p, q), &mp, &wf);
    prop_assert!(fp[0].abs() <= 2e-16 * p.abs());
    Ok(())
}

pub fn interior_point() -> impl Strategy<Value = (MaterialParams, WaveFrame, f64, f64, f64)> {
    (params(), frame(), 0.05f64..(PI - 0.05), -5.0f64..5.0, -5.0f64..5.0)
}

/// With `ψ = p sin θ`: `ψ' = p' sin θ + p cos θ θ'`.
pub fn coordinates_agree((mp, wf, theta, p, q): (MaterialParams, WaveFrame, f64, f64, f64)) -> Outcome {
    let st = ChartState::new(theta, p, q);
    let f = desingularized_rhs(&st, &mp, &wf);
    let g = singular_rhs(&st.to_singular(), &mp, &wf, 1e-8).unwrap();
    let (sn, cs) = theta.sin_cos();
    let scale = 1.0 + f.iter().chain(g.iter()).fold(0.0f64, |a, v| a.max(v.abs()));
    prop_assert!((g[0] - f[0]).abs() <= 1e-13 * scale);
    prop_assert!((g[1] - (f[1] * sn + p * cs * f[0])).abs() <= 1e-12 * scale);
    prop_assert!((g[2] - f[2]).abs() <= 1e-12 * scale);
    Ok(())
}

/// `(α, β, μ, s₀/s_crit)` with `β = 0` and `s₀ = 0` drawn often.
pub fn splitting_point() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.1f64..3.0, prop_oneof![Just(0.0), 0.0f64..2.0], -4.0f64..-0.1, prop_oneof![Just(0.0), 0.0f64..0.95])
}

fn speed(alpha: f64, mu: f64, frac: f64) -> f64 {
    frac * 2.0 * (-mu).sqrt() / alpha
}

pub fn splitting_rank_two((alpha, beta, mu, frac): (f64, f64, f64, f64)) -> Outcome {
    let sm = splitting_matrix_at(alpha, beta, mu, speed(alpha, mu, frac)).unwrap();
    prop_assert_eq!(sm.rank(), 2);
    prop_assert!(sm.minor_det() > 0.0);
    Ok(())
}

pub fn identity_point() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.1f64..3.0, -4.0f64..-0.1, 0.0f64..0.95)
}

pub fn determinant_identity_stated((alpha, mu, frac): (f64, f64, f64)) -> Outcome {
    let (l, r) = determinant_identity_check(alpha, mu, speed(alpha, mu, frac)).unwrap();
    prop_assert!((l - r).abs() <= 1e-10 * r.abs(), "lhs {} rhs {}", l, r);
    Ok(())
}

pub fn determinant_identity_expanded((alpha, mu, frac): (f64, f64, f64)) -> Outcome {
    let (l, r) = determinant_identity_corrected(alpha, mu, speed(alpha, mu, frac)).unwrap();
    prop_assert!((l - r).abs() <= 1e-10 * r, "lhs {} rhs {}", l, r);
    Ok(())
}

pub fn tail_point() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.1f64..3.0, -4.0f64..-0.1, prop_oneof![Just(0.0), -1.0f64..1.0], prop_oneof![Just(0.0), -1.0f64..1.0])
}

pub fn tail_zero_iff_center((alpha, mu, ds, dh): (f64, f64, f64, f64)) -> Outcome {
    let m = tail_oscillation_coefficients(ds, dh, alpha, mu);
    let norm = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if ds == 0.0 && dh == 0.0 {
        prop_assert_eq!(norm, 0.0);
    } else {
        prop_assert!(norm > 0.0);
    }
    Ok(())
}

pub fn quadratic_point() -> impl Strategy<Value = (f64, f64)> {
    (0.05f64..5.0, -10.0f64..-0.01)
}

pub fn quadratic_negative_definite((alpha, mu): (f64, f64)) -> Outcome {
    prop_assert!(htilde_quadratic(alpha, mu).unwrap().is_negative_definite());
    Ok(())
}

pub fn orbit_start() -> impl Strategy<Value = (f64, f64, f64, f64, f64, f64, f64, f64)> {
    (0.3f64..1.5, 0.0f64..0.5, -2.0f64..-0.5, 0.0f64..12.0, -0.5f64..0.5, 0.5f64..3.0, 0.05f64..0.3, 0.0f64..(2.0 * PI))
}

/// Periodic orbit about the `θ = π` center, integrated over a span of 100.
pub fn hamiltonian_conserved(
    (alpha, beta, mu, h, c, s, r, phi): (f64, f64, f64, f64, f64, f64, f64, f64),
) -> Outcome {
    let mp = MaterialParams::new(alpha, beta, mu, h, c).unwrap();
    let wf = WaveFrame::new(s, center_frequency(ChartId::Pi, &mp, s).unwrap());
    prop_assume!(periodic_neighborhood(ChartId::Pi, &mp, &wf).unwrap());
    let (_, zm) = chart_equilibria(ChartId::Pi, &mp, &wf).unwrap();
    prop_assume!((zm.z.im - s / 2.0).abs() > 1e-3);
    // Offset scaled by the distance to the invariant line q = s/2.
    let z0 = zm.z + Complex64::from_polar(r * (zm.z.im - s / 2.0).abs(), phi);
    let co = chart_coefficients(ChartId::Pi, &mp, &wf);
    let f = |_: f64, y: &[f64; 3]| {
        let w = co.vector_field(Complex64::new(y[0], y[1]));
        Ok([w.re, w.im, 0.0])
    };
    let sol = dopri5(f, 0.0, [z0.re, z0.im, 0.0], 100.0, &Options::with_tol(1e-13), None);
    prop_assume!(sol.is_ok());
    let sol = sol.unwrap();
    let h0 = hamiltonian(ChartId::Pi, z0.re, z0.im, &mp, &wf).unwrap();
    let drift = sol
        .ys
        .iter()
        .map(|y| (hamiltonian(ChartId::Pi, y[0], y[1], &mp, &wf).unwrap() - h0).abs())
        .fold(0.0, f64::max);
    prop_assert!(drift <= 1e-8, "drift {}", drift);
    Ok(())
}

pub fn twisted_wall() -> impl Strategy<Value = (f64, f64, f64, f64, f64, f64, bool)> {
    (0.0f64..60.0, -0.5f64..0.5, 0.0f64..0.5, 0.5f64..3.0, -5.0f64..5.0, -20.0f64..20.0, any::<bool>())
}

/// A wall twisted in-plane by `amp sin(kx)/cosh(0.3x)`, stepped once.
pub fn step_keeps_unit_norm((h, c, amp, k, s, omega, free): (f64, f64, f64, f64, f64, f64, bool)) -> Outcome {
    let mp = MaterialParams::new(0.5, 0.1, -1.0, h, c).unwrap();
    let mut st = LineState::homogeneous_wall(&mp, 10.0, 201).unwrap();
    for (x, m) in st.grid.iter().zip(st.m.iter_mut()) {
        let t = amp * (k * x).sin() / (0.3 * x).cosh();
        let (a, b) = (m[0] * t.cos() - m[1] * t.sin(), m[0] * t.sin() + m[1] * t.cos());
        *m = [a, b, m[2]];
    }
    let frame = if free { FrameMode::Free } else { FrameMode::Fixed { s, omega } };
    let reference = st.m.clone();
    if let Ok(rep) = freeze_step(&st, &mp, dt_max(st.dx(), mp.alpha), &reference, frame, Execution::Sequential) {
        for m in &rep.state.m {
            let n = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
            prop_assert!((n - 1.0).abs() <= 1e-9);
        }
    }
    Ok(())
}
