//! Oracles shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

pub mod props;

use llgs_core::analytic::{homogeneous_profile, homogeneous_speed_frequency, Sign};
use llgs_core::bvp::{build_bvp, newton_solve, BvpConfig, Formulation, Profile, Unknown};
use llgs_core::classification::classify_regime;
use llgs_core::shooting::{shoot_to_pi_chart, ShootOptions};
use llgs_core::{ChartState, MaterialParams, Param};

/// Trapezoidal rule with step `h` on `[a, b]`; exponentially accurate for
/// integrands analytic in a strip and decaying at both ends.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, h: f64) -> f64 {
    let n = ((b - a) / h).ceil() as usize;
    let h = (b - a) / n as f64;
    let mut acc = 0.5 * (f(a) + f(b));
    for k in 1..n {
        acc += f(a + k as f64 * h);
    }
    acc * h
}

/// `(I_C, I_S, I_CC, I_CS)` by quadrature of their defining integrals over
/// the real line. With `g = e^{αs₀ξ}/(4cosh²(√−μ ξ))`:
/// `I_C = ∫g cos s₀ξ`, `I_S = −∫g sin s₀ξ`,
/// `I_CC = −∫g tanh(√−μ ξ) cos s₀ξ`, `I_CS = ∫g tanh(√−μ ξ) sin s₀ξ`.
pub fn melnikov_quadrature(alpha: f64, mu: f64, s0: f64) -> [f64; 4] {
    let d = (-mu).sqrt();
    let g = |x: f64| {
        let ax = (d * x).abs();
        (alpha * s0 * x - 2.0 * ax).exp() / (1.0 + (-2.0 * ax).exp()).powi(2)
    };
    let right = 46.0 / (2.0 * d - alpha * s0);
    let left = 46.0 / (2.0 * d + alpha * s0);
    let h = 0.01 / d;
    let q = |f: &dyn Fn(f64) -> f64| trapezoid(f, -left, right, h);
    [
        q(&|x| g(x) * (s0 * x).cos()),
        -q(&|x| g(x) * (s0 * x).sin()),
        -q(&|x| g(x) * (d * x).tanh() * (s0 * x).cos()),
        q(&|x| g(x) * (d * x).tanh() * (s0 * x).sin()),
    ]
}

/// The 5×5×5 `(α, μ, s₀)` grid; `s₀` runs over fractions of `2√−μ/α`.
pub fn melnikov_grid() -> Vec<(f64, f64, f64)> {
    let mut pts = Vec::new();
    for alpha in [0.25, 0.5, 1.0, 1.5, 2.0] {
        for mu in [-0.25, -0.5, -1.0, -2.0, -4.0] {
            let crit = 2.0 * (-mu as f64).sqrt() / alpha;
            for frac in [0.0, 0.15, 0.35, 0.55, 0.75] {
                pts.push((alpha, mu, frac * crit));
            }
        }
    }
    pts
}

/// Sup-norm distance of `(xs, states)` from the homogeneous wall, after
/// aligning the wall with the node nearest to `θ = π/2` through
/// `tan(θ/2) = e^{√−μ(ξ − ξ_c)}`.
pub fn homogeneous_error(mp: &MaterialParams, xs: &[f64], states: &[ChartState]) -> f64 {
    let d = (-mp.mu).sqrt();
    let k = states
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let da = (a.1.theta - std::f64::consts::FRAC_PI_2).abs();
            let db = (b.1.theta - std::f64::consts::FRAC_PI_2).abs();
            da.total_cmp(&db)
        })
        .unwrap()
        .0;
    let xc = xs[k] - (states[k].theta / 2.0).tan().ln() / d;
    xs.iter()
        .zip(states)
        .map(|(&x, st)| {
            let w = homogeneous_profile(x - xc, mp.mu, Sign::Plus);
            (st.theta - w.theta).abs().max((st.p - w.p).abs()).max((st.q - w.q).abs())
        })
        .fold(0.0, f64::max)
}

/// Relative distance, with an absolute floor for exact zeros.
pub fn rel_err(got: f64, want: f64, floor: f64) -> f64 {
    (got - want).abs() / want.abs().max(floor)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = pts.iter().map(|(x, y)| (x.abs().ln(), y.abs().ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// The ten fields of the analytic-family check: six codim-2, the center
/// and three codim-0 values at `(α, β, μ) = (0.5, 0.1, −1)`.
pub const FAMILY_H: [f64; 10] = [0.25, 0.5, 2.0, 5.0, 8.0, 10.1, 10.2, 12.0, 20.0, 50.0];

fn family_params(h: f64) -> MaterialParams {
    MaterialParams::new(0.5, 0.1, -1.0, h, 0.0).unwrap()
}

/// `(h, sup error)` of the shooting solution for each of [`FAMILY_H`].
pub fn shooting_family_errors() -> Vec<(f64, f64)> {
    FAMILY_H
        .iter()
        .map(|&h| {
            let mp = family_params(h);
            let wf = homogeneous_speed_frequency(&mp).unwrap();
            let (traj, _) = shoot_to_pi_chart(&mp, &wf, &ShootOptions::default()).unwrap();
            (h, homogeneous_error(&mp, &traj.xs, &traj.states))
        })
        .collect()
}

/// `(h, sup error, worst free-scalar error)` of the collocation solution
/// started from a distorted guess, for each of [`FAMILY_H`]. The guess bumps
/// `p` and `q` by `0.05 sech(x/2)` and, in the codim-2 regime, shifts
/// `(s, Ω)` by `(0.01, −0.01)`.
pub fn collocation_family_errors() -> Vec<(f64, f64, f64)> {
    let cfg = BvpConfig::default();
    FAMILY_H
        .iter()
        .map(|&h| {
            let mp = family_params(h);
            let wf = homogeneous_speed_frequency(&mp).unwrap();
            let regime = classify_regime(&mp).unwrap().kind;
            let mut guess = Profile::homogeneous(cfg.mesh(), mp, wf, regime);
            for (x, st) in guess.mesh.iter().zip(guess.states.iter_mut()) {
                let bump = 0.05 / (x * 0.5).cosh();
                *st = ChartState::new(st.theta, st.p * (1.0 + bump), st.q + bump);
            }
            let f = Formulation::for_regime(regime);
            if f == Formulation::Codim2 {
                guess.wf.s += 0.01;
                guess.wf.omega -= 0.01;
            }
            let mut sys = build_bvp(f, &guess.mp, &guess.wf, &cfg).unwrap();
            let solved = newton_solve(&mut sys, &guess).unwrap();
            let e = homogeneous_error(&mp, &solved.profile.mesh, &solved.profile.states);
            let free = solved
                .free_values(&sys)
                .into_iter()
                .map(|(u, v)| match u {
                    Unknown::Param(Param::S) => (v - wf.s).abs(),
                    Unknown::Param(Param::Omega) => (v - wf.omega).abs(),
                    Unknown::Gap => v.abs(),
                    _ => 0.0,
                })
                .fold(0.0, f64::max);
            (h, e, free)
        })
        .collect()
}
