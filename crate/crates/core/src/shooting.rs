//! Shooting along the one-dimensional unstable manifold of `Z⁰_−`.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::analytic::{chart_equilibria, ChartEquilibrium, ChartId};
use crate::hamiltonian::TailKind;
use crate::integrator::{dopri5, Event, Options, Solution, Termination, Trajectory};
use crate::model::{desingularized_jacobian, rhs_array, ChartState, MaterialParams, Vec3, WaveFrame};
use crate::par::{self, Execution};
use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-6;
/// Amplitudes below this (with a converging `q`) are flat.
pub const FLAT_AMPLITUDE: f64 = 1e-7;
/// Amplitudes above this in both halves of the window are non-flat.
pub const NON_FLAT_AMPLITUDE: f64 = 1e-5;
/// `|q|` beyond this counts as unbounded.
const UNBOUNDED_Q: f64 = 1e6;
const ARRIVAL: f64 = 1e-4;
const STALL: f64 = 1e-2;
/// Real parts below this count as non-expanding.
const NEUTRAL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailVerdict {
    pub kind: TailKind,
    pub q_limit_estimate: Option<f64>,
    pub oscillation_amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootOptions {
    pub epsilon: f64,
    pub tol: f64,
    /// Span available to reach the `θ = π` chart; `None` means `400/√−μ`.
    pub budget: Option<f64>,
    /// Extra span integrated past arrival when the target modes are not
    /// expanding; `None` means `40/√−μ`.
    pub tail: Option<f64>,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self { epsilon: DEFAULT_EPSILON, tol: 1e-12, budget: None, tail: None }
    }
}

/// Equilibrium plus `ε` times the unit unstable eigenvector with positive
/// `θ`-component.
pub fn unstable_seed(eq: &ChartEquilibrium, mp: &MaterialParams, wf: &WaveFrame, epsilon: f64) -> Result<ChartState> {
    if eq.chart != ChartId::Zero {
        return Err(Error::Domain("seeds are taken on the theta = 0 chart".into()));
    }
    let n = eq.unstable_count();
    if n != 1 || eq.eigenvalues[2].re <= 0.0 {
        return Err(Error::SpectralMismatch(n));
    }
    let lambda = eq.eigenvalues[2].re;
    let u = eq.state().to_array();
    let j = desingularized_jacobian(&u, mp, wf);
    let k = Matrix2::new(j[1][1] - lambda, j[1][2], j[2][1], j[2][2] - lambda);
    let w = k
        .lu()
        .solve(&Vector2::new(-j[1][0], -j[2][0]))
        .ok_or(Error::SingularJacobian)?;
    let nrm = (1.0 + w.norm_squared()).sqrt();
    let st = ChartState::new(u[0] + epsilon / nrm, u[1] + epsilon * w[0] / nrm, u[2] + epsilon * w[1] / nrm);
    st.validate()?;
    Ok(st)
}

fn nearest<'a>(eqs: &'a [ChartEquilibrium; 2], p: f64, q: f64) -> &'a ChartEquilibrium {
    let d = |e: &ChartEquilibrium| (e.z.re - p).hypot(e.z.im - q);
    if d(&eqs[0]) <= d(&eqs[1]) {
        &eqs[0]
    } else {
        &eqs[1]
    }
}

/// Oscillation measure of `q` on the trailing quarter of a trajectory.
pub fn classify_tail(xs: &[f64], states: &[ChartState]) -> TailVerdict {
    let x_end = *xs.last().unwrap_or(&0.0);
    let x_start = xs.first().copied().unwrap_or(0.0);
    let cut = x_end - 0.25 * (x_end - x_start);
    let mid = x_end - 0.125 * (x_end - x_start);
    let half_ptp = |lo: f64, hi: f64| {
        let qs: Vec<f64> = xs
            .iter()
            .zip(states)
            .filter(|(x, _)| **x >= lo && **x <= hi)
            .map(|(_, s)| s.q)
            .collect();
        if qs.is_empty() {
            return (0.0, 0.0);
        }
        let mean = qs.iter().sum::<f64>() / qs.len() as f64;
        let mx = qs.iter().fold(f64::NEG_INFINITY, |a, &q| a.max(q - mean));
        let mn = qs.iter().fold(f64::INFINITY, |a, &q| a.min(q - mean));
        (0.5 * (mx - mn), mean)
    };
    let (amp, mean) = half_ptp(cut, x_end);
    let (amp_a, _) = half_ptp(cut, mid);
    let (amp_b, _) = half_ptp(mid, x_end);
    let q_last = states.last().map(|s| s.q).unwrap_or(0.0);
    if !q_last.is_finite() || q_last.abs() > UNBOUNDED_Q {
        return TailVerdict { kind: TailKind::Undetermined, q_limit_estimate: None, oscillation_amplitude: amp };
    }
    let converging = amp_b <= amp_a || amp_b < FLAT_AMPLITUDE;
    let kind = if amp < FLAT_AMPLITUDE && converging {
        TailKind::Flat
    } else if amp_a > NON_FLAT_AMPLITUDE && amp_b > NON_FLAT_AMPLITUDE {
        TailKind::NonFlat
    } else {
        TailKind::Undetermined
    };
    let q_limit_estimate = (kind == TailKind::Flat).then_some(if amp == 0.0 { q_last } else { mean });
    TailVerdict { kind, q_limit_estimate, oscillation_amplitude: amp }
}

/// Trajectories may touch the poles up to rounding.
fn to_trajectory(sol: Solution) -> Result<Trajectory> {
    let mut sol = sol;
    for y in sol.ys.iter_mut() {
        if y[0] < 0.0 && y[0] > -1e-12 {
            y[0] = 0.0;
        }
        if y[0] > PI && y[0] < PI + 1e-12 {
            y[0] = PI;
        }
    }
    Trajectory::from_solution(sol)
}

/// Integrates from the unstable seed of `Z⁰_−` toward the `θ = π` chart and
/// classifies the resulting tail. The seed sits at `ξ = 0`.
pub fn shoot_to_pi_chart(mp: &MaterialParams, wf: &WaveFrame, opts: &ShootOptions) -> Result<(Trajectory, TailVerdict)> {
    let d = mp.sqrt_neg_mu()?;
    let (_, zm) = chart_equilibria(ChartId::Zero, mp, wf)?;
    let seed = unstable_seed(&zm, mp, wf, opts.epsilon)?;
    let budget = opts.budget.unwrap_or(400.0 / d);
    let io = Options::with_tol(opts.tol);
    let f = |_: f64, y: &Vec3| Ok(rhs_array(y, mp, wf));
    let g = |_: f64, y: &Vec3| y[0] - (PI - ARRIVAL);
    let sol = dopri5(f, 0.0, seed.to_array(), budget, &io, Some(Event { g: &g, direction: 1 }))?;
    let (x_hit, y_hit) = sol.last();
    if sol.diagnostics.termination != Termination::Event {
        let theta_max = sol.ys.iter().fold(0.0f64, |a, y| a.max(y[0]));
        if theta_max < PI - STALL {
            return Err(Error::NoConnection(theta_max));
        }
        let traj = to_trajectory(sol)?;
        let verdict = TailVerdict { kind: TailKind::Undetermined, ..classify_tail(&traj.xs, &traj.states) };
        return Ok((traj, verdict));
    }

    let (pp, pm) = chart_equilibria(ChartId::Pi, mp, wf)?;
    let eqs = [pp, pm];
    let target = nearest(&eqs, y_hit[1], y_hit[2]);
    let expanding = target.eigenvalues[..2].iter().any(|l| l.re > NEUTRAL);
    if expanding {
        let traj = to_trajectory(sol)?;
        let verdict = classify_tail(&traj.xs, &traj.states);
        return Ok((traj, verdict));
    }
    let tail = opts.tail.unwrap_or(40.0 / d);
    let ext = dopri5(f, x_hit, y_hit, x_hit + tail, &io, None)?;
    let traj = to_trajectory(Solution::concat(sol, ext))?;
    let verdict = classify_tail(&traj.xs, &traj.states);
    Ok((traj, verdict))
}

/// `ξ` at which the orbit crosses `θ = π/2`, from dense output.
pub fn center_crossing(traj: &Trajectory) -> Option<f64> {
    let k = traj.states.windows(2).position(|w| w[0].theta < PI / 2.0 && w[1].theta >= PI / 2.0)?;
    let (mut a, mut b) = (traj.xs[k], traj.xs[k + 1]);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if traj.eval(m)?.theta < PI / 2.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// Shoots every parameter pair independently.
pub fn shoot_sweep(
    exec: Execution,
    cases: &[(MaterialParams, WaveFrame)],
    opts: &ShootOptions,
) -> Vec<Result<(Trajectory, TailVerdict)>> {
    par::map(exec, cases, |(mp, wf)| shoot_to_pi_chart(mp, wf, opts))
}
