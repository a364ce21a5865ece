//! Time integration of the wire equation in a co-moving, co-rotating frame.
//!
//! In the frame `m(x, t) = R_{φ(t)} v(x − γ(t), t)` with `s = γ'`, `Ω = φ'`,
//! `v` obeys `v_t = F(v) + s v_x − Ω e₃ × v`. Each step treats the parabolic
//! part `D v_xx`, `D = α/(1+α²)`, implicitly and everything else explicitly;
//! the unknown `(s, Ω)` enter the update linearly and are fixed by the phase
//! conditions `⟨v − v̂, v̂_x⟩ = ⟨v − v̂, e₃ × v̂⟩ = 0` against the previous
//! profile `v̂`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::analytic::homogeneous_speed_frequency;
use crate::model::{local_wavenumber, MaterialParams, Vec3};
use crate::par::{self, Execution};
use crate::{Error, Result};

const PHASE_DET_MIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Perturbation {
    None,
    /// Replace the wall by `−e₃` beyond `x`.
    TailCut { x: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum FrameMode {
    /// `(s, Ω)` from the phase conditions.
    Free,
    /// Frame held at the given values.
    Fixed { s: f64, omega: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FreezeConfig {
    pub lx: f64,
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Steps between recorded samples.
    pub record_every: usize,
    /// Trailing fraction of the series averaged for the selected values.
    pub window: f64,
    pub perturbation: Perturbation,
    pub frame: FrameMode,
}

impl Default for FreezeConfig {
    fn default() -> Self {
        Self {
            lx: 100.0,
            n: 4096,
            dt: 5e-4,
            t_end: 20.0,
            record_every: 10,
            window: 0.1,
            perturbation: Perturbation::TailCut { x: 5.0 },
            frame: FrameMode::Free,
        }
    }
}

impl FreezeConfig {
    pub fn dx(&self) -> f64 {
        2.0 * self.lx / (self.n - 1) as f64
    }

    pub fn validate(&self, mp: &MaterialParams) -> Result<()> {
        if !(self.lx > 0.0) || self.n < 8 {
            return Err(Error::InvalidParameter("need lx > 0 and n >= 8".into()));
        }
        if !(self.t_end > 0.0) || self.record_every == 0 || !(self.window > 0.0 && self.window <= 1.0) {
            return Err(Error::InvalidParameter("need t_end > 0, record_every >= 1, window in (0, 1]".into()));
        }
        let dt_max = dt_max(self.dx(), mp.alpha);
        if !(self.dt > 0.0) || self.dt > dt_max {
            return Err(Error::InvalidParameter(format!("dt must lie in (0, {dt_max:.3e}], got {}", self.dt)));
        }
        Ok(())
    }
}

/// Step-size guard of the semi-implicit splitting: `0.4 Δx² (1+α²)`, capped
/// for `α < 1` by the von Neumann bound of the explicit skew part
/// `−m × m_xx/(1+α²)` against the implicit `α/(1+α²) m_xx`.
pub fn dt_max(dx: f64, alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    let base = 0.4 * dx * dx * (1.0 + a2);
    if alpha < 1.0 {
        base.min(alpha * (1.0 + a2) / (2.0 * (1.0 - a2)) * dx * dx)
    } else {
        base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineState {
    pub grid: Vec<f64>,
    pub m: Vec<Vec3>,
    pub t: f64,
    pub s_est: f64,
    pub omega_est: f64,
}

impl LineState {
    pub fn uniform(lx: f64, n: usize, m: Vec3) -> Self {
        let grid = uniform_grid(lx, n);
        Self { m: vec![m; grid.len()], grid, t: 0.0, s_est: 0.0, omega_est: 0.0 }
    }

    /// Blow-down of the homogeneous wall centered at `x = 0`, written as
    /// `(sech, 0, −tanh)` so that the far field carries no rounding floor.
    pub fn homogeneous_wall(mp: &MaterialParams, lx: f64, n: usize) -> Result<Self> {
        let wf = homogeneous_speed_frequency(&mp.with_c_cp(0.0))?;
        let d = mp.sqrt_neg_mu()?;
        let grid = uniform_grid(lx, n);
        let m = grid.iter().map(|&x| [1.0 / (d * x).cosh(), 0.0, -(d * x).tanh()]).collect();
        Ok(Self { grid, m, t: 0.0, s_est: wf.s, omega_est: wf.omega })
    }

    pub fn dx(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    pub fn apply(&mut self, p: Perturbation) {
        if let Perturbation::TailCut { x } = p {
            for (xi, m) in self.grid.iter().zip(self.m.iter_mut()) {
                if *xi > x {
                    *m = [0.0, 0.0, -1.0];
                }
            }
        }
    }

    /// Largest deviation of `|m|` from one.
    pub fn norm_defect(&self) -> f64 {
        self.m.iter().fold(0.0, |a, m| a.max((norm(m) - 1.0).abs()))
    }
}

fn uniform_grid(lx: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| -lx + 2.0 * lx * i as f64 / (n - 1) as f64).collect()
}

#[inline]
fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn second_difference(m: &[Vec3], dx: f64) -> Vec<Vec3> {
    let n = m.len();
    let k = 1.0 / (dx * dx);
    (0..n)
        .map(|i| {
            let l = if i == 0 { 1 } else { i - 1 };
            let r = if i == n - 1 { n - 2 } else { i + 1 };
            std::array::from_fn(|c| k * (m[l][c] - 2.0 * m[i][c] + m[r][c]))
        })
        .collect()
}

fn first_difference(m: &[Vec3], dx: f64) -> Vec<Vec3> {
    let n = m.len();
    (0..n)
        .map(|i| {
            if i == 0 || i == n - 1 {
                [0.0; 3]
            } else {
                std::array::from_fn(|c| (m[i + 1][c] - m[i - 1][c]) / (2.0 * dx))
            }
        })
        .collect()
}

/// `∂ₜm` of the laboratory-frame equation from the torque `R`.
fn velocity(m: &Vec3, mxx: &Vec3, mp: &MaterialParams) -> Vec3 {
    let heff = [mxx[0], mxx[1], mxx[2] + mp.h - mp.mu * m[2]];
    let j = [0.0, 0.0, mp.beta / (1.0 + mp.c_cp * m[2])];
    let t1 = cross(m, &heff);
    let t2 = cross(m, &cross(m, &j));
    let r: Vec3 = std::array::from_fn(|c| -t1[c] + t2[c]);
    let mr = cross(m, &r);
    let k = 1.0 / (1.0 + mp.alpha * mp.alpha);
    std::array::from_fn(|c| k * (r[c] + mp.alpha * mr[c]))
}

/// Laboratory-frame `∂ₜm` with central differences and Neumann ends.
pub fn pde_rhs(state: &LineState, mp: &MaterialParams) -> Vec<Vec3> {
    let mxx = second_difference(&state.m, state.dx());
    state.m.iter().zip(&mxx).map(|(m, d)| velocity(m, d, mp)).collect()
}

/// Residual of `F(m) + s m_x − Ω e₃ × m` on the grid.
pub fn frame_residual(state: &LineState, mp: &MaterialParams, s: f64, omega: f64) -> Vec<Vec3> {
    let f = pde_rhs(state, mp);
    let mx = first_difference(&state.m, state.dx());
    (0..state.m.len())
        .map(|i| {
            let r = cross(&[0.0, 0.0, 1.0], &state.m[i]);
            std::array::from_fn(|c| f[i][c] + s * mx[i][c] - omega * r[c])
        })
        .collect()
}

/// Thomas factorization of `I − dt D ∂ₓₓ` with Neumann ends.
struct Tridiagonal {
    sub: Vec<f64>,
    sup: Vec<f64>,
    inv_piv: Vec<f64>,
}

impl Tridiagonal {
    fn new(n: usize, r: f64) -> Self {
        let diag = vec![1.0 + 2.0 * r; n];
        let mut sub = vec![-r; n];
        let mut sup = vec![-r; n];
        sup[0] = -2.0 * r;
        sub[n - 1] = -2.0 * r;
        let mut inv_piv = vec![0.0; n];
        let mut c = vec![0.0; n];
        inv_piv[0] = 1.0 / diag[0];
        c[0] = sup[0] * inv_piv[0];
        for i in 1..n {
            inv_piv[i] = 1.0 / (diag[i] - sub[i] * c[i - 1]);
            c[i] = sup[i] * inv_piv[i];
        }
        Self { sub, sup: c, inv_piv }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        b[0] *= self.inv_piv[0];
        for i in 1..n {
            b[i] = (b[i] - self.sub[i] * b[i - 1]) * self.inv_piv[i];
        }
        for i in (0..n - 1).rev() {
            b[i] -= self.sup[i] * b[i + 1];
        }
    }
}

fn inner(a: &[Vec3], b: &[Vec3], dx: f64) -> f64 {
    dx * a.iter().zip(b).map(|(x, y)| dot(x, y)).sum::<f64>()
}

/// Step output before renormalization, for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub state: LineState,
    pub norm_defect: f64,
}

/// One semi-implicit Euler step. `reference` is `v̂`; with `frame` fixed the
/// phase conditions are skipped.
pub fn freeze_step(
    state: &LineState,
    mp: &MaterialParams,
    dt: f64,
    reference: &[Vec3],
    frame: FrameMode,
    exec: Execution,
) -> Result<StepReport> {
    let n = state.m.len();
    let dx = state.dx();
    let d = mp.alpha / (1.0 + mp.alpha * mp.alpha);
    let tri = Tridiagonal::new(n, dt * d / (dx * dx));
    let mxx = second_difference(&state.m, dx);
    let mx = first_difference(&state.m, dx);
    let e3 = [0.0, 0.0, 1.0];

    // Columns: explicit update, s-coefficient, Ω-coefficient; three components each.
    let mut cols: Vec<Vec<f64>> = vec![vec![0.0; n]; 9];
    for i in 0..n {
        let v = velocity(&state.m[i], &mxx[i], mp);
        let rot = cross(&e3, &state.m[i]);
        for c in 0..3 {
            cols[c][i] = state.m[i][c] + dt * (v[c] - d * mxx[i][c]);
            cols[3 + c][i] = dt * mx[i][c];
            cols[6 + c][i] = -dt * rot[c];
        }
    }
    let cols = par::map(exec, &cols, |b| {
        let mut b = b.clone();
        tri.solve(&mut b);
        b
    });
    let gather = |k: usize| -> Vec<Vec3> { (0..n).map(|i| [cols[3 * k][i], cols[3 * k + 1][i], cols[3 * k + 2][i]]).collect() };
    let (p, q1, q2) = (gather(0), gather(1), gather(2));

    let (s, omega) = match frame {
        FrameMode::Fixed { s, omega } => (s, omega),
        FrameMode::Free => {
            let a1 = first_difference(reference, dx);
            let a2: Vec<Vec3> = reference.iter().map(|m| cross(&e3, m)).collect();
            let diff: Vec<Vec3> = p.iter().zip(reference).map(|(x, y)| std::array::from_fn(|c| x[c] - y[c])).collect();
            let g = [[inner(&q1, &a1, dx), inner(&q2, &a1, dx)], [inner(&q1, &a2, dx), inner(&q2, &a2, dx)]];
            let r = [-inner(&diff, &a1, dx), -inner(&diff, &a2, dx)];
            let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
            if !(det.abs() >= PHASE_DET_MIN) {
                return Err(Error::PhaseDegeneracy);
            }
            ((r[0] * g[1][1] - g[0][1] * r[1]) / det, (g[0][0] * r[1] - g[1][0] * r[0]) / det)
        }
    };
    let mut m: Vec<Vec3> = (0..n).map(|i| std::array::from_fn(|c| p[i][c] + s * q1[i][c] + omega * q2[i][c])).collect();
    let mut defect = 0.0f64;
    for v in m.iter_mut() {
        let nv = norm(v);
        if !nv.is_finite() || nv == 0.0 {
            return Err(Error::BlowUp(state.t + dt));
        }
        defect = defect.max((nv - 1.0).abs());
        for c in v.iter_mut() {
            *c /= nv;
        }
    }
    Ok(StepReport {
        state: LineState { grid: state.grid.clone(), m, t: state.t + dt, s_est: s, omega_est: omega },
        norm_defect: defect,
    })
}

/// Shape of the terminal profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalDigest {
    pub grid: Vec<f64>,
    pub theta: Vec<f64>,
    /// Local wavenumber, `None` near the poles.
    pub q: Vec<Option<f64>>,
    /// `x` at which `θ = π/2`.
    pub center: Option<f64>,
    /// Local extrema of `q` on the `θ → π` side.
    pub tail_q_extrema: usize,
    /// Half peak-to-peak of `q` on the `θ → π` side.
    pub tail_q_amplitude: f64,
}

impl TerminalDigest {
    pub fn of(state: &LineState) -> Self {
        let dx = state.dx();
        let mx = first_difference(&state.m, dx);
        let theta: Vec<f64> = state.m.iter().map(|m| m[2].clamp(-1.0, 1.0).acos()).collect();
        let q: Vec<Option<f64>> = state.m.iter().zip(&mx).map(|(m, d)| local_wavenumber(m, d, 1e-6).ok()).collect();
        let center = theta.windows(2).position(|w| w[0] < PI / 2.0 && w[1] >= PI / 2.0).map(|k| {
            let t = (PI / 2.0 - theta[k]) / (theta[k + 1] - theta[k]);
            state.grid[k] + t * dx
        });
        let tail: Vec<f64> = theta
            .iter()
            .zip(&q)
            .filter(|(t, _)| **t > PI / 2.0 && **t < PI - 1e-3)
            .filter_map(|(_, q)| *q)
            .collect();
        let tail_q_extrema = tail.windows(3).filter(|w| (w[1] - w[0]) * (w[2] - w[1]) < 0.0).count();
        let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let tail_q_amplitude = if tail.is_empty() { 0.0 } else { 0.5 * (hi - lo) };
        Self { grid: state.grid.clone(), theta, q, center, tail_q_extrema, tail_q_amplitude }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreezeSeries {
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    pub omega: Vec<f64>,
    pub max_norm_defect: f64,
    pub terminal: TerminalDigest,
    #[serde(skip)]
    pub final_state: Option<LineState>,
}

impl FreezeSeries {
    /// Mean of `(s, Ω)` over the trailing `window` fraction of the time span.
    pub fn selected(&self, window: f64) -> (f64, f64) {
        let t_end = *self.times.last().unwrap_or(&0.0);
        let t0 = t_end * (1.0 - window);
        let sel: Vec<usize> = (0..self.times.len()).filter(|&i| self.times[i] >= t0).collect();
        let k = sel.len().max(1) as f64;
        (sel.iter().map(|&i| self.s[i]).sum::<f64>() / k, sel.iter().map(|&i| self.omega[i]).sum::<f64>() / k)
    }
}

/// Integrates from `init` to `cfg.t_end`, recording the frame every
/// `cfg.record_every` steps.
pub fn run_from(init: LineState, mp: &MaterialParams, cfg: &FreezeConfig, exec: Execution) -> Result<FreezeSeries> {
    cfg.validate(mp)?;
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    let mut st = init;
    let (mut times, mut s, mut omega) = (Vec::new(), Vec::new(), Vec::new());
    let mut max_defect = 0.0f64;
    for k in 1..=steps {
        let reference = st.m.clone();
        let rep = freeze_step(&st, mp, cfg.dt, &reference, cfg.frame, exec)?;
        max_defect = max_defect.max(rep.norm_defect);
        st = rep.state;
        if k % cfg.record_every == 0 || k == steps {
            times.push(st.t);
            s.push(st.s_est);
            omega.push(st.omega_est);
        }
    }
    Ok(FreezeSeries {
        times,
        s,
        omega,
        max_norm_defect: max_defect,
        terminal: TerminalDigest::of(&st),
        final_state: Some(st),
    })
}

/// Starts from the homogeneous wall (plus perturbation) and lets the frame
/// select speed and frequency.
pub fn run_selection(mp: &MaterialParams, cfg: &FreezeConfig, exec: Execution) -> Result<FreezeSeries> {
    let mut init = LineState::homogeneous_wall(mp, cfg.lx, cfg.n)?;
    init.apply(cfg.perturbation);
    run_from(init, mp, cfg, exec)
}
