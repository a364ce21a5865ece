//! Parameters, state representations and the coherent-structure vector fields.
//!
//! A relative equilibrium `m(x, t) = R_{Ωt} m̃(x − s t)` of the LLGS equation
//! written in spherical angles `(θ, φ)` with `q = φ'` reduces to a
//! three-dimensional ODE in the co-moving variable `ξ`. Two forms are kept:
//! the singular one in `(θ, ψ = θ', q)` and the desingularized one in
//! `(θ, p, q)` with `ψ = p sin θ`, for which the poles `θ = 0, π` become
//! invariant planes (the blow-up charts).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Guard on `|sin θ|` below which the singular vector field is refused.
pub const SINGULAR_GUARD: f64 = 1e-8;

/// Guard on `1 − m₃²` for the local wavenumber.
pub const POLE_GUARD: f64 = 1e-14;

pub type Vec3 = [f64; 3];

/// Physical constants of the wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    /// Gilbert damping, `> 0`.
    pub alpha: f64,
    /// Spin-transfer strength, `≥ 0`.
    pub beta: f64,
    /// Anisotropy; easy axis (nanowire) for `mu < 0`.
    pub mu: f64,
    /// Applied field along `e₃`.
    pub h: f64,
    /// Polarization ratio in `(−1, 1)`.
    pub c_cp: f64,
}

impl MaterialParams {
    pub fn new(alpha: f64, beta: f64, mu: f64, h: f64, c_cp: f64) -> Result<Self> {
        let mp = Self { alpha, beta, mu, h, c_cp };
        mp.validate()?;
        Ok(mp)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.mu, self.h, self.c_cp];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("all parameters must be finite".into()));
        }
        if self.alpha <= 0.0 {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.beta < 0.0 {
            return Err(Error::InvalidParameter(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.c_cp.abs() >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "c_cp must lie in the open interval (-1, 1), got {}",
                self.c_cp
            )));
        }
        Ok(())
    }

    /// `β/(1 + c_cp)`, the effective torque at `θ = 0`.
    pub fn beta_plus(&self) -> f64 {
        self.beta / (1.0 + self.c_cp)
    }

    /// `β/(1 − c_cp)`, the effective torque at `θ = π`.
    pub fn beta_minus(&self) -> f64 {
        self.beta / (1.0 - self.c_cp)
    }

    /// `√−μ`; requires the nanowire regime.
    pub fn sqrt_neg_mu(&self) -> Result<f64> {
        if self.mu < 0.0 {
            Ok((-self.mu).sqrt())
        } else {
            Err(Error::InvalidParameter(format!("mu must be < 0, got {}", self.mu)))
        }
    }

    pub fn with_c_cp(mut self, c_cp: f64) -> Self {
        self.c_cp = c_cp;
        self
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }
}

/// Speed and rotation frequency of the co-moving, co-rotating frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveFrame {
    pub s: f64,
    pub omega: f64,
}

impl WaveFrame {
    pub fn new(s: f64, omega: f64) -> Self {
        Self { s, omega }
    }
}

/// Scalar parameters that can be freed or continued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    CCp,
    S,
    Omega,
    H,
}

impl Param {
    pub const ALL: [Param; 4] = [Param::CCp, Param::S, Param::Omega, Param::H];

    pub fn index(self) -> usize {
        match self {
            Param::CCp => 0,
            Param::S => 1,
            Param::Omega => 2,
            Param::H => 3,
        }
    }

    pub fn get(self, mp: &MaterialParams, wf: &WaveFrame) -> f64 {
        match self {
            Param::CCp => mp.c_cp,
            Param::S => wf.s,
            Param::Omega => wf.omega,
            Param::H => mp.h,
        }
    }

    pub fn set(self, mp: &mut MaterialParams, wf: &mut WaveFrame, value: f64) {
        match self {
            Param::CCp => mp.c_cp = value,
            Param::S => wf.s = value,
            Param::Omega => wf.omega = value,
            Param::H => mp.h = value,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::CCp => "c_cp",
            Param::S => "s",
            Param::Omega => "omega",
            Param::H => "h",
        }
    }
}

/// Desingularized state `(θ, p, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartState {
    pub theta: f64,
    pub p: f64,
    pub q: f64,
}

impl ChartState {
    pub fn new(theta: f64, p: f64, q: f64) -> Self {
        Self { theta, p, q }
    }

    pub fn from_array(v: Vec3) -> Self {
        Self { theta: v[0], p: v[1], q: v[2] }
    }

    pub fn to_array(self) -> Vec3 {
        [self.theta, self.p, self.q]
    }

    /// θ is never wrapped; anything outside `[0, π]` is a domain error.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=std::f64::consts::PI).contains(&self.theta) {
            return Err(Error::Domain(format!("theta = {} outside [0, pi]", self.theta)));
        }
        Ok(())
    }

    pub fn to_singular(self) -> SingularState {
        SingularState { theta: self.theta, psi: self.p * self.theta.sin(), q: self.q }
    }
}

/// Singular state `(θ, ψ = θ', q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularState {
    pub theta: f64,
    pub psi: f64,
    pub q: f64,
}

impl SingularState {
    pub fn to_array(self) -> Vec3 {
        [self.theta, self.psi, self.q]
    }

    pub fn from_array(v: Vec3) -> Self {
        Self { theta: v[0], psi: v[1], q: v[2] }
    }
}

/// Magnetization on the sphere together with the local wavenumber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereState {
    pub m: Vec3,
    pub q: f64,
}

/// Right-hand side of the desingularized system.
pub fn desingularized_rhs(state: &ChartState, mp: &MaterialParams, wf: &WaveFrame) -> Vec3 {
    rhs_array(&state.to_array(), mp, wf)
}

#[inline]
pub(crate) fn rhs_array(u: &Vec3, mp: &MaterialParams, wf: &WaveFrame) -> Vec3 {
    let (theta, p, q) = (u[0], u[1], u[2]);
    let (sn, cs) = theta.sin_cos();
    let MaterialParams { alpha, beta, mu, h, c_cp } = *mp;
    let WaveFrame { s, omega } = *wf;
    [
        sn * p,
        h - omega - alpha * s * p + s * q - (p * p - q * q + mu) * cs,
        alpha * omega - beta / (1.0 + c_cp * cs) - s * p - alpha * s * q - 2.0 * p * q * cs,
    ]
}

/// State Jacobian `∂f/∂(θ, p, q)` of the desingularized field, row-major.
pub fn desingularized_jacobian(u: &Vec3, mp: &MaterialParams, wf: &WaveFrame) -> [[f64; 3]; 3] {
    let (theta, p, q) = (u[0], u[1], u[2]);
    let (sn, cs) = theta.sin_cos();
    let MaterialParams { alpha, beta, mu, c_cp, .. } = *mp;
    let s = wf.s;
    let den = 1.0 + c_cp * cs;
    [
        [cs * p, sn, 0.0],
        [(p * p - q * q + mu) * sn, -alpha * s - 2.0 * p * cs, s + 2.0 * q * cs],
        [
            -beta * c_cp * sn / (den * den) + 2.0 * p * q * sn,
            -s - 2.0 * q * cs,
            -alpha * s - 2.0 * p * cs,
        ],
    ]
}

/// Parameter partials `∂f/∂(c_cp, s, Ω, h)`; columns follow [`Param::index`].
pub fn desingularized_param_partials(u: &Vec3, mp: &MaterialParams, _wf: &WaveFrame) -> [[f64; 4]; 3] {
    let (theta, p, q) = (u[0], u[1], u[2]);
    let cs = theta.cos();
    let MaterialParams { alpha, beta, c_cp, .. } = *mp;
    let den = 1.0 + c_cp * cs;
    [
        [0.0, 0.0, 0.0, 0.0],
        [0.0, -alpha * p + q, -1.0, 1.0],
        [beta * cs / (den * den), -p - alpha * q, alpha, 0.0],
    ]
}

/// Right-hand side of the singular system in `(θ, ψ, q)`.
pub fn singular_rhs(
    state: &SingularState,
    mp: &MaterialParams,
    wf: &WaveFrame,
    guard: f64,
) -> Result<Vec3> {
    let SingularState { theta, psi, q } = *state;
    let (sn, cs) = theta.sin_cos();
    if sn.abs() < guard {
        return Err(Error::SingularEvaluation(sn.abs()));
    }
    let MaterialParams { alpha, beta, mu, h, c_cp } = *mp;
    let WaveFrame { s, omega } = *wf;
    Ok([
        psi,
        sn * (h - omega + s * q + (q * q - mu) * cs) - alpha * s * psi,
        alpha * omega - beta / (1.0 + c_cp * cs) - alpha * s * q - (s + 2.0 * q * cs) * psi / sn,
    ])
}

/// Map a chart state and an azimuth to the sphere. The poles collapse.
pub fn blow_down(state: &ChartState, phi: f64) -> SphereState {
    let (st, ct) = state.theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    SphereState { m: [cp * st, sp * st, ct], q: state.q }
}

/// Azimuthal wavenumber `φ'` recovered from `m` and `m'`.
pub fn local_wavenumber(m: &Vec3, m_prime: &Vec3, guard: f64) -> Result<f64> {
    let den = 1.0 - m[2] * m[2];
    if den < guard {
        return Err(Error::PoleEvaluation(den));
    }
    Ok((-m_prime[0] * m[1] + m_prime[1] * m[0]) / den)
}
