//! Closed-form dynamics on the blow-up charts and the homogeneous wall family.
//!
//! On a chart `θ = const` the `(p, q)` equations collapse to the complex
//! Riccati equation `z' = A z² + B z + C` with `z = p + i q`, which is solved
//! explicitly through a complex tangent.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::model::{ChartState, MaterialParams, WaveFrame};
use crate::{Error, Result};

const EQUILIBRIUM_TOL: f64 = 1e-12;
const POLE_TOL: f64 = 1e-10;
const DEGENERATE_GAMMA: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ChartId {
    /// `θ = 0`, `A = −1`.
    Zero,
    /// `θ = π`, `A = +1`.
    Pi,
    /// An artificially frozen interior angle.
    Fixed(f64),
}

impl ChartId {
    pub fn theta(self) -> f64 {
        match self {
            ChartId::Zero => 0.0,
            ChartId::Pi => PI,
            ChartId::Fixed(t) => t,
        }
    }

    pub fn a(self) -> f64 {
        match self {
            ChartId::Zero => -1.0,
            ChartId::Pi => 1.0,
            ChartId::Fixed(t) => -t.cos(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Coefficients of the chart Riccati equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartCoefficients {
    pub a: f64,
    pub b: Complex64,
    pub c: Complex64,
    /// Principal square root of `4AC − B²`.
    pub gamma: Complex64,
}

impl ChartCoefficients {
    pub fn vector_field(&self, z: Complex64) -> Complex64 {
        self.a * z * z + self.b * z + self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartEquilibrium {
    pub chart: ChartId,
    pub sigma: Sign,
    /// `p + i q`.
    pub z: Complex64,
    /// Two in-chart eigenvalues followed by the transverse one.
    pub eigenvalues: [Complex64; 3],
}

impl ChartEquilibrium {
    pub fn state(&self) -> ChartState {
        ChartState::new(self.chart.theta(), self.z.re, self.z.im)
    }

    /// Number of eigenvalues with positive real part.
    pub fn unstable_count(&self) -> usize {
        self.eigenvalues.iter().filter(|l| l.re > 0.0).count()
    }
}

/// Principal square root with the tie rule `Re = 0 ⇒ Im ≥ 0`.
pub fn principal_sqrt(w: Complex64) -> Complex64 {
    let r = w.sqrt();
    if r.re == 0.0 && r.im < 0.0 {
        -r
    } else {
        r
    }
}

pub fn chart_coefficients(chart: ChartId, mp: &MaterialParams, wf: &WaveFrame) -> ChartCoefficients {
    let a = chart.a();
    let b = -Complex64::new(mp.alpha, 1.0) * wf.s;
    let c = Complex64::new(
        mp.h - wf.omega + a * mp.mu,
        mp.alpha * wf.omega - mp.beta / (1.0 - a * mp.c_cp),
    );
    let gamma = principal_sqrt(4.0 * a * c - b * b);
    ChartCoefficients { a, b, c, gamma }
}

/// The two equilibria `(Z_+, Z_−)` on the chart `θ = 0` or `θ = π`.
///
/// In-chart eigenvalues are those of the linearization `2Az + B`; the
/// transverse one is `−A·Re z`.
pub fn chart_equilibria(
    chart: ChartId,
    mp: &MaterialParams,
    wf: &WaveFrame,
) -> Result<(ChartEquilibrium, ChartEquilibrium)> {
    let a = match chart {
        ChartId::Zero | ChartId::Pi => chart.a(),
        ChartId::Fixed(_) => {
            return Err(Error::Domain("equilibria are defined on the pole charts only".into()))
        }
    };
    let co = chart_coefficients(chart, mp, wf);
    let i = Complex64::i();
    let make = |sigma: Sign| {
        let sg = sigma.value();
        // Zero: (B ∓ iγ)/2, Pi: (−B ± iγ)/2.
        let z = (-co.b + sg * i * co.gamma) / (2.0 * a);
        let nu1 = sg * i * co.gamma;
        ChartEquilibrium {
            chart,
            sigma,
            z,
            eigenvalues: [nu1, nu1.conj(), Complex64::new(-a * z.re, 0.0)],
        }
    };
    Ok((make(Sign::Plus), make(Sign::Minus)))
}

/// `tan` evaluated without overflow for large imaginary arguments.
fn stable_tan(w: Complex64) -> Complex64 {
    let (x2, y2) = (2.0 * w.re, 2.0 * w.im);
    if y2.abs() > 40.0 {
        let ch = y2.abs().cosh();
        let num = Complex64::new(x2.sin() / ch, y2.tanh());
        let den = x2.cos() / ch + 1.0;
        num / den
    } else {
        let den = x2.cos() + y2.cosh();
        Complex64::new(x2.sin() / den, y2.sinh() / den)
    }
}

fn segment_point_distance(a: Complex64, b: Complex64, p: Complex64) -> (f64, f64) {
    let d = b - a;
    let len2 = d.norm_sqr();
    let t = if len2 == 0.0 { 0.0 } else { ((p - a) * d.conj()).re / len2 };
    let t = t.clamp(0.0, 1.0);
    ((a + d * t - p).norm(), t)
}

/// Explicit solution of `z' = Az² + Bz + C` with `z(ξ₀) = z₀`, evaluated at `ξ`.
pub fn chart_flow(z0: Complex64, xi0: f64, xi: f64, co: &ChartCoefficients) -> Result<Complex64> {
    let a = co.a;
    let b = co.b;
    let c = co.c;
    if a == 0.0 {
        if b.norm() == 0.0 {
            return Ok(z0 + c * (xi - xi0));
        }
        let z_eq = -c / b;
        if (z0 - z_eq).norm() < EQUILIBRIUM_TOL {
            return Err(Error::EquilibriumInput);
        }
        return Ok((z0 - z_eq) * (b * (xi - xi0)).exp() + z_eq);
    }
    let gamma = co.gamma;
    let i = Complex64::i();
    for sg in [1.0, -1.0] {
        let z_eq = (-b + sg * i * gamma) / (2.0 * a);
        if (z0 - z_eq).norm() < EQUILIBRIUM_TOL {
            return Err(Error::EquilibriumInput);
        }
    }
    if gamma.norm() < DEGENERATE_GAMMA {
        let z_star = -b / (2.0 * a);
        let w0 = z0 - z_star;
        let den = 1.0 - a * w0 * (xi - xi0);
        if den.norm() < POLE_TOL {
            return Err(Error::PoleCrossing(xi0 + 1.0 / (a * w0).re));
        }
        return Ok(z_star + w0 / den);
    }
    let delta0 = ((2.0 * a * z0 + b) / gamma).atan() - gamma * xi0 / 2.0;
    let w_start = gamma * xi0 / 2.0 + delta0;
    let w_end = gamma * xi / 2.0 + delta0;
    let (lo, hi) = if w_start.re <= w_end.re { (w_start.re, w_end.re) } else { (w_end.re, w_start.re) };
    let k_lo = ((lo - FRAC_PI_2) / PI).floor() as i64 - 1;
    let k_hi = ((hi - FRAC_PI_2) / PI).ceil() as i64 + 1;
    for k in k_lo..=k_hi {
        let pole = Complex64::new(FRAC_PI_2 + k as f64 * PI, 0.0);
        let (dist, t) = segment_point_distance(w_start, w_end, pole);
        if dist < POLE_TOL {
            return Err(Error::PoleCrossing(xi0 + t * (xi - xi0)));
        }
    }
    Ok(gamma / (2.0 * a) * stable_tan(w_end) - b / (2.0 * a))
}

/// Speed and frequency of the homogeneous wall family (`c_cp = 0`).
pub fn homogeneous_speed_frequency(mp: &MaterialParams) -> Result<WaveFrame> {
    if mp.c_cp != 0.0 {
        return Err(Error::InvalidParameter("the homogeneous family requires c_cp = 0".into()));
    }
    let d = mp.sqrt_neg_mu()?;
    let one_a2 = 1.0 + mp.alpha * mp.alpha;
    Ok(WaveFrame {
        s: (mp.alpha * mp.h - mp.beta) / (d * one_a2),
        omega: (mp.h + mp.alpha * mp.beta) / one_a2,
    })
}

/// `θ = 2 arctan(e^{σ√−μ ξ})`, `p = σ√−μ`, `q = 0`.
pub fn homogeneous_profile(xi: f64, mu: f64, sigma: Sign) -> ChartState {
    let d = (-mu).sqrt();
    let x = sigma.value() * d * xi;
    let theta = if x > 0.0 { PI - 2.0 * (-x).exp().atan() } else { 2.0 * x.exp().atan() };
    ChartState::new(theta, sigma.value() * d, 0.0)
}
