//! First integrals on the blow-up charts and the center-case energy gap.
//!
//! Under the center condition the chart flow on `θ = π` (resp. `θ = 0`) is
//! Hamiltonian away from the invariant line `q = s/2` (resp. `q = −s/2`).
//! The gap `H̃ = H(u(L)) − H(Z^π_−)` between the far-field orbit of a wall
//! and the center equilibrium separates flat walls from non-flat ones.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::analytic::{chart_equilibria, ChartId};
use crate::bvp::Profile;
use crate::model::{ChartState, MaterialParams, WaveFrame};
use crate::{Error, Result};

pub const INVARIANT_LINE_GUARD: f64 = 1e-12;
pub const CENTER_CONDITION_TOL: f64 = 1e-10;
/// Gaps above this are non-flat.
pub const NON_FLAT_GAP: f64 = 1e-7;
/// Gaps below this are flat.
pub const FLAT_GAP: f64 = 1e-9;
/// Tolerance on `π − θ(L)` for [`htilde_measured`].
pub const CHART_HIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailKind {
    Flat,
    NonFlat,
    Undetermined,
}

impl TailKind {
    pub fn label(self) -> &'static str {
        match self {
            TailKind::Flat => "flat",
            TailKind::NonFlat => "non_flat",
            TailKind::Undetermined => "undetermined",
        }
    }
}

/// Flat/non-flat verdict from a measured energy gap.
pub fn classify_gap(htilde: f64) -> TailKind {
    let g = htilde.abs();
    if g > NON_FLAT_GAP {
        TailKind::NonFlat
    } else if g < FLAT_GAP {
        TailKind::Flat
    } else {
        TailKind::Undetermined
    }
}

fn pole_chart(chart: ChartId) -> Result<bool> {
    match chart {
        ChartId::Zero => Ok(false),
        ChartId::Pi => Ok(true),
        ChartId::Fixed(_) => Err(Error::Domain("first integrals exist on the pole charts only".into())),
    }
}

/// Frequency at which the chart flow is Hamiltonian.
pub fn center_frequency(chart: ChartId, mp: &MaterialParams, s: f64) -> Result<f64> {
    Ok(if pole_chart(chart)? {
        mp.beta_minus() / mp.alpha + s * s / 2.0
    } else {
        mp.beta_plus() / mp.alpha - s * s / 2.0
    })
}

/// Outcome of checking the center condition; a failed check is advisory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterCheck {
    /// `Ω − center_frequency`.
    pub residual: f64,
    pub holds: bool,
}

pub fn center_condition(chart: ChartId, mp: &MaterialParams, wf: &WaveFrame) -> Result<CenterCheck> {
    let residual = wf.omega - center_frequency(chart, mp, wf.s)?;
    Ok(CenterCheck { residual, holds: residual.abs() <= CENTER_CONDITION_TOL })
}

/// `H⁰` on `θ = 0` or `H^π` on `θ = π`.
///
/// The value is conserved only when [`center_condition`] holds; this is not
/// enforced so that near-center behaviour can be probed.
pub fn hamiltonian(chart: ChartId, p: f64, q: f64, mp: &MaterialParams, wf: &WaveFrame) -> Result<f64> {
    let (num, den) = parts(pole_chart(chart)?, p, q, mp, wf)?;
    Ok(num / den)
}

fn parts(pi: bool, p: f64, q: f64, mp: &MaterialParams, wf: &WaveFrame) -> Result<(f64, f64)> {
    let s = wf.s;
    let a = mp.alpha;
    if pi {
        let den = q - s / 2.0;
        if den.abs() < INVARIANT_LINE_GUARD {
            return Err(Error::InvariantLine { q, line: s / 2.0 });
        }
        Ok((p * p + q * q - a * s * p - s * q + mp.h - mp.beta_minus() / a + mp.mu, den))
    } else {
        let den = q + s / 2.0;
        if den.abs() < INVARIANT_LINE_GUARD {
            return Err(Error::InvariantLine { q, line: -s / 2.0 });
        }
        Ok((-(p * p + q * q + a * s * p + s * q - mp.h + mp.beta_plus() / a + mp.mu), den))
    }
}

/// `(∂H/∂p, ∂H/∂q)`.
pub fn hamiltonian_gradient(
    chart: ChartId,
    p: f64,
    q: f64,
    mp: &MaterialParams,
    wf: &WaveFrame,
) -> Result<(f64, f64)> {
    let pi = pole_chart(chart)?;
    let (num, den) = parts(pi, p, q, mp, wf)?;
    let s = wf.s;
    let a = mp.alpha;
    let (dn_p, dn_q) = if pi {
        (2.0 * p - a * s, 2.0 * q - s)
    } else {
        (-(2.0 * p + a * s), -(2.0 * q + s))
    };
    Ok((dn_p / den, dn_q / den - num / (den * den)))
}

/// Whether the chart center is surrounded by periodic orbits.
pub fn periodic_neighborhood(chart: ChartId, mp: &MaterialParams, wf: &WaveFrame) -> Result<bool> {
    let s2 = wf.s * wf.s;
    let a2 = mp.alpha * mp.alpha;
    Ok(if pole_chart(chart)? {
        wf.omega < mp.h + mp.mu + s2 / 4.0 * (1.0 + a2)
    } else {
        wf.omega > mp.h - mp.mu + s2 / 4.0 * (a2 - 1.0)
    })
}

/// `a (s−s₀)² + b (s−s₀)(h−h₀) + c (h−h₀)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm2 {
    pub a_ss: f64,
    pub a_sh: f64,
    pub a_hh: f64,
}

impl QuadraticForm2 {
    pub fn eval(&self, ds: f64, dh: f64) -> f64 {
        self.a_ss * ds * ds + self.a_sh * ds * dh + self.a_hh * dh * dh
    }

    pub fn is_negative_definite(&self) -> bool {
        self.a_ss < 0.0 && 4.0 * self.a_ss * self.a_hh - self.a_sh * self.a_sh > 0.0
    }

    /// Coefficients `[1, s, s², h, h², hs]` in absolute `(s, h)`.
    pub fn expand_about(&self, s0: f64, h0: f64) -> [f64; 6] {
        let Self { a_ss, a_sh, a_hh } = *self;
        [
            a_ss * s0 * s0 + a_sh * s0 * h0 + a_hh * h0 * h0,
            -2.0 * a_ss * s0 - a_sh * h0,
            a_ss,
            -2.0 * a_hh * h0 - a_sh * s0,
            a_hh,
            a_sh,
        ]
    }
}

fn rho(alpha: f64) -> f64 {
    2.0 * (PI / alpha).sinh()
}

/// `(s₀, h₀) = (2√−μ/α, h^*)`, where the homogeneous wall is a center.
pub fn center_point(alpha: f64, beta: f64, mu: f64) -> Result<(f64, f64)> {
    let (_, hi) = crate::classification::thresholds(alpha, beta, mu)?;
    Ok((2.0 * (-mu).sqrt() / alpha, hi))
}

/// Second-order expansion of `H̃` about the center point; it does not depend
/// on `β` or `c_cp`.
pub fn htilde_quadratic(alpha: f64, mu: f64) -> Result<QuadraticForm2> {
    if alpha <= 0.0 || mu >= 0.0 {
        return Err(Error::InvalidParameter("need alpha > 0 and mu < 0".into()));
    }
    let a2 = alpha * alpha;
    let d = (-mu).sqrt();
    let r2 = rho(alpha).powi(2);
    let pi2 = PI * PI;
    Ok(QuadraticForm2 {
        a_ss: -(1.0 + a2).powi(2) * (4.0 + a2) * pi2 / (alpha * a2 * r2 * d),
        a_sh: -2.0 * (1.0 + a2) * (2.0 + a2) * pi2 / (a2 * r2 * mu),
        a_hh: (1.0 + a2) * pi2 / (alpha * r2 * mu * d),
    })
}

/// Cos/sin coefficients of the first-order `p`- and `q`-tail oscillations
/// for a deviation `(ds, dh)` from the center point. Row 0 is `p`, row 1 `q`.
pub fn tail_oscillation_coefficients(ds: f64, dh: f64, alpha: f64, mu: f64) -> [[f64; 2]; 2] {
    let d = (-mu).sqrt();
    let k = PI / rho(alpha);
    let a = -dh / (alpha * d) + 2.0 * ds / (alpha * alpha);
    let b = -dh / d + (3.0 + alpha * alpha) * ds / alpha;
    [[k * a, k * b], [-k * b, k * a]]
}

/// `H^π(p, q) − H^π(Z^π_−)` for a state on the `θ = π` chart.
pub fn htilde_at(end: &ChartState, mp: &MaterialParams, wf: &WaveFrame) -> Result<f64> {
    if (PI - end.theta).abs() > CHART_HIT_TOL {
        return Err(Error::ChartMiss(end.theta));
    }
    let (_, zm) = chart_equilibria(ChartId::Pi, mp, wf)?;
    Ok(hamiltonian(ChartId::Pi, end.p, end.q, mp, wf)? - hamiltonian(ChartId::Pi, zm.z.re, zm.z.im, mp, wf)?)
}

/// Energy gap of a computed wall, read at its right end.
pub fn htilde_measured(profile: &Profile) -> Result<f64> {
    let end = profile.states.last().ok_or(Error::ChartMiss(f64::NAN))?;
    htilde_at(end, &profile.mp, &profile.wf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{chart_coefficients, chart_flow};
    use num_complex::Complex64;

    fn center() -> (MaterialParams, WaveFrame) {
        (MaterialParams::new(0.5, 0.1, -1.0, 10.2, 0.0).unwrap(), WaveFrame::new(4.0, 8.2))
    }

    #[test]
    fn value_at_pi_equilibrium() {
        let (mp, wf) = center();
        assert!((hamiltonian(ChartId::Pi, 1.0, 0.0, &mp, &wf).unwrap() + 4.0).abs() < 1e-14);
        assert!(matches!(hamiltonian(ChartId::Pi, 0.3, 2.0, &mp, &wf), Err(Error::InvariantLine { .. })));
        assert!(matches!(hamiltonian(ChartId::Zero, 0.3, -2.0, &mp, &wf), Err(Error::InvariantLine { .. })));
    }

    #[test]
    fn frequencies() {
        let (mp, _) = center();
        assert!((center_frequency(ChartId::Pi, &mp, 4.0).unwrap() - 8.2).abs() < 1e-14);
        assert!((center_frequency(ChartId::Pi, &mp, 0.0).unwrap() - 0.2).abs() < 1e-15);
        assert!((center_frequency(ChartId::Zero, &mp, 4.0).unwrap() + 7.8).abs() < 1e-14);
        let (mp, wf) = center();
        assert!(center_condition(ChartId::Pi, &mp, &wf).unwrap().holds);
        assert!(!center_condition(ChartId::Zero, &mp, &wf).unwrap().holds);
    }

    #[test]
    fn periodic_neighborhoods() {
        let (mp, wf) = center();
        assert!(periodic_neighborhood(ChartId::Pi, &mp, &wf).unwrap());
        assert!(!periodic_neighborhood(ChartId::Pi, &mp.with_h(3.0), &wf).unwrap());
        // 8.2 = h − 1 + 5 at h = 4.2.
        assert!(!periodic_neighborhood(ChartId::Pi, &mp.with_h(4.2), &wf).unwrap());
    }

    #[test]
    fn conserved_along_closed_form_flow() {
        let (mp, wf) = center();
        let co = chart_coefficients(ChartId::Pi, &mp, &wf);
        let z0 = Complex64::new(1.75, 0.0);
        let h0 = hamiltonian(ChartId::Pi, z0.re, z0.im, &mp, &wf).unwrap();
        for i in 1..=200 {
            let z = chart_flow(z0, 0.0, 0.5 * i as f64, &co).unwrap();
            let h = hamiltonian(ChartId::Pi, z.re, z.im, &mp, &wf).unwrap();
            assert!((h - h0).abs() < 1e-9, "xi={} drift {}", 0.5 * i as f64, h - h0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mp = MaterialParams::new(0.7, 0.3, -1.2, 3.0, 0.2).unwrap();
        let wf = WaveFrame::new(1.3, 0.8);
        for chart in [ChartId::Zero, ChartId::Pi] {
            let (p, q) = (0.4, 1.9);
            let (gp, gq) = hamiltonian_gradient(chart, p, q, &mp, &wf).unwrap();
            let e = 1e-6;
            let h = |p, q| hamiltonian(chart, p, q, &mp, &wf).unwrap();
            let fp = (h(p + e, q) - h(p - e, q)) / (2.0 * e);
            let fq = (h(p, q + e) - h(p, q - e)) / (2.0 * e);
            assert!((gp - fp).abs() < 1e-6 && (gq - fq).abs() < 1e-6, "{chart:?}");
        }
    }

    #[test]
    fn quadratic_expansion_coefficients() {
        let qf = htilde_quadratic(0.5, -1.0).unwrap();
        let (s0, h0) = center_point(0.5, 0.1, -1.0).unwrap();
        assert!((s0 - 4.0).abs() < 1e-15 && (h0 - 10.2).abs() < 1e-12);
        let got = qf.expand_about(s0, h0);
        let want = [-0.006612, 0.00673, -0.00183, -0.00134, -0.000086, 0.00077];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-5, "{got:?}");
        }
        assert_eq!(qf.eval(0.0, 0.0), 0.0);
        assert!(qf.is_negative_definite());
    }

    #[test]
    fn tail_coefficients() {
        assert_eq!(tail_oscillation_coefficients(0.0, 0.0, 0.5, -1.0), [[0.0; 2]; 2]);
        let m = tail_oscillation_coefficients(1.0, 0.0, 0.5, -1.0);
        let k = PI / rho(0.5);
        assert!((m[0][0] - 8.0 * k).abs() < 1e-15 && (m[0][1] - 6.5 * k).abs() < 1e-15);
    }

    #[test]
    fn gap_classes() {
        assert_eq!(classify_gap(1e-6), TailKind::NonFlat);
        assert_eq!(classify_gap(-1e-6), TailKind::NonFlat);
        assert_eq!(classify_gap(1e-10), TailKind::Flat);
        assert_eq!(classify_gap(1e-8), TailKind::Undetermined);
    }

    #[test]
    fn gap_of_equilibrium_and_chart_miss() {
        let (mp, wf) = center();
        let end = ChartState::new(PI, 1.0, 0.0);
        assert!(htilde_at(&end, &mp, &wf).unwrap().abs() < 1e-14);
        let off = ChartState::new(3.0, 1.0, 0.0);
        assert!(matches!(htilde_at(&off, &mp, &wf), Err(Error::ChartMiss(_))));
    }
}
