//! Regimes of the homogeneous family, field thresholds and the stability
//! diagram of the uniform states `±e₃`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytic::{chart_coefficients, homogeneous_speed_frequency, ChartId};
use crate::model::{MaterialParams, WaveFrame};
use crate::par::{self, Execution};
use crate::{Error, Result};

/// Ties on `s₀ − 2√−μ/α` within this are reported as [`RegimeKind::Center`].
pub const CENTER_TOL: f64 = 1e-10;
const CENTER_GAMMA_TOL: f64 = 1e-10;
const EQUALITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    Codim2,
    Center,
    Codim0,
}

impl RegimeKind {
    pub fn label(self) -> &'static str {
        match self {
            RegimeKind::Codim2 => "codim2",
            RegimeKind::Center => "center",
            RegimeKind::Codim0 => "codim0",
        }
    }

    /// Number of scalars freed by the boundary-value formulation.
    pub fn free_count(self) -> usize {
        match self {
            RegimeKind::Codim2 => 2,
            RegimeKind::Center => 1,
            RegimeKind::Codim0 => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub kind: RegimeKind,
    pub s0: f64,
    pub omega0: f64,
    pub h_star_low: f64,
    pub h_star_high: f64,
}

/// `(h_*, h^*)`, the fields bounding the codim-2 window.
pub fn thresholds(alpha: f64, beta: f64, mu: f64) -> Result<(f64, f64)> {
    if alpha <= 0.0 || mu >= 0.0 {
        return Err(Error::InvalidParameter("thresholds need alpha > 0 and mu < 0".into()));
    }
    let base = beta / alpha;
    let shift = 2.0 * mu / (alpha * alpha) * (1.0 + alpha * alpha);
    Ok((base + shift, base - shift))
}

/// Classifies a right-moving (`h ≥ β/α`) homogeneous wall.
pub fn classify_regime(mp: &MaterialParams) -> Result<Regime> {
    if mp.h < mp.beta / mp.alpha {
        return Err(Error::Orientation);
    }
    let wf = homogeneous_speed_frequency(mp)?;
    classify_speed(mp, wf)
}

fn classify_speed(mp: &MaterialParams, wf: WaveFrame) -> Result<Regime> {
    let (lo, hi) = thresholds(mp.alpha, mp.beta, mp.mu)?;
    let critical = 2.0 * mp.sqrt_neg_mu()? / mp.alpha;
    let gap = wf.s.abs() - critical;
    let kind = if gap.abs() <= CENTER_TOL {
        RegimeKind::Center
    } else if gap < 0.0 {
        RegimeKind::Codim2
    } else {
        RegimeKind::Codim0
    };
    Ok(Regime { kind, s0: wf.s, omega0: wf.omega, h_star_low: lo, h_star_high: hi })
}

/// Spatial eigenvalues of the homogeneous family at both asymptotic states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousSpectrum {
    /// `ν⁰_{1,−}, ν⁰_{2,−}, ν⁰_{3,−}`.
    pub zero: [Complex64; 3],
    /// `ν^π_{1,−}, ν^π_{2,−}, ν^π_{3,−}`.
    pub pi: [Complex64; 3],
}

pub fn eigenvalues_homogeneous(alpha: f64, beta: f64, mu: f64, h: f64) -> Result<HomogeneousSpectrum> {
    let mp = MaterialParams::new(alpha, beta, mu, h, 0.0)?;
    let d = mp.sqrt_neg_mu()?;
    let s0 = homogeneous_speed_frequency(&mp)?.s;
    let pair = |re: f64| [Complex64::new(re, s0), Complex64::new(re, -s0)];
    let [z1, z2] = pair(-alpha * s0 - 2.0 * d);
    let [p1, p2] = pair(-alpha * s0 + 2.0 * d);
    Ok(HomogeneousSpectrum {
        zero: [z1, z2, Complex64::new(d, 0.0)],
        pi: [p1, p2, Complex64::new(-d, 0.0)],
    })
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= EQUALITY_TOL * (1.0 + a.abs().max(b.abs()))
}

/// Frequency condition for a standing wall (`s = 0`) to sit on the chart.
pub fn standing_wall_condition(chart: ChartId, mp: &MaterialParams, omega: f64) -> Result<bool> {
    match chart {
        ChartId::Zero => {
            let crit = mp.beta_plus() / mp.alpha;
            Ok(!near(omega, crit) || omega <= mp.h - mp.mu)
        }
        ChartId::Pi => {
            let crit = mp.beta_minus() / mp.alpha;
            Ok(!near(omega, crit) || omega >= mp.h + mp.mu)
        }
        ChartId::Fixed(_) => Err(Error::Domain("standing-wall conditions live on the pole charts".into())),
    }
}

/// Both chart equilibria are neutral centers at the same time.
pub fn simultaneous_center(mp: &MaterialParams, wf: &WaveFrame) -> bool {
    [ChartId::Zero, ChartId::Pi].iter().all(|&chart| {
        let g = chart_coefficients(chart, mp, wf).gamma;
        g.im.abs() <= CENTER_GAMMA_TOL && g.norm() > CENTER_GAMMA_TOL
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "monostable-")]
    MonostableMinus,
    #[serde(rename = "bistable")]
    Bistable,
    #[serde(rename = "monostable+")]
    MonostablePlus,
    #[serde(rename = "unstable")]
    Unstable,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::MonostableMinus => "monostable-",
            Region::Bistable => "bistable",
            Region::MonostablePlus => "monostable+",
            Region::Unstable => "unstable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub plus_e3: Stability,
    pub minus_e3: Stability,
    pub region: Region,
}

/// `Γ⁺(h) = (β/α)/(h − μ) − 1`.
pub fn gamma_plus(alpha: f64, beta: f64, mu: f64, h: f64) -> Result<f64> {
    if h == mu {
        return Err(Error::CurvePole(h));
    }
    Ok(beta / alpha / (h - mu) - 1.0)
}

/// `Γ⁻(h) = 1 − (β/α)/(h + μ)`.
pub fn gamma_minus(alpha: f64, beta: f64, mu: f64, h: f64) -> Result<f64> {
    if h == -mu {
        return Err(Error::CurvePole(h));
    }
    Ok(1.0 - beta / alpha / (h + mu))
}

/// Field at which `Γ⁺` and `Γ⁻` cross.
pub fn curve_intersection(alpha: f64, beta: f64, mu: f64) -> f64 {
    let b = beta / alpha;
    b / 2.0 + (b * b / 4.0 + mu * mu).sqrt()
}

/// Stability of `±e₃` read off the curves `Γ±` in the `(h, c_cp)` plane.
///
/// `+e₃` is stable to the right of `Γ⁺`, `−e₃` to the left of `Γ⁻`. Solving
/// the curves for `h` gives the crossing fields `β⁺/α + μ` and `β⁻/α − μ`.
pub fn stability_verdict(mp: &MaterialParams) -> Result<StabilityVerdict> {
    gamma_plus(mp.alpha, mp.beta, mp.mu, mp.h)?;
    gamma_minus(mp.alpha, mp.beta, mp.mu, mp.h)?;
    let plus_edge = mp.beta_plus() / mp.alpha + mp.mu;
    let minus_edge = mp.beta_minus() / mp.alpha - mp.mu;
    let flag = |b: bool| if b { Stability::Stable } else { Stability::Unstable };
    let plus_e3 = flag(mp.h > plus_edge);
    let minus_e3 = flag(mp.h < minus_edge);
    let region = match (plus_e3, minus_e3) {
        (Stability::Unstable, Stability::Stable) => Region::MonostableMinus,
        (Stability::Stable, Stability::Stable) => Region::Bistable,
        (Stability::Stable, Stability::Unstable) => Region::MonostablePlus,
        (Stability::Unstable, Stability::Unstable) => Region::Unstable,
    };
    Ok(StabilityVerdict { plus_e3, minus_e3, region })
}

/// One cell of a stability map; `None` marks a curve pole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityCell {
    pub h: f64,
    pub c_cp: f64,
    pub verdict: Option<StabilityVerdict>,
}

/// Verdicts on the tensor grid `hs × cs`, ordered by `h` then `c_cp`.
pub fn stability_map(
    alpha: f64,
    beta: f64,
    mu: f64,
    hs: &[f64],
    cs: &[f64],
    exec: Execution,
) -> Result<Vec<StabilityCell>> {
    let points: Vec<(f64, f64)> = hs.iter().flat_map(|&h| cs.iter().map(move |&c| (h, c))).collect();
    par::try_map(exec, &points, |&(h, c_cp)| {
        let mp = MaterialParams::new(alpha, beta, mu, h, c_cp)?;
        let verdict = match stability_verdict(&mp) {
            Ok(v) => Some(v),
            Err(Error::CurvePole(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(StabilityCell { h, c_cp, verdict })
    })
}

/// Spatial reflection `ξ → −ξ`.
///
/// The coherent-structure ODE is invariant under `(ξ, p, q, s) → (−ξ, −p, −q, −s)`
/// with all physical constants fixed, so a wall moving left at `h < β/α`
/// is the mirror image of a right-moving one with speed `|s₀|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflection {
    pub params: MaterialParams,
    pub reflected: bool,
}

impl Reflection {
    /// Maps a speed between the original and the right-moving convention.
    pub fn speed(&self, s: f64) -> f64 {
        if self.reflected {
            -s
        } else {
            s
        }
    }

    /// Maps a profile point `(ξ, θ, p, q)` across the mirror.
    pub fn point(&self, xi: f64, state: crate::ChartState) -> (f64, crate::ChartState) {
        if self.reflected {
            (-xi, crate::ChartState::new(state.theta, -state.p, -state.q))
        } else {
            (xi, state)
        }
    }
}

pub fn reflect_parameters(mp: &MaterialParams) -> Reflection {
    Reflection { params: *mp, reflected: mp.h < mp.beta / mp.alpha }
}

/// Regime of a wall of either orientation, classified through its mirror
/// image when it moves left.
pub fn classify_any(mp: &MaterialParams) -> Result<(Regime, Reflection)> {
    let refl = reflect_parameters(mp);
    let wf = homogeneous_speed_frequency(mp)?;
    let wf = WaveFrame::new(refl.speed(wf.s), wf.omega);
    Ok((classify_speed(mp, wf)?, refl))
}
