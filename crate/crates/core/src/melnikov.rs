//! Melnikov splitting of the codim-2 connection.
//!
//! Along the homogeneous wall at `c_cp = 0` the unstable manifold of `Z⁰_−`
//! and the stable manifold of `Z^π_−` coincide. Perturbing
//! `η = (c_cp, s, Ω)` splits them by `M(η) ≈ M_η·(η − η₀)`; the kernel of
//! the `2×3` matrix `M_η` gives the first-order selection of `(s, Ω)` for
//! a given `c_cp`.

use nalgebra::{Matrix2x3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::analytic::homogeneous_speed_frequency;
use crate::classification::thresholds;
use crate::model::MaterialParams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelnikovIntegrals {
    pub i_c: f64,
    pub i_s: f64,
    pub i_cc: f64,
    pub i_cs: f64,
}

fn check_speed(alpha: f64, mu: f64, s0: f64) -> Result<f64> {
    if alpha <= 0.0 || mu >= 0.0 {
        return Err(Error::InvalidParameter("need alpha > 0 and mu < 0".into()));
    }
    let d = (-mu).sqrt();
    if !(0.0..2.0 * d / alpha).contains(&s0) {
        return Err(Error::Domain(format!(
            "Melnikov integrals need 0 <= s0 < 2 sqrt(-mu)/alpha = {}, got {s0}",
            2.0 * d / alpha
        )));
    }
    Ok(d)
}

/// Closed forms of the four integrals for `0 ≤ s₀ < 2√−μ/α`.
pub fn melnikov_integrals_closed(alpha: f64, mu: f64, s0: f64) -> Result<MelnikovIntegrals> {
    let d = check_speed(alpha, mu, s0)?;
    if s0 == 0.0 {
        return Ok(MelnikovIntegrals { i_c: 0.5 / d, i_s: 0.0, i_cc: 0.0, i_cs: 0.0 });
    }
    let t = PI * s0 / d;
    let e = t.exp();
    let one_minus_e = -t.exp_m1();
    let one_plus_e = 1.0 + e;
    let f = (t / 2.0).exp();
    let x = PI * alpha * s0 / d;
    let (sig, c) = (x / 2.0).sin_cos();
    // 1 + E² − 2E cos x, written without cancellation for small s₀.
    let den = one_minus_e * one_minus_e + 4.0 * e * sig * sig;
    let a2 = alpha * alpha;
    let k2 = PI * s0 * s0 * d * f / (4.0 * mu * mu);
    let k1 = PI * s0 * f / (2.0 * mu);
    Ok(MelnikovIntegrals {
        i_cc: k2 * (2.0 * alpha * one_minus_e * c + (1.0 - a2) * one_plus_e * sig) / den,
        i_cs: k2 * ((1.0 - a2) * one_minus_e * c + 2.0 * alpha * one_plus_e * sig) / den,
        i_c: k1 * (one_minus_e * c - alpha * one_plus_e * sig) / den,
        i_s: k1 * (alpha * one_minus_e * c + one_plus_e * sig) / den,
    })
}

/// `I_CS` as the imaginary part of the residue evaluation,
/// `k[2α(1+E)σ − (1−α²)(1−E)c]/D`. Differs from the `i_cs` of
/// [`melnikov_integrals_closed`] in the sign of the cosine term; this one
/// agrees with direct quadrature of the defining integral.
pub fn i_cs_residue(alpha: f64, mu: f64, s0: f64) -> Result<f64> {
    let d = check_speed(alpha, mu, s0)?;
    if s0 == 0.0 {
        return Ok(0.0);
    }
    let t = PI * s0 / d;
    let one_minus_e = -t.exp_m1();
    let e = t.exp();
    let (sig, c) = (PI * alpha * s0 / (2.0 * d)).sin_cos();
    let den = one_minus_e * one_minus_e + 4.0 * e * sig * sig;
    let k2 = PI * s0 * s0 * d * (t / 2.0).exp() / (4.0 * mu * mu);
    Ok(k2 * (2.0 * alpha * (1.0 + e) * sig - (1.0 - alpha * alpha) * one_minus_e * c) / den)
}

/// `M_η` with columns `(c_cp, s − s₀, Ω − Ω₀)` and its unit kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplittingMatrix {
    pub m: Matrix2x3<f64>,
    pub kernel: Vector3<f64>,
}

impl SplittingMatrix {
    pub fn from_integrals(alpha: f64, beta: f64, mu: f64, ints: &MelnikovIntegrals) -> Self {
        let d = (-mu).sqrt();
        let MelnikovIntegrals { i_c, i_s, i_cc, i_cs } = *ints;
        let m = Matrix2x3::new(
            beta * i_cc,
            alpha * d * i_s - d * i_c,
            i_s + alpha * i_c,
            beta * i_cs,
            -alpha * d * i_c - d * i_s,
            -i_c + alpha * i_s,
        );
        Self { m, kernel: kernel(&m) }
    }

    /// `(ds, dΩ)` per unit `c_cp` along the kernel.
    pub fn kernel_slope(&self) -> Option<(f64, f64)> {
        let k = self.kernel;
        (k[0] != 0.0).then(|| (k[1] / k[0], k[2] / k[0]))
    }

    /// Determinant of columns 2 and 3.
    pub fn minor_det(&self) -> f64 {
        let m = &self.m;
        m[(0, 1)] * m[(1, 2)] - m[(0, 2)] * m[(1, 1)]
    }

    pub fn rank(&self) -> usize {
        self.m.rank(1e-14 * self.m.norm().max(f64::MIN_POSITIVE))
    }
}

/// Unit null vector of a full-rank `2×3` matrix, sign fixed by the first
/// nonzero of its `c_cp` and `s` components.
fn kernel(m: &Matrix2x3<f64>) -> Vector3<f64> {
    let r0 = Vector3::new(m[(0, 0)], m[(0, 1)], m[(0, 2)]);
    let r1 = Vector3::new(m[(1, 0)], m[(1, 1)], m[(1, 2)]);
    let k = r0.cross(&r1);
    let n = k.norm();
    if n == 0.0 {
        return k;
    }
    let k = k / n;
    let flip = if k[0] != 0.0 { k[0] < 0.0 } else { k[1] < 0.0 };
    if flip {
        -k
    } else {
        k
    }
}

/// Splitting matrix at an explicit speed.
pub fn splitting_matrix_at(alpha: f64, beta: f64, mu: f64, s0: f64) -> Result<SplittingMatrix> {
    let ints = melnikov_integrals_closed(alpha, mu, s0)?;
    if s0 == 0.0 {
        let d = (-mu).sqrt();
        let m = Matrix2x3::new(0.0, -0.5, alpha / (2.0 * d), 0.0, -alpha / 2.0, -1.0 / (2.0 * d));
        return Ok(SplittingMatrix { m, kernel: kernel(&m) });
    }
    Ok(SplittingMatrix::from_integrals(alpha, beta, mu, &ints))
}

/// Splitting matrix of the homogeneous wall; requires `β/α ≤ h < h^*`.
pub fn splitting_matrix(mp: &MaterialParams) -> Result<SplittingMatrix> {
    if mp.c_cp != 0.0 {
        return Err(Error::Regime("the splitting matrix is taken at c_cp = 0".into()));
    }
    let (_, hi) = thresholds(mp.alpha, mp.beta, mp.mu)?;
    if mp.h < mp.beta / mp.alpha || mp.h >= hi {
        return Err(Error::Regime(format!(
            "codim-2 needs beta/alpha <= h < {hi}, got h = {}",
            mp.h
        )));
    }
    let s0 = homogeneous_speed_frequency(mp)?.s.max(0.0);
    splitting_matrix_at(mp.alpha, mp.beta, mp.mu, s0)
}

/// First-order splitting `M_η·(c_cp, ds, dΩ)`.
pub fn splitting_value(sm: &SplittingMatrix, deviation: [f64; 3]) -> [f64; 2] {
    let v = sm.m * Vector3::from(deviation);
    [v[0], v[1]]
}

/// `((αI_S − I_C)² + (I_S + αI_C)², (1+α²)²π²s₀²e^{πs₀/√−μ})`.
pub fn determinant_identity_check(alpha: f64, mu: f64, s0: f64) -> Result<(f64, f64)> {
    let d = check_speed(alpha, mu, s0)?;
    let ints = melnikov_integrals_closed(alpha, mu, s0)?;
    let lhs = (alpha * ints.i_s - ints.i_c).powi(2) + (ints.i_s + alpha * ints.i_c).powi(2);
    let rhs = (1.0 + alpha * alpha).powi(2) * PI * PI * s0 * s0 * (PI * s0 / d).exp();
    Ok((lhs, rhs))
}

/// Same left side against the closed form obtained by expanding the
/// integrals: `(1+α²)²π²s₀²E / (4μ²(1 + E² − 2E cos(παs₀/√−μ)))`.
pub fn determinant_identity_corrected(alpha: f64, mu: f64, s0: f64) -> Result<(f64, f64)> {
    let d = check_speed(alpha, mu, s0)?;
    let ints = melnikov_integrals_closed(alpha, mu, s0)?;
    let lhs = (alpha * ints.i_s - ints.i_c).powi(2) + (ints.i_s + alpha * ints.i_c).powi(2);
    let a2 = 1.0 + alpha * alpha;
    if s0 == 0.0 {
        return Ok((lhs, a2 / (4.0 * d * d)));
    }
    let t = PI * s0 / d;
    let e = t.exp();
    let sx = (PI * alpha * s0 / (2.0 * d)).sin();
    let den = t.exp_m1().powi(2) + 4.0 * e * sx * sx;
    Ok((lhs, a2 * a2 * PI * PI * s0 * s0 * e / (4.0 * mu * mu * den)))
}
