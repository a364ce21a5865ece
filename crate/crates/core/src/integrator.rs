//! Dormand–Prince 5(4) with dense output and event location.

use serde::{Deserialize, Serialize};

use crate::model::{rhs_array, singular_rhs, ChartState, MaterialParams, SingularState, Vec3, WaveFrame};
use crate::{Error, Result};

/// `|y₁| + |y₂|` above this is reported as [`Error::BlowUp`].
pub const BLOW_UP: f64 = 1e8;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; `0` picks one from the span.
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Options {
    pub fn with_tol(tol: f64) -> Self {
        Self { rtol: tol, atol: tol, ..Self::default() }
    }
}

impl Default for Options {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-10, h_init: 0.0, h_max: f64::INFINITY, max_steps: 2_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedEnd,
    Event,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub tol: f64,
    pub termination: Termination,
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    x0: f64,
    h: f64,
    /// End of validity; differs from `x0 + h` only when an event cut the step.
    x_end: f64,
    r: [Vec3; 5],
}

impl Segment {
    fn eval(&self, x: f64) -> Vec3 {
        let t = (x - self.x0) / self.h;
        let t1 = 1.0 - t;
        let r = &self.r;
        std::array::from_fn(|i| r[0][i] + t * (r[1][i] + t1 * (r[2][i] + t * (r[3][i] + t1 * r[4][i]))))
    }

    fn lo(&self) -> f64 {
        self.x0.min(self.x_end)
    }

    fn hi(&self) -> f64 {
        self.x0.max(self.x_end)
    }
}

/// Continuous solution; `xs` is strictly increasing whatever the direction
/// of integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub xs: Vec<f64>,
    pub ys: Vec<Vec3>,
    pub diagnostics: Diagnostics,
    segments: Vec<Segment>,
}

impl Solution {
    /// Dense output; `None` outside the integrated span.
    pub fn eval(&self, x: f64) -> Option<Vec3> {
        let first = self.segments.first()?;
        let last = self.segments.last()?;
        if x < first.lo() || x > last.hi() {
            return None;
        }
        let k = self.segments.partition_point(|s| s.hi() < x).min(self.segments.len() - 1);
        Some(self.segments[k].eval(x))
    }

    /// Joins two forward solutions where `b` starts at the end of `a`.
    pub fn concat(mut a: Solution, b: Solution) -> Solution {
        a.xs.extend_from_slice(&b.xs[1..]);
        a.ys.extend_from_slice(&b.ys[1..]);
        a.segments.extend(b.segments);
        let (da, db) = (a.diagnostics, b.diagnostics);
        a.diagnostics = Diagnostics {
            accepted: da.accepted + db.accepted,
            rejected: da.rejected + db.rejected,
            evaluations: da.evaluations + db.evaluations,
            tol: da.tol.max(db.tol),
            termination: db.termination,
        };
        a
    }

    pub fn first(&self) -> (f64, Vec3) {
        (self.xs[0], self.ys[0])
    }

    pub fn last(&self) -> (f64, Vec3) {
        (*self.xs.last().unwrap(), *self.ys.last().unwrap())
    }
}

/// Scalar event `g(x, y)`; integration stops at the first sign change
/// matching `direction` (`+1` rising, `−1` falling, `0` either).
pub struct Event<'a> {
    pub g: &'a dyn Fn(f64, &Vec3) -> f64,
    pub direction: i8,
}

fn norm(err: &Vec3, y0: &Vec3, y1: &Vec3, o: &Options) -> f64 {
    let mut acc = 0.0;
    for i in 0..3 {
        let sc = o.atol + o.rtol * y0[i].abs().max(y1[i].abs());
        acc += (err[i] / sc).powi(2);
    }
    (acc / 3.0).sqrt()
}

fn axpy(y: &Vec3, h: f64, terms: &[(f64, &Vec3)]) -> Vec3 {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

/// Integrates `y' = f(x, y)` from `x0` to `x1` (either direction).
pub fn dopri5<F>(f: F, x0: f64, y0: Vec3, x1: f64, opts: &Options, event: Option<Event>) -> Result<Solution>
where
    F: Fn(f64, &Vec3) -> Result<Vec3>,
{
    let dir = if x1 >= x0 { 1.0 } else { -1.0 };
    let span = (x1 - x0).abs();
    let mut diag = Diagnostics {
        accepted: 0,
        rejected: 0,
        evaluations: 0,
        tol: opts.rtol.max(opts.atol),
        termination: Termination::ReachedEnd,
    };
    let mut xs = vec![x0];
    let mut ys = vec![y0];
    let mut segments: Vec<Segment> = Vec::new();
    if span == 0.0 {
        return Ok(Solution { xs, ys, diagnostics: diag, segments });
    }
    let mut x = x0;
    let mut y = y0;
    let mut k1 = f(x, &y)?;
    diag.evaluations += 1;
    let mut h = if opts.h_init > 0.0 { opts.h_init } else { (span * 1e-3).min(1e-2) };
    h = h.min(opts.h_max).min(span);
    let mut g_prev = event.as_ref().map(|e| (e.g)(x, &y));
    let mut last = false;

    while !last {
        if diag.accepted + diag.rejected >= opts.max_steps {
            return Err(Error::StepFailure(x));
        }
        let h_min = 1e-14 * x.abs().max(1.0);
        if h < h_min {
            return Err(Error::StepFailure(x));
        }
        let remaining = (x1 - x) * dir;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        let hs = h * dir;
        let y2 = axpy(&y, hs, &[(A21, &k1)]);
        let k2 = f(x + C2 * hs, &y2)?;
        let y3 = axpy(&y, hs, &[(A31, &k1), (A32, &k2)]);
        let k3 = f(x + C3 * hs, &y3)?;
        let y4 = axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        let k4 = f(x + C4 * hs, &y4)?;
        let y5 = axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        let k5 = f(x + C5 * hs, &y5)?;
        let y6 = axpy(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        let k6 = f(x + hs, &y6)?;
        let y_new = axpy(&y, hs, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(x + hs, &y_new)?;
        diag.evaluations += 6;
        let e: Vec3 = std::array::from_fn(|i| {
            hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
        });
        let err = norm(&e, &y, &y_new, opts);
        if !err.is_finite() || err > 1.0 {
            diag.rejected += 1;
            last = false;
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).max(0.2) } else { 0.2 };
            h *= fac;
            continue;
        }
        if y_new[1].abs() + y_new[2].abs() > BLOW_UP {
            return Err(Error::BlowUp(x + hs));
        }
        let ydiff: Vec3 = std::array::from_fn(|i| y_new[i] - y[i]);
        let bspl: Vec3 = std::array::from_fn(|i| hs * k1[i] - ydiff[i]);
        let x_new = if last { x1 } else { x + hs };
        let seg = Segment {
            x0: x,
            h: hs,
            x_end: x_new,
            r: [
                y,
                ydiff,
                bspl,
                std::array::from_fn(|i| ydiff[i] - hs * k7[i] - bspl[i]),
                std::array::from_fn(|i| {
                    hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
                }),
            ],
        };
        diag.accepted += 1;

        if let (Some(ev), Some(gp)) = (event.as_ref(), g_prev) {
            let gn = (ev.g)(x_new, &y_new);
            let crossed = match ev.direction {
                1 => gp < 0.0 && gn >= 0.0,
                -1 => gp > 0.0 && gn <= 0.0,
                _ => gp * gn < 0.0 || (gn == 0.0 && gp != 0.0),
            };
            if crossed {
                let xe = locate(&seg, ev.g, x, x_new, gp);
                let ye = seg.eval(xe);
                segments.push(Segment { x_end: xe, ..seg });
                xs.push(xe);
                ys.push(ye);
                diag.termination = Termination::Event;
                return Ok(finish(xs, ys, segments, diag, dir));
            }
            g_prev = Some(gn);
        }
        segments.push(seg);
        x = x_new;
        y = y_new;
        k1 = k7;
        xs.push(x);
        ys.push(y);
        let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
        h = (h * fac).min(opts.h_max);
    }
    Ok(finish(xs, ys, segments, diag, dir))
}

fn locate(seg: &Segment, g: &dyn Fn(f64, &Vec3) -> f64, xa: f64, xb: f64, ga: f64) -> f64 {
    let (mut a, mut b, mut fa) = (xa, xb, ga);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let fm = g(m, &seg.eval(m));
        if (fm < 0.0) == (fa < 0.0) && fm != 0.0 {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    b
}

fn finish(mut xs: Vec<f64>, mut ys: Vec<Vec3>, mut segments: Vec<Segment>, diag: Diagnostics, dir: f64) -> Solution {
    if dir < 0.0 {
        xs.reverse();
        ys.reverse();
        segments.reverse();
    }
    Solution { xs, ys, diagnostics: diag, segments }
}

/// Which form of the coherent-structure ODE to integrate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhsSelector {
    /// `(θ, p, q)`.
    Desingularized,
    /// `(θ, ψ, q)` with the given guard on `|sin θ|`.
    Singular { guard: f64 },
}

/// A desingularized orbit segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub xs: Vec<f64>,
    pub states: Vec<ChartState>,
    pub diagnostics: Diagnostics,
    pub solution: Solution,
}

impl Trajectory {
    pub fn from_solution(solution: Solution) -> Result<Self> {
        let states: Vec<ChartState> = solution.ys.iter().map(|y| ChartState::from_array(*y)).collect();
        for st in &states {
            st.validate()?;
        }
        Ok(Self { xs: solution.xs.clone(), states, diagnostics: solution.diagnostics, solution })
    }

    pub fn eval(&self, x: f64) -> Option<ChartState> {
        self.solution.eval(x).map(ChartState::from_array)
    }
}

/// Integrates either form from `state0` over `span`. For the singular form the
/// state is read as `(θ, ψ, q)` and the initial ψ is `p sin θ`.
pub fn integrate(
    selector: RhsSelector,
    mp: &MaterialParams,
    wf: &WaveFrame,
    state0: ChartState,
    span: (f64, f64),
    tol: f64,
) -> Result<Solution> {
    if !(1e-13..=1e-3).contains(&tol) {
        return Err(Error::InvalidParameter(format!("tol must lie in [1e-13, 1e-3], got {tol}")));
    }
    state0.validate()?;
    let opts = Options::with_tol(tol);
    match selector {
        RhsSelector::Desingularized => {
            dopri5(|_, y| Ok(rhs_array(y, mp, wf)), span.0, state0.to_array(), span.1, &opts, None)
        }
        RhsSelector::Singular { guard } => dopri5(
            |_, y| singular_rhs(&SingularState::from_array(*y), mp, wf, guard),
            span.0,
            state0.to_singular().to_array(),
            span.1,
            &opts,
            None,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let opts = Options::with_tol(1e-12);
        let sol = dopri5(|_, y| Ok([-y[0], 2.0 * y[1], 0.0]), 0.0, [1.0, 1.0, 3.0], 2.0, &opts, None).unwrap();
        let (_, y) = sol.last();
        assert!((y[0] - (-2f64).exp()).abs() < 1e-10);
        assert!((y[1] - 4f64.exp()).abs() < 1e-9 * 4f64.exp());
        let ym = sol.eval(1.3).unwrap();
        assert!((ym[0] - (-1.3f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn backward_integration_has_increasing_mesh() {
        let opts = Options::with_tol(1e-11);
        let sol = dopri5(|_, y| Ok([y[1], -y[0], 0.0]), 0.0, [0.0, 1.0, 0.0], -3.0, &opts, None).unwrap();
        assert!(sol.xs.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sol.xs[0], -3.0);
        let y = sol.eval(-2.0).unwrap();
        assert!((y[0] - (-2f64).sin()).abs() < 1e-9);
    }

    #[test]
    fn event_stops_on_crossing() {
        let opts = Options::with_tol(1e-12);
        let g = |_: f64, y: &Vec3| y[0] - 0.5;
        let ev = Event { g: &g, direction: 1 };
        let sol = dopri5(|_, y| Ok([y[1], -y[0], 0.0]), 0.0, [0.0, 1.0, 0.0], 10.0, &opts, Some(ev)).unwrap();
        assert_eq!(sol.diagnostics.termination, Termination::Event);
        let (x, y) = sol.last();
        assert!((x - 0.5f64.asin()).abs() < 1e-10, "{x}");
        assert!((y[0] - 0.5).abs() < 1e-10);
        let mid = sol.eval(0.5 * x).unwrap();
        assert!((mid[0] - (0.5 * x).sin()).abs() < 1e-10);
    }

    #[test]
    fn blow_up_is_reported() {
        let opts = Options::with_tol(1e-8);
        let r = dopri5(|_, y| Ok([0.0, y[1] * y[1], 0.0]), 0.0, [0.0, 1.0, 0.0], 2.0, &opts, None);
        assert!(matches!(r, Err(Error::BlowUp(_)) | Err(Error::StepFailure(_))), "{r:?}");
    }

    #[test]
    fn tolerance_range_is_enforced() {
        let mp = MaterialParams::new(0.5, 0.1, -1.0, 1.0, 0.0).unwrap();
        let wf = WaveFrame::new(0.5, 0.5);
        let st = ChartState::new(1.0, 0.0, 0.0);
        assert!(integrate(RhsSelector::Desingularized, &mp, &wf, st, (0.0, 1.0), 1e-2).is_err());
    }
}
