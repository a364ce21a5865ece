//! Natural and pseudo-arclength continuation of walls in one parameter.
//!
//! The first step moves the parameter directly; later steps use a secant
//! predictor and the arclength corrector
//! `(1/2L)∫⟨u − u_pred, t_u⟩ + Σ (λ − λ_pred) t_λ = 0`, with the same weighted
//! norm for the tangent.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analytic::homogeneous_speed_frequency;
use crate::bvp::{newton_solve, Arc, BvpConfig, BvpSystem, Formulation, Iterate, Profile, Solved, Unknown};
use crate::classification::RegimeKind;
use crate::hamiltonian::htilde_measured;
use crate::model::{ChartState, MaterialParams, Param, Vec3};
use crate::par::{self, Execution};
use crate::shooting::classify_tail;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepPolicy {
    pub initial: f64,
    pub min: f64,
    pub max: f64,
    /// Consecutive successes before the step grows.
    pub grow_after: usize,
    pub grow: f64,
    pub max_points: usize,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self { initial: 0.01, min: 1e-5, max: 0.05, grow_after: 3, grow: 1.3, max_points: 5000 }
    }
}

impl StepPolicy {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min > 0.0
            && self.min <= self.initial
            && self.initial <= self.max
            && self.grow >= 1.0
            && self.grow_after >= 1
            && self.max_points >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("inconsistent step policy {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedTarget,
    Fold,
    NewtonFailure,
    StepUnderflow,
}

impl Termination {
    pub fn label(self) -> &'static str {
        match self {
            Termination::ReachedTarget => "reached_target",
            Termination::Fold => "fold",
            Termination::NewtonFailure => "newton_failure",
            Termination::StepUnderflow => "step_underflow",
        }
    }
}

/// Summary of a converged profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDigest {
    pub left: ChartState,
    pub right: ChartState,
    pub htilde: Option<f64>,
    pub tail_amplitude: f64,
    pub n_mesh: usize,
    #[serde(rename = "L")]
    pub l: f64,
}

impl ProfileDigest {
    pub fn of(solved: &Solved) -> Self {
        let p = &solved.profile;
        let htilde = solved.gap.or_else(|| htilde_measured(p).ok());
        Self {
            left: p.states[0],
            right: *p.states.last().unwrap(),
            htilde,
            tail_amplitude: classify_tail(&p.mesh, &p.states).oscillation_amplitude,
            n_mesh: p.mesh.len() - 1,
            l: p.half_length(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointDiagnostics {
    pub newton_iterations: usize,
    pub step: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub value: f64,
    pub free: Vec<(Unknown, f64)>,
    pub digest: ProfileDigest,
    pub diagnostics: PointDiagnostics,
}

impl BranchPoint {
    pub fn free_value(&self, u: Unknown) -> Option<f64> {
        self.free.iter().find(|(k, _)| *k == u).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub parameter: Param,
    pub formulation: Formulation,
    pub points: Vec<BranchPoint>,
    pub terminated: Termination,
    pub final_profile: Profile,
}

impl Branch {
    pub fn last(&self) -> &BranchPoint {
        self.points.last().expect("a branch holds its start point")
    }
}

/// What to continue and how.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSpec {
    pub formulation: Formulation,
    /// Free scalars; `None` means the formulation's defaults.
    pub free: Option<Vec<Unknown>>,
    pub parameter: Param,
    pub target: f64,
    pub cfg: BvpConfig,
    pub policy: StepPolicy,
}

/// A converged point in the layout of the fixed-parameter system.
#[derive(Clone)]
struct Pt {
    it: Iterate,
    value: f64,
}

struct Layout {
    d0: usize,
    k: usize,
    m: usize,
    n: usize,
    weights: Vec<f64>,
}

impl Layout {
    fn new(sys: &BvpSystem) -> Self {
        let (m, n) = (sys.stages_per_interval(), sys.n_intervals());
        let mesh = sys.mesh();
        let l2 = mesh[n] - mesh[0];
        let tab = sys.tableau();
        let weights = (0..n)
            .flat_map(|i| {
                let h = mesh[i + 1] - mesh[i];
                tab.b.iter().map(move |b| h * b / l2).collect::<Vec<_>>()
            })
            .collect();
        Self { d0: sys.dim(), k: sys.free.len(), m, n, weights }
    }

    fn stage_u(&self, it: &Iterate, g: usize) -> Vec3 {
        let y = &it.stages[g * self.d0..];
        [y[0], y[1], y[2]]
    }

    fn lam(&self, p: &Pt) -> Vec<f64> {
        let mut v = p.it.nodes[3..3 + self.k].to_vec();
        v.push(p.value);
        v
    }

    fn norm(&self, a: &Pt, b: &Pt) -> f64 {
        let mut acc = 0.0;
        for g in 0..self.n * self.m {
            let (ua, ub) = (self.stage_u(&a.it, g), self.stage_u(&b.it, g));
            acc += self.weights[g] * (0..3).map(|i| (ua[i] - ub[i]).powi(2)).sum::<f64>();
        }
        let (la, lb) = (self.lam(a), self.lam(b));
        acc += la.iter().zip(&lb).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        acc.sqrt()
    }

    /// `a + t (b − a)` with the phase states reset.
    fn lerp(&self, a: &Pt, b: &Pt, t: f64) -> Pt {
        let mut out = Pt {
            it: Iterate {
                nodes: a.it.nodes.iter().zip(&b.it.nodes).map(|(x, y)| x + t * (y - x)).collect(),
                stages: a.it.stages.iter().zip(&b.it.stages).map(|(x, y)| x + t * (y - x)).collect(),
            },
            value: a.value + t * (b.value - a.value),
        };
        self.zero_phase(&mut out.it);
        out
    }

    fn zero_phase(&self, it: &mut Iterate) {
        let w = 3 + self.k;
        for y in it.nodes.chunks_mut(self.d0).chain(it.stages.chunks_mut(self.d0)) {
            y[w] = 0.0;
        }
    }

    /// Inserts the parameter and an arclength state after the free scalars.
    fn widen(&self, p: &Pt) -> Iterate {
        let conv = |v: &[f64]| -> Vec<f64> {
            v.chunks(self.d0)
                .flat_map(|y| {
                    let mut z = Vec::with_capacity(self.d0 + 2);
                    z.extend_from_slice(&y[..3 + self.k]);
                    z.push(p.value);
                    z.push(y[3 + self.k]);
                    z.push(0.0);
                    z
                })
                .collect()
        };
        Iterate { nodes: conv(&p.it.nodes), stages: conv(&p.it.stages) }
    }

    fn narrow(&self, it: &Iterate) -> Pt {
        let dw = self.d0 + 2;
        let conv = |v: &[f64]| -> Vec<f64> {
            v.chunks(dw)
                .flat_map(|y| {
                    let mut z = Vec::with_capacity(self.d0);
                    z.extend_from_slice(&y[..3 + self.k]);
                    z.push(y[4 + self.k]);
                    z
                })
                .collect()
        };
        Pt { it: Iterate { nodes: conv(&it.nodes), stages: conv(&it.stages) }, value: it.nodes[3 + self.k] }
    }
}

enum Failure {
    Newton,
    Domain,
}

fn failure_kind(e: &Error) -> Failure {
    match e {
        Error::NoConvergence(_) | Error::SingularJacobian => Failure::Newton,
        _ => Failure::Domain,
    }
}

fn natural(sys: &mut BvpSystem, param: Param, from: &Pt, guess: Iterate, value: f64) -> Result<Solved> {
    let (mut mp, mut wf) = sys.base();
    param.set(&mut mp, &mut wf, value);
    mp.validate()?;
    sys.set_base(mp, wf);
    sys.set_phase_from(&from.it)?;
    let (it, iters, res) = sys.newton(guess)?;
    sys.finish(it, iters, res)
}

/// Continues `start` in `spec.parameter` toward `spec.target`.
///
/// Fold, corrector failure and step underflow end the branch and are recorded
/// in [`Branch::terminated`]; errors are returned only when the start does
/// not solve its own system or the request is malformed.
pub fn continue_branch(start: &Profile, spec: &BranchSpec) -> Result<Branch> {
    spec.policy.validate()?;
    let free = spec.free.clone().unwrap_or_else(|| spec.formulation.default_free());
    if free.contains(&Unknown::Param(spec.parameter)) {
        return Err(Error::InvalidParameter(format!("{} is both free and continued", spec.parameter.name())));
    }
    if spec.formulation.kind() != RegimeKind::Codim2 && spec.parameter == Param::Omega {
        return Err(Error::InvalidParameter("omega is slaved or fixed in this formulation".into()));
    }
    let param = spec.parameter;
    let policy = spec.policy;
    let mut sys = BvpSystem::new(spec.formulation, free, &start.mp, &start.wf, &spec.cfg)?;
    let first = newton_solve(&mut sys, start)?;
    let lay = Layout::new(&sys);
    let v0 = param.get(&first.profile.mp, &first.profile.wf);
    let dir = if spec.target >= v0 { 1.0 } else { -1.0 };

    let mut arc_sys = sys.clone();
    arc_sys.push_free(Unknown::Param(param));

    let record = |s: &Solved, free: Vec<(Unknown, f64)>, value: f64, step: f64| BranchPoint {
        value,
        free: free.into_iter().filter(|(u, _)| *u != Unknown::Param(param)).collect(),
        digest: ProfileDigest::of(s),
        diagnostics: PointDiagnostics { newton_iterations: s.iterations, step, residual: s.residual },
    };

    let mut points = vec![record(&first, first.free_values(&sys), v0, 0.0)];
    let mut prev: Option<Pt> = None;
    let mut cur = Pt { it: first.iterate.clone(), value: v0 };
    let mut final_profile = first.profile.clone();
    let mut step = policy.initial;
    let mut streak = 0usize;

    if (spec.target - v0).abs() < 1e-14 {
        return Ok(Branch {
            parameter: param,
            formulation: spec.formulation,
            points,
            terminated: Termination::ReachedTarget,
            final_profile,
        });
    }

    let terminated = loop {
        if points.len() >= policy.max_points {
            break Termination::StepUnderflow;
        }
        let attempt: Result<(Solved, Vec<(Unknown, f64)>, Pt, bool)> = match &prev {
            None => {
                let v = if (spec.target - cur.value).abs() <= step { spec.target } else { cur.value + dir * step };
                let mut guess = cur.it.clone();
                lay.zero_phase(&mut guess);
                natural(&mut sys, param, &cur, guess, v).map(|s| {
                    let p = Pt { it: s.iterate.clone(), value: v };
                    let f = s.free_values(&sys);
                    (s, f, p, v == spec.target)
                })
            }
            Some(p0) => arclength_step(&mut sys, &mut arc_sys, &lay, param, p0, &cur, step, spec.target, dir),
        };
        match attempt {
            Ok((solved, free, pt, at_target)) => {
                let fold = prev.is_some() && (pt.value - cur.value) * dir < 0.0;
                points.push(record(&solved, free, pt.value, step));
                final_profile = solved.profile;
                if at_target {
                    break Termination::ReachedTarget;
                }
                if fold {
                    break Termination::Fold;
                }
                prev = Some(std::mem::replace(&mut cur, pt));
                streak += 1;
                if streak >= policy.grow_after {
                    step = (step * policy.grow).min(policy.max);
                    streak = 0;
                }
            }
            Err(e) => {
                streak = 0;
                if step <= policy.min * (1.0 + 1e-12) {
                    break match failure_kind(&e) {
                        Failure::Newton => Termination::NewtonFailure,
                        Failure::Domain => Termination::StepUnderflow,
                    };
                }
                step = (step * 0.5).max(policy.min);
            }
        }
    };
    Ok(Branch { parameter: param, formulation: spec.formulation, points, terminated, final_profile })
}

#[allow(clippy::too_many_arguments)]
fn arclength_step(
    sys: &mut BvpSystem,
    arc_sys: &mut BvpSystem,
    lay: &Layout,
    param: Param,
    p0: &Pt,
    p1: &Pt,
    step: f64,
    target: f64,
    dir: f64,
) -> Result<(Solved, Vec<(Unknown, f64)>, Pt, bool)> {
    let secant = lay.norm(p0, p1);
    if !(secant > 0.0) {
        return Err(Error::Domain("zero secant".into()));
    }
    let t = step / secant;
    let pred = lay.lerp(p1, p0, -t);
    let tan_u = (0..lay.n * lay.m)
        .map(|g| {
            let (a, b) = (lay.stage_u(&p0.it, g), lay.stage_u(&p1.it, g));
            std::array::from_fn(|i| (b[i] - a[i]) / secant)
        })
        .collect();
    let pred_u = (0..lay.n * lay.m).map(|g| lay.stage_u(&pred.it, g)).collect();
    let tan_lam = lay.lam(p0).iter().zip(lay.lam(p1)).map(|(a, b)| (b - a) / secant).collect();
    let arc = Arc { pred_u, tan_u, pred_lam: lay.lam(&pred), tan_lam };

    let (mp, wf) = sys.base();
    arc_sys.set_base(mp, wf);
    arc_sys.set_arc(Some(arc));
    arc_sys.set_phase_from(&lay.widen(p1))?;
    let (it, iters, res) = arc_sys.newton(lay.widen(&pred))?;
    let new = lay.narrow(&it);

    if (new.value - target) * dir >= 0.0 {
        // Passed the target: land on it with a fixed-parameter solve.
        let s = (target - p1.value) / (new.value - p1.value);
        let guess = lay.lerp(p1, &new, s);
        let solved = natural(sys, param, p1, guess.it, target)?;
        let free = solved.free_values(sys);
        let pt = Pt { it: solved.iterate.clone(), value: target };
        return Ok((solved, free, pt, true));
    }
    let solved = arc_sys.finish(it, iters, res)?;
    let free = solved.free_values(arc_sys);
    let (mut mp, mut wf) = sys.base();
    param.set(&mut mp, &mut wf, new.value);
    sys.set_base(mp, wf);
    Ok((solved, free, new, false))
}

/// Last converged point of a branch in `s` toward zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub c_cp: f64,
    pub s_terminal: f64,
    pub omega_terminal: f64,
    pub h_terminal: f64,
    pub terminated: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationBoundary {
    pub points: Vec<BoundaryPoint>,
    /// Least-squares cubic `s_terminal(c_cp)`, lowest degree first.
    pub fit: [f64; 4],
}

impl TerminationBoundary {
    pub fn eval(&self, c: f64) -> f64 {
        self.fit.iter().rev().fold(0.0, |a, k| a * c + k)
    }
}

/// Codim-2 wall at `c_cp` obtained by continuing the homogeneous wall of
/// `mp` (taken at `c_cp = 0`).
pub fn codim2_wall(mp: &MaterialParams, c_cp: f64, cfg: &BvpConfig, policy: &StepPolicy) -> Result<Branch> {
    let base = mp.with_c_cp(0.0);
    let wf = homogeneous_speed_frequency(&base)?;
    let start = Profile::homogeneous(cfg.mesh(), base, wf, RegimeKind::Codim2);
    let spec = BranchSpec {
        formulation: Formulation::Codim2,
        free: None,
        parameter: Param::CCp,
        target: c_cp,
        cfg: *cfg,
        policy: *policy,
    };
    continue_branch(&start, &spec)
}

/// For each `c_cp`, continues the codim-2 wall in `s` toward zero with
/// `(h, Ω)` free and fits a cubic through the last converged points.
pub fn termination_boundary(
    mp: &MaterialParams,
    c_values: &[f64],
    cfg: &BvpConfig,
    policy: &StepPolicy,
    exec: Execution,
) -> Result<TerminationBoundary> {
    if c_values.len() < 4 {
        return Err(Error::InvalidParameter("a cubic fit needs at least four c_cp values".into()));
    }
    let points = par::try_map(exec, c_values, |&c| {
        let wall = codim2_wall(mp, c, cfg, policy)?;
        if wall.terminated != Termination::ReachedTarget {
            return Err(Error::NoConvergence(wall.last().value));
        }
        let spec = BranchSpec {
            formulation: Formulation::Codim2,
            free: Some(vec![Unknown::Param(Param::H), Unknown::Param(Param::Omega)]),
            parameter: Param::S,
            target: 0.0,
            cfg: *cfg,
            policy: *policy,
        };
        let br = continue_branch(&wall.final_profile, &spec)?;
        let last = br.last();
        Ok(BoundaryPoint {
            c_cp: c,
            s_terminal: last.value,
            omega_terminal: last.free_value(Unknown::Param(Param::Omega)).unwrap_or(f64::NAN),
            h_terminal: last.free_value(Unknown::Param(Param::H)).unwrap_or(f64::NAN),
            terminated: br.terminated,
        })
    })?;
    let v = DMatrix::from_fn(points.len(), 4, |i, j| points[i].c_cp.powi(j as i32));
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.s_terminal));
    let coef = v.svd(true, true).solve(&y, 1e-14).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(TerminationBoundary { points, fit: [coef[0], coef[1], coef[2], coef[3]] })
}

/// Energy gap along a center-formulation branch in `param`.
pub fn htilde_sweep(start: &Profile, param: Param, target: f64, cfg: &BvpConfig, policy: &StepPolicy) -> Result<Vec<(f64, f64)>> {
    let spec = BranchSpec {
        formulation: Formulation::Center { flat_constrained: false },
        free: None,
        parameter: param,
        target,
        cfg: *cfg,
        policy: *policy,
    };
    let br = continue_branch(start, &spec)?;
    if br.terminated != Termination::ReachedTarget {
        return Err(Error::NoConvergence(br.last().value));
    }
    Ok(br.points.iter().filter_map(|p| Some((p.value, p.digest.htilde?))).collect())
}
