//! Heteroclinic walls as a boundary-value problem on `[−L, L]`.
//!
//! The desingularized ODE is discretized by Gauss collocation in implicit
//! Runge–Kutta form. Free scalars are carried as extra states with zero
//! derivative, and the integral phase condition `∫⟨u − û, û'⟩ = 0` as a state
//! `w` with `w(±L) = 0`, so that after eliminating the stages per interval
//! the Newton matrix is block bidiagonal and is solved in banded form.
//!
//! Boundary conditions by formulation:
//!
//! | formulation | left | right | free |
//! |---|---|---|---|
//! | codim-2 | `p, q` at `Z⁰_−` | `p, q` at `Z^π_−` | `s, Ω` |
//! | center | `p, q` at `Z⁰_−` | `g = H^π(u(L)) − H^π(Z^π_−)` | `g` |
//! | center, flat | `p, q` at `Z⁰_−` | `H^π(u(L)) = H^π(Z^π_−)` | `h` |
//! | codim-0 | `p, q` at `Z⁰_−` | none | none |
//!
//! In the center formulations `Ω = β⁻/α + s²/2` is slaved to `s` and `c_cp`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytic::{chart_equilibria, homogeneous_profile, ChartEquilibrium, ChartId, Sign};
use crate::banded::BandMatrix;
use crate::classification::RegimeKind;
use crate::collocation::Tableau;
use crate::hamiltonian::{center_frequency, hamiltonian};
use crate::model::{
    desingularized_jacobian, desingularized_param_partials, rhs_array, ChartState, MaterialParams, Param, Vec3,
    WaveFrame,
};
use crate::par::{self, Execution};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BvpConfig {
    #[serde(rename = "L")]
    pub l: f64,
    pub n_mesh: usize,
    pub collocation_order: usize,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub root_selection: RootSelection,
}

/// Which chart equilibrium the boundary conditions pin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootSelection {
    /// Always `Z_−` as labeled by the principal square root.
    #[default]
    Labeled,
    /// The root nearest to the previous solution's end state, which follows
    /// the equilibrium across the branch cut of the square root.
    Tracked,
}

impl Default for BvpConfig {
    fn default() -> Self {
        Self {
            l: 50.0,
            n_mesh: 400,
            collocation_order: 4,
            newton_tol: 1e-10,
            max_newton: 12,
            root_selection: RootSelection::Labeled,
        }
    }
}

impl BvpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0) || !self.l.is_finite() {
            return Err(Error::InvalidParameter(format!("L must be > 0, got {}", self.l)));
        }
        if self.n_mesh < 50 {
            return Err(Error::InvalidParameter(format!("n_mesh must be >= 50, got {}", self.n_mesh)));
        }
        if !(3..=5).contains(&self.collocation_order) {
            return Err(Error::InvalidParameter(format!(
                "collocation_order must be 3, 4 or 5, got {}",
                self.collocation_order
            )));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::InvalidParameter("newton_tol must be > 0".into()));
        }
        Ok(())
    }

    pub fn mesh(&self) -> Vec<f64> {
        let n = self.n_mesh;
        (0..=n).map(|i| -self.l + 2.0 * self.l * i as f64 / n as f64).collect()
    }
}

/// A scalar solved for alongside the profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unknown {
    Param(Param),
    /// The energy gap `g` of the center formulation.
    Gap,
}

impl Unknown {
    pub fn name(self) -> &'static str {
        match self {
            Unknown::Param(p) => p.name(),
            Unknown::Gap => "gap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Codim2,
    Center { flat_constrained: bool },
    Codim0,
}

impl Formulation {
    pub fn for_regime(kind: RegimeKind) -> Self {
        match kind {
            RegimeKind::Codim2 => Formulation::Codim2,
            RegimeKind::Center => Formulation::Center { flat_constrained: false },
            RegimeKind::Codim0 => Formulation::Codim0,
        }
    }

    pub fn kind(self) -> RegimeKind {
        match self {
            Formulation::Codim2 => RegimeKind::Codim2,
            Formulation::Center { .. } => RegimeKind::Center,
            Formulation::Codim0 => RegimeKind::Codim0,
        }
    }

    pub fn default_free(self) -> Vec<Unknown> {
        match self {
            Formulation::Codim2 => vec![Unknown::Param(Param::S), Unknown::Param(Param::Omega)],
            Formulation::Center { flat_constrained: false } => vec![Unknown::Gap],
            Formulation::Center { flat_constrained: true } => vec![Unknown::Param(Param::H)],
            Formulation::Codim0 => vec![],
        }
    }

    fn slaved_omega(self) -> bool {
        matches!(self, Formulation::Center { .. })
    }
}

/// A computed wall on its mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub mesh: Vec<f64>,
    pub states: Vec<ChartState>,
    pub mp: MaterialParams,
    pub wf: WaveFrame,
    pub regime: RegimeKind,
}

impl Profile {
    /// The homogeneous wall sampled on `mesh` (`c_cp` is taken from `mp`).
    pub fn homogeneous(mesh: Vec<f64>, mp: MaterialParams, wf: WaveFrame, regime: RegimeKind) -> Self {
        let states = mesh.iter().map(|&x| homogeneous_profile(x, mp.mu, Sign::Plus)).collect();
        Self { mesh, states, mp, wf, regime }
    }

    /// Piecewise cubic Hermite interpolant built from the vector field;
    /// values outside the mesh are held constant.
    pub fn eval(&self, x: f64) -> ChartState {
        let n = self.mesh.len();
        if n == 1 || x <= self.mesh[0] {
            return self.states[0];
        }
        if x >= self.mesh[n - 1] {
            return self.states[n - 1];
        }
        let k = self.mesh.partition_point(|&m| m <= x).clamp(1, n - 1) - 1;
        let (x0, x1) = (self.mesh[k], self.mesh[k + 1]);
        let y0 = self.states[k].to_array();
        let y1 = self.states[k + 1].to_array();
        let f0 = rhs_array(&y0, &self.mp, &self.wf);
        let f1 = rhs_array(&y1, &self.mp, &self.wf);
        ChartState::from_array(hermite(x0, x1, &y0, &y1, &f0, &f1, x))
    }

    /// Resampled onto another mesh.
    pub fn resample(&self, mesh: Vec<f64>) -> Self {
        let states = mesh.iter().map(|&x| self.eval(x)).collect();
        Self { mesh, states, mp: self.mp, wf: self.wf, regime: self.regime }
    }

    pub fn half_length(&self) -> f64 {
        0.5 * (self.mesh[self.mesh.len() - 1] - self.mesh[0])
    }
}

fn hermite(x0: f64, x1: f64, y0: &Vec3, y1: &Vec3, f0: &Vec3, f1: &Vec3, x: f64) -> Vec3 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
    let h10 = t * (1.0 - t) * (1.0 - t);
    let h01 = t * t * (3.0 - 2.0 * t);
    let h11 = t * t * (t - 1.0);
    std::array::from_fn(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i])
}

/// Stage data of a reference solution.
#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct StageRef {
    pub u: Vec<Vec3>,
    pub du: Vec<Vec3>,
}

/// Pseudo-arclength data: predictor and unit tangent.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Arc {
    pub pred_u: Vec<Vec3>,
    pub tan_u: Vec<Vec3>,
    pub pred_lam: Vec<f64>,
    pub tan_lam: Vec<f64>,
}

/// Nodal and stage values of all augmented states.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Iterate {
    pub nodes: Vec<f64>,
    pub stages: Vec<f64>,
}

impl Iterate {
    pub fn axpy(&self, t: f64, dn: &[f64], ds: &[f64]) -> Iterate {
        Iterate {
            nodes: self.nodes.iter().zip(dn).map(|(a, b)| a + t * b).collect(),
            stages: self.stages.iter().zip(ds).map(|(a, b)| a + t * b).collect(),
        }
    }
}

/// Outcome of a Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Solved {
    pub profile: Profile,
    pub iterations: usize,
    pub residual: f64,
    /// `H^π(u(L)) − H^π(Z^π_−)` in the center formulations.
    pub gap: Option<f64>,
    pub(crate) iterate: Iterate,
}

impl Solved {
    pub fn free_values(&self, system: &BvpSystem) -> Vec<(Unknown, f64)> {
        let lam = system.lam(&self.iterate.nodes[..system.d]);
        system.free.iter().copied().zip(lam.iter().copied()).collect()
    }
}

/// The discretized nonlinear system.
#[derive(Debug, Clone)]
pub struct BvpSystem {
    pub formulation: Formulation,
    pub free: Vec<Unknown>,
    pub cfg: BvpConfig,
    pub exec: Execution,
    base_mp: MaterialParams,
    base_wf: WaveFrame,
    mesh: Vec<f64>,
    tab: Tableau,
    d: usize,
    k: usize,
    left_ref: Complex64,
    right_ref: Complex64,
    pub(crate) phase: StageRef,
    pub(crate) arc: Option<Arc>,
}

struct Parts {
    stage: Vec<f64>,
    cont: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl Parts {
    fn norm(&self) -> f64 {
        [&self.stage, &self.cont, &self.left, &self.right]
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |a, v| if v.is_nan() { f64::INFINITY } else { a.max(v.abs()) })
    }
}

fn select(pair: (ChartEquilibrium, ChartEquilibrium), reference: Complex64, how: RootSelection) -> ChartEquilibrium {
    if how == RootSelection::Tracked && (pair.0.z - reference).norm() <= (pair.1.z - reference).norm() {
        pair.0
    } else {
        pair.1
    }
}

/// Builds the discretized system for the given formulation with its default
/// free scalars.
pub fn build_bvp(formulation: Formulation, mp: &MaterialParams, wf: &WaveFrame, cfg: &BvpConfig) -> Result<BvpSystem> {
    let sys = BvpSystem::new(formulation, formulation.default_free(), mp, wf, cfg)?;
    sys.check_regime()?;
    Ok(sys)
}

impl BvpSystem {
    /// System with an explicit list of free scalars. Its length must equal
    /// the formulation's count, plus one when arclength data is attached.
    pub fn new(
        formulation: Formulation,
        free: Vec<Unknown>,
        mp: &MaterialParams,
        wf: &WaveFrame,
        cfg: &BvpConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        mp.validate()?;
        mp.sqrt_neg_mu()?;
        if free.len() != formulation.default_free().len() {
            return Err(Error::Regime(format!(
                "{} formulation needs {} free scalars, got {}",
                formulation.kind().label(),
                formulation.default_free().len(),
                free.len()
            )));
        }
        if formulation.slaved_omega() && free.contains(&Unknown::Param(Param::Omega)) {
            return Err(Error::Regime("omega is slaved in the center formulation".into()));
        }
        let tab = Tableau::gauss(cfg.collocation_order)?;
        let mut wf = *wf;
        if formulation.slaved_omega() {
            wf.omega = center_frequency(ChartId::Pi, mp, wf.s)?;
        }
        let (_, zl) = chart_equilibria(ChartId::Zero, mp, &wf)?;
        let (_, zr) = chart_equilibria(ChartId::Pi, mp, &wf)?;
        let k = free.len();
        Ok(Self {
            formulation,
            free,
            cfg: *cfg,
            exec: Execution::default(),
            base_mp: *mp,
            base_wf: wf,
            mesh: cfg.mesh(),
            tab,
            d: 3 + k + 1,
            k,
            left_ref: zl.z,
            right_ref: zr.z,
            phase: StageRef::default(),
            arc: None,
        })
    }

    fn check_regime(&self) -> Result<()> {
        let (_, zr) = chart_equilibria(ChartId::Pi, &self.base_mp, &self.base_wf)?;
        let re = zr.eigenvalues[0].re;
        let ok = match self.formulation {
            Formulation::Codim2 => re > 0.0,
            Formulation::Center { .. } => re.abs() <= 1e-8,
            Formulation::Codim0 => re < 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Regime(format!(
                "{} formulation does not match the target equilibrium (Re nu = {re})",
                self.formulation.kind().label()
            )))
        }
    }

    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }

    pub fn base(&self) -> (MaterialParams, WaveFrame) {
        (self.base_mp, self.base_wf)
    }

    /// Moves the fixed parameters; free ones are overwritten by the iterate.
    pub fn set_base(&mut self, mp: MaterialParams, wf: WaveFrame) {
        self.base_mp = mp;
        self.base_wf = wf;
    }

    pub(crate) fn n_intervals(&self) -> usize {
        self.mesh.len() - 1
    }

    pub(crate) fn stages_per_interval(&self) -> usize {
        self.tab.stages()
    }

    pub(crate) fn dim(&self) -> usize {
        self.d
    }

    pub(crate) fn tableau(&self) -> &Tableau {
        &self.tab
    }

    fn w_index(&self) -> usize {
        3 + self.k
    }

    fn v_index(&self) -> usize {
        4 + self.k
    }

    /// Attaches (or removes) pseudo-arclength data and resizes the state.
    pub(crate) fn set_arc(&mut self, arc: Option<Arc>) {
        self.d = 3 + self.k + 1 + usize::from(arc.is_some());
        self.arc = arc;
    }

    /// Frees one more scalar (used for the continuation parameter).
    pub(crate) fn push_free(&mut self, u: Unknown) {
        self.free.push(u);
        self.k += 1;
        self.d = 3 + self.k + 1 + usize::from(self.arc.is_some());
    }

    pub(crate) fn lam<'a>(&self, y: &'a [f64]) -> &'a [f64] {
        &y[3..3 + self.k]
    }

    /// Parameters for the free values `lam`.
    pub fn resolve(&self, lam: &[f64]) -> Result<(MaterialParams, WaveFrame)> {
        let mut mp = self.base_mp;
        let mut wf = self.base_wf;
        for (u, &v) in self.free.iter().zip(lam) {
            if let Unknown::Param(p) = u {
                p.set(&mut mp, &mut wf, v);
            }
        }
        mp.validate()?;
        if !wf.s.is_finite() || !wf.omega.is_finite() {
            return Err(Error::Domain("non-finite frame".into()));
        }
        if self.formulation.slaved_omega() {
            wf.omega = center_frequency(ChartId::Pi, &mp, wf.s)?;
        }
        Ok((mp, wf))
    }

    fn gap_value(&self, lam: &[f64]) -> f64 {
        self.free.iter().zip(lam).find(|(u, _)| **u == Unknown::Gap).map(|(_, v)| *v).unwrap_or(0.0)
    }

    fn initial_lam(&self, mp: &MaterialParams, wf: &WaveFrame, gap: f64) -> Vec<f64> {
        self.free
            .iter()
            .map(|u| match u {
                Unknown::Param(p) => p.get(mp, wf),
                Unknown::Gap => gap,
            })
            .collect()
    }

    /// Augmented vector field at global stage `g`.
    fn aug(&self, g: usize, y: &[f64], jac: Option<&mut DMatrix<f64>>) -> Result<DVector<f64>> {
        let d = self.d;
        let (mp, wf) = self.resolve(self.lam(y))?;
        let u = [y[0], y[1], y[2]];
        let f = rhs_array(&u, &mp, &wf);
        let mut out = DVector::zeros(d);
        out[0] = f[0];
        out[1] = f[1];
        out[2] = f[2];
        let (uh, duh) = (self.phase.u[g], self.phase.du[g]);
        out[self.w_index()] = (0..3).map(|i| (u[i] - uh[i]) * duh[i]).sum();
        let scale = 1.0 / (2.0 * self.cfg.l);
        if let Some(arc) = &self.arc {
            let (pu, tu) = (arc.pred_u[g], arc.tan_u[g]);
            out[self.v_index()] = scale * (0..3).map(|i| (u[i] - pu[i]) * tu[i]).sum::<f64>();
        }
        if let Some(jm) = jac {
            jm.fill(0.0);
            let j = desingularized_jacobian(&u, &mp, &wf);
            let pp = desingularized_param_partials(&u, &mp, &wf);
            for r in 0..3 {
                for c in 0..3 {
                    jm[(r, c)] = j[r][c];
                }
            }
            let slaved = self.formulation.slaved_omega();
            for (l, unk) in self.free.iter().enumerate() {
                if let Unknown::Param(p) = unk {
                    for r in 0..3 {
                        let mut v = pp[r][p.index()];
                        if slaved {
                            let dom = match p {
                                Param::S => wf.s,
                                Param::CCp => mp.beta / (mp.alpha * (1.0 - mp.c_cp).powi(2)),
                                _ => 0.0,
                            };
                            v += pp[r][Param::Omega.index()] * dom;
                        }
                        jm[(r, 3 + l)] = v;
                    }
                }
            }
            for i in 0..3 {
                jm[(self.w_index(), i)] = duh[i];
            }
            if let Some(arc) = &self.arc {
                for i in 0..3 {
                    jm[(self.v_index(), i)] = scale * arc.tan_u[g][i];
                }
            }
        }
        Ok(out)
    }

    fn n_left(&self) -> usize {
        3 + usize::from(self.arc.is_some())
    }

    fn bc_left(&self, y: &[f64]) -> Result<Vec<f64>> {
        let (mp, wf) = self.resolve(self.lam(y))?;
        let zl = select(chart_equilibria(ChartId::Zero, &mp, &wf)?, self.left_ref, self.cfg.root_selection).z;
        let mut r = vec![y[1] - zl.re, y[2] - zl.im, y[self.w_index()]];
        if self.arc.is_some() {
            r.push(y[self.v_index()]);
        }
        Ok(r)
    }

    fn bc_right(&self, y: &[f64]) -> Result<Vec<f64>> {
        let (mp, wf) = self.resolve(self.lam(y))?;
        let zr = select(chart_equilibria(ChartId::Pi, &mp, &wf)?, self.right_ref, self.cfg.root_selection).z;
        let mut r = Vec::with_capacity(4);
        match self.formulation {
            Formulation::Codim2 => {
                r.push(y[1] - zr.re);
                r.push(y[2] - zr.im);
            }
            Formulation::Center { flat_constrained } => {
                let gap = hamiltonian(ChartId::Pi, y[1], y[2], &mp, &wf)?
                    - hamiltonian(ChartId::Pi, zr.re, zr.im, &mp, &wf)?;
                if flat_constrained {
                    r.push(gap);
                } else {
                    r.push(self.gap_value(self.lam(y)) - gap);
                }
            }
            Formulation::Codim0 => {}
        }
        r.push(y[self.w_index()]);
        if let Some(arc) = &self.arc {
            let lam = self.lam(y);
            let dot: f64 = lam.iter().zip(&arc.pred_lam).zip(&arc.tan_lam).map(|((l, p), t)| (l - p) * t).sum();
            r.push(y[self.v_index()] + dot);
        }
        Ok(r)
    }

    fn bc_jacobian(&self, y: &[f64], f: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<DMatrix<f64>> {
        let base = f(y)?;
        let mut jac = DMatrix::zeros(base.len(), self.d);
        let mut yp = y.to_vec();
        for c in 0..self.d {
            let h = 1e-7 * y[c].abs().max(1.0);
            yp[c] = y[c] + h;
            let fp = f(&yp)?;
            yp[c] = y[c] - h;
            let fm = f(&yp)?;
            yp[c] = y[c];
            for r in 0..base.len() {
                jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        Ok(jac)
    }

    fn parts(&self, it: &Iterate) -> Result<Parts> {
        let (d, m, n) = (self.d, self.stages_per_interval(), self.n_intervals());
        let per: Vec<(Vec<f64>, Vec<f64>)> = par::try_map(self.exec, &(0..n).collect::<Vec<_>>(), |&i| {
            let h = self.mesh[i + 1] - self.mesh[i];
            let yi = &it.nodes[i * d..(i + 1) * d];
            let yn = &it.nodes[(i + 1) * d..(i + 2) * d];
            let fs: Vec<DVector<f64>> = (0..m)
                .map(|j| self.aug(i * m + j, &it.stages[(i * m + j) * d..(i * m + j + 1) * d], None))
                .collect::<Result<_>>()?;
            let mut s = vec![0.0; m * d];
            for j in 0..m {
                let yj = &it.stages[(i * m + j) * d..(i * m + j + 1) * d];
                for c in 0..d {
                    let acc: f64 = (0..m).map(|q| self.tab.a[j][q] * fs[q][c]).sum();
                    s[j * d + c] = yj[c] - yi[c] - h * acc;
                }
            }
            let cont = (0..d)
                .map(|c| yn[c] - yi[c] - h * (0..m).map(|q| self.tab.b[q] * fs[q][c]).sum::<f64>())
                .collect();
            Ok((s, cont))
        })?;
        let mut stage = Vec::with_capacity(n * m * d);
        let mut cont = Vec::with_capacity(n * d);
        for (s, c) in per {
            stage.extend(s);
            cont.extend(c);
        }
        Ok(Parts {
            stage,
            cont,
            left: self.bc_left(&it.nodes[..d])?,
            right: self.bc_right(&it.nodes[n * d..])?,
        })
    }

    /// Residual ∞-norm of an iterate.
    pub(crate) fn residual_norm(&self, it: &Iterate) -> Result<f64> {
        Ok(self.parts(it)?.norm())
    }

    /// Newton direction and the residual norm at `it`.
    fn direction(&self, it: &Iterate) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let (d, m, n) = (self.d, self.stages_per_interval(), self.n_intervals());
        let md = m * d;
        struct Local {
            a: DMatrix<f64>,
            r: DVector<f64>,
            x: DMatrix<f64>,
            z: DVector<f64>,
            s_norm: f64,
            c_norm: f64,
        }
        let locals: Vec<Local> = par::try_map(self.exec, &(0..n).collect::<Vec<_>>(), |&i| {
            let h = self.mesh[i + 1] - self.mesh[i];
            let yi = &it.nodes[i * d..(i + 1) * d];
            let yn = &it.nodes[(i + 1) * d..(i + 2) * d];
            let mut js = Vec::with_capacity(m);
            let mut fs = Vec::with_capacity(m);
            for j in 0..m {
                let mut jm = DMatrix::zeros(d, d);
                let y = &it.stages[(i * m + j) * d..(i * m + j + 1) * d];
                fs.push(self.aug(i * m + j, y, Some(&mut jm))?);
                js.push(jm);
            }
            let mut kmat = DMatrix::<f64>::identity(md, md);
            let mut s = DVector::zeros(md);
            for j in 0..m {
                let yj = &it.stages[(i * m + j) * d..(i * m + j + 1) * d];
                for c in 0..d {
                    let acc: f64 = (0..m).map(|q| self.tab.a[j][q] * fs[q][c]).sum();
                    s[j * d + c] = yj[c] - yi[c] - h * acc;
                }
                for q in 0..m {
                    let coef = h * self.tab.a[j][q];
                    for r in 0..d {
                        for c in 0..d {
                            kmat[(j * d + r, q * d + c)] -= coef * js[q][(r, c)];
                        }
                    }
                }
            }
            let cont = DVector::from_fn(d, |c, _| {
                yn[c] - yi[c] - h * (0..m).map(|q| self.tab.b[q] * fs[q][c]).sum::<f64>()
            });
            let lu = kmat.lu();
            let e = DMatrix::from_fn(md, d, |r, c| if r % d == c { 1.0 } else { 0.0 });
            let x = lu.solve(&e).ok_or(Error::SingularJacobian)?;
            let z = lu.solve(&s).ok_or(Error::SingularJacobian)?;
            let mut a = -DMatrix::<f64>::identity(d, d);
            let mut r = -cont.clone();
            for q in 0..m {
                let bj = h * self.tab.b[q] * &js[q];
                a -= &bj * x.rows(q * d, d);
                r -= &bj * z.rows(q * d, d);
            }
            Ok(Local {
                a,
                r,
                x,
                z,
                s_norm: s.amax(),
                c_norm: cont.amax(),
            })
        })?;

        let y0 = &it.nodes[..d];
        let yn = &it.nodes[n * d..];
        let left = self.bc_left(y0)?;
        let right = self.bc_right(yn)?;
        let jl = self.bc_jacobian(y0, |y| self.bc_left(y))?;
        let jr = self.bc_jacobian(yn, |y| self.bc_right(y))?;
        let nl = self.n_left();
        let nr = d - nl;
        debug_assert_eq!(left.len(), nl);
        debug_assert_eq!(right.len(), nr);

        let size = (n + 1) * d;
        let kl = nl + d - 1;
        let ku = (2 * d - 1).saturating_sub(nl).max(d - 1);
        let mut band = BandMatrix::zeros(size, kl, ku);
        let mut rhs = vec![0.0; size];
        for r in 0..nl {
            for c in 0..d {
                band.set(r, c, jl[(r, c)]);
            }
            rhs[r] = -left[r];
        }
        for (i, loc) in locals.iter().enumerate() {
            let row0 = nl + i * d;
            for r in 0..d {
                for c in 0..d {
                    band.set(row0 + r, i * d + c, loc.a[(r, c)]);
                }
                band.set(row0 + r, (i + 1) * d + r, 1.0);
                rhs[row0 + r] = loc.r[r];
            }
        }
        let row0 = nl + n * d;
        for r in 0..nr {
            for c in 0..d {
                band.set(row0 + r, n * d + c, jr[(r, c)]);
            }
            rhs[row0 + r] = -right[r];
        }
        let lu = band.factor()?;
        lu.solve_in_place(&mut rhs);
        let dn = rhs;
        let mut ds = vec![0.0; n * md];
        for (i, loc) in locals.iter().enumerate() {
            let dyi = DVector::from_column_slice(&dn[i * d..(i + 1) * d]);
            let dy = &loc.x * dyi - &loc.z;
            ds[i * md..(i + 1) * md].copy_from_slice(dy.as_slice());
        }
        let norm = locals
            .iter()
            .fold(0.0f64, |a, l| a.max(l.s_norm).max(l.c_norm))
            .max(left.iter().chain(&right).fold(0.0f64, |a, v| a.max(v.abs())));
        if dn.iter().chain(&ds).any(|v| !v.is_finite()) {
            return Err(Error::SingularJacobian);
        }
        Ok((dn, ds, norm))
    }

    /// Damped Newton iteration from `it`.
    pub(crate) fn newton(&self, mut it: Iterate) -> Result<(Iterate, usize, f64)> {
        let mut iterations = 0;
        loop {
            let (dn, ds, norm) = self.direction(&it)?;
            if norm < self.cfg.newton_tol {
                return Ok((it, iterations, norm));
            }
            if iterations >= self.cfg.max_newton {
                return Err(Error::NoConvergence(norm));
            }
            let mut t = 1.0;
            loop {
                let trial = it.axpy(t, &dn, &ds);
                let ok = matches!(self.residual_norm(&trial), Ok(r) if r < norm);
                if ok {
                    it = trial;
                    break;
                }
                t *= 0.5;
                if t < 1.0 / 128.0 {
                    return Err(Error::NoConvergence(norm));
                }
            }
            iterations += 1;
        }
    }

    /// Stage values consistent with the nodes: Hermite guess refined by a
    /// few local Newton sweeps of the stage equations.
    fn fill_stages(&self, nodes: &[f64]) -> Result<Vec<f64>> {
        let (d, m, n) = (self.d, self.stages_per_interval(), self.n_intervals());
        let md = m * d;
        let blocks: Vec<Vec<f64>> = par::try_map(self.exec, &(0..n).collect::<Vec<_>>(), |&i| {
            let h = self.mesh[i + 1] - self.mesh[i];
            let yi = &nodes[i * d..(i + 1) * d];
            let yn = &nodes[(i + 1) * d..(i + 2) * d];
            let (mp, wf) = self.resolve(self.lam(yi))?;
            let ui = [yi[0], yi[1], yi[2]];
            let un = [yn[0], yn[1], yn[2]];
            let fi = rhs_array(&ui, &mp, &wf);
            let fnn = rhs_array(&un, &mp, &wf);
            let mut y = vec![0.0; md];
            for j in 0..m {
                let x = self.mesh[i] + self.tab.c[j] * h;
                let u = hermite(self.mesh[i], self.mesh[i + 1], &ui, &un, &fi, &fnn, x);
                for c in 0..d {
                    y[j * d + c] = if c < 3 { u[c] } else { yi[c] + self.tab.c[j] * (yn[c] - yi[c]) };
                }
            }
            for _ in 0..4 {
                let mut js = Vec::with_capacity(m);
                let mut fs = Vec::with_capacity(m);
                for j in 0..m {
                    let mut jm = DMatrix::zeros(d, d);
                    fs.push(self.aug(i * m + j, &y[j * d..(j + 1) * d], Some(&mut jm))?);
                    js.push(jm);
                }
                let mut kmat = DMatrix::<f64>::identity(md, md);
                let mut s = DVector::zeros(md);
                for j in 0..m {
                    for c in 0..d {
                        let acc: f64 = (0..m).map(|q| self.tab.a[j][q] * fs[q][c]).sum();
                        s[j * d + c] = y[j * d + c] - yi[c] - h * acc;
                    }
                    for q in 0..m {
                        let coef = h * self.tab.a[j][q];
                        for r in 0..d {
                            for c in 0..d {
                                kmat[(j * d + r, q * d + c)] -= coef * js[q][(r, c)];
                            }
                        }
                    }
                }
                if s.amax() < 1e-14 {
                    break;
                }
                let Some(dy) = kmat.lu().solve(&s) else { break };
                if dy.iter().any(|v| !v.is_finite()) {
                    break;
                }
                for (a, b) in y.iter_mut().zip(dy.iter()) {
                    *a -= b;
                }
            }
            Ok(y)
        })?;
        Ok(blocks.concat())
    }

    /// Uses the stage values of `it` as the phase reference.
    pub(crate) fn set_phase_from(&mut self, it: &Iterate) -> Result<()> {
        let (d, m, n) = (self.d, self.stages_per_interval(), self.n_intervals());
        let mut u = Vec::with_capacity(n * m);
        let mut du = Vec::with_capacity(n * m);
        for g in 0..n * m {
            let y = &it.stages[g * d..(g + 1) * d];
            let (mp, wf) = self.resolve(self.lam(y))?;
            let v = [y[0], y[1], y[2]];
            u.push(v);
            du.push(rhs_array(&v, &mp, &wf));
        }
        self.phase = StageRef { u, du };
        Ok(())
    }

    /// Iterate built from a profile, with its own stages as phase reference.
    pub(crate) fn iterate_from(&mut self, guess: &Profile) -> Result<Iterate> {
        let profile = if guess.mesh.len() == self.mesh.len()
            && guess.mesh.iter().zip(&self.mesh).all(|(a, b)| (a - b).abs() < 1e-12)
        {
            guess.clone()
        } else {
            guess.resample(self.mesh.clone())
        };
        let d = self.d;
        let gap = match self.formulation {
            Formulation::Center { .. } => {
                let end = profile.states.last().unwrap();
                let (_, zr) = chart_equilibria(ChartId::Pi, &profile.mp, &profile.wf)?;
                let h = |p, q| hamiltonian(ChartId::Pi, p, q, &profile.mp, &profile.wf);
                match (h(end.p, end.q), h(zr.z.re, zr.z.im)) {
                    (Ok(a), Ok(b)) => a - b,
                    _ => 0.0,
                }
            }
            _ => 0.0,
        };
        let lam = self.initial_lam(&profile.mp, &profile.wf, gap);
        let mut nodes = vec![0.0; self.mesh.len() * d];
        for (i, st) in profile.states.iter().enumerate() {
            let y = &mut nodes[i * d..(i + 1) * d];
            y[0] = st.theta;
            y[1] = st.p;
            y[2] = st.q;
            y[3..3 + self.k].copy_from_slice(&lam);
        }
        // Provisional phase reference so that the stage fill can evaluate w'.
        let n = self.n_intervals();
        let m = self.stages_per_interval();
        let mut u = Vec::with_capacity(n * m);
        for i in 0..n {
            let h = self.mesh[i + 1] - self.mesh[i];
            for j in 0..m {
                u.push(profile.eval(self.mesh[i] + self.tab.c[j] * h).to_array());
            }
        }
        let du = u.iter().map(|v| rhs_array(v, &profile.mp, &profile.wf)).collect();
        self.phase = StageRef { u, du };
        let stages = self.fill_stages(&nodes)?;
        let it = Iterate { nodes, stages };
        self.set_phase_from(&it)?;
        let w = self.w_index();
        let mut it = it;
        for g in 0..n * m {
            it.stages[g * d + w] = 0.0;
        }
        Ok(it)
    }

    /// Converts a converged iterate to a profile and updates the equilibrium
    /// references used for root selection.
    pub(crate) fn finish(&mut self, it: Iterate, iterations: usize, residual: f64) -> Result<Solved> {
        let d = self.d;
        let n = self.n_intervals();
        let (mp, wf) = self.resolve(self.lam(&it.nodes[..d]))?;
        self.left_ref = select(chart_equilibria(ChartId::Zero, &mp, &wf)?, self.left_ref, self.cfg.root_selection).z;
        self.right_ref = select(chart_equilibria(ChartId::Pi, &mp, &wf)?, self.right_ref, self.cfg.root_selection).z;
        let states: Vec<ChartState> = (0..=n)
            .map(|i| ChartState::new(it.nodes[i * d], it.nodes[i * d + 1], it.nodes[i * d + 2]))
            .collect();
        let gap = match self.formulation {
            Formulation::Center { .. } => {
                let end = states[n];
                let h = hamiltonian(ChartId::Pi, end.p, end.q, &mp, &wf)?
                    - hamiltonian(ChartId::Pi, self.right_ref.re, self.right_ref.im, &mp, &wf)?;
                Some(h)
            }
            _ => None,
        };
        let profile = Profile { mesh: self.mesh.clone(), states, mp, wf, regime: self.formulation.kind() };
        Ok(Solved { profile, iterations, residual, gap, iterate: it })
    }

    /// Boundary residuals of the active conditions (phase rows excluded).
    pub fn boundary_residual(&self, solved: &Solved) -> Result<f64> {
        let d = self.d;
        let n = self.n_intervals();
        let l = self.bc_left(&solved.iterate.nodes[..d])?;
        let r = self.bc_right(&solved.iterate.nodes[n * d..])?;
        Ok(l.iter().chain(&r).fold(0.0f64, |a, v| a.max(v.abs())))
    }

    /// `∫⟨u − û, û'⟩` against the current reference.
    pub fn phase_residual(&self, solved: &Solved) -> f64 {
        let d = self.d;
        let n = self.n_intervals();
        (solved.iterate.nodes[n * d + self.w_index()] - solved.iterate.nodes[self.w_index()]).abs()
    }
}

/// Solves `system` from `guess`, using the guess as phase reference.
pub fn newton_solve(system: &mut BvpSystem, guess: &Profile) -> Result<Solved> {
    let it = system.iterate_from(guess)?;
    let d = system.dim();
    let n = system.n_intervals();
    let bc = system
        .bc_left(&it.nodes[..d])?
        .into_iter()
        .chain(system.bc_right(&it.nodes[n * d..])?)
        .fold(0.0f64, |a, v| a.max(v.abs()));
    if !(bc < 1.0) {
        return Err(Error::NoConvergence(bc));
    }
    let (it, iterations, residual) = system.newton(it)?;
    system.finish(it, iterations, residual)
}
