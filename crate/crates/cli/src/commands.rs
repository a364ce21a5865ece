use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;

use llgs_core::analytic::homogeneous_speed_frequency;
use llgs_core::bvp::{Formulation, Profile};
use llgs_core::classification::{classify_any, classify_regime, eigenvalues_homogeneous, stability_map, stability_verdict};
use llgs_core::continuation::{continue_branch, htilde_sweep, Branch, BranchSpec};
use llgs_core::freezing::run_selection;
use llgs_core::hamiltonian::{center_point, htilde_quadratic};
use llgs_core::io::{chart_rows, csv_string, fmt_f64, profile_rows, ResultBundle, PROFILE_COLUMNS};
use llgs_core::melnikov::{melnikov_integrals_closed, splitting_matrix, splitting_matrix_at, splitting_value};
use llgs_core::par::Execution;
use llgs_core::shooting::{center_crossing, shoot_to_pi_chart, ShootOptions};
use llgs_core::{Error, MaterialParams, Param};

use crate::config::*;
use crate::Failure;

pub struct Ctx {
    pub exec: Execution,
    pub seed: Option<Profile>,
}

pub fn classify(cfg: &ClassifyConfig, out: &mut ResultBundle, ctx: &Ctx) -> Result<(), Failure> {
    let mp = cfg.params;
    mp.validate()?;
    let (regime, refl) = classify_any(&mp)?;
    let spectrum = eigenvalues_homogeneous(mp.alpha, mp.beta, mp.mu, mp.h).ok().map(|sp| {
        json!({
            "zero": sp.zero.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
            "pi": sp.pi.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        })
    });
    let doc = json!({
        "params": mp,
        "regime": regime.kind,
        "reflected": refl.reflected,
        "s0": regime.s0,
        "omega0": regime.omega0,
        "h_star_low": regime.h_star_low,
        "h_star_high": regime.h_star_high,
        "stability": stability_verdict(&mp).ok(),
        "eigenvalues": spectrum,
    });
    out.add_json("classify.json", &doc)?;
    if let Some(grid) = cfg.stability_map {
        let map = StabilityMapConfig { alpha: mp.alpha, beta: mp.beta, mu: mp.mu, h: grid.h, c_cp: grid.c_cp };
        write_stability_map(&map, out, ctx)?;
    }
    Ok(())
}

pub fn stability(cfg: &StabilityMapConfig, out: &mut ResultBundle, ctx: &Ctx) -> Result<(), Failure> {
    write_stability_map(cfg, out, ctx)
}

fn write_stability_map(cfg: &StabilityMapConfig, out: &mut ResultBundle, ctx: &Ctx) -> Result<(), Failure> {
    let hs = cfg.h.points().map_err(Failure::Config)?;
    let cs = cfg.c_cp.points().map_err(Failure::Config)?;
    let cells = stability_map(cfg.alpha, cfg.beta, cfg.mu, &hs, &cs, ctx.exec)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            let label = c.verdict.map_or("pole", |v| v.region.label());
            *counts.entry(label).or_default() += 1;
            vec![fmt_f64(c.h), fmt_f64(c.c_cp), label.to_string()]
        })
        .collect();
    out.add("stability_map.csv", csv_string(&["h", "c_cp", "region"], rows)?.as_bytes())?;
    out.add_json("stability_map.json", &json!({ "alpha": cfg.alpha, "beta": cfg.beta, "mu": cfg.mu, "counts": counts }))?;
    Ok(())
}

pub fn melnikov(cfg: &MelnikovConfig, out: &mut ResultBundle, _ctx: &Ctx) -> Result<(), Failure> {
    let mp = cfg.params;
    mp.validate()?;
    let (sm, s0) = match cfg.s0 {
        Some(s0) => (splitting_matrix_at(mp.alpha, mp.beta, mp.mu, s0)?, s0),
        None => (splitting_matrix(&mp)?, homogeneous_speed_frequency(&mp)?.s.max(0.0)),
    };
    let ints = melnikov_integrals_closed(mp.alpha, mp.mu, s0)?;
    let m = sm.m;
    let evaluations: Vec<Value> =
        cfg.deviations.iter().map(|d| json!({ "deviation": d, "value": splitting_value(&sm, *d) })).collect();
    let doc = json!({
        "params": mp,
        "s0": s0,
        "integrals": ints,
        "matrix": [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]]],
        "kernel": [sm.kernel[0], sm.kernel[1], sm.kernel[2]],
        "kernel_slope": sm.kernel_slope(),
        "minor_det": sm.minor_det(),
        "rank": sm.rank(),
        "evaluations": evaluations,
    });
    out.add_json("melnikov.json", &doc)?;
    Ok(())
}

pub fn center(cfg: &CenterConfig, out: &mut ResultBundle, ctx: &Ctx) -> Result<(), Failure> {
    cfg.bvp.validate()?;
    cfg.policy.validate()?;
    let (s0, h0) = center_point(cfg.alpha, cfg.beta, cfg.mu)?;
    let quad = htilde_quadratic(cfg.alpha, cfg.mu)?;
    let start = match &ctx.seed {
        Some(p) => p.clone(),
        None => {
            let mp = MaterialParams::new(cfg.alpha, cfg.beta, cfg.mu, h0, 0.0)?;
            let wf = homogeneous_speed_frequency(&mp)?;
            Profile::homogeneous(cfg.bvp.mesh(), mp, wf, llgs_core::classification::RegimeKind::Center)
        }
    };
    let mut sweeps = Vec::new();
    for (k, sw) in cfg.sweeps.iter().enumerate() {
        let points = htilde_sweep(&start, sw.parameter, sw.target, &cfg.bvp, &cfg.policy)?;
        let rows: Vec<Vec<f64>> = points
            .iter()
            .map(|&(v, g)| {
                let pred = match sw.parameter {
                    Param::S => quad.eval(v - s0, 0.0),
                    Param::H => quad.eval(0.0, v - h0),
                    _ => 0.0,
                };
                vec![v, g, pred]
            })
            .collect();
        let name = format!("htilde_{k}_{}.csv", sw.parameter.name());
        out.add_numeric_csv(&name, &[sw.parameter.name(), "measured", "quadratic"], &rows)?;
        sweeps.push(json!({ "parameter": sw.parameter, "target": sw.target, "file": name, "points": points.len() }));
    }
    let doc = json!({
        "center_point": { "s": s0, "h": h0 },
        "quadratic": quad,
        "expanded": quad.expand_about(s0, h0),
        "negative_definite": quad.is_negative_definite(),
        "sweeps": sweeps,
    });
    out.add_json("center.json", &doc)?;
    Ok(())
}

pub fn shoot(cfg: &ShootConfig, out: &mut ResultBundle, _ctx: &Ctx) -> Result<(), Failure> {
    let mp = cfg.params;
    mp.validate()?;
    let wf = match cfg.wave {
        Some(w) => w,
        None => homogeneous_speed_frequency(&mp)?,
    };
    let opts = ShootOptions { epsilon: cfg.epsilon, tol: cfg.tol, budget: cfg.budget, tail: cfg.tail };
    let (traj, verdict) = shoot_to_pi_chart(&mp, &wf, &opts)?;
    out.add_numeric_csv("trajectory.csv", &PROFILE_COLUMNS, &chart_rows(&traj.xs, &traj.states))?;
    let doc = json!({
        "params": mp,
        "wave": wf,
        "verdict": verdict,
        "center_crossing": center_crossing(&traj),
        "end": traj.states.last(),
        "points": traj.xs.len(),
    });
    out.add_json("shoot.json", &doc)?;
    Ok(())
}

#[derive(Serialize)]
struct BranchSummary<'a> {
    parameter: Param,
    target: f64,
    formulation: Formulation,
    terminated: &'a str,
    points: usize,
    endpoint: BTreeMap<&'static str, f64>,
}

pub fn continue_cmd(cfg: &ContinueConfig, out: &mut ResultBundle, ctx: &Ctx) -> Result<(), Failure> {
    cfg.bvp.validate()?;
    cfg.policy.validate()?;
    let start = match (&ctx.seed, cfg.params) {
        (Some(_), Some(_)) => return Err(Failure::Config("params and a seed profile are mutually exclusive".into())),
        (None, None) => return Err(Failure::Config("params are required without a seed profile".into())),
        (Some(p), None) => p.clone(),
        (None, Some(mp)) => {
            mp.validate()?;
            if mp.c_cp != 0.0 {
                return Err(Failure::Config("the analytic seed needs c_cp = 0; pass a seed profile otherwise".into()));
            }
            let regime = classify_regime(&mp)?;
            let wf = homogeneous_speed_frequency(&mp)?;
            Profile::homogeneous(cfg.bvp.mesh(), mp, wf, regime.kind)
        }
    };
    let formulation = cfg.formulation.unwrap_or_else(|| Formulation::for_regime(start.regime));
    let spec = BranchSpec {
        formulation,
        free: cfg.free.clone(),
        parameter: cfg.parameter,
        target: cfg.target,
        cfg: cfg.bvp,
        policy: cfg.policy,
    };
    let branch = continue_branch(&start, &spec)?;
    write_branch(&branch, cfg, out)
}

fn write_branch(branch: &Branch, cfg: &ContinueConfig, out: &mut ResultBundle) -> Result<(), Failure> {
    let free: Vec<_> = branch.last().free.iter().map(|(u, _)| *u).collect();
    let mut header: Vec<&str> = vec![branch.parameter.name()];
    header.extend(free.iter().map(|u| u.name()));
    header.extend(["htilde", "tail_amplitude", "newton_iterations", "step", "residual"]);
    let rows: Vec<Vec<f64>> = branch
        .points
        .iter()
        .map(|p| {
            let mut r = vec![p.value];
            r.extend(free.iter().map(|u| p.free_value(*u).unwrap_or(f64::NAN)));
            r.extend([
                p.digest.htilde.unwrap_or(f64::NAN),
                p.digest.tail_amplitude,
                p.diagnostics.newton_iterations as f64,
                p.diagnostics.step,
                p.diagnostics.residual,
            ]);
            r
        })
        .collect();
    out.add_numeric_csv("branch.csv", &header, &rows)?;
    out.add_json("branch.json", branch)?;
    out.add_json("profile.json", &branch.final_profile)?;
    out.add_numeric_csv("profile.csv", &PROFILE_COLUMNS, &profile_rows(&branch.final_profile))?;
    let last = branch.last();
    let mut endpoint = BTreeMap::new();
    endpoint.insert(branch.parameter.name(), last.value);
    for (u, v) in &last.free {
        endpoint.insert(u.name(), *v);
    }
    let summary = BranchSummary {
        parameter: branch.parameter,
        target: cfg.target,
        formulation: branch.formulation,
        terminated: branch.terminated.label(),
        points: branch.points.len(),
        endpoint,
    };
    out.add_json("continue.json", &summary)?;
    Ok(())
}

pub fn freeze(cfg: &FreezeCmdConfig, out: &mut ResultBundle, ctx: &Ctx) -> Result<(), Failure> {
    let mp = cfg.params;
    mp.validate()?;
    cfg.freeze.validate(&mp)?;
    let series = run_selection(&mp, &cfg.freeze, ctx.exec)?;
    let rows: Vec<Vec<f64>> = (0..series.times.len()).map(|i| vec![series.times[i], series.s[i], series.omega[i]]).collect();
    out.add_numeric_csv("series.csv", &["t", "s", "omega"], &rows)?;
    let term = &series.terminal;
    let state = series.final_state.as_ref().ok_or_else(|| Failure::Solver(Error::Domain("no final state".into())))?;
    let rows: Vec<Vec<f64>> = (0..term.grid.len())
        .map(|i| {
            let m = state.m[i];
            vec![term.grid[i], m[0], m[1], m[2], term.theta[i], term.q[i].unwrap_or(f64::NAN)]
        })
        .collect();
    out.add_numeric_csv("terminal.csv", &["x", "m1", "m2", "m3", "theta", "q"], &rows)?;
    out.add_json("terminal.json", state)?;
    let (s, omega) = series.selected(cfg.freeze.window);
    let doc = json!({
        "params": mp,
        "selected": { "s": s, "omega": omega },
        "max_norm_defect": series.max_norm_defect,
        "center": term.center,
        "tail_q_extrema": term.tail_q_extrema,
        "tail_q_amplitude": term.tail_q_amplitude,
    });
    out.add_json("freeze.json", &doc)?;
    Ok(())
}
