use llgs_core::analytic::homogeneous_speed_frequency;
use llgs_core::freezing::{run_from, FrameMode, FreezeConfig, LineState, Perturbation};
use llgs_core::par::Execution;
use llgs_core::MaterialParams;

fn codim2() -> MaterialParams {
    MaterialParams::new(0.5, 0.1, -1.0, 0.5, 0.0).unwrap()
}

fn cfg(t_end: f64, dt: f64, frame: FrameMode) -> FreezeConfig {
    FreezeConfig {
        lx: 20.0,
        n: 801,
        dt,
        t_end,
        record_every: (1.0 / dt).round() as usize,
        window: 0.1,
        perturbation: Perturbation::None,
        frame,
    }
}

fn sup_dist(a: &LineState, b: &LineState) -> f64 {
    a.m.iter()
        .zip(&b.m)
        .flat_map(|(x, y)| (0..3).map(move |c| (x[c] - y[c]).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn homogeneous_wall_is_a_relative_equilibrium() {
    let mp = codim2();
    let wf = homogeneous_speed_frequency(&mp).unwrap();
    let init = LineState::homogeneous_wall(&mp, 20.0, 801).unwrap();
    let run = run_from(init, &mp, &cfg(15.0, 1e-3, FrameMode::Free), Execution::Sequential).unwrap();
    assert!(run.max_norm_defect < 1e-6, "{:e}", run.max_norm_defect);
    let last = run.s.len() - 1;
    assert!((run.s[last] - wf.s).abs() < 1e-3, "{} vs {}", run.s[last], wf.s);
    assert!((run.omega[last] - wf.omega).abs() < 1e-3, "{} vs {}", run.omega[last], wf.omega);

    // Once the discretization transient has relaxed the frame stops moving.
    let st = run.final_state.unwrap();
    let next = run_from(st.clone(), &mp, &cfg(1.0, 1e-3, FrameMode::Free), Execution::Sequential).unwrap();
    let drift = sup_dist(&st, next.final_state.as_ref().unwrap());
    assert!(drift < 1e-6, "{drift:e}");
}

#[test]
fn frozen_frame_keeps_the_selected_profile_stationary() {
    let mp = codim2();
    let init = LineState::homogeneous_wall(&mp, 20.0, 801).unwrap();
    let run = run_from(init, &mp, &cfg(10.0, 1e-3, FrameMode::Free), Execution::Sequential).unwrap();
    let (s, omega) = run.selected(0.1);
    let st = run.final_state.unwrap();
    let fixed = run_from(st.clone(), &mp, &cfg(1.0, 1e-3, FrameMode::Fixed { s, omega }), Execution::Sequential).unwrap();
    let drift = sup_dist(&st, fixed.final_state.as_ref().unwrap());
    assert!(drift < 1e-4, "{drift:e}");
}

#[test]
fn speed_estimate_is_first_order_in_dt() {
    let mp = codim2();
    let mut init = LineState::homogeneous_wall(&mp, 10.0, 201).unwrap();
    init.apply(Perturbation::TailCut { x: 3.0 });
    let s_at = |dt: f64| {
        let c = FreezeConfig { lx: 10.0, n: 201, ..cfg(0.5, dt, FrameMode::Free) };
        *run_from(init.clone(), &mp, &c, Execution::Sequential).unwrap().s.last().unwrap()
    };
    let (a, b, c) = (s_at(1e-3), s_at(5e-4), s_at(2.5e-4));
    let ratio = (a - b) / (b - c);
    assert!((ratio - 2.0).abs() < 0.1, "{a} {b} {c} ratio {ratio}");
}

#[test]
fn sequential_and_parallel_steps_agree() {
    let mp = codim2();
    let init = LineState::homogeneous_wall(&mp, 20.0, 801).unwrap();
    let c = cfg(0.2, 1e-3, FrameMode::Free);
    let a = run_from(init.clone(), &mp, &c, Execution::Sequential).unwrap();
    let b = run_from(init, &mp, &c, Execution::Parallel).unwrap();
    assert_eq!(a.s, b.s);
    assert_eq!(a.final_state, b.final_state);
}
