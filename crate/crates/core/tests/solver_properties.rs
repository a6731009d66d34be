use carnot_ma::cli::bump;
use carnot_ma::horizontal::horizontal_jet;
use carnot_ma::logdet_bellman::{bellman_value, control_grid};
use carnot_ma::solver::{clip_to_cone, residual, solve, SolverState};
use carnot_ma::spec::{load_spec, ProblemSpec};

fn spec(name: &str, nodes: usize) -> ProblemSpec {
    load_spec(&format!("builtin:{name}"), &[("resolution".into(), nodes.to_string())]).unwrap()
}

fn solved(spec: &ProblemSpec) -> SolverState {
    let s = solve(&spec.problem, &spec.solver).unwrap();
    assert!(s.converged, "{}", s.message);
    s
}

/// Lowering the boundary data near a corner lowers the solution everywhere.
fn check_boundary_monotonicity(spec: &ProblemSpec) {
    let base = solved(spec);
    let corner = spec.problem.grid().domain().upper.clone();
    let lowered = spec.problem.boundary.map(|x, v| v - bump(x, &corner, 0.05, 0.5));
    let problem = spec.problem.with_boundary(lowered).unwrap();
    let low = solve(&problem, &spec.solver).unwrap();
    assert!(low.converged, "{}", low.message);
    let worst = low
        .u
        .values()
        .iter()
        .zip(base.u.values())
        .map(|(a, b)| a - b)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(worst <= 1e-8, "lowered solution exceeds the original by {worst:e}");
    // strictly lower somewhere inside
    let grid = spec.problem.grid();
    let dropped = grid
        .interior_nodes()
        .iter()
        .any(|&i| low.u.values()[i] < base.u.values()[i] - 1e-6);
    assert!(dropped);
}

#[test]
fn boundary_monotonicity_euclidean() {
    check_boundary_monotonicity(&spec("euclidean-quadratic", 17));
}

#[test]
fn boundary_monotonicity_heisenberg() {
    check_boundary_monotonicity(&spec("heisenberg-gauss-manufactured", 13));
}

#[test]
fn residual_log_is_monotone_once_feasible() {
    let s = spec("heisenberg-gauss-manufactured", 17);
    let state = solved(&s);
    let feasible: Vec<f64> = state
        .residual_log
        .iter()
        .filter(|r| r.feasible)
        .map(|r| r.max_residual)
        .collect();
    assert!(!feasible.is_empty());
    for w in feasible.windows(2) {
        assert!(w[1] < w[0], "{feasible:?}");
    }
    // once feasible, an iterate never leaves the cone
    let first = state.residual_log.iter().position(|r| r.feasible).unwrap();
    assert!(state.residual_log[first..].iter().all(|r| r.feasible));
    assert!(state.final_residual() < s.solver.tol);
}

#[test]
fn final_policy_beats_the_control_grid() {
    let s = spec("heisenberg-gauss-manufactured", 13);
    let state = solved(&s);
    let family = control_grid(2, s.problem.gamma_floor, 1, s.solver.seed);
    for (&node, control) in state.policy.nodes.iter().zip(&state.policy.controls) {
        let jet = horizontal_jet(&s.problem.frame, &state.u, node).unwrap();
        let (clipped, _, _) = clip_to_cone(&jet.s, s.problem.gamma_floor);
        let own = bellman_value(&clipped, control).unwrap();
        let best = family
            .iter()
            .map(|c| bellman_value(&clipped, c).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(own <= best + 1e-8, "node {node}: policy {own} vs grid {best}");
    }
}

#[test]
fn scaled_euclidean_quadratic_is_exact() {
    // det D^2 u = 4 with u = |x|^2 on the boundary gives u = |x|^2
    let s = load_spec(
        "builtin:euclidean-quadratic",
        &[
            ("resolution".into(), "13".into()),
            ("hamiltonian.f".into(), "4".into()),
            ("boundary".into(), "x1^2 + x2^2".into()),
            ("exact".into(), "x1^2 + x2^2".into()),
        ],
    )
    .unwrap();
    let state = solved(&s);
    assert!(state.u.max_abs_diff(&s.exact_grid().unwrap()) < 1e-8);
}

#[test]
fn exact_solution_has_zero_residual() {
    let s = spec("heisenberg-gauss-manufactured", 17);
    let r = residual(&s.problem, &s.exact_grid().unwrap());
    assert!(r.is_feasible());
    assert!(r.max_abs() < 1e-12);
}
