use carnot_ma::carnot_group::CarnotFrame;
use carnot_ma::comparison::{
    certify_strict_subsolution, gradient_bound, lipschitz_h_check, perturb, verify_comparison, PerturbationParams,
    StrictnessFailure, StrictnessLevel,
};
use carnot_ma::grid::{BoxDomain, Grid, GridFunction};
use carnot_ma::horizontal::{certify_convexity, ConvexityKind};
use carnot_ma::spec::load_spec;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Where `mu h |x| << 1`, the discrete gain of `eps exp(mu |x_h|^2 / 2)`
    /// is at least `eps mu`.
    #[test]
    fn perturbation_gain_at_small_mu(eps in 1e-3..1.0f64, mu in 0.25..4.0f64) {
        let frame = CarnotFrame::heisenberg(1);
        let grid = Grid::new(BoxDomain::cube(3, 1.0), vec![33, 33, 5]).unwrap();
        let p = perturb(&GridFunction::zeros(grid), PerturbationParams::new(eps, mu).unwrap(), 2).unwrap();
        let c = certify_convexity(&frame, &p, eps * mu * (1.0 - 1e-6));
        prop_assert_eq!(c.kind, ConvexityKind::UniformlyXConvex);
    }

    /// Adding the perturbation never lowers the function.
    #[test]
    fn perturbation_is_nonnegative(eps in 1e-3..1.0f64, mu in 0.25..16.0f64) {
        let grid = Grid::uniform(BoxDomain::cube(3, 1.0), 5).unwrap();
        let u = GridFunction::from_fn(grid, |x| x[0] - x[2]);
        let p = perturb(&u, PerturbationParams::new(eps, mu).unwrap(), 2).unwrap();
        prop_assert!(p.values().iter().zip(u.values()).all(|(a, b)| a >= b));
    }
}

#[test]
fn gradient_bound_of_the_quadratic() {
    // sigma^T Du = (x1, x2) for (x1^2 + x2^2)/2, so C = |(1/2, 1/2)|
    let frame = CarnotFrame::heisenberg(1);
    for nodes in [9, 17] {
        let grid = Grid::uniform(BoxDomain::cube(3, 1.0), nodes).unwrap();
        let u = GridFunction::from_fn(grid.clone(), |x| (x[0] * x[0] + x[1] * x[1]) / 2.0);
        let r = gradient_bound(&frame, &u, &grid.domain().scaled(0.5));
        assert!((r.c - 0.5f64.sqrt()).abs() < 1e-12, "{}", r.c);
    }
}

#[test]
fn strictness_needs_an_interior_subdomain() {
    let spec = load_spec("builtin:heisenberg-gauss-manufactured", &[("resolution".into(), "9".into())]).unwrap();
    let u = spec.exact_grid().unwrap();
    let whole = spec.problem.grid().domain().clone();
    assert_eq!(
        certify_strict_subsolution(&spec.problem, &u, &whole, StrictnessLevel::DetPower).unwrap_err(),
        StrictnessFailure::SubdomainNotInterior
    );
    // the exact solution has zero residual, so it is not strict
    let half = whole.scaled(0.5);
    assert!(matches!(
        certify_strict_subsolution(&spec.problem, &u, &half, StrictnessLevel::LogLevel),
        Err(StrictnessFailure::NotStrict { .. })
    ));
}

#[test]
fn verdict_detects_a_violated_inequality() {
    // a supersolution lying below the subsolution in the interior with equal
    // boundary data must not produce a true verdict
    let spec = load_spec("builtin:euclidean-quadratic", &[]).unwrap();
    let u = spec.exact_grid().unwrap();
    let steeper = u.map(|x, v| v + 0.05 * (x[0] * x[0] + x[1] * x[1] - 2.0));
    let mut v = steeper;
    spec.problem.impose_boundary(&mut v);
    let r = verify_comparison(&spec.problem, &u, &v, 1e-5).unwrap();
    assert!(r.sup_gap > 0.0);
    assert_ne!(r.verdict, Some(true));
}

#[test]
fn lipschitz_estimate_of_gauss_curvature() {
    let spec = load_spec("builtin:heisenberg-gauss-manufactured", &[("hamiltonian.k".into(), "1".into())]).unwrap();
    let r = lipschitz_h_check(&spec.problem.hamiltonian, spec.problem.grid().domain(), 1.0, 2000, 5);
    assert_eq!(r.analytic_estimate, Some(4.0));
    assert!(r.empirical > 0.0 && r.empirical <= 4.0 + 1e-9, "{}", r.empirical);
}
