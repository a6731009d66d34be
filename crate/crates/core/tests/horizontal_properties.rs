use carnot_ma::carnot_group::CarnotFrame;
use carnot_ma::grid::{BoxDomain, Grid, GridFunction};
use carnot_ma::horizontal::{certify_convexity, horizontal_jet, ConvexityKind};
use carnot_ma::poly::Polynomial;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn h1_grid(nodes: usize) -> Grid {
    Grid::uniform(BoxDomain::cube(3, 1.0), nodes).unwrap()
}

/// Node at `x`, which must lie on the lattice.
fn node_at(grid: &Grid, x: &[f64]) -> usize {
    let idx: Vec<usize> = (0..grid.dim())
        .map(|k| ((x[k] - grid.domain().lower[k]) / grid.h()[k]).round() as usize)
        .collect();
    let node = grid.index(&idx);
    assert!(grid.coords(node).iter().zip(x).all(|(a, b)| (a - b).abs() < 1e-12));
    node
}

/// Symmetrized `X_i X_j f` by composing the generators symbolically.
fn composed_hessian(frame: &CarnotFrame, f: &Polynomial, x: &[f64]) -> DMatrix<f64> {
    let m = frame.m();
    let xf: Vec<Polynomial> = (0..m).map(|j| frame.generator(j).apply(f)).collect();
    let raw = DMatrix::from_fn(m, m, |i, j| frame.generator(i).apply(&xf[j]).eval(x));
    (&raw + raw.transpose()) * 0.5
}

fn poly(text: &str) -> Polynomial {
    carnot_ma::expr::Expr::parse(text).unwrap().to_polynomial(3).unwrap()
}

#[test]
fn jets_match_generator_composition_on_polynomials() {
    let frame = CarnotFrame::heisenberg(1);
    let grid = h1_grid(17);
    let x = [0.25, -0.5, 0.375];
    let node = node_at(&grid, &x);
    for text in ["x1*x3", "x1^2*x2", "x3^2", "x1*x2*x3 + x2^2"] {
        let f = poly(text);
        let u = GridFunction::from_fn(grid.clone(), |y| f.eval(y));
        let jet = horizontal_jet(&frame, &u, node).unwrap();
        let expect = composed_hessian(&frame, &f, &x);
        assert!((&jet.s - &expect).abs().max() < 1e-10, "{text}: {} vs {expect}", jet.s);
        for j in 0..2 {
            let p = frame.generator(j).apply(&f).eval(&x);
            assert!((jet.p[j] - p).abs() < 1e-10, "{text}");
        }
    }
}

/// Analytic horizontal Hessian of `exp(x1 + x3)` on the first Heisenberg group.
fn exp_oracle(x: &[f64]) -> DMatrix<f64> {
    let e = (x[0] + x[2]).exp();
    let a = 1.0 - x[1] / 2.0;
    let b = x[0] / 2.0;
    DMatrix::from_row_slice(2, 2, &[a * a * e, a * b * e, a * b * e, b * b * e])
}

#[test]
fn smooth_jet_converges_at_second_order() {
    let frame = CarnotFrame::heisenberg(1);
    let x = [0.25, -0.5, 0.25];
    let errors: Vec<f64> = [17, 33, 65]
        .iter()
        .map(|&nodes| {
            let grid = h1_grid(nodes);
            let node = node_at(&grid, &x);
            let u = GridFunction::from_fn(grid, |y| (y[0] + y[2]).exp());
            let jet = horizontal_jet(&frame, &u, node).unwrap();
            (&jet.s - exp_oracle(&x)).abs().max()
        })
        .collect();
    for w in errors.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!(rate > 1.8 && rate < 2.2, "errors {errors:?}");
    }

    let errors: Vec<f64> = [17, 33, 65]
        .iter()
        .map(|&nodes| {
            let grid = h1_grid(nodes);
            let node = node_at(&grid, &x);
            let u = GridFunction::from_fn(grid, |y| y[0].exp());
            let jet = horizontal_jet(&frame, &u, node).unwrap();
            let expect = DMatrix::from_row_slice(2, 2, &[x[0].exp(), 0.0, 0.0, 0.0]);
            (&jet.s - expect).abs().max()
        })
        .collect();
    assert!(errors[0] / errors[1] > 3.5 && errors[1] / errors[2] > 3.5, "{errors:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jet_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, ix in 1usize..8, iy in 1usize..8, iz in 1usize..8) {
        let frame = CarnotFrame::heisenberg(1);
        let grid = h1_grid(9);
        let node = grid.index(&[ix, iy, iz]);
        let u = GridFunction::from_fn(grid.clone(), |y| (y[0] * y[1]).sin() + y[2] * y[2]);
        let v = GridFunction::from_fn(grid.clone(), |y| (y[0] - y[2]).exp());
        let w = u.axpby(a, &v, b);
        let (ju, jv, jw) = (
            horizontal_jet(&frame, &u, node).unwrap(),
            horizontal_jet(&frame, &v, node).unwrap(),
            horizontal_jet(&frame, &w, node).unwrap(),
        );
        let s = &ju.s * a + &jv.s * b;
        let p = &ju.p * a + &jv.p * b;
        let scale = 1.0 + s.abs().max();
        prop_assert!((&jw.s - s).abs().max() <= 1e-9 * scale);
        prop_assert!((&jw.p - p).abs().max() <= 1e-12 * (1.0 + jw.p.abs().max()));
    }

    #[test]
    fn horizontal_jet_is_symmetric(ix in 1usize..8, iy in 1usize..8, iz in 1usize..8) {
        let frame = CarnotFrame::heisenberg(1);
        let grid = h1_grid(9);
        let node = grid.index(&[ix, iy, iz]);
        let u = GridFunction::from_fn(grid, |y| y[0] * y[2] + (y[1] * y[2]).cos());
        let j = horizontal_jet(&frame, &u, node).unwrap();
        prop_assert_eq!(j.s.clone(), j.s.transpose());
    }
}

#[test]
fn convexity_of_sign_flips() {
    let frame = CarnotFrame::heisenberg(1);
    let grid = h1_grid(17);
    let u = GridFunction::from_fn(grid.clone(), |x| (x[0] * x[0] + x[1] * x[1]) / 2.0);
    let c = certify_convexity(&frame, &u, 0.0);
    assert_eq!(c.kind, ConvexityKind::UniformlyXConvex);
    assert!((c.gamma - 1.0).abs() < 1e-9);

    let neg = u.map(|_, v| -v);
    let c = certify_convexity(&frame, &neg, 0.0);
    assert_eq!(c.kind, ConvexityKind::NotCertified);
    assert!((c.min_eigenvalue + 1.0).abs() < 1e-9);

    // X-affine: the antisymmetric part of X_i X_j x3 drops out
    let vertical = GridFunction::from_fn(grid, |x| x[2]);
    let c = certify_convexity(&frame, &vertical, 0.0);
    assert_eq!(c.kind, ConvexityKind::XConvex);
    assert_eq!(c.gamma, 0.0);
}

#[test]
fn uniform_request_above_minimum_is_not_uniform() {
    let frame = CarnotFrame::heisenberg(1);
    let grid = h1_grid(9);
    let u = GridFunction::from_fn(grid, |x| (x[0] * x[0] + x[1] * x[1]) / 2.0);
    let c = certify_convexity(&frame, &u, 2.0);
    assert_eq!(c.kind, ConvexityKind::XConvex);
}
