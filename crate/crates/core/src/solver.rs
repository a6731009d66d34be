//! Dirichlet solver for `-det(D_X^2 u) + H(x, u, D_X u) = 0` in log form,
//! `-log det(D_X^2 u) + log H = 0`, by Howard (policy) iteration over
//! log-det Bellman controls.
//!
//! For a fixed control `(M, a)` at every node the equation becomes linear,
//!
//! ```text
//! tr(M sigma^T D^2u sigma) = log H + m - m log a - tr(M Q(x, Du_prev))
//! ```
//!
//! with the gradient slot of `Q` and `H` (and the `u` slot of `H`) frozen at
//! the previous iterate. The analytic policy `M = A^-1`, `a = det(A)^(1/m)`
//! for `A = D_X^2 u` clipped to `A >= gamma_floor I` makes each step a Newton
//! step for `log det`. Steps are damped by halving until the max-norm
//! residual decreases and every interior node stays in the feasible cone.

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::hamiltonian::Hamiltonian;
use crate::horizontal::{default_tol_eig, euclid_jet, jet_from_euclid, min_eigenvalue, q_matrix_from};
use crate::logdet_bellman::{bellman_value, control_grid, BellmanControl, CONTROL_GRID_SEED};
use crate::sparse::{bicgstab, CsrMatrix};
use crate::carnot_group::CarnotFrame;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Debug)]
pub struct DirichletProblem {
    pub frame: CarnotFrame,
    pub hamiltonian: Hamiltonian,
    /// Boundary data; only values on boundary nodes are used.
    pub boundary: GridFunction,
    pub gamma_floor: f64,
}

impl DirichletProblem {
    pub fn new(
        frame: CarnotFrame,
        hamiltonian: Hamiltonian,
        boundary: GridFunction,
        gamma_floor: f64,
    ) -> Result<Self> {
        if !(gamma_floor > 0.0 && gamma_floor.is_finite()) {
            return Err(Error::Problem(format!(
                "gamma_floor must be positive, got {gamma_floor}"
            )));
        }
        if frame.n() != boundary.grid().dim() {
            return Err(Error::Problem(format!(
                "frame dimension {} does not match grid dimension {}",
                frame.n(),
                boundary.grid().dim()
            )));
        }
        if hamiltonian.m() != frame.m() {
            return Err(Error::Problem(format!(
                "Hamiltonian built for m = {} but the frame has m = {}",
                hamiltonian.m(),
                frame.m()
            )));
        }
        Ok(DirichletProblem {
            frame,
            hamiltonian,
            boundary,
            gamma_floor,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.boundary.grid()
    }

    pub fn m(&self) -> usize {
        self.frame.m()
    }

    /// Same problem with different boundary data on the same grid.
    pub fn with_boundary(&self, boundary: GridFunction) -> Result<Self> {
        if boundary.grid() != self.grid() {
            return Err(Error::Problem("boundary data on a different grid".into()));
        }
        Ok(DirichletProblem {
            boundary,
            ..self.clone()
        })
    }

    /// Copies the boundary data onto the boundary nodes of `u`.
    pub fn impose_boundary(&self, u: &mut GridFunction) {
        let g = self.boundary.values();
        let grid = self.grid().clone();
        for (i, v) in u.values_mut().iter_mut().enumerate() {
            if grid.is_boundary(i) {
                *v = g[i];
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverConfig {
    /// Target for the max-norm log-form residual.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub linear_rtol: f64,
    pub linear_max_iter: usize,
    /// Density of the fallback control grid.
    pub control_density: usize,
    pub seed: u64,
    /// Condition number above which the analytic policy is replaced by the
    /// best control-grid element.
    pub ill_conditioned: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-6,
            max_iter: 50,
            max_halvings: 30,
            linear_rtol: 1e-10,
            linear_max_iter: 20_000,
            control_density: 1,
            seed: CONTROL_GRID_SEED,
            ill_conditioned: 1e12,
        }
    }
}

/// Log-form residual `-log det(D_X^2 u) + log H(x, u, D_X u)` at interior
/// nodes. Nodes outside the cone `D_X^2 u >= (gamma_floor - tol_eig) I` are
/// infeasible; their value is NaN.
#[derive(Clone, Debug)]
pub struct ResidualField {
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
    pub infeasible: Vec<usize>,
}

impl ResidualField {
    pub fn is_feasible(&self) -> bool {
        self.infeasible.is_empty()
    }

    /// Max |residual| over feasible nodes.
    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| !v.is_nan())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| !v.is_nan())
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn min(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| !v.is_nan())
            .fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Line-search merit: max |residual| when feasible, infinity otherwise.
    pub fn merit(&self) -> f64 {
        if self.is_feasible() {
            self.max_abs()
        } else {
            f64::INFINITY
        }
    }
}

fn log_det_spd(a: &DMatrix<f64>) -> Option<f64> {
    let chol = a.clone().cholesky()?;
    let l = chol.l_dirty();
    Some(2.0 * (0..a.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

pub fn residual(problem: &DirichletProblem, u: &GridFunction) -> ResidualField {
    let tol_eig = default_tol_eig(u);
    let floor = problem.gamma_floor - tol_eig;
    let grid = u.grid();
    let nodes = grid.interior_nodes();
    let values: Vec<f64> = nodes
        .par_iter()
        .map(|&i| {
            let x = grid.coords(i);
            let (g, h) = euclid_jet(u, i).expect("interior node");
            let jet = jet_from_euclid(&problem.frame, &x, g, h);
            if min_eigenvalue(&jet.s) < floor {
                return f64::NAN;
            }
            match log_det_spd(&jet.s) {
                Some(ld) => {
                    -ld + problem
                        .hamiltonian
                        .eval_log(&x, u.values()[i], jet.p.as_slice())
                }
                None => f64::NAN,
            }
        })
        .collect();
    let infeasible = nodes
        .iter()
        .zip(&values)
        .filter(|(_, v)| v.is_nan())
        .map(|(&i, _)| i)
        .collect();
    ResidualField {
        nodes,
        values,
        infeasible,
    }
}

/// Per-interior-node controls, aligned with `nodes`.
#[derive(Clone, Debug)]
pub struct Policy {
    pub nodes: Vec<usize>,
    pub controls: Vec<BellmanControl>,
    /// Nodes where the control grid replaced the analytic minimizer.
    pub fallback_nodes: Vec<usize>,
}

/// `A` with eigenvalues below `floor` raised to `floor`, as
/// `(clipped A, eigenvalues, eigenvectors)`.
pub fn clip_to_cone(a: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let lambda: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(floor)).collect();
    let v = eig.eigenvectors;
    let m = a.nrows();
    let d = DMatrix::from_fn(m, m, |i, j| if i == j { lambda[i] } else { 0.0 });
    let c = &v * d * v.transpose();
    let c = DMatrix::from_fn(m, m, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    (c, lambda, v)
}

pub fn policy_improve(problem: &DirichletProblem, u: &GridFunction, config: &SolverConfig) -> Policy {
    let grid = u.grid();
    let nodes = grid.interior_nodes();
    let m = problem.m();
    let gamma = problem.gamma_floor;
    let results: Vec<(BellmanControl, bool, DMatrix<f64>)> = nodes
        .par_iter()
        .map(|&i| {
            let x = grid.coords(i);
            let (g, h) = euclid_jet(u, i).expect("interior node");
            let jet = jet_from_euclid(&problem.frame, &x, g, h);
            let (clipped, lambda, v) = clip_to_cone(&jet.s, gamma);
            let (lo, hi) = lambda
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(l, h), &e| (l.min(e), h.max(e)));
            if hi / lo > config.ill_conditioned || !hi.is_finite() {
                return (BellmanControl::from_parts_unchecked(DMatrix::identity(m, m), 1.0), true, clipped);
            }
            let inv_d = DMatrix::from_fn(m, m, |r, c| if r == c { 1.0 / lambda[r] } else { 0.0 });
            let minv = &v * inv_d * v.transpose();
            let minv = DMatrix::from_fn(m, m, |r, c| 0.5 * (minv[(r, c)] + minv[(c, r)]));
            let a = lambda.iter().map(|l| l.ln()).sum::<f64>() / m as f64;
            (BellmanControl::from_parts_unchecked(minv, a.exp()), false, clipped)
        })
        .collect();
    let mut fallback_nodes = Vec::new();
    let mut grid_controls: Option<Vec<BellmanControl>> = None;
    let controls = results
        .into_iter()
        .zip(&nodes)
        .map(|((c, fallback, clipped), &node)| {
            if !fallback {
                return c;
            }
            fallback_nodes.push(node);
            let family = grid_controls
                .get_or_insert_with(|| control_grid(m, gamma, config.control_density, config.seed));
            family
                .iter()
                .min_by(|p, q| {
                    let vp = bellman_value(&clipped, p).unwrap_or(f64::INFINITY);
                    let vq = bellman_value(&clipped, q).unwrap_or(f64::INFINITY);
                    vp.total_cmp(&vq)
                })
                .cloned()
                .expect("nonempty control grid")
        })
        .collect();
    Policy {
        nodes,
        controls,
        fallback_nodes,
    }
}

/// Linear system of one policy step over the interior unknowns.
struct PolicySystem {
    matrix: CsrMatrix,
    rhs: Vec<f64>,
}

fn assemble(problem: &DirichletProblem, policy: &Policy, u_prev: &GridFunction) -> PolicySystem {
    let grid = problem.grid();
    let n = grid.dim();
    let m = problem.m();
    let h = grid.h().to_vec();
    let mut unknown = vec![usize::MAX; grid.len()];
    for (k, &node) in policy.nodes.iter().enumerate() {
        unknown[node] = k;
    }
    let g = problem.boundary.values();
    let frame = &problem.frame;
    let constant_frame = frame.is_constant();

    let rows: Vec<(Vec<(usize, f64)>, f64)> = policy
        .nodes
        .par_iter()
        .zip(&policy.controls)
        .map(|(&node, control)| {
            let x = grid.coords(node);
            let sigma = frame.eval_sigma(&x);
            let mm = control.matrix();
            let b = &sigma * mm * sigma.transpose();
            let (grad, _) = euclid_jet(u_prev, node).expect("interior node");
            let p = sigma.transpose() * &grad;
            let mut rhs = problem
                .hamiltonian
                .eval_log(&x, u_prev.values()[node], p.as_slice())
                + m as f64
                - m as f64 * control.a().ln();
            if !constant_frame {
                let q = q_matrix_from(&sigma, &frame.eval_sigma_jacobians(&x), &grad);
                rhs -= mm.component_mul(&q).sum();
            }

            let mut entries: Vec<(usize, f64)> = Vec::with_capacity(1 + 2 * n + 2 * n * n);
            let mut diag = 0.0;
            let mut push = |nb: usize, coef: f64, rhs: &mut f64, diag: &mut f64| {
                if nb == node {
                    *diag += coef;
                } else if unknown[nb] == usize::MAX {
                    *rhs -= coef * g[nb];
                } else {
                    entries.push((unknown[nb], coef));
                }
            };
            for k in 0..n {
                let s = grid.stride(k);
                let c = b[(k, k)] / (h[k] * h[k]);
                if c != 0.0 {
                    push(node + s, c, &mut rhs, &mut diag);
                    push(node - s, c, &mut rhs, &mut diag);
                    push(node, -2.0 * c, &mut rhs, &mut diag);
                }
                for l in 0..k {
                    let t = grid.stride(l);
                    let c = 2.0 * b[(k, l)] / (4.0 * h[k] * h[l]);
                    if c != 0.0 {
                        push(node + s + t, c, &mut rhs, &mut diag);
                        push(node - s - t, c, &mut rhs, &mut diag);
                        push(node + s - t, -c, &mut rhs, &mut diag);
                        push(node - s + t, -c, &mut rhs, &mut diag);
                    }
                }
            }
            // negate so the diagonal is positive
            let mut row: Vec<(usize, f64)> = entries.into_iter().map(|(j, c)| (j, -c)).collect();
            row.push((unknown[node], -diag));
            (row, -rhs)
        })
        .collect();
    let (rows, rhs): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    PolicySystem {
        matrix: CsrMatrix::from_rows(rows),
        rhs,
    }
}

/// Solves the linear policy step, imposing boundary data strongly.
pub fn policy_solve(
    problem: &DirichletProblem,
    policy: &Policy,
    u_prev: &GridFunction,
    config: &SolverConfig,
) -> Result<(GridFunction, usize)> {
    let sys = assemble(problem, policy, u_prev);
    let x0: Vec<f64> = policy.nodes.iter().map(|&i| u_prev.values()[i]).collect();
    // correction form: the relative tolerance then scales with the defect,
    // not with |u|, so the step stays accurate as the iteration converges
    let defect: Vec<f64> = sys.rhs.iter().zip(sys.matrix.matvec(&x0)).map(|(b, ax)| b - ax).collect();
    let mut delta = vec![0.0; x0.len()];
    let stats = bicgstab(&sys.matrix, &defect, &mut delta, config.linear_rtol, config.linear_max_iter)?;
    let mut u = problem.boundary.clone();
    for ((&node, v), d) in policy.nodes.iter().zip(x0).zip(delta) {
        u.values_mut()[node] = v + d;
    }
    problem.impose_boundary(&mut u);
    Ok((u, stats.iterations))
}

/// Initial iterate: one policy step with `M = I/gamma0(x)`, `a = gamma0(x)`,
/// `gamma0 = max(gamma_floor, H^(1/m)(x, 0, 0))`, which reduces to the
/// sub-Laplacian problem `tr(D_X^2 u) = m H^(1/m)`.
pub fn initial_guess(problem: &DirichletProblem, config: &SolverConfig) -> Result<GridFunction> {
    let grid = problem.grid();
    let m = problem.m();
    let nodes = grid.interior_nodes();
    let zero_q = vec![0.0; m];
    let controls = nodes
        .iter()
        .map(|&i| {
            let x = grid.coords(i);
            let g0 = problem
                .hamiltonian
                .eval_root(&x, 0.0, &zero_q)
                .max(problem.gamma_floor);
            BellmanControl::from_parts_unchecked(DMatrix::identity(m, m) / g0, g0)
        })
        .collect();
    let policy = Policy {
        nodes,
        controls,
        fallback_nodes: Vec::new(),
    };
    let zero = GridFunction::zeros(grid.clone());
    Ok(policy_solve(problem, &policy, &zero, config)?.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Max |residual| over feasible nodes.
    pub max_residual: f64,
    /// Accepted damping factor (0 for the initial iterate).
    pub damping: f64,
    pub feasible: bool,
    pub infeasible_nodes: usize,
    pub linear_iterations: usize,
    pub fallback_nodes: usize,
}

#[derive(Clone, Debug)]
pub struct SolverState {
    pub u: GridFunction,
    pub policy: Policy,
    pub residual_log: Vec<IterationRecord>,
    pub iterations: usize,
    pub converged: bool,
    pub message: String,
}

impl SolverState {
    pub fn final_residual(&self) -> f64 {
        self.residual_log.last().map(|r| r.max_residual).unwrap_or(f64::NAN)
    }
}

/// Damped Howard iteration from [`initial_guess`].
pub fn solve(problem: &DirichletProblem, config: &SolverConfig) -> Result<SolverState> {
    let u0 = initial_guess(problem, config)?;
    solve_from(problem, u0, config)
}

pub fn solve_from(problem: &DirichletProblem, mut u: GridFunction, config: &SolverConfig) -> Result<SolverState> {
    problem.impose_boundary(&mut u);
    let mut res = residual(problem, &u);
    let mut log = vec![IterationRecord {
        iteration: 0,
        max_residual: res.max_abs(),
        damping: 0.0,
        feasible: res.is_feasible(),
        infeasible_nodes: res.infeasible.len(),
        linear_iterations: 0,
        fallback_nodes: 0,
    }];
    let mut converged = false;
    let mut message = String::from("iteration cap reached");
    let mut iterations = 0;
    for it in 1..=config.max_iter {
        if res.is_feasible() && res.max_abs() < config.tol {
            converged = true;
            message = "converged".into();
            break;
        }
        iterations = it;
        let policy = policy_improve(problem, &u, config);
        let (target, lin_iters) = policy_solve(problem, &policy, &u, config)?;

        let current = res.merit();
        let mut theta = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let cand = u.axpby(1.0 - theta, &target, theta);
            let r = residual(problem, &cand);
            if r.merit() < current {
                accepted = Some((cand, r, theta));
                break;
            }
            theta *= 0.5;
        }
        let (next, next_res, damping) = match accepted {
            Some(a) => a,
            None if !res.is_feasible() => {
                // still outside the cone: take the full step
                let r = residual(problem, &target);
                (target, r, 1.0)
            }
            None => {
                message = format!("line search stalled at max residual {:.3e}", res.max_abs());
                iterations = it - 1;
                break;
            }
        };
        log::debug!(
            "iteration {it}: residual {:.3e} -> {:.3e}, damping {damping}, infeasible {}",
            res.max_abs(),
            next_res.max_abs(),
            next_res.infeasible.len()
        );
        u = next;
        res = next_res;
        log.push(IterationRecord {
            iteration: it,
            max_residual: res.max_abs(),
            damping,
            feasible: res.is_feasible(),
            infeasible_nodes: res.infeasible.len(),
            linear_iterations: lin_iters,
            fallback_nodes: policy.fallback_nodes.len(),
        });
    }
    if !converged && res.is_feasible() && res.max_abs() < config.tol {
        converged = true;
        message = "converged".into();
    }
    let policy = policy_improve(problem, &u, config);
    Ok(SolverState {
        u,
        policy,
        residual_log: log,
        iterations,
        converged,
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::grid::BoxDomain;
    use crate::hamiltonian::HamiltonianKind;

    fn const_h(domain: &BoxDomain, m: usize, f: &str) -> Hamiltonian {
        Hamiltonian::new(
            HamiltonianKind::ConstantRhs { f: Expr::parse(f).unwrap() },
            domain,
            m,
            10.0,
        )
        .unwrap()
    }

    fn euclid_problem(nodes: usize) -> DirichletProblem {
        let grid = Grid::uniform(BoxDomain::cube(2, 1.0), nodes).unwrap();
        let g = GridFunction::from_fn(grid.clone(), |x| (x[0] * x[0] + x[1] * x[1]) / 2.0);
        DirichletProblem::new(CarnotFrame::euclidean(2), const_h(grid.domain(), 2, "1"), g, 1e-3).unwrap()
    }

    fn heisenberg_problem(nodes: usize) -> DirichletProblem {
        let grid = Grid::uniform(BoxDomain::cube(3, 1.0), nodes).unwrap();
        let k = Expr::parse("(1 + x1^2 + x2^2)^(-2)").unwrap();
        let h = Hamiltonian::new(HamiltonianKind::GaussCurvature { k }, grid.domain(), 2, 10.0).unwrap();
        let g = GridFunction::from_fn(grid.clone(), |x| (x[0] * x[0] + x[1] * x[1]) / 2.0);
        DirichletProblem::new(CarnotFrame::heisenberg(1), h, g, 1e-3).unwrap()
    }

    #[test]
    fn rejects_bad_problem() {
        let p = euclid_problem(5);
        let err = DirichletProblem::new(p.frame.clone(), p.hamiltonian.clone(), p.boundary.clone(), 0.0).unwrap_err();
        assert!(err.to_string().contains("gamma_floor must be positive"));
        assert!(DirichletProblem::new(CarnotFrame::heisenberg(1), p.hamiltonian.clone(), p.boundary.clone(), 1e-3).is_err());
    }

    #[test]
    fn residual_examples() {
        let p = euclid_problem(9);
        let r = residual(&p, &p.boundary);
        assert!(r.is_feasible());
        assert!(r.max_abs() < 1e-12);

        let p = heisenberg_problem(9);
        let r = residual(&p, &p.boundary);
        assert!(r.is_feasible());
        assert!(r.max_abs() < 1e-12, "{}", r.max_abs());

        let bad = p.boundary.map(|x, v| v - 2.0 * x[0] * x[0]);
        let r = residual(&p, &bad);
        assert_eq!(r.infeasible.len(), r.nodes.len());
        assert_eq!(r.merit(), f64::INFINITY);
    }

    #[test]
    fn policy_improve_examples() {
        let p = euclid_problem(9);
        let cfg = SolverConfig::default();
        let pol = policy_improve(&p, &p.boundary, &cfg);
        for c in &pol.controls {
            assert!((c.matrix() - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-10);
            assert!((c.a() - 1.0).abs() < 1e-10);
        }
        let u = GridFunction::from_fn(p.grid().clone(), |x| x[0] * x[0] + 4.0 * x[1] * x[1]);
        let pol = policy_improve(&p, &u, &cfg);
        let want = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.125]);
        for c in &pol.controls {
            assert!((c.matrix() - &want).abs().max() < 1e-10);
            assert!((c.a() - 4.0).abs() < 1e-10);
        }
        assert!(pol.fallback_nodes.is_empty());
    }

    #[test]
    fn ill_conditioned_policy_falls_back() {
        let p = euclid_problem(7);
        let u = GridFunction::from_fn(p.grid().clone(), |x| 1e10 * x[0] * x[0]);
        let cfg = SolverConfig::default();
        let pol = policy_improve(&p, &u, &cfg);
        assert_eq!(pol.fallback_nodes.len(), pol.nodes.len());
        for c in &pol.controls {
            assert!(BellmanControl::new(c.matrix().clone(), c.a(), p.gamma_floor).is_ok());
        }
    }

    #[test]
    fn policy_solve_recovers_quadratic() {
        let p = euclid_problem(9);
        let cfg = SolverConfig::default();
        let exact = policy_improve(&p, &p.boundary, &cfg);
        let (u, _) = policy_solve(&p, &exact, &GridFunction::zeros(p.grid().clone()), &cfg).unwrap();
        assert!(u.max_abs_diff(&p.boundary) < 1e-9);

        let p = heisenberg_problem(9);
        let exact = policy_improve(&p, &p.boundary, &cfg);
        let (u, _) = policy_solve(&p, &exact, &p.boundary.map(|_, v| v + 0.0), &cfg).unwrap();
        assert!(u.max_abs_diff(&p.boundary) < 1e-9);
    }

    #[test]
    fn harmonic_policy_step_obeys_maximum_principle() {
        // M = I/e, a = e with H = 1 makes the right side zero: Laplace's equation
        let p = euclid_problem(11);
        let g = p.boundary.map(|x, _| (3.0 * x[0]).sin() + x[1] * x[1] * x[0]);
        let p = p.with_boundary(g.clone()).unwrap();
        let e = std::f64::consts::E;
        let nodes = p.grid().interior_nodes();
        let controls = nodes
            .iter()
            .map(|_| BellmanControl::new(DMatrix::identity(2, 2) / e, e, p.gamma_floor).unwrap())
            .collect();
        let pol = Policy { nodes: nodes.clone(), controls, fallback_nodes: vec![] };
        let (u, _) = policy_solve(&p, &pol, &GridFunction::zeros(p.grid().clone()), &SolverConfig::default()).unwrap();
        let bnodes = p.grid().boundary_nodes();
        let lo = bnodes.iter().map(|&i| g.values()[i]).fold(f64::INFINITY, f64::min);
        let hi = bnodes.iter().map(|&i| g.values()[i]).fold(f64::NEG_INFINITY, f64::max);
        for &i in &nodes {
            let v = u.values()[i];
            assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn euclidean_solve_is_exact() {
        let p = euclid_problem(9);
        let state = solve(&p, &SolverConfig::default()).unwrap();
        assert!(state.converged, "{}", state.message);
        assert!(state.u.max_abs_diff(&p.boundary) < 1e-8);
    }

    #[test]
    fn heisenberg_small_solve() {
        let p = heisenberg_problem(9);
        let state = solve(&p, &SolverConfig::default()).unwrap();
        assert!(state.converged, "{} {:?}", state.message, state.residual_log);
        assert!(state.u.max_abs_diff(&p.boundary) < 1e-5);
        let feasible: Vec<_> = state.residual_log.iter().filter(|r| r.feasible).collect();
        for w in feasible.windows(2) {
            assert!(w[1].max_residual <= w[0].max_residual);
        }
    }
}
