//! Strict-subsolution perturbation, strictness certificates, horizontal
//! gradient bounds and comparison reports for computed sub/supersolution
//! pairs.
//!
//! Reports certify the comparison inequality for the given pair only. The
//! scheme is not provably monotone, so a failed inequality with satisfied
//! preconditions is flagged as a scheme artifact.

use crate::carnot_group::CarnotFrame;
use crate::error::{Error, Result};
use crate::grid::{BoxDomain, GridFunction};
use crate::hamiltonian::{Hamiltonian, HamiltonianKind};
use crate::horizontal::{euclid_jet, jet_from_euclid, min_eigenvalue};
use crate::logdet_bellman::det_root;
use crate::solver::{residual, DirichletProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest exponent accepted by [`perturb`]; `exp` of it is about `1e300`.
pub const MAX_EXPONENT: f64 = 690.0;

/// Geometric ladder `1, 2, 4, ..., 2^10` for the `mu` sweep.
pub fn default_mu_ladder() -> Vec<f64> {
    (0..=10).map(|k| f64::from(1u32 << k)).collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PerturbationParams {
    epsilon: f64,
    mu: f64,
}

impl PerturbationParams {
    pub fn new(epsilon: f64, mu: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite() && mu > 0.0 && mu.is_finite()) {
            return Err(Error::Problem(format!(
                "perturbation needs epsilon > 0 and mu > 0, got ({epsilon}, {mu})"
            )));
        }
        Ok(PerturbationParams { epsilon, mu })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    fn exponent(&self, x: &[f64], m: usize) -> f64 {
        self.mu * x[..m].iter().map(|v| v * v).sum::<f64>() / 2.0
    }
}

/// `u + epsilon exp(mu |x_h|^2 / 2)` with `x_h` the first `m` coordinates.
pub fn perturb(u: &GridFunction, params: PerturbationParams, m: usize) -> Result<GridFunction> {
    let grid = u.grid();
    if m > grid.dim() {
        return Err(Error::Problem(format!("m = {m} exceeds grid dimension {}", grid.dim())));
    }
    let max_exponent = (0..grid.len())
        .map(|i| params.exponent(&grid.coords(i), m))
        .fold(0.0, f64::max);
    if max_exponent > MAX_EXPONENT {
        return Err(Error::Overflow { max_exponent });
    }
    Ok(u.map(|x, v| v + params.epsilon * params.exponent(x, m).exp()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrictnessLevel {
    /// `-det^(1/m)(D_X^2 u) + H^(1/m)(x, u, D_X u)`.
    DetPower,
    /// `-log det(D_X^2 u) + log H(x, u, D_X u)`.
    LogLevel,
}

#[derive(Clone, Debug, Serialize)]
pub struct StrictnessCertificate {
    pub level: StrictnessLevel,
    /// `-max` residual over the subdomain; positive.
    pub margin: f64,
    pub subdomain: BoxDomain,
    /// Node attaining the largest residual.
    pub argmax_node: usize,
    pub nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StrictnessFailure {
    /// The subdomain closure is not inside the open domain.
    SubdomainNotInterior,
    EmptySubdomain,
    /// `D_X^2 u` is not positive definite at the node.
    Infeasible { node: usize, min_eigenvalue: f64 },
    /// The largest residual is not negative.
    NotStrict { node: usize, residual: f64 },
}

impl std::fmt::Display for StrictnessFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StrictnessFailure::SubdomainNotInterior => write!(f, "subdomain closure is not inside the domain"),
            StrictnessFailure::EmptySubdomain => write!(f, "subdomain contains no interior nodes"),
            StrictnessFailure::Infeasible { node, min_eigenvalue } => {
                write!(f, "node {node} is infeasible (min eigenvalue {min_eigenvalue:e})")
            }
            StrictnessFailure::NotStrict { node, residual } => {
                write!(f, "node {node} has nonnegative residual {residual:e}")
            }
        }
    }
}

fn strictly_inside(sub: &BoxDomain, outer: &BoxDomain) -> bool {
    sub.dim() == outer.dim()
        && sub.lower.iter().zip(&outer.lower).all(|(a, b)| a > b)
        && sub.upper.iter().zip(&outer.upper).all(|(a, b)| a < b)
}

/// Residual of the chosen level at every interior node of `subdomain`.
/// Nodes where `D_X^2 u` is not positive definite yield `Err(min eigenvalue)`.
pub fn level_residuals(
    problem: &DirichletProblem,
    u: &GridFunction,
    subdomain: &BoxDomain,
    level: StrictnessLevel,
) -> (Vec<usize>, Vec<std::result::Result<f64, f64>>) {
    let grid = u.grid();
    let nodes = grid.interior_nodes_in(subdomain);
    let m = problem.m() as f64;
    let values = nodes
        .par_iter()
        .map(|&i| {
            let x = grid.coords(i);
            let (g, h) = euclid_jet(u, i).expect("interior node");
            let jet = jet_from_euclid(&problem.frame, &x, g, h);
            let lo = min_eigenvalue(&jet.s);
            if lo <= 0.0 {
                return Err(lo);
            }
            let hval = problem.hamiltonian.eval(&x, u.values()[i], jet.p.as_slice());
            Ok(match level {
                StrictnessLevel::DetPower => -det_root(&jet.s) + hval.powf(1.0 / m),
                StrictnessLevel::LogLevel => -m * det_root(&jet.s).ln() + hval.ln(),
            })
        })
        .collect();
    (nodes, values)
}

pub fn certify_strict_subsolution(
    problem: &DirichletProblem,
    u: &GridFunction,
    subdomain: &BoxDomain,
    level: StrictnessLevel,
) -> std::result::Result<StrictnessCertificate, StrictnessFailure> {
    if !strictly_inside(subdomain, problem.grid().domain()) {
        return Err(StrictnessFailure::SubdomainNotInterior);
    }
    let (nodes, values) = level_residuals(problem, u, subdomain, level);
    if nodes.is_empty() {
        return Err(StrictnessFailure::EmptySubdomain);
    }
    let mut worst = (nodes[0], f64::NEG_INFINITY);
    for (&node, v) in nodes.iter().zip(&values) {
        match *v {
            Err(min_eigenvalue) => return Err(StrictnessFailure::Infeasible { node, min_eigenvalue }),
            Ok(r) if r > worst.1 => worst = (node, r),
            Ok(_) => {}
        }
    }
    if worst.1 >= 0.0 {
        return Err(StrictnessFailure::NotStrict {
            node: worst.0,
            residual: worst.1,
        });
    }
    Ok(StrictnessCertificate {
        level,
        margin: -worst.1,
        subdomain: subdomain.clone(),
        argmax_node: worst.0,
        nodes: nodes.len(),
    })
}

/// One point of a `mu` sweep at fixed `epsilon`.
#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub mu: f64,
    /// Signed margin `-max residual`; `None` when infeasible or overflowing.
    pub margin: Option<f64>,
    pub certified: bool,
    pub note: Option<String>,
}

pub fn mu_sweep(
    problem: &DirichletProblem,
    u: &GridFunction,
    epsilon: f64,
    mus: &[f64],
    subdomain: &BoxDomain,
    level: StrictnessLevel,
) -> Result<Vec<SweepPoint>> {
    mus.iter()
        .map(|&mu| {
            let params = PerturbationParams::new(epsilon, mu)?;
            let perturbed = match perturb(u, params, problem.m()) {
                Ok(p) => p,
                Err(e @ Error::Overflow { .. }) => {
                    return Ok(SweepPoint { mu, margin: None, certified: false, note: Some(e.to_string()) })
                }
                Err(e) => return Err(e),
            };
            Ok(match certify_strict_subsolution(problem, &perturbed, subdomain, level) {
                Ok(c) => SweepPoint { mu, margin: Some(c.margin), certified: true, note: None },
                Err(StrictnessFailure::NotStrict { residual, .. }) => SweepPoint {
                    mu,
                    margin: Some(-residual),
                    certified: false,
                    note: None,
                },
                Err(f) => SweepPoint { mu, margin: None, certified: false, note: Some(f.to_string()) },
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct GradientBoundReport {
    /// `max |sigma^T Du|` over interior nodes of the subdomain.
    pub c: f64,
    pub subdomain: BoxDomain,
    pub argmax_node: Option<usize>,
    pub nodes: Vec<usize>,
    #[serde(skip)]
    pub field: Vec<f64>,
}

pub fn gradient_bound(frame: &CarnotFrame, u: &GridFunction, subdomain: &BoxDomain) -> GradientBoundReport {
    let grid = u.grid();
    let nodes = grid.interior_nodes_in(subdomain);
    let field: Vec<f64> = nodes
        .par_iter()
        .map(|&i| {
            let x = grid.coords(i);
            let (g, _) = euclid_jet(u, i).expect("interior node");
            (frame.eval_sigma(&x).transpose() * g).norm()
        })
        .collect();
    let argmax = field
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k);
    GradientBoundReport {
        c: argmax.map(|k| field[k]).unwrap_or(0.0),
        subdomain: subdomain.clone(),
        argmax_node: argmax.map(|k| nodes[k]),
        nodes,
        field,
    }
}

/// Extremes of a residual field with the nodes attaining them.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualSummary {
    pub max: f64,
    pub argmax_node: Option<usize>,
    pub min: f64,
    pub argmin_node: Option<usize>,
    pub infeasible_nodes: Vec<usize>,
}

impl ResidualSummary {
    fn of(nodes: &[usize], values: &[f64], infeasible: &[usize]) -> Self {
        let mut s = ResidualSummary {
            max: f64::NEG_INFINITY,
            argmax_node: None,
            min: f64::INFINITY,
            argmin_node: None,
            infeasible_nodes: infeasible.to_vec(),
        };
        for (&n, &v) in nodes.iter().zip(values) {
            if v.is_nan() {
                continue;
            }
            if v > s.max {
                s.max = v;
                s.argmax_node = Some(n);
            }
            if v < s.min {
                s.min = v;
                s.argmin_node = Some(n);
            }
        }
        s
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EpsilonLadderEntry {
    pub epsilon: f64,
    pub mu: f64,
    /// Det-power strictness margin of the perturbed subsolution.
    pub margin: Option<f64>,
    pub strict: bool,
    pub sup_gap: f64,
    pub boundary_gap: f64,
}

#[derive(Clone, Debug)]
pub struct ComparisonOptions {
    /// Defaults to the centered half-box.
    pub subdomain: Option<BoxDomain>,
    pub mus: Vec<f64>,
    /// Epsilon of the `mu` sweep.
    pub sweep_epsilon: f64,
    /// Epsilons of the pipeline ladder, decreasing.
    pub epsilons: Vec<f64>,
}

impl Default for ComparisonOptions {
    fn default() -> Self {
        ComparisonOptions {
            subdomain: None,
            mus: default_mu_ladder(),
            sweep_epsilon: 0.1,
            epsilons: vec![1e-1, 1e-2, 1e-3, 1e-4],
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    /// `max (u - v)` over all nodes.
    pub sup_gap: f64,
    pub argsup_node: usize,
    /// `max (u - v)^+` over boundary nodes.
    pub boundary_gap: f64,
    pub tol: f64,
    pub preconditions_met: bool,
    pub diagnostics: Vec<String>,
    /// Whether `sup_gap <= boundary_gap + tol` holds.
    pub inequality_holds: bool,
    /// `None` when the preconditions block a verdict.
    pub verdict: Option<bool>,
    pub sub_residuals: ResidualSummary,
    pub super_residuals: ResidualSummary,
    pub mu_bar: Option<f64>,
    pub mu_sweep: Vec<SweepPoint>,
    pub epsilon_ladder: Vec<EpsilonLadderEntry>,
}

fn gaps(u: &GridFunction, v: &GridFunction) -> (f64, usize, f64) {
    let grid = u.grid();
    let mut sup = (f64::NEG_INFINITY, 0);
    let mut boundary = 0.0f64;
    for (i, (a, b)) in u.values().iter().zip(v.values()).enumerate() {
        let d = a - b;
        if d > sup.0 {
            sup = (d, i);
        }
        if grid.is_boundary(i) {
            boundary = boundary.max(d);
        }
    }
    (sup.0, sup.1, boundary)
}

pub fn verify_comparison(
    problem: &DirichletProblem,
    u_sub: &GridFunction,
    v_super: &GridFunction,
    tol: f64,
) -> Result<ComparisonReport> {
    verify_comparison_with(problem, u_sub, v_super, tol, &ComparisonOptions::default())
}

/// Preconditions: `residual(u_sub) <= tol` with `u_sub` feasible, and
/// `residual(v_super) >= -tol`. Supersolution nodes outside the cone are
/// listed but do not block, since supersolutions are tested only against
/// X-convex functions.
pub fn verify_comparison_with(
    problem: &DirichletProblem,
    u_sub: &GridFunction,
    v_super: &GridFunction,
    tol: f64,
    options: &ComparisonOptions,
) -> Result<ComparisonReport> {
    if u_sub.grid() != problem.grid() || v_super.grid() != problem.grid() {
        return Err(Error::Problem("comparison pair on a different grid".into()));
    }
    let rs = residual(problem, u_sub);
    let rv = residual(problem, v_super);
    let sub_residuals = ResidualSummary::of(&rs.nodes, &rs.values, &rs.infeasible);
    let super_residuals = ResidualSummary::of(&rv.nodes, &rv.values, &rv.infeasible);
    let mut diagnostics = Vec::new();
    if !rs.infeasible.is_empty() {
        diagnostics.push(format!(
            "subsolution infeasible at {} nodes (first {})",
            rs.infeasible.len(),
            rs.infeasible[0]
        ));
    }
    if sub_residuals.max > tol {
        diagnostics.push(format!(
            "subsolution residual {:e} exceeds {tol:e} at node {}",
            sub_residuals.max,
            sub_residuals.argmax_node.unwrap_or(0)
        ));
    }
    if super_residuals.min < -tol {
        diagnostics.push(format!(
            "supersolution residual {:e} below {:e} at node {}",
            super_residuals.min,
            -tol,
            super_residuals.argmin_node.unwrap_or(0)
        ));
    }
    let preconditions_met = diagnostics.is_empty();
    if !rv.infeasible.is_empty() {
        diagnostics.push(format!(
            "supersolution outside the cone at {} nodes (not blocking)",
            rv.infeasible.len()
        ));
    }

    let (sup_gap, argsup_node, boundary_gap) = gaps(u_sub, v_super);
    let inequality_holds = sup_gap <= boundary_gap + tol;
    if preconditions_met && !inequality_holds {
        diagnostics.push("inequality fails with preconditions met: scheme artifact".into());
    }

    let subdomain = options
        .subdomain
        .clone()
        .unwrap_or_else(|| problem.grid().domain().scaled(0.5));
    let (mu_bar, sweep, ladder) = if rs.is_feasible() {
        let sweep = mu_sweep(problem, u_sub, options.sweep_epsilon, &options.mus, &subdomain, StrictnessLevel::DetPower)?;
        let mu_bar = sweep.iter().find(|p| p.certified).map(|p| p.mu);
        let mu = mu_bar.unwrap_or(options.mus[0]);
        let mut ladder = Vec::new();
        for &epsilon in &options.epsilons {
            let params = PerturbationParams::new(epsilon, mu)?;
            let Ok(perturbed) = perturb(u_sub, params, problem.m()) else { continue };
            let cert = certify_strict_subsolution(problem, &perturbed, &subdomain, StrictnessLevel::DetPower);
            let (sup_gap, _, boundary_gap) = gaps(&perturbed, v_super);
            ladder.push(EpsilonLadderEntry {
                epsilon,
                mu,
                margin: cert.as_ref().ok().map(|c| c.margin),
                strict: cert.is_ok(),
                sup_gap,
                boundary_gap,
            });
        }
        (mu_bar, sweep, ladder)
    } else {
        (None, Vec::new(), Vec::new())
    };

    Ok(ComparisonReport {
        sup_gap,
        argsup_node,
        boundary_gap,
        tol,
        preconditions_met,
        diagnostics,
        inequality_holds,
        verdict: preconditions_met.then_some(inequality_holds),
        sub_residuals,
        super_residuals,
        mu_bar,
        mu_sweep: sweep,
        epsilon_ladder: ladder,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzReport {
    pub r: f64,
    pub samples: usize,
    /// Largest sampled `|H^(1/m)(x,r,q+q1) - H^(1/m)(x,r,q)| / |q1|`.
    pub empirical: f64,
    /// `sup |grad_q H^(1/m)|` over `|q| <= R + 1`; `None` for custom `H`.
    pub analytic_estimate: Option<f64>,
}

/// Samples `x` in the box, `|r| <= R`, `|q| <= R`, `0 < |q1| <= 1`.
pub fn lipschitz_h_check(h: &Hamiltonian, domain: &BoxDomain, r_bound: f64, samples: usize, seed: u64) -> LipschitzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = h.m();
    let ball = |rng: &mut ChaCha8Rng, radius: f64| -> Vec<f64> {
        let dir: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let rad = radius * rng.random_range(0.0..=1.0f64);
        dir.iter().map(|v| v * rad / norm).collect()
    };
    let mut empirical = 0.0f64;
    let mut coeff_max = 0.0f64;
    for _ in 0..samples {
        let x: Vec<f64> = (0..domain.dim())
            .map(|k| rng.random_range(domain.lower[k]..=domain.upper[k]))
            .collect();
        let r = rng.random_range(-r_bound..=r_bound);
        let q = ball(&mut rng, r_bound);
        let q1 = ball(&mut rng, 1.0);
        let len = q1.iter().map(|v| v * v).sum::<f64>().sqrt();
        if len < 1e-9 {
            continue;
        }
        let shifted: Vec<f64> = q.iter().zip(&q1).map(|(a, b)| a + b).collect();
        let d = (h.eval_root(&x, r, &shifted) - h.eval_root(&x, r, &q)).abs() / len;
        empirical = empirical.max(d);
        let zero = vec![0.0; m];
        coeff_max = coeff_max.max(h.eval_root(&x, r, &zero));
    }
    let m_f = m as f64;
    let s_max = r_bound + 1.0;
    // radial profile of |grad_q H^(1/m)| divided by H^(1/m)(x, r, 0)
    let radial_sup = |profile: &dyn Fn(f64) -> f64| -> f64 {
        (0..=1000).map(|k| profile(s_max * k as f64 / 1000.0)).fold(0.0, f64::max)
    };
    let analytic_estimate = match h.kind() {
        HamiltonianKind::ConstantRhs { .. } => Some(0.0),
        HamiltonianKind::GaussCurvature { .. } => {
            let alpha = (m_f + 2.0) / (2.0 * m_f);
            // increasing in s, so the sup sits at s_max
            Some(coeff_max * 2.0 * alpha * s_max * (1.0 + s_max * s_max).powf(alpha - 1.0))
        }
        HamiltonianKind::PowerOfGradient { beta, .. } => {
            let alpha = beta / (2.0 * m_f);
            Some(coeff_max * radial_sup(&|s| (2.0 * alpha * s * (1.0 + s * s).powf(alpha - 1.0)).abs()))
        }
        HamiltonianKind::Custom { .. } => None,
    };
    LipschitzReport {
        r: r_bound,
        samples,
        empirical,
        analytic_estimate,
    }
}
