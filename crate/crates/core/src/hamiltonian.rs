//! Positive Hamiltonians `H(x, r, q)` with `r` the solution value and `q`
//! the horizontal gradient.

use crate::error::{Error, Result};
use crate::expr::{Bindings, Expr};
use crate::grid::BoxDomain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Debug)]
pub enum HamiltonianKind {
    /// `k(x) (1 + |q|^2)^((m + 2) / 2)`, prescribed horizontal Gauss curvature.
    GaussCurvature { k: Expr },
    /// `f(x) (1 + |q|^2)^(beta / 2)`.
    PowerOfGradient { f: Expr, beta: f64 },
    /// `f(x)`.
    ConstantRhs { f: Expr },
    /// Arbitrary expression in `x1..xn`, `u`, `q1..qm`.
    Custom { expr: Expr },
}

#[derive(Clone, Debug)]
pub struct Hamiltonian {
    kind: HamiltonianKind,
    n: usize,
    m: usize,
    monotone_in_u: bool,
}

/// Outcome of the construction-time sampling checks.
#[derive(Clone, Debug, Serialize)]
pub struct HamiltonianSampling {
    pub samples: usize,
    pub min_value: f64,
    pub monotone_in_u: bool,
}

const CHECK_SAMPLES: usize = 2000;
const CHECK_SEED: u64 = 0x4a41_4d31;

impl Hamiltonian {
    /// Builds the Hamiltonian and samples `box x [-r_bound, r_bound] x
    /// {|q| <= r_bound}` to check positivity and monotonicity in `r`.
    pub fn new(kind: HamiltonianKind, domain: &BoxDomain, m: usize, r_bound: f64) -> Result<Self> {
        let n = domain.dim();
        match &kind {
            HamiltonianKind::GaussCurvature { k } => k.check_vars(n, 0, false)?,
            HamiltonianKind::PowerOfGradient { f, beta } => {
                f.check_vars(n, 0, false)?;
                if !beta.is_finite() {
                    return Err(Error::Hamiltonian(format!("beta must be finite, got {beta}")));
                }
            }
            HamiltonianKind::ConstantRhs { f } => f.check_vars(n, 0, false)?,
            HamiltonianKind::Custom { expr } => expr.check_vars(n, m, true)?,
        }
        let mut h = Hamiltonian {
            kind,
            n,
            m,
            monotone_in_u: true,
        };
        let s = h.sample_checks(domain, r_bound)?;
        h.monotone_in_u = s.monotone_in_u;
        Ok(h)
    }

    fn sample_checks(&self, domain: &BoxDomain, r_bound: f64) -> Result<HamiltonianSampling> {
        let mut rng = ChaCha8Rng::seed_from_u64(CHECK_SEED);
        let mut min_value = f64::INFINITY;
        let mut monotone = true;
        let uses_u = matches!(&self.kind, HamiltonianKind::Custom { expr } if expr.uses_u());
        for s in 0..CHECK_SAMPLES {
            // include the box corners' center and zero gradient first
            let x: Vec<f64> = if s == 0 {
                domain.center()
            } else {
                (0..self.n)
                    .map(|k| rng.random_range(domain.lower[k]..=domain.upper[k]))
                    .collect()
            };
            let q: Vec<f64> = if s == 0 {
                vec![0.0; self.m]
            } else {
                let dir: Vec<f64> = (0..self.m).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                let rad = r_bound * rng.random_range(0.0..=1.0f64);
                dir.iter().map(|v| v * rad / norm).collect()
            };
            let r1 = rng.random_range(-r_bound..=r_bound);
            let v1 = self.eval(&x, r1, &q);
            if !(v1 > 0.0 && v1.is_finite()) {
                return Err(Error::Hamiltonian(format!(
                    "H must be positive and finite: H(x = {x:?}, u = {r1}, q = {q:?}) = {v1}"
                )));
            }
            min_value = min_value.min(v1);
            if uses_u {
                let r2 = rng.random_range(r1..=r_bound);
                let v2 = self.eval(&x, r2, &q);
                if v2 < v1 * (1.0 - 1e-12) {
                    monotone = false;
                }
            }
        }
        if !monotone {
            return Err(Error::Hamiltonian(
                "H must be nondecreasing in u (sampled violation)".into(),
            ));
        }
        Ok(HamiltonianSampling {
            samples: CHECK_SAMPLES,
            min_value,
            monotone_in_u: monotone,
        })
    }

    pub fn kind(&self) -> &HamiltonianKind {
        &self.kind
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn monotone_in_u(&self) -> bool {
        self.monotone_in_u
    }

    /// Whether `H` depends on the gradient slot.
    pub fn depends_on_q(&self) -> bool {
        match &self.kind {
            HamiltonianKind::GaussCurvature { .. } => true,
            HamiltonianKind::PowerOfGradient { beta, .. } => *beta != 0.0,
            HamiltonianKind::ConstantRhs { .. } => false,
            HamiltonianKind::Custom { expr } => expr.uses_q(),
        }
    }

    pub fn eval(&self, x: &[f64], r: f64, q: &[f64]) -> f64 {
        let q2: f64 = q.iter().map(|v| v * v).sum();
        match &self.kind {
            HamiltonianKind::GaussCurvature { k } => {
                k.eval_x(x) * (1.0 + q2).powf((self.m as f64 + 2.0) / 2.0)
            }
            HamiltonianKind::PowerOfGradient { f, beta } => {
                f.eval_x(x) * (1.0 + q2).powf(beta / 2.0)
            }
            HamiltonianKind::ConstantRhs { f } => f.eval_x(x),
            HamiltonianKind::Custom { expr } => expr.eval(&Bindings { x, u: r, q }),
        }
    }

    /// `H^(1/m)`.
    pub fn eval_root(&self, x: &[f64], r: f64, q: &[f64]) -> f64 {
        self.eval(x, r, q).powf(1.0 / self.m as f64)
    }

    pub fn eval_log(&self, x: &[f64], r: f64, q: &[f64]) -> f64 {
        self.eval(x, r, q).ln()
    }

    /// Gradient of `log H` in `q`, by central differences for custom
    /// expressions and in closed form otherwise.
    pub fn grad_q_log(&self, x: &[f64], r: f64, q: &[f64]) -> Vec<f64> {
        let q2: f64 = q.iter().map(|v| v * v).sum();
        let power = match &self.kind {
            HamiltonianKind::GaussCurvature { .. } => (self.m as f64 + 2.0) / 2.0,
            HamiltonianKind::PowerOfGradient { beta, .. } => beta / 2.0,
            HamiltonianKind::ConstantRhs { .. } => 0.0,
            HamiltonianKind::Custom { .. } => {
                let mut qq = q.to_vec();
                return (0..q.len())
                    .map(|i| {
                        let step = 1e-6 * (1.0 + q[i].abs());
                        qq[i] = q[i] + step;
                        let up = self.eval_log(x, r, &qq);
                        qq[i] = q[i] - step;
                        let dn = self.eval_log(x, r, &qq);
                        qq[i] = q[i];
                        (up - dn) / (2.0 * step)
                    })
                    .collect();
            }
        };
        q.iter().map(|v| 2.0 * power * v / (1.0 + q2)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> BoxDomain {
        BoxDomain::cube(3, 1.0)
    }

    #[test]
    fn gauss_curvature_values() {
        let k = Expr::parse("(1 + x1^2 + x2^2)^(-2)").unwrap();
        let h = Hamiltonian::new(HamiltonianKind::GaussCurvature { k }, &cube(), 2, 5.0).unwrap();
        // manufactured: q = (x1, x2) gives H = 1
        let x = [0.3, -0.4, 0.9];
        assert!((h.eval(&x, 0.0, &[0.3, -0.4]) - 1.0).abs() < 1e-14);
        assert!((h.eval_root(&x, 0.0, &[0.0, 0.0]) - 1.0 / 1.25).abs() < 1e-14);
        assert!(h.depends_on_q());
        assert!(h.monotone_in_u());
    }

    #[test]
    fn rejects_nonpositive() {
        let k = Expr::parse("-1").unwrap();
        let err = Hamiltonian::new(HamiltonianKind::GaussCurvature { k }, &cube(), 2, 1.0).unwrap_err();
        assert!(err.to_string().contains("positive"), "{err}");
        let f = Expr::parse("x1").unwrap();
        assert!(Hamiltonian::new(HamiltonianKind::ConstantRhs { f }, &cube(), 2, 1.0).is_err());
    }

    #[test]
    fn rejects_decreasing_in_u() {
        let expr = Expr::parse("exp(-u)").unwrap();
        assert!(Hamiltonian::new(HamiltonianKind::Custom { expr }, &cube(), 2, 1.0).is_err());
        let expr = Expr::parse("exp(u) * (1 + q1^2)").unwrap();
        let h = Hamiltonian::new(HamiltonianKind::Custom { expr }, &cube(), 2, 1.0).unwrap();
        assert!(h.monotone_in_u());
    }

    #[test]
    fn grad_q_log_closed_form_matches_differences() {
        let k = Expr::parse("2 + x3").unwrap();
        let gc = Hamiltonian::new(HamiltonianKind::GaussCurvature { k }, &cube(), 2, 1.0).unwrap();
        let expr = Expr::parse("(2 + x3) * (1 + q1^2 + q2^2)^2").unwrap();
        let custom = Hamiltonian::new(HamiltonianKind::Custom { expr }, &cube(), 2, 1.0).unwrap();
        let (x, q) = ([0.1, 0.2, 0.3], [0.7, -1.1]);
        let a = gc.grad_q_log(&x, 0.0, &q);
        let b = custom.grad_q_log(&x, 0.0, &q);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-7);
        }
    }
}
