//! Horizontal jets of grid functions and discrete X-convexity certificates.
//!
//! The horizontal gradient is `sigma^T Du` and the symmetrized horizontal
//! Hessian is `sigma^T D^2u sigma + Q(x, Du)`, with
//! `Q_ij(x, p) = ((D sigma^j sigma^i + D sigma^i sigma^j)(x) . p) / 2`.
//! Euclidean derivatives come from second-order central differences; mixed
//! second derivatives use the four-point corner stencil.

use crate::carnot_group::CarnotFrame;
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq)]
pub struct HorizontalJet {
    /// Horizontal gradient `sigma^T Du`.
    pub p: DVector<f64>,
    /// Symmetrized horizontal Hessian.
    pub s: DMatrix<f64>,
    pub euclid_grad: DVector<f64>,
    pub euclid_hess: DMatrix<f64>,
}

/// Central-difference gradient and Hessian at an interior node.
pub fn euclid_jet(u: &GridFunction, node: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let g = u.grid();
    if node >= g.len() || g.is_boundary(node) {
        return Err(Error::BoundaryNode { node });
    }
    let v = u.values();
    let n = g.dim();
    let h = g.h();
    let c = v[node];
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    for k in 0..n {
        let s = g.stride(k);
        let (up, dn) = (v[node + s], v[node - s]);
        grad[k] = (up - dn) / (2.0 * h[k]);
        hess[(k, k)] = (up - 2.0 * c + dn) / (h[k] * h[k]);
        for l in 0..k {
            let t = g.stride(l);
            let d = (v[node + s + t] - v[node + s - t] - v[node - s + t] + v[node - s - t])
                / (4.0 * h[k] * h[l]);
            hess[(k, l)] = d;
            hess[(l, k)] = d;
        }
    }
    Ok((grad, hess))
}

/// `Q(x, p)` from precomputed `sigma(x)` and Jacobians `D sigma^j(x)`.
pub fn q_matrix_from(sigma: &DMatrix<f64>, jacobians: &[DMatrix<f64>], p: &DVector<f64>) -> DMatrix<f64> {
    let m = sigma.ncols();
    // w[j][i] = D sigma^j sigma^i . p
    let mut w = DMatrix::zeros(m, m);
    for (j, dj) in jacobians.iter().enumerate() {
        let djt_p = dj.transpose() * p;
        for i in 0..m {
            w[(j, i)] = djt_p.dot(&sigma.column(i));
        }
    }
    DMatrix::from_fn(m, m, |i, j| 0.5 * (w[(j, i)] + w[(i, j)]))
}

pub fn q_matrix(frame: &CarnotFrame, x: &[f64], p_euclid: &DVector<f64>) -> DMatrix<f64> {
    if frame.is_constant() {
        return DMatrix::zeros(frame.m(), frame.m());
    }
    q_matrix_from(
        &frame.eval_sigma(x),
        &frame.eval_sigma_jacobians(x),
        p_euclid,
    )
}

/// Assembles the horizontal jet from a Euclidean jet at point `x`.
pub fn jet_from_euclid(
    frame: &CarnotFrame,
    x: &[f64],
    euclid_grad: DVector<f64>,
    euclid_hess: DMatrix<f64>,
) -> HorizontalJet {
    let sigma = frame.eval_sigma(x);
    let p = sigma.transpose() * &euclid_grad;
    let mut s = sigma.transpose() * &euclid_hess * &sigma;
    if !frame.is_constant() {
        s += q_matrix_from(&sigma, &frame.eval_sigma_jacobians(x), &euclid_grad);
    }
    let s = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    HorizontalJet {
        p,
        s,
        euclid_grad,
        euclid_hess,
    }
}

pub fn horizontal_jet(frame: &CarnotFrame, u: &GridFunction, node: usize) -> Result<HorizontalJet> {
    let (grad, hess) = euclid_jet(u, node)?;
    let x = u.grid().coords(node);
    Ok(jet_from_euclid(frame, &x, grad, hess))
}

/// Jets at every interior node, in interior-node order.
pub fn interior_jets(frame: &CarnotFrame, u: &GridFunction) -> (Vec<usize>, Vec<HorizontalJet>) {
    let nodes = u.grid().interior_nodes();
    let jets = nodes
        .par_iter()
        .map(|&i| horizontal_jet(frame, u, i).expect("interior node"))
        .collect();
    (nodes, jets)
}

pub fn min_eigenvalue(s: &DMatrix<f64>) -> f64 {
    match s.nrows() {
        1 => s[(0, 0)],
        2 => {
            let (a, b, d) = (s[(0, 0)], s[(0, 1)], s[(1, 1)]);
            let mean = 0.5 * (a + d);
            let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            mean - r
        }
        _ => SymmetricEigen::new(s.clone()).eigenvalues.min(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexityKind {
    NotCertified,
    XConvex,
    UniformlyXConvex,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexityCertificate {
    pub kind: ConvexityKind,
    pub gamma: f64,
    pub tol_eig: f64,
    /// Global minimum of `min_eigen_field`.
    pub min_eigenvalue: f64,
    /// Node attaining the minimum (the violating node when not certified).
    pub argmin_node: usize,
    #[serde(skip)]
    pub nodes: Vec<usize>,
    #[serde(skip)]
    pub min_eigen_field: Vec<f64>,
}

/// Default eigenvalue tolerance `1e-8 (1 + max|u|) / h_min^2`.
pub fn default_tol_eig(u: &GridFunction) -> f64 {
    let h = u.grid().h().iter().cloned().fold(f64::INFINITY, f64::min);
    1e-8 * (1.0 + u.max_abs()) / (h * h)
}

/// Certifies discrete X-convexity from the smallest eigenvalue of the
/// finite-difference horizontal Hessian at each interior node.
pub fn certify_convexity(frame: &CarnotFrame, u: &GridFunction, gamma_request: f64) -> ConvexityCertificate {
    certify_convexity_with_tol(frame, u, gamma_request, default_tol_eig(u))
}

pub fn certify_convexity_with_tol(
    frame: &CarnotFrame,
    u: &GridFunction,
    gamma_request: f64,
    tol_eig: f64,
) -> ConvexityCertificate {
    let (nodes, jets) = interior_jets(frame, u);
    let field: Vec<f64> = jets.par_iter().map(|j| min_eigenvalue(&j.s)).collect();
    let (k, &min) = field
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid has interior nodes");
    let kind = if min < -tol_eig {
        ConvexityKind::NotCertified
    } else if min >= gamma_request && (gamma_request > 0.0 || min > tol_eig) {
        ConvexityKind::UniformlyXConvex
    } else {
        ConvexityKind::XConvex
    };
    ConvexityCertificate {
        kind,
        gamma: if kind == ConvexityKind::UniformlyXConvex { min } else { 0.0 },
        tol_eig,
        min_eigenvalue: min,
        argmin_node: nodes[k],
        nodes,
        min_eigen_field: field,
    }
}
