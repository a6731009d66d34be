//! Log-determinant as a minimum of affine functions of the matrix.
//!
//! For symmetric `A >= gamma I`,
//!
//! ```text
//! log det A = min { m log a - m + tr(A M) : a > 0, 0 <= M <= I/gamma, det M = a^-m }
//! ```
//!
//! attained at `M = A^-1`, `a = det(A)^(1/m)`. A pair `(M, a)` is a
//! [`BellmanControl`]; the solver's policy iteration runs over these.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

/// Relative tolerance on `det M = a^-m`.
pub const CONTROL_DET_RTOL: f64 = 1e-10;

/// Default seed for [`control_grid`] rotations.
pub const CONTROL_GRID_SEED: u64 = 0xc0_47_01;

fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect()
}

fn spectral_scale(a: &DMatrix<f64>) -> f64 {
    a.norm().max(1.0)
}

/// Checks `A >= gamma I` up to `1e-10 ||A||`, returning the smallest
/// eigenvalue on failure.
pub fn check_cone(a: &DMatrix<f64>, gamma: f64) -> Result<()> {
    let min = sym_eigenvalues(a).into_iter().fold(f64::INFINITY, f64::min);
    if min.is_nan() || min < gamma - 1e-10 * spectral_scale(a) {
        return Err(Error::Domain {
            gamma,
            min_eigenvalue: min,
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BellmanControl {
    matrix: DMatrix<f64>,
    a: f64,
}

impl BellmanControl {
    /// Validates `M` symmetric with spectrum in `[0, 1/gamma]` and
    /// `det M = a^-m`.
    pub fn new(matrix: DMatrix<f64>, a: f64, gamma: f64) -> Result<Self> {
        let m = matrix.nrows();
        if m == 0 || matrix.ncols() != m {
            return Err(Error::Control(format!(
                "control matrix must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Control(format!("a must be positive, got {a}")));
        }
        if (&matrix - matrix.transpose()).abs().max() > 1e-12 * spectral_scale(&matrix) {
            return Err(Error::Control("control matrix is not symmetric".into()));
        }
        let eig = sym_eigenvalues(&matrix);
        let tol = 1e-10 * spectral_scale(&matrix);
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        if lo < -tol || hi > 1.0 / gamma + tol {
            return Err(Error::Control(format!(
                "spectrum [{lo}, {hi}] outside [0, 1/gamma = {}]",
                1.0 / gamma
            )));
        }
        let det: f64 = eig.iter().product();
        let target = a.powi(-(m as i32));
        if (det - target).abs() > CONTROL_DET_RTOL * target {
            return Err(Error::Control(format!("det M = {det} but a^-m = {target}")));
        }
        Ok(BellmanControl { matrix, a })
    }

    /// Control with `a = det(M)^(-1/m)`; `M` must be positive definite.
    pub fn from_matrix(matrix: DMatrix<f64>, gamma: f64) -> Result<Self> {
        let m = matrix.nrows() as f64;
        let det: f64 = sym_eigenvalues(&matrix).iter().product();
        if !(det > 0.0) {
            return Err(Error::Control(format!("control matrix is singular (det {det})")));
        }
        let a = det.powf(-1.0 / m);
        Self::new(matrix, a, gamma)
    }

    /// `(M, a)` as given, without checks. Callers guarantee the invariants.
    pub(crate) fn from_parts_unchecked(matrix: DMatrix<f64>, a: f64) -> Self {
        BellmanControl { matrix, a }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `log det A` via Cholesky, together with the attaining control
/// `(A^-1, det(A)^(1/m))`.
pub fn logdet_exact(a: &DMatrix<f64>, gamma: f64) -> Result<(f64, BellmanControl)> {
    check_cone(a, gamma)?;
    let m = a.nrows();
    let chol = a.clone().cholesky().ok_or_else(|| Error::Domain {
        gamma,
        min_eigenvalue: sym_eigenvalues(a).into_iter().fold(f64::INFINITY, f64::min),
    })?;
    let l = chol.l_dirty();
    let logdet = 2.0 * (0..m).map(|i| l[(i, i)].ln()).sum::<f64>();
    let inv = chol.inverse();
    let inv = DMatrix::from_fn(m, m, |i, j| 0.5 * (inv[(i, j)] + inv[(j, i)]));
    let control = BellmanControl::from_parts_unchecked(inv, (logdet / m as f64).exp());
    Ok((logdet, control))
}

/// `m log a - m + tr(A M)`.
pub fn bellman_value(a: &DMatrix<f64>, c: &BellmanControl) -> Result<f64> {
    let m = c.dim();
    if a.nrows() != m || a.ncols() != m {
        return Err(Error::Control(format!(
            "control of dimension {m} applied to a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    let trace: f64 = a.component_mul(&c.matrix).sum();
    Ok(m as f64 * c.a.ln() - m as f64 + trace)
}

/// `det(A)^(1/m)` for a positive semidefinite `A` (zero if singular).
pub fn det_root(a: &DMatrix<f64>) -> f64 {
    let m = a.nrows() as f64;
    a.clone()
        .cholesky()
        .map(|c| {
            let l = c.l_dirty();
            (0..a.nrows()).map(|i| l[(i, i)]).product::<f64>().powf(2.0 / m)
        })
        .unwrap_or_else(|| {
            let d: f64 = sym_eigenvalues(a).iter().map(|v| v.max(0.0)).product();
            d.powf(1.0 / m)
        })
}

fn random_orthogonal(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // sign fix so the distribution is Haar
    let mut q = q;
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn rotated(r: &DMatrix<f64>, mu: &[f64]) -> DMatrix<f64> {
    let m = mu.len();
    let d = DMatrix::from_fn(m, m, |i, j| if i == j { mu[i] } else { 0.0 });
    let out = r * d * r.transpose();
    DMatrix::from_fn(m, m, |i, j| 0.5 * (out[(i, j)] + out[(j, i)]))
}

/// Number of octaves below `1/gamma` spanned by control eigenvalues.
const CONTROL_OCTAVES: usize = 12;

/// Deterministic family of feasible controls `M = R diag(mu) R^T`.
///
/// Eigenvalues lie on the ladder `(1/gamma) 2^(-k/density)`,
/// `k = 0..=12 density`. For `m = 2` rotations are a uniform angle grid of
/// `4 density` angles in `[0, pi/2)` crossed with all eigenvalue pairs; for
/// `m >= 3` rotations are seeded Haar samples. The scalar ladder
/// `M = I/gamma'` is always present.
pub fn control_grid(m: usize, gamma: f64, density: usize, seed: u64) -> Vec<BellmanControl> {
    assert!(m >= 1 && density >= 1 && gamma > 0.0);
    let levels: Vec<f64> = (0..=CONTROL_OCTAVES * density)
        .map(|k| (1.0 / gamma) * 2f64.powf(-(k as f64) / density as f64))
        .collect();
    let make = |matrix: DMatrix<f64>, mu: &[f64]| {
        let det: f64 = mu.iter().product();
        BellmanControl::from_parts_unchecked(matrix, det.powf(-1.0 / m as f64))
    };
    let mut out: Vec<BellmanControl> = levels
        .iter()
        .map(|&l| make(DMatrix::identity(m, m) * l, &vec![l; m]))
        .collect();
    match m {
        1 => {}
        2 => {
            let angles = 4 * density;
            for t in 0..angles {
                let th = std::f64::consts::FRAC_PI_2 * t as f64 / angles as f64;
                let (s, c) = th.sin_cos();
                let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
                for (i, &l1) in levels.iter().enumerate() {
                    for (j, &l2) in levels.iter().enumerate() {
                        if i == j {
                            continue; // scalar ladder already present
                        }
                        out.push(make(rotated(&r, &[l1, l2]), &[l1, l2]));
                    }
                }
            }
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let count = 256 * density * density;
            for _ in 0..count {
                let r = random_orthogonal(&mut rng, m);
                let mu: Vec<f64> = (0..m)
                    .map(|_| levels[rng.random_range(0..levels.len())])
                    .collect();
                out.push(make(rotated(&r, &mu), &mu));
            }
        }
    }
    out
}

/// Rejection sampler for feasible controls: symmetric Gaussian matrices
/// scaled to the `[0, 1/gamma]` spectral window, kept when positive definite
/// and below `I/gamma`.
pub fn sample_feasible_control(rng: &mut impl Rng, m: usize, gamma: f64) -> BellmanControl {
    loop {
        let g = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = (&g + g.transpose()) * (0.25 / gamma) + DMatrix::identity(m, m) * (0.5 / gamma);
        let eig = sym_eigenvalues(&s);
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        if lo > 1e-6 / gamma && hi <= 1.0 / gamma {
            if let Ok(c) = BellmanControl::from_matrix(s, gamma) {
                return c;
            }
        }
    }
}

/// Matrix pair of the doubling inequality
/// `-(3/eps) I <= diag(X, -Y) <= (3/eps) [[I, -I], [-I, I]]`.
#[derive(Clone, Debug)]
pub struct DoublingPair {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub epsilon: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DoublingReport {
    pub left_holds: bool,
    /// Smallest eigenvalue of `diag(X, -Y) + (3/eps) I`.
    pub left_min_eigenvalue: f64,
    pub right_holds: bool,
    /// Smallest eigenvalue of `(3/eps) [[I, -I], [-I, I]] - diag(X, -Y)`.
    pub right_min_eigenvalue: f64,
}

impl DoublingReport {
    pub fn member(&self) -> bool {
        self.left_holds && self.right_holds
    }
}

pub fn check_doubling_membership(d: &DoublingPair) -> DoublingReport {
    let n = d.x.nrows();
    assert_eq!(d.y.nrows(), n);
    let k = 3.0 / d.epsilon;
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&d.x);
    block.view_mut((n, n), (n, n)).copy_from(&(-&d.y));
    let left = &block + DMatrix::identity(2 * n, 2 * n) * k;
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, i)] = k;
        j[(n + i, n + i)] = k;
        j[(i, n + i)] = -k;
        j[(n + i, i)] = -k;
    }
    let right = j - &block;
    let lmin = sym_eigenvalues(&left).into_iter().fold(f64::INFINITY, f64::min);
    let rmin = sym_eigenvalues(&right).into_iter().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * (k + block.norm());
    DoublingReport {
        left_holds: lmin >= -tol,
        left_min_eigenvalue: lmin,
        right_holds: rmin >= -tol,
        right_min_eigenvalue: rmin,
    }
}
