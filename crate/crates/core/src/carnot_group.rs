//! Homogeneous Carnot group structure: layers, dilations and the generator
//! frame `sigma(x)`.
//!
//! A frame is the `n x m` matrix whose column `j` holds the coefficients of
//! the vector field `X_j`. The first `m` rows are the identity; every entry
//! below is a polynomial `sigma_ij(x_1, ..., x_{i-1})` homogeneous of weighted
//! degree `w_i - 1`, where `w_i` is the layer of coordinate `i`.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::poly::Polynomial;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSignature {
    layer_dims: Vec<usize>,
}

impl LayerSignature {
    pub fn new(layer_dims: Vec<usize>) -> Result<Self> {
        if layer_dims.is_empty() {
            return Err(Error::Frame("at least one layer required".into()));
        }
        if layer_dims.contains(&0) {
            return Err(Error::Frame(format!(
                "layer dimensions must be positive, got {layer_dims:?}"
            )));
        }
        Ok(LayerSignature { layer_dims })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    /// Total dimension.
    pub fn n(&self) -> usize {
        self.layer_dims.iter().sum()
    }

    /// Number of generators (first layer dimension).
    pub fn m(&self) -> usize {
        self.layer_dims[0]
    }

    /// Step of the group.
    pub fn step(&self) -> usize {
        self.layer_dims.len()
    }

    /// Dilation weight (1-based layer index) of each coordinate.
    pub fn weights(&self) -> Vec<u32> {
        self.layer_dims
            .iter()
            .enumerate()
            .flat_map(|(k, &d)| std::iter::repeat_n(k as u32 + 1, d))
            .collect()
    }
}

/// Anisotropic dilation `delta_lambda`, scaling layer `k` by `lambda^k`.
#[derive(Clone, Debug)]
pub struct Dilation {
    pub lambda: f64,
    pub signature: LayerSignature,
}

impl Dilation {
    pub fn new(lambda: f64, signature: LayerSignature) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Frame(format!("dilation factor must be positive, got {lambda}")));
        }
        Ok(Dilation { lambda, signature })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.signature.weights())
            .map(|(xi, w)| xi * self.lambda.powi(w as i32))
            .collect()
    }

    pub fn inverse(&self) -> Dilation {
        Dilation {
            lambda: 1.0 / self.lambda,
            signature: self.signature.clone(),
        }
    }
}

/// Polynomial vector field `sum_k coeffs[k] d/dx_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub coeffs: Vec<Polynomial>,
}

impl VectorField {
    /// The coordinate field `d/dx_{k+1}` on `R^n`.
    pub fn coordinate(n: usize, k: usize) -> Self {
        let coeffs = (0..n)
            .map(|i| Polynomial::constant(n, if i == k { 1.0 } else { 0.0 }))
            .collect();
        VectorField { coeffs }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    /// Directional derivative `X f`.
    pub fn apply(&self, f: &Polynomial) -> Polynomial {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .fold(Polynomial::zero(self.dim()), |acc, (k, c)| {
                &acc + &(c * &f.derivative(k))
            })
    }

    /// Lie bracket `[self, other] = self(other_k) - other(self_k)` componentwise.
    pub fn bracket(&self, other: &VectorField) -> VectorField {
        let coeffs = (0..self.dim())
            .map(|k| &self.apply(&other.coeffs[k]) - &other.apply(&self.coeffs[k]))
            .collect();
        VectorField { coeffs }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Polynomial::is_zero)
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.coeffs.iter().map(|c| c.eval(x)))
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match c.as_constant() {
                Some(1.0) => write!(f, "d/dx{}", k + 1)?,
                _ => write!(f, "({c}) d/dx{}", k + 1)?,
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Generator frame of a homogeneous Carnot group.
#[derive(Clone, Debug)]
pub struct CarnotFrame {
    name: String,
    signature: LayerSignature,
    // sigma[i][j], full n x m including the identity block
    sigma: Vec<Vec<Polynomial>>,
    // jac[j][k][l] = d sigma_kj / d x_l
    jac: Vec<Vec<Vec<Polynomial>>>,
}

impl CarnotFrame {
    /// Builds a frame without structural validation. `entries` maps 1-based
    /// `(i, j)` with `m < i <= n`, `1 <= j <= m` to `sigma_ij`; missing
    /// entries are zero.
    pub fn from_raw(
        name: impl Into<String>,
        signature: LayerSignature,
        entries: impl IntoIterator<Item = ((usize, usize), Polynomial)>,
    ) -> Result<Self> {
        let (n, m) = (signature.n(), signature.m());
        let mut sigma: Vec<Vec<Polynomial>> = (0..n)
            .map(|i| {
                (0..m)
                    .map(|j| Polynomial::constant(n, if i == j { 1.0 } else { 0.0 }))
                    .collect()
            })
            .collect();
        for ((i, j), p) in entries {
            if !(i > m && i <= n && j >= 1 && j <= m) {
                return Err(Error::Frame(format!(
                    "sigma[{i},{j}] outside the free block (rows {}..={n}, columns 1..={m})",
                    m + 1
                )));
            }
            if p.nvars() != n {
                return Err(Error::Frame(format!(
                    "sigma[{i},{j}] has {} variables, expected {n}",
                    p.nvars()
                )));
            }
            sigma[i - 1][j - 1] = p;
        }
        let jac = (0..m)
            .map(|j| {
                (0..n)
                    .map(|k| (0..n).map(|l| sigma[k][j].derivative(l)).collect())
                    .collect()
            })
            .collect();
        Ok(CarnotFrame {
            name: name.into(),
            signature,
            sigma,
            jac,
        })
    }

    /// Builds a frame and rejects it unless every [`validate_frame`] check passes.
    pub fn new(
        name: impl Into<String>,
        signature: LayerSignature,
        entries: impl IntoIterator<Item = ((usize, usize), Polynomial)>,
    ) -> Result<Self> {
        let frame = Self::from_raw(name, signature, entries)?;
        let report = validate_frame(&frame);
        if !report.passed() {
            return Err(Error::Frame(report.failure_summary()));
        }
        Ok(frame)
    }

    /// Flat Euclidean frame on `R^n` (single layer, `sigma = I`).
    pub fn euclidean(n: usize) -> Self {
        Self::from_raw(
            format!("euclidean{n}"),
            LayerSignature::new(vec![n]).expect("n >= 1"),
            [],
        )
        .expect("identity frame")
    }

    /// Heisenberg group `H^k` on `R^{2k+1}` with
    /// `X_j = d_j - x_{j+k}/2 d_{2k+1}` and `X_{j+k} = d_{j+k} + x_j/2 d_{2k+1}`.
    pub fn heisenberg(k: usize) -> Self {
        assert!(k >= 1);
        let n = 2 * k + 1;
        let entries = (1..=k).flat_map(|j| {
            [
                ((n, j), Polynomial::var(n, j + k - 1).scale(-0.5)),
                ((n, j + k), Polynomial::var(n, j - 1).scale(0.5)),
            ]
        });
        Self::from_raw(
            format!("heisenberg{k}"),
            LayerSignature::new(vec![2 * k, 1]).unwrap(),
            entries.collect::<Vec<_>>(),
        )
        .expect("Heisenberg frame")
    }

    /// Built-in frames: `euclidean<n>` and `heisenberg<k>`.
    pub fn builtin(name: &str) -> Option<Self> {
        if let Some(n) = name.strip_prefix("euclidean") {
            return n.parse().ok().filter(|&n| n >= 1).map(Self::euclidean);
        }
        if let Some(k) = name.strip_prefix("heisenberg") {
            return k.parse().ok().filter(|&k| k >= 1).map(Self::heisenberg);
        }
        None
    }

    /// Parses the frame file format:
    ///
    /// ```toml
    /// name = "heisenberg1"
    /// layers = [2, 1]
    ///
    /// [sigma]
    /// "3,1" = "-x2/2"
    /// "3,2" = "x1/2"
    /// ```
    ///
    /// The result is not validated; call [`validate_frame`] or use
    /// [`CarnotFrame::new`]-style checks on it.
    pub fn parse_file(text: &str, path: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct FrameFile {
            name: String,
            layers: Vec<usize>,
            #[serde(default)]
            sigma: BTreeMap<String, toml::Spanned<String>>,
        }
        let spec_err = |line: usize, message: String| Error::Spec {
            path: path.to_string(),
            line,
            message,
        };
        let file: FrameFile = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
            spec_err(line, e.message().to_string())
        })?;
        let signature =
            LayerSignature::new(file.layers).map_err(|e| spec_err(0, e.to_string()))?;
        let n = signature.n();
        let mut entries = Vec::new();
        for (key, value) in &file.sigma {
            let line = line_of(text, value.span().start);
            let (i, j) = parse_index(key)
                .ok_or_else(|| spec_err(line, format!("bad sigma key '{key}', expected \"i,j\"")))?;
            let poly = Expr::parse(value.get_ref())
                .and_then(|e| e.to_polynomial(n))
                .map_err(|e| spec_err(line, format!("sigma[{key}]: {e}")))?;
            entries.push(((i, j), poly));
        }
        Self::from_raw(file.name, signature, entries).map_err(|e| spec_err(0, e.to_string()))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn signature(&self) -> &LayerSignature {
        &self.signature
    }

    pub fn n(&self) -> usize {
        self.signature.n()
    }

    pub fn m(&self) -> usize {
        self.signature.m()
    }

    /// Polynomial entry `sigma_ij` (zero-based).
    pub fn sigma_entry(&self, i: usize, j: usize) -> &Polynomial {
        &self.sigma[i][j]
    }

    /// Generator `X_{j+1}` as a vector field.
    pub fn generator(&self, j: usize) -> VectorField {
        VectorField {
            coeffs: (0..self.n()).map(|i| self.sigma[i][j].clone()).collect(),
        }
    }

    pub fn eval_sigma(&self, x: &[f64]) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        DMatrix::from_fn(n, m, |i, j| {
            if i < m {
                if i == j {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.sigma[i][j].eval(x)
            }
        })
    }

    /// `D sigma^j(x)` for each column `j`, entry `(k, l) = d sigma_kj / d x_l`.
    pub fn eval_sigma_jacobians(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let n = self.n();
        self.jac
            .iter()
            .map(|jj| DMatrix::from_fn(n, n, |k, l| jj[k][l].eval(x)))
            .collect()
    }

    /// Whether every Jacobian vanishes identically (constant frame).
    pub fn is_constant(&self) -> bool {
        self.jac
            .iter()
            .all(|jj| jj.iter().all(|row| row.iter().all(Polynomial::is_zero)))
    }
}

fn parse_index(key: &str) -> Option<(usize, usize)> {
    let (a, b) = key.split_once(',')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

pub(crate) fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// One structural check of [`validate_frame`].
#[derive(Clone, Debug, Serialize)]
pub struct FrameCheck {
    pub name: String,
    pub passed: bool,
    pub details: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FrameReport {
    pub frame: String,
    pub n: usize,
    pub m: usize,
    pub checks: Vec<FrameCheck>,
    /// Nonzero brackets up to the group step, printed symbolically.
    pub brackets: Vec<(String, String)>,
    /// Sample points for the rank check, with the rank observed at each.
    pub rank_samples: Vec<(Vec<f64>, usize)>,
}

impl FrameReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&FrameCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failure_summary(&self) -> String {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} failed: {}", c.name, c.details.join("; ")))
            .collect::<Vec<_>>()
            .join(" | ")
    }
}

pub const CHECK_TRIANGULAR: &str = "triangular";
pub const CHECK_HOMOGENEOUS: &str = "homogeneous";
pub const CHECK_RANK: &str = "hormander_rank";

const RANK_SAMPLE_SEED: u64 = 0x5eed_f4a3;
const RANK_SAMPLES: usize = 8;

/// Checks triangular dependence, dilation homogeneity (with the degree bound
/// `n - m`) and the Hörmander rank condition at the origin plus seeded
/// pseudo-random sample points.
pub fn validate_frame(frame: &CarnotFrame) -> FrameReport {
    let (n, m) = (frame.n(), frame.m());
    let weights = frame.signature.weights();

    let mut tri = Vec::new();
    let mut hom = Vec::new();
    for i in m..n {
        for j in 0..m {
            let p = &frame.sigma[i][j];
            if let Some(v) = (i..n).find(|&v| p.depends_on(v)) {
                tri.push(format!(
                    "sigma[{},{}] depends on x{} (allowed x1..x{})",
                    i + 1,
                    j + 1,
                    v + 1,
                    i
                ));
            }
            if p.is_zero() {
                continue;
            }
            let target = weights[i] - 1;
            let degs = p.weighted_degrees(&weights);
            if degs != [target] {
                hom.push(format!(
                    "sigma[{},{}] = {p} has weighted degrees {degs:?}, expected {target}",
                    i + 1,
                    j + 1
                ));
            }
            if p.degree() as usize > n - m {
                hom.push(format!(
                    "sigma[{},{}] has degree {} > n - m = {}",
                    i + 1,
                    j + 1,
                    p.degree(),
                    n - m
                ));
            }
        }
    }

    // iterated brackets up to the step (at least 2 so rank deficiency is visible)
    let depth = frame.signature.step().max(2);
    let gens: Vec<VectorField> = (0..m).map(|j| frame.generator(j)).collect();
    let mut fields: Vec<(String, VectorField)> = gens
        .iter()
        .enumerate()
        .map(|(j, g)| (format!("X{}", j + 1), g.clone()))
        .collect();
    let mut level = fields.clone();
    let mut brackets = Vec::new();
    for _ in 1..depth {
        let mut next = Vec::new();
        for (j, g) in gens.iter().enumerate() {
            for (label, f) in &level {
                let b = g.bracket(f);
                if b.is_zero() {
                    continue;
                }
                let name = format!("[X{},{}]", j + 1, label);
                brackets.push((name.clone(), b.to_string()));
                next.push((name, b));
            }
        }
        fields.extend(next.iter().cloned());
        level = next;
        if level.is_empty() {
            break;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(RANK_SAMPLE_SEED);
    let mut points = vec![vec![0.0; n]];
    for _ in 0..RANK_SAMPLES {
        points.push((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
    }
    let mut rank_samples = Vec::new();
    let mut rank_fail = Vec::new();
    for x in points {
        let cols: Vec<DVector<f64>> = fields.iter().map(|(_, f)| f.eval(&x)).collect();
        let mat = DMatrix::from_columns(&cols);
        let rank = mat.rank(1e-9 * mat.norm().max(1.0));
        if rank < n {
            rank_fail.push(format!("rank {rank} < {n} at x = {x:?}"));
        }
        rank_samples.push((x, rank));
    }

    let mk = |name: &str, details: Vec<String>| FrameCheck {
        name: name.into(),
        passed: details.is_empty(),
        details,
    };
    FrameReport {
        frame: frame.name.clone(),
        n,
        m,
        checks: vec![
            mk(CHECK_TRIANGULAR, tri),
            mk(CHECK_HOMOGENEOUS, hom),
            mk(CHECK_RANK, rank_fail),
        ],
        brackets,
        rank_samples,
    }
}
