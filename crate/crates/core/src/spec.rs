//! Problem specification files (TOML).
//!
//! ```toml
//! name = "heisenberg-gauss-manufactured"
//! frame = "heisenberg1"          # or frame_file = "my_frame.toml"
//! box_lower = [-1, -1, -1]
//! box_upper = [1, 1, 1]
//! resolution = 33                # nodes per axis, or one entry per axis
//! gamma_floor = 1e-3
//! tol = 1e-6
//! max_iter = 50
//! seed = 1
//! boundary = "(x1^2 + x2^2)/2"
//! exact = "(x1^2 + x2^2)/2"      # optional
//!
//! [hamiltonian]
//! kind = "gauss_curvature"       # power_of_gradient, constant_rhs, custom
//! k = "(1 + x1^2 + x2^2)^(-2)"
//! ```
//!
//! Optional tables `[output]`, `[certify]`, `[compare]` and `[sweep]` tune
//! the individual commands. Keys may be overridden with dotted paths such
//! as `hamiltonian.k=2` or `resolution=17`.

use crate::carnot_group::{line_of, validate_frame, CarnotFrame};
use crate::comparison::{default_mu_ladder, StrictnessLevel};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{BoxDomain, Grid, GridFunction};
use crate::hamiltonian::{Hamiltonian, HamiltonianKind};
use crate::io::FloatEncoding;
use crate::solver::{DirichletProblem, SolverConfig};
use serde::{Deserialize, Deserializer, Serialize};
use std::path::{Path, PathBuf};

/// Specs shipped with the crate, addressed as `builtin:<name>`.
pub const BUILTIN_SPECS: &[(&str, &str)] = &[
    (
        "heisenberg-gauss-manufactured",
        include_str!("../fixtures/heisenberg-gauss-manufactured.toml"),
    ),
    ("euclidean-quadratic", include_str!("../fixtures/euclidean-quadratic.toml")),
];

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum Resolution {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

/// Expression source given as a string or a bare number.
#[derive(Deserialize)]
#[serde(untagged)]
enum ExprText {
    Text(String),
    Int(i64),
    Float(f64),
}

impl From<ExprText> for String {
    fn from(e: ExprText) -> String {
        match e {
            ExprText::Text(s) => s,
            ExprText::Int(i) => i.to_string(),
            ExprText::Float(f) => format!("{f:?}"),
        }
    }
}

fn expr_text<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    ExprText::deserialize(d).map(String::from)
}

fn opt_expr_text<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<String>, D::Error> {
    Option::<ExprText>::deserialize(d).map(|o| o.map(String::from))
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    name: String,
    frame: Option<String>,
    frame_file: Option<String>,
    box_lower: Vec<f64>,
    box_upper: Vec<f64>,
    resolution: Resolution,
    #[serde(default = "default_gamma_floor")]
    gamma_floor: f64,
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default = "default_max_iter")]
    max_iter: usize,
    #[serde(default)]
    seed: u64,
    #[serde(deserialize_with = "expr_text")]
    boundary: String,
    #[serde(default, deserialize_with = "opt_expr_text")]
    exact: Option<String>,
    hamiltonian: RawHamiltonian,
    #[serde(default)]
    output: OutputOptions,
    #[serde(default)]
    certify: CertifyOptions,
    #[serde(default)]
    compare: CompareOptions,
    #[serde(default)]
    sweep: SweepOptions,
}

fn default_gamma_floor() -> f64 {
    1e-3
}

fn default_tol() -> f64 {
    1e-6
}

fn default_max_iter() -> usize {
    50
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHamiltonian {
    kind: String,
    #[serde(default, deserialize_with = "opt_expr_text")]
    k: Option<String>,
    #[serde(default, deserialize_with = "opt_expr_text")]
    f: Option<String>,
    beta: Option<f64>,
    #[serde(default, deserialize_with = "opt_expr_text")]
    expr: Option<String>,
    /// Bound on `|u|` and `|q|` for the sampling checks.
    #[serde(default = "default_r_bound")]
    r_bound: f64,
}

fn default_r_bound() -> f64 {
    10.0
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputOptions {
    pub encoding: FloatEncoding,
    /// Levels of the level-set polylines on the central `x1`-`x2` slice.
    pub contour_levels: usize,
}

impl Default for OutputOptions {
    fn default() -> Self {
        OutputOptions {
            encoding: FloatEncoding::Decimal,
            contour_levels: 8,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyOptions {
    /// Requested uniform-convexity constant.
    pub gamma: f64,
    /// Side of the centered subdomain relative to the box.
    pub subdomain_scale: f64,
    /// Bound on `|u|` and `|q|` for the Lipschitz sampling in `q`.
    pub lipschitz_r: f64,
    pub lipschitz_samples: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            gamma: 0.0,
            subdomain_scale: 0.5,
            lipschitz_r: 1.0,
            lipschitz_samples: 2000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparePair {
    /// The solution against itself.
    Identity,
    /// Solution with boundary data lowered by `shift` against the solution.
    BoundaryShift,
    /// Solution with boundary data lowered by a bump against the solution.
    BoundaryBump,
    /// Solution plus an interior bump against the solution; fails the
    /// subsolution precondition.
    InteriorBump,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareOptions {
    pub pair: ComparePair,
    pub shift: f64,
    pub bump_height: f64,
    pub bump_width: f64,
    /// Bump center; defaults to the upper corner for boundary bumps and the
    /// box center for interior bumps.
    pub bump_center: Option<Vec<f64>>,
    /// Precondition tolerance as a multiple of the solver tolerance.
    pub tol_factor: f64,
    pub subdomain_scale: f64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            pair: ComparePair::BoundaryShift,
            shift: 0.1,
            bump_height: 0.05,
            bump_width: 0.5,
            bump_center: None,
            tol_factor: 10.0,
            subdomain_scale: 0.5,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOptions {
    pub epsilon: f64,
    pub mus: Vec<f64>,
    pub level: StrictnessLevel,
    pub subdomain_scale: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            epsilon: 0.1,
            mus: default_mu_ladder(),
            level: StrictnessLevel::DetPower,
            subdomain_scale: 0.5,
        }
    }
}

/// Parsed and validated problem specification.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub name: String,
    pub source: String,
    pub problem: DirichletProblem,
    pub solver: SolverConfig,
    pub boundary: Expr,
    pub exact: Option<Expr>,
    pub output: OutputOptions,
    pub certify: CertifyOptions,
    pub compare: CompareOptions,
    pub sweep: SweepOptions,
}

impl ProblemSpec {
    pub fn exact_grid(&self) -> Option<GridFunction> {
        self.exact
            .as_ref()
            .map(|e| GridFunction::from_fn(self.problem.grid().clone(), |x| e.eval_x(x)))
    }
}

/// Reads spec text from a path or a `builtin:<name>` reference.
pub fn load_spec_text(spec: &str) -> Result<(String, Option<PathBuf>)> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return BUILTIN_SPECS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| (text.to_string(), None))
            .ok_or_else(|| {
                let names: Vec<_> = BUILTIN_SPECS.iter().map(|(n, _)| *n).collect();
                Error::Spec {
                    path: spec.into(),
                    line: 0,
                    message: format!("unknown builtin spec; available: {}", names.join(", ")),
                }
            });
    }
    let path = PathBuf::from(spec);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok((text, Some(path)))
}

/// Line of the first `key = ...` assignment, or 0 when absent.
fn key_line(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let t = l.trim_start();
            t.strip_prefix(key)
                .map(|rest| rest.trim_start().starts_with('='))
                .unwrap_or(false)
        })
        .map(|k| k + 1)
        .unwrap_or(0)
}

fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::Spec {
            path: "--set".into(),
            line: 0,
            message: format!("{key}: {part} is not a table"),
        })?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_override_value(raw));
    Ok(())
}

/// Parses, applies `key=value` overrides and validates.
pub fn parse_spec(text: &str, path: &str, base_dir: Option<&Path>, overrides: &[(String, String)]) -> Result<ProblemSpec> {
    let spec_err = |line: usize, message: String| Error::Spec {
        path: path.into(),
        line,
        message,
    };
    let raw: RawSpec = if overrides.is_empty() {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
            spec_err(line, e.message().to_string())
        })?
    } else {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
            spec_err(line, e.message().to_string())
        })?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        RawSpec::deserialize(table).map_err(|e| spec_err(0, format!("{} (after overrides)", e.message())))?
    };
    let at = |key: &str, message: String| spec_err(key_line(text, key), message);

    let frame = match (&raw.frame, &raw.frame_file) {
        (Some(name), None) => CarnotFrame::builtin(name)
            .ok_or_else(|| at("frame", format!("unknown frame {name:?} (use euclidean<n> or heisenberg<k>)")))?,
        (None, Some(file)) => {
            let p = base_dir.map(|d| d.join(file)).unwrap_or_else(|| PathBuf::from(file));
            let ftext = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            CarnotFrame::parse_file(&ftext, &p.display().to_string())?
        }
        _ => return Err(at("frame", "exactly one of frame and frame_file is required".into())),
    };
    let report = validate_frame(&frame);
    if !report.passed() {
        let key = if raw.frame.is_some() { "frame" } else { "frame_file" };
        return Err(at(key, format!("frame {} is invalid: {}", frame.name(), report.failure_summary())));
    }

    let domain = BoxDomain::new(raw.box_lower.clone(), raw.box_upper.clone())
        .map_err(|e| at("box_lower", e.to_string()))?;
    if domain.dim() != frame.n() {
        return Err(at(
            "box_lower",
            format!("box has dimension {} but the frame has n = {}", domain.dim(), frame.n()),
        ));
    }
    let resolution = match raw.resolution {
        Resolution::Uniform(k) => vec![k; domain.dim()],
        Resolution::PerAxis(v) => v,
    };
    let grid = Grid::new(domain, resolution).map_err(|e| at("resolution", e.to_string()))?;

    if !(raw.gamma_floor > 0.0 && raw.gamma_floor.is_finite()) {
        return Err(at("gamma_floor", format!("gamma_floor must be positive, got {}", raw.gamma_floor)));
    }
    if !(raw.tol > 0.0) {
        return Err(at("tol", format!("tol must be positive, got {}", raw.tol)));
    }

    let n = frame.n();
    let m = frame.m();
    let parse_x = |key: &str, src: &str| -> Result<Expr> {
        let e = Expr::parse(src).map_err(|e| at(key, e.to_string()))?;
        e.check_vars(n, 0, false).map_err(|e| at(key, e.to_string()))?;
        Ok(e)
    };
    let boundary = parse_x("boundary", &raw.boundary)?;
    let exact = raw.exact.as_deref().map(|s| parse_x("exact", s)).transpose()?;

    let h = &raw.hamiltonian;
    let need = |key: &str, v: &Option<String>| -> Result<Expr> {
        let src = v
            .as_deref()
            .ok_or_else(|| at("kind", format!("hamiltonian kind {} needs {key}", h.kind)))?;
        Expr::parse(src).map_err(|e| at(key, e.to_string()))
    };
    let kind = match h.kind.as_str() {
        "gauss_curvature" => HamiltonianKind::GaussCurvature { k: need("k", &h.k)? },
        "power_of_gradient" => HamiltonianKind::PowerOfGradient {
            f: need("f", &h.f)?,
            beta: h.beta.ok_or_else(|| at("kind", "power_of_gradient needs beta".into()))?,
        },
        "constant_rhs" => HamiltonianKind::ConstantRhs { f: need("f", &h.f)? },
        "custom" => HamiltonianKind::Custom { expr: need("expr", &h.expr)? },
        other => return Err(at("kind", format!("unknown hamiltonian kind {other:?}"))),
    };
    let kind_key = match &kind {
        HamiltonianKind::GaussCurvature { .. } => "k",
        HamiltonianKind::PowerOfGradient { .. } | HamiltonianKind::ConstantRhs { .. } => "f",
        HamiltonianKind::Custom { .. } => "expr",
    };
    let hamiltonian =
        Hamiltonian::new(kind, grid.domain(), m, h.r_bound).map_err(|e| at(kind_key, e.to_string()))?;

    let g = GridFunction::from_fn(grid, |x| boundary.eval_x(x));
    if let Some(i) = g.values().iter().position(|v| !v.is_finite()) {
        return Err(at("boundary", format!("boundary data not finite at node {i}")));
    }
    let problem = DirichletProblem::new(frame, hamiltonian, g, raw.gamma_floor)?;
    let solver = SolverConfig {
        tol: raw.tol,
        max_iter: raw.max_iter,
        seed: raw.seed,
        ..SolverConfig::default()
    };
    Ok(ProblemSpec {
        name: raw.name,
        source: path.into(),
        problem,
        solver,
        boundary,
        exact,
        output: raw.output,
        certify: raw.certify,
        compare: raw.compare,
        sweep: raw.sweep,
    })
}

/// Loads and parses `spec` (a path or `builtin:<name>`).
pub fn load_spec(spec: &str, overrides: &[(String, String)]) -> Result<ProblemSpec> {
    let (text, path) = load_spec_text(spec)?;
    let base = path.as_ref().and_then(|p| p.parent()).map(Path::to_path_buf);
    parse_spec(&text, spec, base.as_deref(), overrides)
}
