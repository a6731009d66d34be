//! Command pipelines behind the `carnot-ma` binary.
//!
//! Every command writes its artifacts into the output directory. Reports
//! are deterministic for a given spec and seed; runtimes go to standard
//! output only. Exit codes: 0 success, 2 certified failure, 1 usage error.
//! Any failure also leaves an `error.json` next to the other artifacts.

use crate::carnot_group::{validate_frame, CarnotFrame, FrameReport};
use crate::comparison::{
    certify_strict_subsolution, gradient_bound, lipschitz_h_check, mu_sweep, verify_comparison_with,
    ComparisonOptions, ComparisonReport, GradientBoundReport, LipschitzReport, StrictnessCertificate,
    StrictnessFailure, StrictnessLevel, SweepPoint,
};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::horizontal::{certify_convexity, ConvexityCertificate, ConvexityKind};
use crate::io::{write_atomic, write_grid, write_json};
use crate::plot::{contour_csv, slice_csv};
use crate::solver::{solve, IterationRecord, SolverConfig, SolverState};
use crate::spec::{load_spec, load_spec_text, ComparePair, CompareOptions, ProblemSpec, SweepOptions};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CERTIFIED_FAILURE: i32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Certify,
    Compare,
    Sweep,
    ValidateFrame,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    /// Spec path or `builtin:<name>`; for `validate-frame` also a frame
    /// file or `frame:<builtin>`.
    pub spec: String,
    pub output_dir: PathBuf,
    /// Overrides the spec seed when set.
    pub seed: Option<u64>,
    pub overrides: Vec<(String, String)>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    command: Command,
    spec: &'a str,
    exit_code: i32,
    kind: &'static str,
    message: String,
}

fn error_kind(e: &Error) -> (&'static str, i32) {
    match e {
        Error::LinearSolver { .. } => ("linear_solver", EXIT_CERTIFIED_FAILURE),
        Error::Overflow { .. } => ("overflow", EXIT_CERTIFIED_FAILURE),
        Error::Domain { .. } => ("domain", EXIT_CERTIFIED_FAILURE),
        Error::BoundaryNode { .. } => ("boundary_node", EXIT_CERTIFIED_FAILURE),
        Error::Spec { .. } => ("spec", EXIT_USAGE),
        Error::Io { .. } => ("io", EXIT_USAGE),
        Error::Expr { .. } | Error::NotPolynomial(_) => ("expression", EXIT_USAGE),
        Error::Frame(_) => ("frame", EXIT_USAGE),
        Error::Hamiltonian(_) => ("hamiltonian", EXIT_USAGE),
        Error::Grid(_) | Error::Problem(_) | Error::Control(_) | Error::Format(_) => ("validation", EXIT_USAGE),
    }
}

/// Runs a command; failures become an exit code plus `error.json`.
pub fn run(config: &RunConfig) -> RunOutcome {
    let mut ctx = Context {
        out: config.output_dir.clone(),
        artifacts: Vec::new(),
    };
    let result = match config.command {
        Command::Solve => run_solve(config, &mut ctx),
        Command::Certify => run_certify(config, &mut ctx),
        Command::Compare => run_compare(config, &mut ctx),
        Command::Sweep => run_sweep(config, &mut ctx),
        Command::ValidateFrame => run_validate_frame(config, &mut ctx),
    };
    match result {
        Ok((exit_code, summary)) => {
            if exit_code != EXIT_OK {
                let report = ErrorReport {
                    command: config.command,
                    spec: &config.spec,
                    exit_code,
                    kind: "certified_failure",
                    message: summary.clone(),
                };
                let _ = ctx.json("error.json", &report);
            }
            RunOutcome {
                exit_code,
                artifacts: ctx.artifacts,
                summary,
            }
        }
        Err(e) => {
            let (kind, exit_code) = error_kind(&e);
            let report = ErrorReport {
                command: config.command,
                spec: &config.spec,
                exit_code,
                kind,
                message: e.to_string(),
            };
            let _ = ctx.json("error.json", &report);
            RunOutcome {
                exit_code,
                artifacts: ctx.artifacts,
                summary: format!("error: {e}"),
            }
        }
    }
}

struct Context {
    out: PathBuf,
    artifacts: Vec<PathBuf>,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        write_json(&p, value)?;
        self.artifacts.push(p);
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        write_atomic(&p, text.as_bytes())?;
        self.artifacts.push(p);
        Ok(())
    }

    fn grid(&mut self, stem: &str, u: &GridFunction, spec: &ProblemSpec) -> Result<()> {
        let (a, b) = write_grid(u, &self.path(stem), spec.output.encoding)?;
        self.artifacts.push(a);
        self.artifacts.push(b);
        Ok(())
    }
}

fn load(config: &RunConfig) -> Result<ProblemSpec> {
    let mut spec = load_spec(&config.spec, &config.overrides)?;
    if let Some(seed) = config.seed {
        spec.solver.seed = seed;
    }
    Ok(spec)
}

/// Problem description shared by all reports.
#[derive(Serialize)]
struct ProblemInfo {
    name: String,
    spec: String,
    frame: String,
    n: usize,
    m: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
    gamma_floor: f64,
    boundary: String,
    exact: Option<String>,
    seed: u64,
    solver: SolverConfig,
}

impl ProblemInfo {
    fn of(spec: &ProblemSpec) -> Self {
        let p = &spec.problem;
        ProblemInfo {
            name: spec.name.clone(),
            spec: spec.source.clone(),
            frame: p.frame.name().to_string(),
            n: p.frame.n(),
            m: p.frame.m(),
            lower: p.grid().domain().lower.clone(),
            upper: p.grid().domain().upper.clone(),
            resolution: p.grid().resolution().to_vec(),
            gamma_floor: p.gamma_floor,
            boundary: spec.boundary.to_string(),
            exact: spec.exact.as_ref().map(|e| e.to_string()),
            seed: spec.solver.seed,
            solver: spec.solver.clone(),
        }
    }
}

#[derive(Serialize)]
struct SolveSummary {
    converged: bool,
    message: String,
    iterations: usize,
    final_residual: f64,
    fallback_nodes: usize,
    max_error: Option<f64>,
    convexity: ConvexityCertificate,
}

fn summarize(spec: &ProblemSpec, state: &SolverState) -> SolveSummary {
    let max_error = spec.exact_grid().map(|e| e.max_abs_diff(&state.u));
    SolveSummary {
        converged: state.converged,
        message: state.message.clone(),
        iterations: state.iterations,
        final_residual: state.final_residual(),
        fallback_nodes: state.policy.fallback_nodes.len(),
        max_error,
        convexity: certify_convexity(&spec.problem.frame, &state.u, spec.problem.gamma_floor),
    }
}

fn residual_log_csv(log: &[IterationRecord]) -> String {
    let mut out = String::from(
        "iteration,max_residual,damping,feasible,infeasible_nodes,linear_iterations,fallback_nodes\n",
    );
    for r in log {
        out.push_str(&format!(
            "{},{:e},{:e},{},{},{},{}\n",
            r.iteration, r.max_residual, r.damping, r.feasible, r.infeasible_nodes, r.linear_iterations, r.fallback_nodes
        ));
    }
    out
}

/// Solves and writes the solution, residual log and plot series.
fn solve_and_write(spec: &ProblemSpec, ctx: &mut Context) -> Result<(SolverState, SolveSummary)> {
    let t = Instant::now();
    let state = solve(&spec.problem, &spec.solver)?;
    println!(
        "solved {} in {:.2} s: {} after {} iterations, residual {:.3e}",
        spec.name,
        t.elapsed().as_secs_f64(),
        state.message,
        state.iterations,
        state.final_residual()
    );
    ctx.grid("solution", &state.u, spec)?;
    ctx.text("residual_log.csv", &residual_log_csv(&state.residual_log))?;
    let exact = spec.exact_grid();
    let enc = spec.output.encoding;
    for axis in 0..spec.problem.grid().dim() {
        let mut fields: Vec<(&str, &GridFunction)> = vec![("u", &state.u)];
        if let Some(e) = &exact {
            fields.push(("exact", e));
        }
        ctx.text(&format!("slice_x{}.csv", axis + 1), &slice_csv(axis, &fields, enc))?;
    }
    ctx.text("level_sets.csv", &contour_csv(&state.u, spec.output.contour_levels, enc))?;
    let summary = summarize(spec, &state);
    Ok((state, summary))
}

#[derive(Serialize)]
struct SolveReport {
    command: Command,
    problem: ProblemInfo,
    result: SolveSummary,
    residual_log: Vec<IterationRecord>,
}

fn run_solve(config: &RunConfig, ctx: &mut Context) -> Result<(i32, String)> {
    let spec = load(config)?;
    let (state, result) = solve_and_write(&spec, ctx)?;
    let summary = match result.max_error {
        Some(e) => format!("{}: {} (max error {e:.3e})", spec.name, state.message),
        None => format!("{}: {}", spec.name, state.message),
    };
    let code = if state.converged { EXIT_OK } else { EXIT_CERTIFIED_FAILURE };
    ctx.json(
        "report.json",
        &SolveReport {
            command: Command::Solve,
            problem: ProblemInfo::of(&spec),
            result,
            residual_log: state.residual_log,
        },
    )?;
    Ok((code, summary))
}

#[derive(Serialize)]
struct StrictnessOutcome {
    level: StrictnessLevel,
    certificate: Option<StrictnessCertificate>,
    failure: Option<StrictnessFailure>,
}

fn strictness(
    spec: &ProblemSpec,
    u: &GridFunction,
    scale: f64,
    level: StrictnessLevel,
) -> StrictnessOutcome {
    let sub = spec.problem.grid().domain().scaled(scale);
    match certify_strict_subsolution(&spec.problem, u, &sub, level) {
        Ok(c) => StrictnessOutcome { level, certificate: Some(c), failure: None },
        Err(f) => StrictnessOutcome { level, certificate: None, failure: Some(f) },
    }
}

#[derive(Serialize)]
struct CertifyReport {
    command: Command,
    problem: ProblemInfo,
    solve: SolveSummary,
    convexity: ConvexityCertificate,
    gradient_bound: GradientBoundReport,
    strictness: Vec<StrictnessOutcome>,
    lipschitz: LipschitzReport,
}

fn run_certify(config: &RunConfig, ctx: &mut Context) -> Result<(i32, String)> {
    let spec = load(config)?;
    let (state, solve_summary) = solve_and_write(&spec, ctx)?;
    let opts = &spec.certify;
    let frame = &spec.problem.frame;
    let convexity = certify_convexity(frame, &state.u, opts.gamma);
    let sub = spec.problem.grid().domain().scaled(opts.subdomain_scale);
    let bound = gradient_bound(frame, &state.u, &sub);
    let strict = vec![
        strictness(&spec, &state.u, opts.subdomain_scale, StrictnessLevel::DetPower),
        strictness(&spec, &state.u, opts.subdomain_scale, StrictnessLevel::LogLevel),
    ];
    let lipschitz = lipschitz_h_check(
        &spec.problem.hamiltonian,
        spec.problem.grid().domain(),
        opts.lipschitz_r,
        opts.lipschitz_samples,
        spec.solver.seed,
    );
    let certified = state.converged && convexity.kind != ConvexityKind::NotCertified;
    let summary = format!(
        "{}: convexity {:?} (gamma {:.3e}), gradient bound {:.6}",
        spec.name, convexity.kind, convexity.gamma, bound.c
    );
    ctx.json(
        "report.json",
        &CertifyReport {
            command: Command::Certify,
            problem: ProblemInfo::of(&spec),
            solve: solve_summary,
            convexity,
            gradient_bound: bound,
            strictness: strict,
            lipschitz,
        },
    )?;
    Ok((if certified { EXIT_OK } else { EXIT_CERTIFIED_FAILURE }, summary))
}

/// Smooth bump `height * exp(-|x - center|^2 / width^2)`.
pub fn bump(x: &[f64], center: &[f64], height: f64, width: f64) -> f64 {
    let d2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
    height * (-d2 / (width * width)).exp()
}

/// Builds the `(sub, super)` pair of a compare run from the solution.
pub fn comparison_pair(
    spec: &ProblemSpec,
    solution: &GridFunction,
    opts: &CompareOptions,
) -> Result<(GridFunction, String)> {
    let problem = &spec.problem;
    let domain = problem.grid().domain();
    match opts.pair {
        ComparePair::Identity => Ok((solution.clone(), "solution against itself".into())),
        ComparePair::BoundaryShift | ComparePair::BoundaryBump => {
            let center = opts.bump_center.clone().unwrap_or_else(|| domain.upper.clone());
            let lowered = problem.boundary.map(|x, v| match opts.pair {
                ComparePair::BoundaryShift => v - opts.shift,
                _ => v - bump(x, &center, opts.bump_height, opts.bump_width),
            });
            let shifted = problem.with_boundary(lowered)?;
            let state = solve(&shifted, &spec.solver)?;
            if !state.converged {
                return Err(Error::Problem(format!(
                    "solve with lowered boundary data failed: {}",
                    state.message
                )));
            }
            let what = match opts.pair {
                ComparePair::BoundaryShift => format!("boundary data lowered by {}", opts.shift),
                _ => format!(
                    "boundary data lowered by a bump of height {} at {:?}",
                    opts.bump_height, center
                ),
            };
            Ok((state.u, what))
        }
        ComparePair::InteriorBump => {
            let center = opts.bump_center.clone().unwrap_or_else(|| domain.center());
            let mut raised = solution.map(|x, v| v + bump(x, &center, opts.bump_height, opts.bump_width));
            problem.impose_boundary(&mut raised);
            Ok((raised, format!("solution plus an interior bump of height {}", opts.bump_height)))
        }
    }
}

#[derive(Serialize)]
struct CompareReport {
    command: Command,
    problem: ProblemInfo,
    solve: SolveSummary,
    pair: ComparePair,
    pair_description: String,
    comparison: ComparisonReport,
}

fn run_compare(config: &RunConfig, ctx: &mut Context) -> Result<(i32, String)> {
    let spec = load(config)?;
    let (state, solve_summary) = solve_and_write(&spec, ctx)?;
    if !state.converged {
        return Ok((EXIT_CERTIFIED_FAILURE, format!("{}: solver failed: {}", spec.name, state.message)));
    }
    let opts = &spec.compare;
    let (sub, description) = comparison_pair(&spec, &state.u, opts)?;
    ctx.grid("subsolution", &sub, &spec)?;
    let options = ComparisonOptions {
        subdomain: Some(spec.problem.grid().domain().scaled(opts.subdomain_scale)),
        ..ComparisonOptions::default()
    };
    let tol = opts.tol_factor * spec.solver.tol;
    let report = verify_comparison_with(&spec.problem, &sub, &state.u, tol, &options)?;
    let summary = format!(
        "{}: {description}: sup gap {:.3e}, boundary gap {:.3e}, verdict {}",
        spec.name,
        report.sup_gap,
        report.boundary_gap,
        match report.verdict {
            Some(v) => v.to_string(),
            None => "blocked by preconditions".into(),
        }
    );
    let code = if report.verdict == Some(true) { EXIT_OK } else { EXIT_CERTIFIED_FAILURE };
    ctx.json(
        "report.json",
        &CompareReport {
            command: Command::Compare,
            problem: ProblemInfo::of(&spec),
            solve: solve_summary,
            pair: opts.pair,
            pair_description: description,
            comparison: report,
        },
    )?;
    Ok((code, summary))
}

#[derive(Serialize)]
struct SweepReport {
    command: Command,
    problem: ProblemInfo,
    solve: SolveSummary,
    sweep: SweepOptions,
    points: Vec<SweepPoint>,
    mu_bar: Option<f64>,
}

fn run_sweep(config: &RunConfig, ctx: &mut Context) -> Result<(i32, String)> {
    let spec = load(config)?;
    let (state, solve_summary) = solve_and_write(&spec, ctx)?;
    let opts = &spec.sweep;
    let sub = spec.problem.grid().domain().scaled(opts.subdomain_scale);
    let points = mu_sweep(&spec.problem, &state.u, opts.epsilon, &opts.mus, &sub, opts.level)?;
    let enc = spec.output.encoding;
    let mut csv = String::from("mu,margin,certified\n");
    for p in &points {
        let margin = p.margin.map(|m| enc.encode(m)).unwrap_or_default();
        csv.push_str(&format!("{},{margin},{}\n", enc.encode(p.mu), p.certified));
    }
    ctx.text("sweep.csv", &csv)?;
    let mu_bar = points.iter().find(|p| p.certified).map(|p| p.mu);
    let summary = match mu_bar {
        Some(mu) => format!("{}: first strict mu = {mu} at epsilon {}", spec.name, opts.epsilon),
        None => format!("{}: no mu in the ladder gives a strict subsolution", spec.name),
    };
    let code = if mu_bar.is_some() { EXIT_OK } else { EXIT_CERTIFIED_FAILURE };
    ctx.json(
        "report.json",
        &SweepReport {
            command: Command::Sweep,
            problem: ProblemInfo::of(&spec),
            solve: solve_summary,
            sweep: opts.clone(),
            points,
            mu_bar,
        },
    )?;
    Ok((code, summary))
}

/// Frame named by `frame:<builtin>`, a frame file, or a problem spec.
pub fn load_frame(spec: &str) -> Result<CarnotFrame> {
    if let Some(name) = spec.strip_prefix("frame:") {
        return CarnotFrame::builtin(name).ok_or_else(|| Error::Spec {
            path: spec.into(),
            line: 0,
            message: format!("unknown builtin frame {name:?}"),
        });
    }
    let (text, path) = load_spec_text(spec)?;
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Spec {
        path: spec.into(),
        line: e.span().map(|s| crate::carnot_group::line_of(&text, s.start)).unwrap_or(0),
        message: e.message().to_string(),
    })?;
    if table.contains_key("layers") {
        return CarnotFrame::parse_file(&text, spec);
    }
    if let Some(name) = table.get("frame").and_then(|v| v.as_str()) {
        return CarnotFrame::builtin(name).ok_or_else(|| Error::Spec {
            path: spec.into(),
            line: 0,
            message: format!("unknown builtin frame {name:?}"),
        });
    }
    if let Some(file) = table.get("frame_file").and_then(|v| v.as_str()) {
        let base = path.as_deref().and_then(Path::parent).map(Path::to_path_buf).unwrap_or_default();
        let p = base.join(file);
        let ftext = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        return CarnotFrame::parse_file(&ftext, &p.display().to_string());
    }
    Err(Error::Spec {
        path: spec.into(),
        line: 0,
        message: "no frame found: expected layers, frame or frame_file".into(),
    })
}

#[derive(Serialize)]
struct FrameValidationReport {
    command: Command,
    spec: String,
    passed: bool,
    report: FrameReport,
}

fn run_validate_frame(config: &RunConfig, ctx: &mut Context) -> Result<(i32, String)> {
    let frame = load_frame(&config.spec)?;
    let report = validate_frame(&frame);
    let passed = report.passed();
    let summary = if passed {
        format!("frame {}: all checks pass", frame.name())
    } else {
        format!("frame {}: {}", frame.name(), report.failure_summary())
    };
    ctx.json(
        "frame_report.json",
        &FrameValidationReport {
            command: Command::ValidateFrame,
            spec: config.spec.clone(),
            passed,
            report,
        },
    )?;
    Ok((if passed { EXIT_OK } else { EXIT_CERTIFIED_FAILURE }, summary))
}
