//! `hscalc` front end: JSON job configs in, canonical JSON or CSV reports out.

mod config;
mod report;
mod verify;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::Rng;

use crate::almost_analytic::{decay_window, verify_decay, AlmostAnalyticExtension, ExtensionError};
use crate::cayley::{CayleyError, CircleExtension, CircleFunction};
use crate::function_model::{FunctionError, SAFETY_FACTOR};
use crate::hs_integrator::{
    cauchy_pompeiu_check, convergence_study, hs_apply_selfadjoint, hs_apply_unitary, oracle_error,
    ConvergenceTable, IntegralResult, IntegratorError, Problem, Rect, Sweep,
};
use crate::matrix_core::{hermitian_eig, spectral_apply, MatrixError, ToleranceConfig};
use crate::rng::named_rng;

pub use config::{
    parse_json, CauchySpec, CauchyTarget, ConvergenceSpec, FieldSpec, FunctionSpec, JobConfig, MatrixFile,
    MatrixSource, ProblemKind, SynthSpec,
};
pub use report::{format_float, to_canonical_json, Check, Node, Obj, Report};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("{origin}: invalid config at `{field}`: {msg}")]
    Schema {
        origin: String,
        field: String,
        msg: String,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("function_model: {0}")]
    Function(#[from] FunctionError),
    #[error("almost_analytic: {0}")]
    Extension(#[from] ExtensionError),
    #[error("cayley: {0}")]
    Cayley(#[from] CayleyError),
    #[error("matrix_core: {0}")]
    Matrix(#[from] MatrixError),
    #[error("hs_integrator: {0}")]
    Integrator(#[from] IntegratorError),
    #[error("thread pool: {0}")]
    Threads(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Build the extension, report its schedule and check its properties.
    Extend,
    /// f(A) for a Hermitian matrix by area quadrature.
    ApplySa,
    /// f(U) for a unitary matrix by area quadrature.
    ApplyUnitary,
    /// Cauchy-Pompeiu reconstruction of a test function.
    CauchyCheck,
    /// Error table over an epsilon or cell-count sweep.
    Convergence,
    /// Full property suite at default settings.
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Extend => "extend",
            Command::ApplySa => "apply-sa",
            Command::ApplyUnitary => "apply-unitary",
            Command::CauchyCheck => "cauchy-check",
            Command::Convergence => "convergence",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "hscalc", version, about = "Helffer-Sjostrand functional calculus for Hermitian and unitary matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON job config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads for the quadrature.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Include wall-clock timings in the report.
    #[arg(long, global = true)]
    pub timings: bool,
}

/// Everything a command needs besides the config itself.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub seed: u64,
    pub base_dir: PathBuf,
    pub timings: bool,
}

fn sup_norm(ext: &AlmostAnalyticExtension) -> f64 {
    ext.params().bounds.m[0] / SAFETY_FACTOR
}

fn integral_node(r: &IntegralResult) -> Obj {
    Obj::new()
        .with("value", &r.value)
        .with("n_cells", r.n_cells)
        .with("n_active", r.n_active)
        .with("sum_compensation", r.sum_compensation)
        .with("bound_integral", r.bound_integral)
        .with("epsilon_used", r.epsilon_used)
        .with("truncation_n", r.truncation_n)
        .with("seed", r.seed)
}

fn extension_node(ext: &AlmostAnalyticExtension) -> Obj {
    let p = ext.params();
    Obj::new()
        .with("n", p.n)
        .with("t", p.t.clone())
        .with("c", p.c)
        .with("bounds", p.bounds.m.clone())
}

fn table_node(t: &ConvergenceTable) -> Obj {
    let rows: Vec<Node> = t
        .rows
        .iter()
        .map(|r| {
            Obj::new()
                .with("param", r.param)
                .with("error", r.error)
                .with("runtime_ms", r.runtime_ms)
                .into()
        })
        .collect();
    Obj::new()
        .with("rows", Node::List(rows))
        .with("fitted_rate", t.fitted_rate)
        .with("grid_error", t.grid_error)
}

/// Runs one command and assembles its report.
pub fn run(command: Command, cfg: &JobConfig, ctx: &RunContext) -> Result<Report, CliError> {
    let start = Instant::now();
    let mut inputs = cfg.echo_knobs();
    if let Some(f) = &cfg.function {
        inputs.set("function", f.echo());
    }
    if let Some(m) = &cfg.matrix {
        inputs.set("matrix", m.echo());
    }
    if let Some(f) = &cfg.field {
        inputs.set(
            "field",
            Obj::new().with("rect", f.rect.to_vec()).with("nx", f.nx).with("ny", f.ny),
        );
    }
    if !cfg.points.is_empty() {
        let pts: Vec<Node> = cfg.points.iter().map(|p| Node::from(p.to_vec())).collect();
        inputs.set("points", Node::List(pts));
    }
    let (results, checks, table) = match command {
        Command::Extend => run_extend(cfg, ctx)?,
        Command::ApplySa => run_apply_sa(cfg, ctx)?,
        Command::ApplyUnitary => run_apply_unitary(cfg, ctx)?,
        Command::CauchyCheck => run_cauchy(cfg, &mut inputs)?,
        Command::Convergence => run_convergence(cfg, ctx, &mut inputs)?,
        Command::Verify => verify::run_verify(cfg, ctx.seed)?,
    };
    let mut results = results;
    if let Some(mut t) = table {
        if !ctx.timings {
            t.rows.iter_mut().for_each(|r| r.runtime_ms = 0.0);
        }
        results.set("convergence", table_node(&t));
    }
    let timings_ms = ctx.timings.then(|| {
        BTreeMap::from([("total".to_string(), start.elapsed().as_secs_f64() * 1e3)])
    });
    Ok(Report {
        command: command.name().into(),
        seed: ctx.seed,
        inputs: inputs.into(),
        results: results.into(),
        checks,
        timings_ms,
    })
}

type Outcome = (Obj, Vec<Check>, Option<ConvergenceTable>);

fn build_extension(cfg: &JobConfig) -> Result<AlmostAnalyticExtension, CliError> {
    let f = cfg.function()?.line_function()?;
    Ok(AlmostAnalyticExtension::build(f, cfg.extension_config())?)
}

fn build_circle(cfg: &JobConfig) -> Result<(CircleFunction, CircleExtension), CliError> {
    let cf = cfg.function()?.circle_function()?;
    let ce = CircleExtension::build(&cf, cfg.extension_config())?;
    Ok((cf, ce))
}

/// Largest `|F(x) - f(x)| / (1 + |f(x)|)` over random points of the support.
pub fn restriction_error(
    ext: &AlmostAnalyticExtension,
    samples: usize,
    seed: u64,
) -> Result<f64, CliError> {
    let f = ext.function();
    let (a, b) = f.support();
    let mut rng = named_rng(seed, "restriction");
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x = rng.random_range(a..=b);
        let fx = f.value(x)?;
        let v = ext.eval_extension(Complex64::new(x, 0.0))?;
        worst = worst.max((v - fx).norm() / (1.0 + fx.abs()));
    }
    Ok(worst)
}

/// Decay-slope checks for `l = 1..=min(3, N)`.
pub fn decay_checks(ext: &AlmostAnalyticExtension, seed: u64) -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    for l in 1..=ext.truncation().min(3) {
        let fit = verify_decay(ext, l, 400, seed)?;
        out.push(Check::at_least(&format!("decay_slope_l{}", l), fit.slope, l as f64 - 0.2));
    }
    Ok(out)
}

fn run_extend(cfg: &JobConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    let ext = build_extension(cfg)?;
    let mut checks = vec![Check::holds(
        "schedule_inequality",
        ext.params().schedule_violation().is_none(),
    )];
    checks.push(Check::at_most(
        "restriction_rel_err",
        restriction_error(&ext, 1000, ctx.seed)?,
        1e-14,
    ));
    checks.extend(decay_checks(&ext, ctx.seed)?);
    let points: Vec<Node> = cfg
        .points
        .iter()
        .map(|&[x, y]| {
            let z = Complex64::new(x, y);
            Ok(Obj::new()
                .with("z", z)
                .with("value", ext.eval_extension(z)?)
                .with("dbar", ext.eval_dbar(z)?)
                .into())
        })
        .collect::<Result<_, CliError>>()?;
    let (lo, hi) = decay_window(&ext);
    let mut results = Obj::new()
        .with("extension", extension_node(&ext))
        .with("decay_window", vec![lo, hi])
        .with("points", Node::List(points));
    if let Some(field) = &cfg.field {
        results.set("field", sample_field(&ext, field)?);
    }
    Ok((results, checks, None))
}

/// Default field rectangle: the support widened by a quarter on each side,
/// full extension height.
pub fn default_field(ext: &AlmostAnalyticExtension) -> FieldSpec {
    let (a, b) = ext.function().support();
    let pad = 0.25 * (b - a);
    let c = ext.half_height();
    FieldSpec {
        rect: [a - pad, b + pad, -c, c],
        nx: 64,
        ny: 32,
    }
}

fn sample_field(ext: &AlmostAnalyticExtension, field: &FieldSpec) -> Result<Node, CliError> {
    let [x0, x1, y0, y1] = field.rect;
    if !(x0 < x1 && y0 < y1) || field.nx == 0 || field.ny == 0 {
        return Err(CliError::Config("field: empty rectangle or grid".into()));
    }
    let (hx, hy) = ((x1 - x0) / field.nx as f64, (y1 - y0) / field.ny as f64);
    let mut rows = Vec::with_capacity(field.nx * field.ny);
    for j in 0..field.ny {
        let y = y0 + (j as f64 + 0.5) * hy;
        for i in 0..field.nx {
            let x = x0 + (i as f64 + 0.5) * hx;
            let z = Complex64::new(x, y);
            let (v, d) = (ext.eval_extension(z)?, ext.eval_dbar(z)?);
            rows.push(Node::from(vec![x, y, v.re, v.im, d.re, d.im]));
        }
    }
    Ok(Node::List(rows))
}

fn run_apply_sa(cfg: &JobConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    let ext = build_extension(cfg)?;
    let loaded = cfg.matrix()?.load(&ctx.base_dir, ctx.seed)?;
    let r = hs_apply_selfadjoint(&ext, &loaded.matrix, &cfg.spec)?.with_seed(ctx.seed);
    let decomp = match loaded.decomposition {
        Some(d) => d,
        None => hermitian_eig(&loaded.matrix, &ToleranceConfig::default())?,
    };
    let f = ext.function();
    let oracle = spectral_apply(&decomp, |z| f.value(z.re).map(Complex64::from))?;
    let err = oracle_error(&r.value, &oracle, sup_norm(&ext))?;
    let checks = vec![
        Check::at_most("oracle_rel_err", err, 1e-3),
        Check::holds("bound_integral_finite", r.bound_integral.is_finite()),
    ];
    let results = Obj::new()
        .with("integral", integral_node(&r))
        .with("oracle", &oracle)
        .with("extension", extension_node(&ext));
    Ok((results, checks, None))
}

fn run_apply_unitary(cfg: &JobConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    let (cf, ce) = build_circle(cfg)?;
    let loaded = cfg.matrix()?.load(&ctx.base_dir, ctx.seed)?;
    let r = hs_apply_unitary(&ce, &loaded.matrix, &cfg.spec)?.with_seed(ctx.seed);
    let mut checks = vec![Check::holds("bound_integral_finite", r.bound_integral.is_finite())];
    let mut results = Obj::new()
        .with("integral", integral_node(&r))
        .with("extension", extension_node(ce.base()));
    // file-supplied unitaries have no decomposition to compare against
    if let Some(d) = &loaded.decomposition {
        let oracle = spectral_apply(d, |z| cf.value(z).map(Complex64::from))?;
        let err = oracle_error(&r.value, &oracle, sup_norm(ce.base()))?;
        checks.push(Check::at_most("oracle_rel_err", err, 1e-3));
        results.set("oracle", &oracle);
    } else {
        results.set("oracle", Node::Null);
    }
    Ok((results, checks, None))
}

fn run_cauchy(cfg: &JobConfig, inputs: &mut Obj) -> Result<Outcome, CliError> {
    let spec = cfg
        .cauchy
        .as_ref()
        .ok_or_else(|| CliError::Config("`cauchy` is required for cauchy-check".into()))?;
    let [x0, x1, y0, y1] = spec.rect;
    let rect = Rect { x0, x1, y0, y1 };
    let xi = Complex64::new(spec.xi[0], spec.xi[1]);
    inputs.set(
        "cauchy",
        Obj::new()
            .with("target", format!("{:?}", spec.target).to_lowercase())
            .with("rect", spec.rect.to_vec())
            .with("xi", xi)
            .with("nodes_per_edge", spec.nodes_per_edge)
            .with("area_cells", spec.area_cells),
    );
    let zero = |_: Complex64| Ok(Complex64::new(0.0, 0.0));
    let (out, checks) = match spec.target {
        CauchyTarget::Square => {
            let out = cauchy_pompeiu_check(|z| Ok(z * z), zero, rect, xi, spec.nodes_per_edge, spec.area_cells)?;
            let checks = vec![
                Check::at_most("area_term", out.area.norm(), 1e-6),
                Check::at_most("boundary_err", (out.boundary - xi * xi).norm(), 1e-6),
            ];
            (out, checks)
        }
        CauchyTarget::One => {
            let one = |_: Complex64| Ok(Complex64::new(1.0, 0.0));
            let out = cauchy_pompeiu_check(one, zero, rect, xi, spec.nodes_per_edge, spec.area_cells)?;
            let checks = vec![
                Check::at_most("area_term", out.area.norm(), 1e-6),
                Check::at_most("boundary_err", (out.boundary - 1.0).norm(), 1e-6),
            ];
            (out, checks)
        }
        CauchyTarget::Extension => {
            let ext = build_extension(cfg)?;
            let out = cauchy_pompeiu_check(
                |z| ext.eval_extension(z),
                |z| ext.eval_dbar(z),
                rect,
                xi,
                spec.nodes_per_edge,
                spec.area_cells,
            )?;
            let checks = vec![
                Check::at_most("boundary_term", out.boundary.norm(), 1e-8),
                Check::at_most("reconstruction_err", out.abs_err, 1e-4),
            ];
            (out, checks)
        }
    };
    let results = Obj::new()
        .with("boundary", out.boundary)
        .with("area", out.area)
        .with("reconstructed", out.reconstructed)
        .with("reference", out.reference)
        .with("abs_err", out.abs_err);
    Ok((results, checks, None))
}

fn run_convergence(cfg: &JobConfig, ctx: &RunContext, inputs: &mut Obj) -> Result<Outcome, CliError> {
    let spec = cfg
        .convergence
        .as_ref()
        .ok_or_else(|| CliError::Config("`convergence` is required for convergence".into()))?;
    let sweep = match (&spec.epsilon, &spec.cells) {
        (Some(e), None) => Sweep::Epsilon(e.clone()),
        (None, Some(c)) => Sweep::Cells(c.clone()),
        _ => {
            return Err(CliError::Config(
                "convergence: give exactly one of `epsilon` or `cells`".into(),
            ))
        }
    };
    inputs.set(
        "convergence",
        Obj::new()
            .with("problem", format!("{:?}", spec.problem).to_lowercase())
            .with("xi", spec.xi)
            .with("epsilon", spec.epsilon.clone())
            .with("cells", spec.cells.clone().map(|c| c.into_iter().map(Node::from).collect::<Vec<_>>())),
    );
    let table = match spec.problem {
        ProblemKind::Scalar => {
            let ext = build_extension(cfg)?;
            convergence_study(Problem::Scalar { ext: &ext, xi: spec.xi }, &cfg.spec, &sweep)?
        }
        ProblemKind::Selfadjoint => {
            let ext = build_extension(cfg)?;
            let loaded = cfg.matrix()?.load(&ctx.base_dir, ctx.seed)?;
            let decomp = match loaded.decomposition {
                Some(d) => d,
                None => hermitian_eig(&loaded.matrix, &ToleranceConfig::default())?,
            };
            let f = ext.function();
            let oracle = spectral_apply(&decomp, |z| f.value(z.re).map(Complex64::from))?;
            let p = Problem::SelfAdjoint {
                ext: &ext,
                a: &loaded.matrix,
                oracle: &oracle,
            };
            convergence_study(p, &cfg.spec, &sweep)?
        }
        ProblemKind::Unitary => {
            let (cf, ce) = build_circle(cfg)?;
            let loaded = cfg.matrix()?.load(&ctx.base_dir, ctx.seed)?;
            let d = loaded.decomposition.ok_or_else(|| {
                CliError::Config("unitary convergence needs a synthesized matrix".into())
            })?;
            let oracle = spectral_apply(&d, |z| cf.value(z).map(Complex64::from))?;
            let p = Problem::Unitary {
                ce: &ce,
                u: &loaded.matrix,
                oracle: &oracle,
            };
            convergence_study(p, &cfg.spec, &sweep)?
        }
    };
    let mut checks = Vec::new();
    if let Sweep::Epsilon(_) = sweep {
        checks.push(Check::holds("errors_decrease_with_epsilon", table.strictly_decreasing_in_epsilon()));
        checks.push(Check::at_least("fitted_rate", table.fitted_rate, 0.8));
    }
    Ok((Obj::new(), checks, Some(table)))
}

/// Serializes a report. CSV carries the sampled field or the convergence table
/// when present and the check list otherwise.
pub fn emit(report: &Report, format: Format) -> Vec<u8> {
    match format {
        Format::Json => to_canonical_json(&report.to_node()).into_bytes(),
        Format::Csv => {
            let mut out = String::new();
            let get = |key: &str| match &report.results {
                Node::Map(m) => m.get(key),
                _ => None,
            };
            if let Some(Node::List(rows)) = get("field") {
                out.push_str("x,y,re_f,im_f,re_dbar,im_dbar\n");
                for row in rows {
                    if let Node::List(vals) = row {
                        let cells: Vec<String> = vals
                            .iter()
                            .map(|v| match v {
                                Node::Float(f) => format_float(*f),
                                _ => String::new(),
                            })
                            .collect();
                        out.push_str(&cells.join(","));
                        out.push('\n');
                    }
                }
            } else if let Some(Node::Map(t)) = get("convergence") {
                out.push_str("param,error,runtime_ms\n");
                if let Some(Node::List(rows)) = t.get("rows") {
                    for row in rows {
                        if let Node::Map(r) = row {
                            let field = |k: &str| match r.get(k) {
                                Some(Node::Float(v)) => format_float(*v),
                                _ => String::new(),
                            };
                            out.push_str(&format!(
                                "{},{},{}\n",
                                field("param"),
                                field("error"),
                                field("runtime_ms")
                            ));
                        }
                    }
                }
            } else {
                out.push_str("name,relation,measured,threshold,pass\n");
                for c in &report.checks {
                    out.push_str(&format!(
                        "{},{},{},{},{}\n",
                        c.name,
                        c.relation,
                        format_float(c.measured),
                        format_float(c.threshold),
                        c.pass
                    ));
                }
            }
            out.into_bytes()
        }
    }
}

/// Loads the config, applies flag overrides and runs the command in a pool of
/// the requested size. Returns the serialized report and the exit code.
pub fn execute(cli: &Cli) -> Result<(Vec<u8>, i32), CliError> {
    let (mut cfg, base_dir) = match &cli.config {
        Some(path) => (
            JobConfig::load(path)?,
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (JobConfig::default(), PathBuf::from(".")),
    };
    let seed = cli.seed.or(cfg.seed).ok_or_else(|| {
        CliError::Config("a seed is required (config `seed` or --seed)".into())
    })?;
    if cli.command == Command::Extend && cli.format == Format::Csv && cfg.field.is_none() {
        cfg.field = Some(default_field(&build_extension(&cfg)?));
    }
    let ctx = RunContext {
        seed,
        base_dir,
        timings: cli.timings,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Threads(e.to_string()))?;
    let report = pool.install(|| run(cli.command, &cfg, &ctx))?;
    Ok((emit(&report, cli.format), report.exit_code()))
}

/// Process entry point; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok((bytes, code)) => {
            let written = match &cli.out {
                Some(path) => std::fs::write(path, &bytes).map_err(|e| CliError::Io {
                    path: path.clone(),
                    msg: e.to_string(),
                }),
                None => std::io::stdout().write_all(&bytes).map_err(|e| CliError::Io {
                    path: "<stdout>".into(),
                    msg: e.to_string(),
                }),
            };
            match written {
                Ok(()) => code,
                Err(e) => {
                    eprintln!("error: {}", e);
                    1
                }
            }
        }
        Err(e) => {
            eprintln!("error: {}", e);
            1
        }
    }
}
