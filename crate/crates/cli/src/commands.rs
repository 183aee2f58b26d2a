//! The three subcommands. Each writes its artifacts into one output directory
//! and returns a [`Failure`] classified by exit code.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use reactid::data::{add_noise, smooth_data, OverposedData};
use reactid::fixedpoint::{data_interval, fit_reaction, run_fixed_point};
use reactid::forward::{solve_forward, Problem, Scheme, Source};
use reactid::io::{fmt_num, read_field, write_field, write_table};
use reactid::newton::run_newton;
use reactid::reaction::{Builtin, Reaction, ReactionTerm};
use reactid::trace::{ReconstructionTrace, Status};

use crate::config::{Config, ConfigError, MethodKind, ReactidOrConfig, SweepMetric};

/// Why a command stopped early.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Solver(String),
    NotConverged(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
            Failure::NotConverged(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Solver(m) => write!(f, "solver error: {m}"),
            Failure::NotConverged(m) => write!(f, "no convergence: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<reactid::Error> for Failure {
    fn from(e: reactid::Error) -> Self {
        match e {
            reactid::Error::InvalidParameter(_) | reactid::Error::Input(_) => Failure::Config(e.to_string()),
            other => Failure::Solver(other.to_string()),
        }
    }
}

impl From<ReactidOrConfig> for Failure {
    fn from(e: ReactidOrConfig) -> Self {
        match e {
            ReactidOrConfig::Config(c) => c.into(),
            ReactidOrConfig::Solver(s) => s.into(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Solver(format!("io: {e}"))
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn create(dir: &Path, name: &str) -> Outcome<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Ordered `key=value` lines.
#[derive(Debug, Default)]
pub struct Report(Vec<(String, String)>);

impl Report {
    fn put(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    fn num(&mut self, key: &str, value: f64) {
        self.put(key, fmt_num(value));
    }

    fn write(&self, dir: &Path) -> Outcome<()> {
        let mut out = create(dir, "report.txt")?;
        for (k, v) in &self.0 {
            writeln!(out, "{k}={v}")?;
        }
        out.flush()?;
        Ok(())
    }
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::CrankNicolson => "crank_nicolson",
        Scheme::FractionalL2 => "l2_1sigma",
    }
}

fn require_truth(cfg: &Config) -> Outcome<Arc<dyn Reaction>> {
    cfg.truth()?
        .ok_or_else(|| Failure::Config("solve needs a truth reaction".into()))
}

fn source_max(problem: &Problem) -> f64 {
    match &problem.source {
        Source::Steady(r) => r.amax(),
        _ => 0.0,
    }
}

/// Forward solve with the truth: `g.csv`, optionally `history.csv`, and a
/// report. For `f ≡ 0` the report also compares against the eigen-expansion
/// of the linear solution.
pub fn solve(cfg: &Config, out: &Path) -> Outcome<Report> {
    let truth = require_truth(cfg)?;
    let op = Arc::new(cfg.operator()?);
    let problem = cfg.problem(&op, cfg.time.alpha, cfg.time.t_final, Some(truth.as_ref()))?;
    let hist = solve_forward(&problem, truth.as_ref())?;
    let g = hist.final_state();
    let grid = problem.grid();

    std::fs::create_dir_all(out)?;
    let mut w = create(out, "g.csv")?;
    write_field(&mut w, grid, g)?;
    w.flush()?;
    if cfg.output.history {
        let mut w = create(out, "history.csv")?;
        hist.write_csv(grid, &mut w)?;
        w.flush()?;
    }

    let mut report = Report::default();
    report.put("command", "solve");
    report.put("seed", cfg.seed);
    report.num("alpha", problem.time.alpha);
    report.num("t_final", problem.time.t_final);
    report.put("n", grid.len());
    report.put("n_steps", problem.time.n_steps);
    report.put("scheme", scheme_name(problem.time.scheme));
    report.num("source_max", source_max(&problem));
    report.num("g_min", g.min());
    report.num("g_max", g.max());
    report.num("g_l2", grid.l2_norm(g));
    if is_zero_reaction(cfg) {
        let reference = linear_reference(&problem)?;
        let err = (g - &reference).amax();
        report.num("spectral_reference_error", err);
    }
    report.write(out)?;
    Ok(report)
}

fn is_zero_reaction(cfg: &Config) -> bool {
    cfg.truth.kind == crate::config::TruthKind::Zero
}

/// `u(T) = 𝔼(T)u0 + ∫_0^T 𝔼̄(T − s) r ds` for a steady or zero source.
fn linear_reference(problem: &Problem) -> Outcome<reactid::spectral::Field> {
    let (alpha, t) = (problem.time.alpha, problem.time.t_final);
    let op = &problem.op;
    let mut u = op.apply_e(alpha, t, &problem.u0)?;
    match &problem.source {
        Source::Zero => {}
        Source::Steady(r) => {
            u += op.apply_ebar_convolution(alpha, t, &[0.0, t], &[r.clone(), r.clone()])?;
        }
        _ => return Err(Failure::Config("the linear reference needs a steady source".into())),
    }
    Ok(u)
}

/// Everything a reconstruction needs, assembled from a config.
pub struct Setup {
    pub problem: Problem,
    pub data: OverposedData,
    pub truth: Option<Arc<dyn Reaction>>,
    pub f0: ReactionTerm,
}

/// Builds the data (external or synthetic) and the starting iterate at the
/// given `(α, T)`.
pub fn setup(cfg: &Config, alpha: f64, t_final: f64) -> Outcome<Setup> {
    let truth = cfg.truth()?;
    let op = Arc::new(cfg.operator()?);
    let problem = cfg.problem(&op, alpha, t_final, truth.as_deref())?;
    let grid = problem.grid().clone();
    let (gd, delta) = match &cfg.data.file {
        Some(file) => {
            let path = cfg.base.join(file);
            let f = File::open(&path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let gd = read_field(f, &grid)?;
            let delta = cfg.data.delta.unwrap_or(cfg.data.noise * grid.l2_norm(&gd));
            (gd, delta)
        }
        None => {
            let f = truth.as_deref().unwrap_or(&Builtin::Zero);
            let g = solve_forward(&problem, f)?.final_state().clone();
            add_noise(&grid, &g, cfg.data.noise, cfg.seed)?
        }
    };
    let data = if delta == 0.0 && cfg.data.file.is_none() {
        OverposedData::exact(&op, &gd)
    } else {
        smooth_data(&op, &gd, delta, cfg.data.sigma, cfg.data.n_modes)?
    };
    let interval = data_interval(&data)?;
    let problem = problem.with_clamp(interval);
    let mut template = ReactionTerm::uniform(interval, cfg.method.basis_size)?;
    if let Some(s) = cfg.method.basis_width {
        template = template.with_width(s)?;
    }
    let init = cfg.init(truth.as_ref());
    let f0 = fit_reaction(init.as_ref(), &template)?;
    Ok(Setup {
        problem,
        data,
        truth,
        f0,
    })
}

fn run_method(cfg: &Config, s: &Setup, max_iters: Option<usize>) -> Outcome<ReconstructionTrace> {
    let truth = s.truth.as_deref();
    let trace = match cfg.method.kind {
        MethodKind::Fixedpoint => {
            let mut fp = cfg.fixedpoint_config();
            if let Some(m) = max_iters {
                fp.max_iters = m;
            }
            run_fixed_point(&fp, &s.problem, &s.data, &s.f0, truth)?
        }
        MethodKind::Newton => {
            let mut nc = cfg.newton_config()?;
            if let Some(m) = max_iters {
                nc.max_iters = m;
            }
            run_newton(&nc, &s.problem, &s.data, &s.f0, truth)?
        }
    };
    Ok(trace)
}

/// The sweep quantity of the first iterate: the relative true error
/// `‖f_1 − f‖ / ‖f_0 − f‖` on the coverage mask, or the step `‖f_1 − f_0‖_∞`.
pub fn first_iterate_metric(metric: SweepMetric, trace: &ReconstructionTrace) -> f64 {
    let Some(first) = trace.record(1) else {
        return f64::NAN;
    };
    match metric {
        SweepMetric::FirstStep => first.step,
        SweepMetric::RelativeError => match (first.true_error, trace.initial_error) {
            (Some(e1), Some(e0)) if e0 > 0.0 => e1 / e0,
            _ => f64::NAN,
        },
    }
}

fn status_name(s: &Status) -> &'static str {
    match s {
        Status::Stalled => "stalled",
        Status::Discrepancy => "discrepancy",
        Status::MaxIters => "max_iters",
        Status::Diverged => "diverged",
        Status::Failed(_) => "failed",
    }
}

fn write_trace(cfg: &Config, trace: &ReconstructionTrace, out: &Path) -> Outcome<()> {
    std::fs::create_dir_all(out)?;
    let mut w = create(out, "trace.csv")?;
    trace.write_csv(&mut w)?;
    w.flush()?;
    if cfg.output.snapshots {
        let mut w = create(out, "snapshots.csv")?;
        trace.write_snapshots(&mut w, cfg.output.samples)?;
        w.flush()?;
    }
    let mut w = create(out, "f_recon.csv")?;
    let samples = trace.final_f.sample(cfg.output.samples);
    write_table(&mut w, &["u", "f_u"], samples.into_iter().map(|(u, v)| vec![u, v]))?;
    w.flush()?;
    Ok(())
}

/// Reconstruction: trace, snapshots, `f_recon.csv` and a report. The
/// artifacts are written before the status is turned into a failure.
pub fn reconstruct(cfg: &Config, out: &Path) -> Outcome<Report> {
    let s = setup(cfg, cfg.time.alpha, cfg.time.t_final)?;
    let trace = run_method(cfg, &s, None)?;
    write_trace(cfg, &trace, out)?;

    let mut report = Report::default();
    report.put("command", "reconstruct");
    report.put(
        "method",
        match cfg.method.kind {
            MethodKind::Fixedpoint => "fixedpoint",
            MethodKind::Newton => "newton",
        },
    );
    report.put("seed", cfg.seed);
    report.num("alpha", s.problem.time.alpha);
    report.num("t_final", s.problem.time.t_final);
    report.num("delta", s.data.delta);
    report.num("mu", s.data.mu);
    report.num("data_misfit", s.data.misfit);
    report.num("g_min", s.problem.clamp.g_min);
    report.num("g_max", s.problem.clamp.g_max);
    report.num("coverage", trace.coverage.fraction());
    report.put("status", status_name(&trace.status));
    report.put("iterations", trace.iterations());
    if let Some(last) = trace.records.last() {
        report.num("final_residual", last.residual);
        if let Some(e) = last.true_error {
            report.num("final_true_error", e);
        }
    }
    if cfg.method.kind == MethodKind::Newton {
        let tau = cfg.newton.tau;
        report.num("tau_delta", tau * s.data.delta);
    }
    if let Some(e0) = trace.initial_error {
        report.num("initial_true_error", e0);
    }
    for r in &trace.records {
        report.num(&format!("residual_{}", r.iter), r.residual);
        if let Some(e) = r.true_error {
            report.num(&format!("true_error_{}", r.iter), e);
        }
    }
    report.num("first_iterate_metric", first_iterate_metric(cfg.sweep.metric, &trace));
    report.num("first_iterate_step", trace.record(1).map_or(f64::NAN, |r| r.step));
    report.write(out)?;

    match &trace.status {
        Status::Stalled | Status::Discrepancy => Ok(report),
        Status::Failed(e) => Err(Failure::Solver(e.to_string())),
        other => Err(Failure::NotConverged(format!(
            "{} after {} iterations",
            status_name(other),
            trace.iterations()
        ))),
    }
}

/// One sweep cell: a single iteration at `(T, α)` in its own directory.
/// Any failure becomes `NaN`.
fn sweep_cell(cfg: &Config, t: f64, alpha: f64, dir: &Path) -> f64 {
    let run = || -> Outcome<f64> {
        let s = setup(cfg, alpha, t)?;
        let trace = run_method(cfg, &s, Some(1))?;
        write_trace(cfg, &trace, dir)?;
        if let Status::Failed(e) = &trace.status {
            return Err(Failure::Solver(e.to_string()));
        }
        Ok(first_iterate_metric(cfg.sweep.metric, &trace))
    };
    match run() {
        Ok(m) => m,
        Err(e) => {
            let _ = std::fs::create_dir_all(dir);
            let _ = std::fs::write(dir.join("error.txt"), format!("{e}\n"));
            f64::NAN
        }
    }
}

pub fn cell_dir(out: &Path, t: f64, alpha: f64) -> PathBuf {
    out.join(format!("T{t}_alpha{alpha}"))
}

/// Runs every `(T, α)` cell on the current rayon pool and writes
/// `sweep.csv` in axis order.
pub fn sweep(cfg: &Config, out: &Path) -> Outcome<Vec<(f64, f64, f64)>> {
    std::fs::create_dir_all(out)?;
    let cells: Vec<(f64, f64)> = cfg
        .sweep
        .alphas
        .iter()
        .flat_map(|&a| cfg.sweep.t_values.iter().map(move |&t| (t, a)))
        .collect();
    let rows: Vec<(f64, f64, f64)> = cells
        .par_iter()
        .map(|&(t, a)| (t, a, sweep_cell(cfg, t, a, &cell_dir(out, t, a))))
        .collect();
    let mut w = create(out, "sweep.csv")?;
    write_table(
        &mut w,
        &["T", "alpha", "metric"],
        rows.iter().map(|&(t, a, m)| vec![t, a, m]),
    )?;
    w.flush()?;
    Ok(rows)
}
