//! Experiment configuration: TOML with one table per concern. Every key has
//! a default, so an empty file describes the `f^{(a)}` benchmark.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use reactid::benchmark::calibrate_amplitude;
use reactid::fixedpoint::FixedPointConfig;
use reactid::forward::{Problem, Scheme, Source, TimeConfig};
use reactid::io::{read_field, read_table};
use reactid::newton::{NewtonConfig, Variant};
use reactid::reaction::{Builtin, ClampInterval, Reaction, ReactionTerm};
use reactid::spectral::{Boundary, EllipticOperator, Field, Grid1D};
use serde::Deserialize;

/// Raised for anything wrong with the configuration or the files it names.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn cfg_err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub domain: Domain,
    pub operator: Operator,
    pub time: Time,
    pub truth: Truth,
    pub initial: Initial,
    pub source: SourceSection,
    pub data: Data,
    pub method: Method,
    pub fixedpoint: FixedPoint,
    pub newton: Newton,
    pub sweep: Sweep,
    pub output: Output,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 1,
            domain: Domain::default(),
            operator: Operator::default(),
            time: Time::default(),
            truth: Truth::default(),
            initial: Initial::default(),
            source: SourceSection::default(),
            data: Data::default(),
            method: Method::default(),
            fixedpoint: FixedPoint::default(),
            newton: Newton::default(),
            sweep: Sweep::default(),
            output: Output::default(),
            base: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl Default for Domain {
    fn default() -> Self {
        Domain {
            x_min: 0.0,
            x_max: 1.0,
            n: 401,
        }
    }
}

/// A coefficient given as a constant or as an `x,value` table.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Constant(f64),
    Table(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
    Robin,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Operator {
    pub a: Coefficient,
    pub c: Coefficient,
    pub left: BoundaryKind,
    pub left_gamma: f64,
    pub right: BoundaryKind,
    pub right_gamma: f64,
}

impl Default for Operator {
    fn default() -> Self {
        Operator {
            a: Coefficient::Constant(1.0),
            c: Coefficient::Constant(0.0),
            left: BoundaryKind::Dirichlet,
            left_gamma: 0.0,
            right: BoundaryKind::Neumann,
            right_gamma: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Auto,
    CrankNicolson,
    L2,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Time {
    pub alpha: f64,
    pub t_final: f64,
    pub n_steps: usize,
    pub scheme: SchemeKind,
}

impl Default for Time {
    fn default() -> Self {
        Time {
            alpha: 1.0,
            t_final: 1.0,
            n_steps: 400,
            scheme: SchemeKind::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    Zeldovich,
    LipschitzB,
    Zero,
    Polynomial,
    Rbf,
    None,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Truth {
    pub kind: TruthKind,
    /// Threshold `a` of the Zeldovich term.
    pub a: f64,
    /// Ascending polynomial coefficients.
    pub coeffs: Vec<f64>,
    /// `center,coeff` table of an RBF truth.
    pub table: Option<String>,
    /// Gaussian width `s` of an RBF truth.
    pub width: Option<f64>,
}

impl Default for Truth {
    fn default() -> Self {
        Truth {
            kind: TruthKind::Zeldovich,
            a: 0.75,
            coeffs: Vec::new(),
            table: None,
            width: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Zero,
    Table,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Initial {
    pub kind: InitialKind,
    pub table: Option<String>,
}

impl Default for Initial {
    fn default() -> Self {
        Initial {
            kind: InitialKind::Zero,
            table: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Zero,
    Constant,
    QuarterSine,
    Table,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub kind: SourceKind,
    pub amplitude: f64,
    /// Rescale the amplitude so that `max g` equals this value.
    pub peak: Option<f64>,
    pub table: Option<String>,
}

impl Default for SourceSection {
    fn default() -> Self {
        SourceSection {
            kind: SourceKind::QuarterSine,
            amplitude: 9.0,
            peak: None,
            table: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Data {
    /// Relative noise level; with `file`, only sets `δ = noise · ‖g^δ‖`.
    pub noise: f64,
    /// Absolute noise level of external data; overrides `noise`.
    pub delta: Option<f64>,
    pub sigma: f64,
    pub n_modes: Option<usize>,
    /// External `x,value` data instead of a synthetic run.
    pub file: Option<String>,
}

impl Default for Data {
    fn default() -> Self {
        Data {
            noise: 0.01,
            delta: None,
            sigma: 2.0,
            n_modes: None,
            file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Fixedpoint,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Zero,
    /// `u(1 − u)(u − ¼)`
    ZeldovichInit,
    /// `1 + sin 4u`
    SinInit,
    Truth,
    Polynomial,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Method {
    pub kind: MethodKind,
    pub basis_size: usize,
    /// Gaussian width `s`; default `(2Δ)²` with `Δ` the center spacing.
    pub basis_width: Option<f64>,
    pub init: InitKind,
    pub init_coeffs: Vec<f64>,
}

impl Default for Method {
    fn default() -> Self {
        Method {
            kind: MethodKind::Fixedpoint,
            basis_size: 25,
            basis_width: None,
            init: InitKind::Zero,
            init_coeffs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPoint {
    pub max_iters: usize,
    pub stall_tol: f64,
    pub rho_cap: Option<f64>,
}

impl Default for FixedPoint {
    fn default() -> Self {
        let d = FixedPointConfig::default();
        FixedPoint {
            max_iters: d.max_iters,
            stall_tol: d.stall_tol,
            rho_cap: d.rho_cap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    Tikhonov,
    Ivanov,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Newton {
    pub variant: VariantKind,
    pub gamma0: f64,
    pub kappa: f64,
    pub varrho: f64,
    pub tau: f64,
    pub max_iters: usize,
    pub frozen: bool,
    pub freeze_after: Option<usize>,
    pub step_cap: f64,
    pub eps0: f64,
    pub eps2: f64,
    /// `u,lambda` table of the weight in the smoothing penalty.
    pub lambda_weight: Option<String>,
}

impl Default for Newton {
    fn default() -> Self {
        let d = NewtonConfig::default();
        Newton {
            variant: VariantKind::Tikhonov,
            gamma0: d.gamma0,
            kappa: d.kappa,
            varrho: d.varrho,
            tau: d.tau,
            max_iters: d.max_iters,
            frozen: d.freeze_jacobian,
            freeze_after: d.freeze_after,
            step_cap: d.step_cap,
            eps0: d.eps0,
            eps2: d.eps2,
            lambda_weight: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMetric {
    /// `‖f_1 − f_act‖_∞ / ‖f_0 − f_act‖_∞` on the coverage mask.
    RelativeError,
    /// `‖f_1 − f_0‖_∞` on the basis interval.
    FirstStep,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    pub t_values: Vec<f64>,
    pub alphas: Vec<f64>,
    pub metric: SweepMetric,
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep {
            t_values: vec![0.1, 0.2, 0.5, 1.0, 2.0, 5.0],
            alphas: vec![1.0, 0.5],
            metric: SweepMetric::RelativeError,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    /// Write the full `t,x,u` history from `solve`.
    pub history: bool,
    /// Write per-iterate `iter,u,f_u` samples from `reconstruct`.
    pub snapshots: bool,
    /// Points per sampled reaction term.
    pub samples: usize,
}

impl Default for Output {
    fn default() -> Self {
        Output {
            history: true,
            snapshots: true,
            samples: 201,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| cfg_err(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the cross-field constraints that need no file access; the
    /// builders below re-check everything through the library.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.grid()?;
        self.time_config(self.time.alpha, self.time.t_final)?;
        self.fixedpoint_config().validate().map_err(lib_err)?;
        self.newton_config_without_weight().validate().map_err(lib_err)?;
        if !(self.data.noise >= 0.0) || !self.data.noise.is_finite() {
            return Err(cfg_err("data.noise must be >= 0"));
        }
        if let Some(d) = self.data.delta {
            if !(d >= 0.0) {
                return Err(cfg_err("data.delta must be >= 0"));
            }
        }
        if !(self.data.sigma > 1.5) {
            return Err(cfg_err("data.sigma must exceed 3/2"));
        }
        if self.method.basis_size < 2 {
            return Err(cfg_err("method.basis_size must be at least 2"));
        }
        if self.output.samples < 2 {
            return Err(cfg_err("output.samples must be at least 2"));
        }
        if self.truth.kind == TruthKind::None && self.data.file.is_none() {
            return Err(cfg_err("truth.kind = \"none\" needs data.file"));
        }
        if self.truth.kind == TruthKind::Polynomial && self.truth.coeffs.is_empty() {
            return Err(cfg_err("truth.kind = \"polynomial\" needs truth.coeffs"));
        }
        if self.truth.kind == TruthKind::Rbf && (self.truth.table.is_none() || self.truth.width.is_none()) {
            return Err(cfg_err("truth.kind = \"rbf\" needs truth.table and truth.width"));
        }
        if self.method.init == InitKind::Truth && self.truth.kind == TruthKind::None {
            return Err(cfg_err("method.init = \"truth\" needs a truth"));
        }
        if self.method.init == InitKind::Polynomial && self.method.init_coeffs.is_empty() {
            return Err(cfg_err("method.init = \"polynomial\" needs method.init_coeffs"));
        }
        if self.initial.kind == InitialKind::Table && self.initial.table.is_none() {
            return Err(cfg_err("initial.kind = \"table\" needs initial.table"));
        }
        if self.source.kind == SourceKind::Table && self.source.table.is_none() {
            return Err(cfg_err("source.kind = \"table\" needs source.table"));
        }
        if let Some(p) = self.source.peak {
            if !(p > 0.0) {
                return Err(cfg_err("source.peak must be positive"));
            }
        }
        if self.sweep.t_values.is_empty() || self.sweep.alphas.is_empty() {
            return Err(cfg_err("sweep.t_values and sweep.alphas must be nonempty"));
        }
        for &t in &self.sweep.t_values {
            for &a in &self.sweep.alphas {
                self.time_config(a, t)?;
            }
        }
        Ok(())
    }

    fn path(&self, p: &str) -> PathBuf {
        self.base.join(p)
    }

    fn open(&self, p: &str) -> Result<File, ConfigError> {
        let path = self.path(p);
        File::open(&path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))
    }

    pub fn grid(&self) -> Result<Grid1D, ConfigError> {
        Grid1D::new(self.domain.x_min, self.domain.x_max, self.domain.n).map_err(lib_err)
    }

    pub fn time_config(&self, alpha: f64, t_final: f64) -> Result<TimeConfig, ConfigError> {
        let tc = match self.time.scheme {
            SchemeKind::Auto => TimeConfig::new(alpha, t_final, self.time.n_steps),
            SchemeKind::CrankNicolson => {
                TimeConfig::with_scheme(alpha, t_final, self.time.n_steps, Scheme::CrankNicolson)
            }
            SchemeKind::L2 => TimeConfig::with_scheme(alpha, t_final, self.time.n_steps, Scheme::FractionalL2),
        };
        tc.map_err(lib_err)
    }

    fn field(&self, grid: &Grid1D, c: &Coefficient) -> Result<Field, ConfigError> {
        match c {
            Coefficient::Constant(v) => Ok(Field::from_element(grid.len(), *v)),
            Coefficient::Table(p) => read_field(self.open(p)?, grid).map_err(lib_err),
        }
    }

    fn boundary(kind: BoundaryKind, gamma: f64) -> Boundary {
        match kind {
            BoundaryKind::Dirichlet => Boundary::Dirichlet,
            BoundaryKind::Neumann => Boundary::Robin(0.0),
            BoundaryKind::Robin => Boundary::Robin(gamma),
        }
    }

    pub fn operator(&self) -> Result<EllipticOperator, ConfigError> {
        let grid = self.grid()?;
        let a = self.field(&grid, &self.operator.a)?;
        let c = self.field(&grid, &self.operator.c)?;
        EllipticOperator::build(
            grid,
            a.as_slice(),
            c.as_slice(),
            Self::boundary(self.operator.left, self.operator.left_gamma),
            Self::boundary(self.operator.right, self.operator.right_gamma),
        )
        .map_err(lib_err)
    }

    /// The truth, `None` for external data without one.
    pub fn truth(&self) -> Result<Option<Arc<dyn Reaction>>, ConfigError> {
        let t: Arc<dyn Reaction> = match self.truth.kind {
            TruthKind::Zeldovich => Arc::new(Builtin::Zeldovich { a: self.truth.a }),
            TruthKind::LipschitzB => Arc::new(Builtin::LipschitzB),
            TruthKind::Zero => Arc::new(Builtin::Zero),
            TruthKind::Polynomial => Arc::new(Builtin::Polynomial(self.truth.coeffs.clone())),
            TruthKind::Rbf => {
                let table = self.truth.table.as_deref().unwrap_or_default();
                let rows = read_table(self.open(table)?, 2).map_err(lib_err)?;
                let centers: Vec<f64> = rows.iter().map(|r| r[0]).collect();
                let coeffs = rows.iter().map(|r| r[1]).collect();
                let lo = centers.first().copied().unwrap_or(0.0);
                let hi = centers.last().copied().unwrap_or(0.0);
                let iv = ClampInterval::new(lo, hi).map_err(lib_err)?;
                let width = self.truth.width.unwrap_or(1.0);
                Arc::new(ReactionTerm::new(centers, width, coeffs, iv).map_err(lib_err)?)
            }
            TruthKind::None => return Ok(None),
        };
        Ok(Some(t))
    }

    /// The forward problem with an unbounded clamp at the given `(α, T)`.
    /// With `source.peak`, the amplitude is calibrated against `truth`.
    pub fn problem(
        &self,
        op: &Arc<EllipticOperator>,
        alpha: f64,
        t_final: f64,
        truth: Option<&dyn Reaction>,
    ) -> Result<Problem, ReactidOrConfig> {
        let grid = op.grid();
        let time = self.time_config(alpha, t_final)?;
        let u0 = match self.initial.kind {
            InitialKind::Zero => Field::zeros(grid.len()),
            InitialKind::Table => {
                read_field(self.open(self.initial.table.as_deref().unwrap_or_default())?, grid).map_err(lib_err)?
            }
        };
        let shape = match self.source.kind {
            SourceKind::Zero => None,
            SourceKind::Constant => Some(Field::from_element(grid.len(), 1.0)),
            SourceKind::QuarterSine => {
                let (a, b) = (grid.x_min(), grid.x_max());
                Some(grid.sample(|x| (std::f64::consts::FRAC_PI_2 * (x - a) / (b - a)).sin()))
            }
            SourceKind::Table => {
                Some(read_field(self.open(self.source.table.as_deref().unwrap_or_default())?, grid).map_err(lib_err)?)
            }
        };
        let mut problem = Problem {
            op: op.clone(),
            time,
            u0,
            source: Source::Zero,
            clamp: ClampInterval::unbounded(),
        };
        if let Some(shape) = shape {
            let amplitude = match (self.source.peak, truth) {
                (Some(peak), Some(f)) => calibrate_amplitude(&problem, &shape, f, peak)?,
                _ => self.source.amplitude,
            };
            problem.source = Source::Steady(shape * amplitude);
        }
        Ok(problem)
    }

    pub fn fixedpoint_config(&self) -> FixedPointConfig {
        FixedPointConfig {
            max_iters: self.fixedpoint.max_iters,
            stall_tol: self.fixedpoint.stall_tol,
            rho_cap: self.fixedpoint.rho_cap,
            record_trace: true,
        }
    }

    fn newton_config_without_weight(&self) -> NewtonConfig {
        let n = &self.newton;
        NewtonConfig {
            variant: match n.variant {
                VariantKind::Tikhonov => Variant::Tikhonov,
                VariantKind::Ivanov => Variant::Ivanov,
            },
            gamma0: n.gamma0,
            kappa: n.kappa,
            varrho: n.varrho,
            tau: n.tau,
            max_iters: n.max_iters,
            freeze_jacobian: n.frozen,
            freeze_after: n.freeze_after,
            step_cap: n.step_cap,
            eps0: n.eps0,
            eps2: n.eps2,
            lambda_weight: None,
            record_trace: true,
        }
    }

    pub fn newton_config(&self) -> Result<NewtonConfig, ConfigError> {
        let mut cfg = self.newton_config_without_weight();
        if let Some(p) = &self.newton.lambda_weight {
            let rows = read_table(self.open(p)?, 2).map_err(lib_err)?;
            cfg.lambda_weight = Some(rows.iter().map(|r| (r[0], r[1])).collect());
            cfg.validate().map_err(lib_err)?;
        }
        Ok(cfg)
    }

    /// The starting reaction term as a plain function.
    pub fn init(&self, truth: Option<&Arc<dyn Reaction>>) -> Arc<dyn Reaction> {
        match self.method.init {
            InitKind::Zero => Arc::new(Builtin::Zero),
            InitKind::ZeldovichInit => Arc::new(Builtin::Polynomial(vec![0.0, -0.25, 1.25, -1.0])),
            InitKind::SinInit => Arc::new(Builtin::SinInit),
            InitKind::Polynomial => Arc::new(Builtin::Polynomial(self.method.init_coeffs.clone())),
            InitKind::Truth => truth.cloned().unwrap_or_else(|| Arc::new(Builtin::Zero)),
        }
    }
}

/// A library error met while reading or checking configuration input.
fn lib_err(e: reactid::Error) -> ConfigError {
    cfg_err(e.to_string())
}

/// Either kind of failure while assembling a problem: bad input, or a
/// forward solve that failed during source calibration.
#[derive(Debug)]
pub enum ReactidOrConfig {
    Config(ConfigError),
    Solver(reactid::Error),
}

impl From<ConfigError> for ReactidOrConfig {
    fn from(e: ConfigError) -> Self {
        ReactidOrConfig::Config(e)
    }
}

impl From<reactid::Error> for ReactidOrConfig {
    fn from(e: reactid::Error) -> Self {
        match e {
            reactid::Error::InvalidParameter(_) | reactid::Error::Input(_) => ReactidOrConfig::Config(lib_err(e)),
            other => ReactidOrConfig::Solver(other),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_zeldovich_benchmark() {
        let cfg = Config::parse("").unwrap();
        assert_eq!(cfg.truth.kind, TruthKind::Zeldovich);
        assert_eq!(cfg.domain.n, 401);
        assert_eq!(cfg.time.n_steps, 400);
        assert_eq!(cfg.method.basis_size, 25);
    }

    #[test]
    fn dotted_sections_parse() {
        let cfg = Config::parse("seed = 7\ntime.alpha = 0.5\n[newton]\nvariant = \"ivanov\"\nvarrho = 2.0\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.time.alpha, 0.5);
        assert_eq!(cfg.newton.variant, VariantKind::Ivanov);
    }

    #[test]
    fn bad_values_are_rejected() {
        for text in [
            "time.alpha = 1.5",
            "time.n_steps = 1",
            "data.sigma = 1.0",
            "unknown = 1",
            "[time]\nalfa = 1",
            "truth.kind = \"none\"",
            "newton.kappa = 2.0",
            "sweep.t_values = []",
            "domain.n = 2",
        ] {
            assert!(Config::parse(text).is_err(), "{text}");
        }
    }
}
