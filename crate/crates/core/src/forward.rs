//! Time stepping for `D_t^α u − 𝕃u = f(Pu) + r` with `u(0) = u0`.
//!
//! `α = 1` uses Crank–Nicolson. `0 < α < 1` uses the L2-1σ discretization of
//! the Caputo derivative at the shifted points `t_{j+σ}`, `σ = 1 − α/2`,
//! which is second order in time for smooth solutions. Both are written in
//! the common form
//!
//! ```text
//! μ Σ_l c_l^{(j)} W (u^{j+1-l} − u^{j-l}) + K (σ u^{j+1} + (1−σ) u^j) = W (F_j + r_j)
//! ```
//!
//! with the stiffness `K` and mass `W` of the [`EllipticOperator`]. The
//! nonlinearity is resolved by Picard sweeps, each a tridiagonal solve; when
//! the sweeps fail to contract the step falls back to Newton's method.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::io::fmt_num;
use crate::reaction::{ClampInterval, Reaction};
use crate::special::gamma;
use crate::spectral::{EllipticOperator, Field, Grid1D};

const PICARD_MAX: usize = 25;
const PICARD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    CrankNicolson,
    FractionalL2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeConfig {
    pub alpha: f64,
    pub t_final: f64,
    pub n_steps: usize,
    pub scheme: Scheme,
}

impl TimeConfig {
    /// Picks Crank–Nicolson for `α = 1` and L2-1σ otherwise.
    pub fn new(alpha: f64, t_final: f64, n_steps: usize) -> Result<Self> {
        let scheme = if alpha == 1.0 {
            Scheme::CrankNicolson
        } else {
            Scheme::FractionalL2
        };
        Self::with_scheme(alpha, t_final, n_steps, scheme)
    }

    pub fn with_scheme(alpha: f64, t_final: f64, n_steps: usize, scheme: Scheme) -> Result<Self> {
        let tc = TimeConfig {
            alpha,
            t_final,
            n_steps,
            scheme,
        };
        tc.validate()?;
        Ok(tc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        match self.scheme {
            Scheme::CrankNicolson if self.alpha != 1.0 => {
                return Err(invalid("Crank-Nicolson requires alpha = 1"));
            }
            Scheme::FractionalL2 if self.alpha >= 1.0 => {
                return Err(invalid("the fractional scheme requires alpha < 1"));
            }
            _ => {}
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(invalid(format!("final time must be positive, got {}", self.t_final)));
        }
        if self.n_steps < 2 {
            return Err(invalid(format!("need at least 2 time steps, got {}", self.n_steps)));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        let mut t: Vec<f64> = (0..=self.n_steps).map(|k| dt * k as f64).collect();
        t[self.n_steps] = self.t_final;
        t
    }

    /// The collocation offset `σ` within each step.
    pub fn sigma(&self) -> f64 {
        match self.scheme {
            Scheme::CrankNicolson => 0.5,
            Scheme::FractionalL2 => 1.0 - 0.5 * self.alpha,
        }
    }
}

/// The source `r(x, t)`.
#[derive(Clone, Default)]
pub enum Source {
    #[default]
    Zero,
    /// Independent of time.
    Steady(Field),
    Function(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
    /// Samples at increasing times, interpolated linearly and held constant
    /// beyond the last sample.
    Sampled {
        times: Vec<f64>,
        values: Vec<Field>,
    },
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Zero => write!(f, "Zero"),
            Source::Steady(v) => write!(f, "Steady({} nodes)", v.len()),
            Source::Function(_) => write!(f, "Function(..)"),
            Source::Sampled { times, .. } => write!(f, "Sampled({} times)", times.len()),
        }
    }
}

impl Source {
    pub fn function(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Source::Function(Arc::new(f))
    }

    pub fn at(&self, grid: &Grid1D, t: f64) -> Field {
        match self {
            Source::Zero => Field::zeros(grid.len()),
            Source::Steady(v) => v.clone(),
            Source::Function(f) => grid.sample(|x| f(x, t)),
            Source::Sampled { times, values } => {
                let k = times.partition_point(|&s| s <= t);
                if k == 0 {
                    values[0].clone()
                } else if k == times.len() {
                    values[k - 1].clone()
                } else {
                    let theta = (t - times[k - 1]) / (times[k] - times[k - 1]);
                    &values[k - 1] * (1.0 - theta) + &values[k] * theta
                }
            }
        }
    }

    fn check(&self, grid: &Grid1D) -> Result<()> {
        let n = grid.len();
        match self {
            Source::Steady(v) if v.len() != n => Err(Error::Input(format!("source has {} values, grid {n}", v.len()))),
            Source::Sampled { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::Input("sampled source needs one field per time".into()));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Input("sampled source times must increase".into()));
                }
                if values.iter().any(|v| v.len() != n) {
                    return Err(Error::Input(format!("sampled source fields must have {n} values")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Everything that defines a forward problem except the reaction term.
#[derive(Debug, Clone)]
pub struct Problem {
    pub op: Arc<EllipticOperator>,
    pub time: TimeConfig,
    pub u0: Field,
    pub source: Source,
    pub clamp: ClampInterval,
}

impl Problem {
    pub fn grid(&self) -> &Grid1D {
        self.op.grid()
    }

    /// A copy with a different clamp interval.
    pub fn with_clamp(&self, clamp: ClampInterval) -> Self {
        Problem { clamp, ..self.clone() }
    }

    pub fn with_time(&self, time: TimeConfig) -> Self {
        Problem { time, ..self.clone() }
    }
}

/// The full trajectory of a forward solve.
#[derive(Debug, Clone)]
pub struct StateHistory {
    pub time: TimeConfig,
    pub times: Vec<f64>,
    /// One field per time level; `states[0]` is the initial condition.
    pub states: Vec<Field>,
}

impl StateHistory {
    pub fn final_state(&self) -> &Field {
        self.states.last().expect("history is never empty")
    }

    pub fn is_complete(&self) -> bool {
        self.states.len() == self.time.n_steps + 1
    }

    /// Writes `t,x,u` records.
    pub fn write_csv(&self, grid: &Grid1D, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "t,x,u")?;
        for (t, state) in self.times.iter().zip(&self.states) {
            for (x, u) in grid.nodes().iter().zip(state.iter()) {
                writeln!(out, "{},{},{}", fmt_num(*t), fmt_num(*x), fmt_num(*u))?;
            }
        }
        Ok(())
    }
}

/// Caputo weights of the scheme, shared by the forward and linearized solves.
#[derive(Debug, Clone)]
struct Weights {
    sigma: f64,
    mu: f64,
    a: Vec<f64>,
    /// `b[l]` for `l ≥ 1`; `b[0]` is unused.
    b: Vec<f64>,
    crank_nicolson: bool,
}

impl Weights {
    fn new(tc: &TimeConfig) -> Self {
        let alpha = tc.alpha;
        let n = tc.n_steps;
        let sigma = tc.sigma();
        match tc.scheme {
            Scheme::CrankNicolson => Weights {
                sigma,
                mu: 1.0 / tc.dt(),
                a: vec![1.0],
                b: vec![0.0],
                crank_nicolson: true,
            },
            Scheme::FractionalL2 => {
                let p1 = |s: f64| s.powf(1.0 - alpha);
                let p2 = |s: f64| s.powf(2.0 - alpha);
                let mut a = Vec::with_capacity(n + 1);
                a.push(p1(sigma));
                for l in 1..=n {
                    let (hi, lo) = (l as f64 + sigma, l as f64 - 1.0 + sigma);
                    a.push(p1(hi) - p1(lo));
                }
                let mut b = vec![0.0; n + 1];
                for (l, bl) in b.iter_mut().enumerate().skip(1) {
                    let (hi, lo) = (l as f64 + sigma, l as f64 - 1.0 + sigma);
                    *bl = (p2(hi) - p2(lo)) / (2.0 - alpha) - 0.5 * (p1(hi) + p1(lo));
                }
                Weights {
                    sigma,
                    mu: tc.dt().powf(-alpha) / gamma(2.0 - alpha),
                    a,
                    b,
                    crank_nicolson: false,
                }
            }
        }
    }

    /// `c_l^{(j)}`, the weight of the difference `l` steps back when
    /// advancing from level `j` to `j + 1`.
    fn c(&self, j: usize, l: usize) -> f64 {
        if self.crank_nicolson {
            return if l == 0 { 1.0 } else { 0.0 };
        }
        if j == 0 {
            self.a[0]
        } else if l == 0 {
            self.a[0] + self.b[1]
        } else if l < j {
            self.a[l] + self.b[l + 1] - self.b[l]
        } else {
            self.a[j] - self.b[j]
        }
    }

    /// `Σ_{l=1}^{j} c_l^{(j)} d[j-l]` over the stored increments `d`.
    fn memory(&self, j: usize, d: &[Vec<f64>], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if self.crank_nicolson {
            return;
        }
        for l in 1..=j {
            let cl = self.c(j, l);
            for (o, dv) in out.iter_mut().zip(&d[j - l]) {
                *o += cl * dv;
            }
        }
    }

    /// Discrete Caputo derivative at `t_{j+σ}`.
    fn derivative_at(&self, j: usize, d: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; d[0].len()];
        self.memory(j, d, &mut out);
        let c0 = self.c(j, 0);
        for (o, dv) in out.iter_mut().zip(&d[j]) {
            *o = self.mu * (*o + c0 * dv);
        }
        out
    }
}

/// Tridiagonal solve; `lower[i]` couples rows `i+1` and `i`, the matrix is
/// symmetric apart from the diagonal so one off-diagonal suffices.
fn thomas(diag: &[f64], off: &[f64], rhs: &mut [f64], scratch: &mut Vec<f64>) {
    let n = diag.len();
    scratch.clear();
    scratch.resize(n, 0.0);
    let mut denom = diag[0];
    rhs[0] /= denom;
    for i in 1..n {
        scratch[i] = off[i - 1] / denom;
        denom = diag[i] - off[i - 1] * scratch[i];
        rhs[i] = (rhs[i] - off[i - 1] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i + 1] * rhs[i + 1];
    }
}

/// `K v` on the free nodes.
fn stiffness_apply(diag: &[f64], off: &[f64], v: &[f64], out: &mut [f64]) {
    let m = diag.len();
    for k in 0..m {
        let mut s = diag[k] * v[k];
        if k > 0 {
            s += off[k - 1] * v[k - 1];
        }
        if k + 1 < m {
            s += off[k] * v[k + 1];
        }
        out[k] = s;
    }
}

fn weighted_norm(mass: &[f64], v: &[f64]) -> f64 {
    mass.iter().zip(v).map(|(w, x)| w * x * x).sum::<f64>().sqrt()
}

/// Solves the forward problem and returns the full history.
pub fn solve_forward(problem: &Problem, f: &dyn Reaction) -> Result<StateHistory> {
    let tc = problem.time;
    tc.validate()?;
    let op = &problem.op;
    let grid = op.grid();
    let n = grid.len();
    if problem.u0.len() != n {
        return Err(Error::Input(format!("u0 has {} values, grid {n}", problem.u0.len())));
    }
    if problem.u0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("u0 must be finite".into()));
    }
    let free = op.free_nodes();
    for i in (0..n).filter(|i| !free.contains(i)) {
        if problem.u0[i].abs() > 1e-12 {
            return Err(Error::Input(format!(
                "u0 must vanish at Dirichlet node {i}, got {}",
                problem.u0[i]
            )));
        }
    }
    problem.source.check(grid)?;

    let (kd, ko) = op.stiffness();
    let mass = op.mass();
    let m = free.len();
    let lo = free.start;
    let w = Weights::new(&tc);
    let sigma = w.sigma;
    let times = tc.times();
    let dt = tc.dt();
    let clamp = problem.clamp;
    let fc = |u: f64| f.eval(clamp.clamp(u));
    let bound = 1e3 * (1.0 + problem.u0.amax() + clamp.g_max.abs() + clamp.g_min.abs());

    let restrict = |v: &Field| -> Vec<f64> { v.rows(lo, m).iter().copied().collect() };
    let mut u: Vec<Vec<f64>> = Vec::with_capacity(tc.n_steps + 1);
    u.push(restrict(&problem.u0));
    let mut d: Vec<Vec<f64>> = Vec::with_capacity(tc.n_steps);

    let mut hist = vec![0.0; m];
    let mut ku = vec![0.0; m];
    let mut base = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    let mut scratch = Vec::new();
    let mut lhs_diag = vec![0.0; m];

    for j in 0..tc.n_steps {
        let c0 = w.c(j, 0);
        let uj = &u[j];
        w.memory(j, &d, &mut hist);
        stiffness_apply(kd, ko, uj, &mut ku);
        let r = if w.crank_nicolson {
            (problem.source.at(grid, times[j]) + problem.source.at(grid, times[j + 1])) * 0.5
        } else {
            problem.source.at(grid, times[j] + sigma * dt)
        };
        let f_old: Vec<f64> = if w.crank_nicolson {
            uj.iter().map(|&v| fc(v)).collect()
        } else {
            Vec::new()
        };
        for k in 0..m {
            base[k] = w.mu * mass[k] * (c0 * uj[k] - hist[k]) - (1.0 - sigma) * ku[k] + mass[k] * r[lo + k];
            lhs_diag[k] = w.mu * c0 * mass[k] + sigma * kd[k];
        }
        let off: Vec<f64> = ko.iter().map(|o| sigma * o).collect();

        let start: Vec<f64> = if j == 0 {
            uj.clone()
        } else {
            uj.iter().zip(&u[j - 1]).map(|(a, b)| 2.0 * a - b).collect()
        };
        // the reaction enters the step through its argument with weight `s`
        let s_weight = if w.crank_nicolson { 0.5 } else { sigma };
        let arg = |g: f64, k: usize| -> f64 {
            if w.crank_nicolson {
                g
            } else {
                sigma * g + (1.0 - sigma) * uj[k]
            }
        };
        let forcing = |g: f64, k: usize| -> f64 {
            if w.crank_nicolson {
                0.5 * (fc(g) + f_old[k])
            } else {
                fc(arg(g, k))
            }
        };

        let mut guess = start.clone();
        let mut converged = false;
        let mut change = f64::INFINITY;
        for _ in 0..PICARD_MAX {
            for k in 0..m {
                rhs[k] = base[k] + mass[k] * forcing(guess[k], k);
            }
            thomas(&lhs_diag, &off, &mut rhs, &mut scratch);
            let diff: Vec<f64> = rhs.iter().zip(&guess).map(|(a, b)| a - b).collect();
            change = weighted_norm(mass, &diff);
            std::mem::swap(&mut guess, &mut rhs);
            if !change.is_finite() {
                break;
            }
            if change <= PICARD_TOL * (1.0 + weighted_norm(mass, &guess)) {
                converged = true;
                break;
            }
        }
        if !converged {
            // stiff reaction: Picard does not contract, Newton on the same
            // discrete equations does
            guess = start;
            let mut jac_diag = vec![0.0; m];
            for _ in 0..PICARD_MAX {
                stiffness_apply(kd, ko, &guess, &mut ku);
                for k in 0..m {
                    let a = clamp.clamp(arg(guess[k], k));
                    let slope = if clamp.contains(arg(guess[k], k)) {
                        f.deriv(a)
                    } else {
                        0.0
                    };
                    let lhs = w.mu * c0 * mass[k] * guess[k] + sigma * ku[k];
                    rhs[k] = base[k] + mass[k] * forcing(guess[k], k) - lhs;
                    jac_diag[k] = lhs_diag[k] - mass[k] * s_weight * slope;
                }
                thomas(&jac_diag, &off, &mut rhs, &mut scratch);
                change = weighted_norm(mass, &rhs);
                guess.iter_mut().zip(&rhs).for_each(|(g, dg)| *g += dg);
                if !change.is_finite() {
                    break;
                }
                if change <= PICARD_TOL * (1.0 + weighted_norm(mass, &guess)) {
                    converged = true;
                    break;
                }
            }
        }
        let next = guess;
        if next.iter().any(|v| !v.is_finite() || v.abs() > bound) {
            return Err(Error::BlowUp { step: j + 1 });
        }
        if !converged {
            return Err(Error::Solver {
                step: j + 1,
                residual: change,
            });
        }
        d.push(next.iter().zip(&u[j]).map(|(a, b)| a - b).collect());
        u.push(next);
    }

    let states = u
        .into_iter()
        .map(|v| {
            let mut full = Field::zeros(n);
            full.rows_mut(lo, m).copy_from_slice(&v);
            full
        })
        .collect();
    Ok(StateHistory {
        time: tc,
        times,
        states,
    })
}

/// `D_t^α u(·, T)` from a stored history.
///
/// The scheme's own derivative approximations at the last two collocation
/// points `t_{N-1+σ}` and `t_{N-2+σ}` are extrapolated linearly to `T`. For
/// `α = 1` this is the one-sided second-order difference
/// `(3u^N − 4u^{N−1} + u^{N−2}) / (2Δt)`.
pub fn caputo_at_final(tc: &TimeConfig, hist: &StateHistory) -> Result<Field> {
    tc.validate()?;
    if hist.states.len() != tc.n_steps + 1 || hist.time != *tc {
        return Err(Error::Input(format!(
            "history has {} levels, expected {} for this time configuration",
            hist.states.len(),
            tc.n_steps + 1
        )));
    }
    let w = Weights::new(tc);
    let n = hist.states[0].len();
    let d: Vec<Vec<f64>> = hist
        .states
        .windows(2)
        .map(|s| (&s[1] - &s[0]).iter().copied().collect())
        .collect();
    let last = tc.n_steps - 1;
    let d1 = w.derivative_at(last, &d);
    let d0 = w.derivative_at(last - 1, &d);
    let s = w.sigma;
    Ok(Field::from_iterator(
        n,
        d1.iter().zip(&d0).map(|(a, b)| (2.0 - s) * a - (1.0 - s) * b),
    ))
}

/// Per-step record of states escaping the clamp interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Excursion {
    pub step: usize,
    pub t: f64,
    /// Fraction of nodes outside the interval.
    pub fraction: f64,
    /// Largest distance to the interval.
    pub max_excursion: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RangeReport {
    pub violations: Vec<Excursion>,
}

impl RangeReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn worst_excursion(&self) -> f64 {
        self.violations.iter().map(|v| v.max_excursion).fold(0.0, f64::max)
    }
}

/// Checks the range condition `u(x, t) ∈ [g_min, g_max]` step by step.
pub fn range_condition_check(hist: &StateHistory, clamp: &ClampInterval) -> RangeReport {
    let violations = hist
        .states
        .iter()
        .zip(&hist.times)
        .enumerate()
        .filter_map(|(step, (state, &t))| {
            let mut outside = 0usize;
            let mut worst = 0.0f64;
            for &u in state.iter() {
                let e = (clamp.g_min - u).max(u - clamp.g_max);
                if e > 0.0 {
                    outside += 1;
                    worst = worst.max(e);
                }
            }
            (outside > 0).then(|| Excursion {
                step,
                t,
                fraction: outside as f64 / state.len() as f64,
                max_excursion: worst,
            })
        })
        .collect();
    RangeReport { violations }
}

/// Per-step coefficients of the linearization of [`solve_forward`] about a
/// stored trajectory.
///
/// Solving `F'(f) h` means running the same scheme for `v` with the
/// nonlinearity replaced by `f'(P u) χ v + h(P u)`, where `χ` is the
/// indicator of the clamp interval. For Crank–Nicolson the evaluation points
/// are the time levels; for L2-1σ they are the collocation states
/// `σ u^{j+1} + (1 − σ) u^j`.
#[derive(Debug, Clone)]
pub struct Linearization {
    time: TimeConfig,
    weights: Weights,
    op: Arc<EllipticOperator>,
    /// Clamped evaluation points, free nodes only.
    args: Vec<Vec<f64>>,
    /// `f'(Pu) χ` at the same points.
    slopes: Vec<Vec<f64>>,
}

impl Linearization {
    pub fn new(problem: &Problem, f: &dyn Reaction, hist: &StateHistory) -> Result<Self> {
        if !hist.is_complete() || hist.time != problem.time {
            return Err(Error::Input("linearization needs the complete forward history".into()));
        }
        let tc = problem.time;
        let weights = Weights::new(&tc);
        let free = problem.op.free_nodes();
        let clamp = problem.clamp;
        let points: Vec<Vec<f64>> = if weights.crank_nicolson {
            hist.states
                .iter()
                .map(|s| s.as_slice()[free.clone()].to_vec())
                .collect()
        } else {
            let s = weights.sigma;
            hist.states
                .windows(2)
                .map(|p| free.clone().map(|i| s * p[1][i] + (1.0 - s) * p[0][i]).collect())
                .collect()
        };
        let slopes = points
            .iter()
            .map(|p| {
                p.iter()
                    .map(|&u| if clamp.contains(u) { f.deriv(u) } else { 0.0 })
                    .collect()
            })
            .collect();
        let args = points
            .iter()
            .map(|p| p.iter().map(|&u| clamp.clamp(u)).collect())
            .collect();
        Ok(Linearization {
            time: tc,
            weights,
            op: problem.op.clone(),
            args,
            slopes,
        })
    }

    /// `v(·, T)` for the direction `h`, where `h` is evaluated at the clamped
    /// state.
    pub fn solve(&self, h: &dyn Fn(f64) -> f64) -> Field {
        let op = &self.op;
        let (kd, ko) = op.stiffness();
        let mass = op.mass();
        let free = op.free_nodes();
        let (lo, m) = (free.start, free.len());
        let w = &self.weights;
        let sigma = w.sigma;
        let cn = w.crank_nicolson;
        let hv: Vec<Vec<f64>> = self.args.iter().map(|p| p.iter().map(|&u| h(u)).collect()).collect();

        let mut v = vec![0.0; m];
        let mut d: Vec<Vec<f64>> = Vec::with_capacity(self.time.n_steps);
        let mut hist = vec![0.0; m];
        let mut kv = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut scratch = Vec::new();
        let off: Vec<f64> = ko.iter().map(|o| sigma * o).collect();
        for j in 0..self.time.n_steps {
            let c0 = w.c(j, 0);
            w.memory(j, &d, &mut hist);
            stiffness_apply(kd, ko, &v, &mut kv);
            for k in 0..m {
                let (s_new, s_old, forcing) = if cn {
                    (
                        0.5 * self.slopes[j + 1][k],
                        0.5 * self.slopes[j][k],
                        0.5 * (hv[j + 1][k] + hv[j][k]),
                    )
                } else {
                    let s = self.slopes[j][k];
                    (sigma * s, (1.0 - sigma) * s, hv[j][k])
                };
                rhs[k] =
                    w.mu * mass[k] * (c0 * v[k] - hist[k]) - (1.0 - sigma) * kv[k] + mass[k] * (s_old * v[k] + forcing);
                diag[k] = w.mu * c0 * mass[k] + sigma * kd[k] - mass[k] * s_new;
            }
            thomas(&diag, &off, &mut rhs, &mut scratch);
            d.push(rhs.iter().zip(&v).map(|(a, b)| a - b).collect());
            v.copy_from_slice(&rhs);
        }
        let mut out = Field::zeros(op.grid().len());
        out.rows_mut(lo, m).copy_from_slice(&v);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reaction::Builtin;
    use crate::spectral::Boundary;

    fn problem(alpha: f64, n_steps: usize) -> Problem {
        let grid = Grid1D::new(0.0, 1.0, 41).unwrap();
        let op = EllipticOperator::laplacian(grid, Boundary::Dirichlet, Boundary::Dirichlet).unwrap();
        let u0 = op.eigenvector_field(0);
        Problem {
            op: Arc::new(op),
            time: TimeConfig::new(alpha, 1.0, n_steps).unwrap(),
            u0,
            source: Source::Zero,
            clamp: ClampInterval::unbounded(),
        }
    }

    #[test]
    fn time_config_validation() {
        assert!(TimeConfig::new(1.5, 1.0, 10).is_err());
        assert!(TimeConfig::new(0.5, 0.0, 10).is_err());
        assert!(TimeConfig::new(0.5, 1.0, 1).is_err());
        assert!(TimeConfig::with_scheme(0.5, 1.0, 10, Scheme::CrankNicolson).is_err());
        assert!(TimeConfig::with_scheme(1.0, 1.0, 10, Scheme::FractionalL2).is_err());
        assert_eq!(TimeConfig::new(1.0, 1.0, 10).unwrap().scheme, Scheme::CrankNicolson);
    }

    #[test]
    fn weights_sum_telescopes() {
        // for u = t the discrete derivative is exact: μ Σ_l c_l Δt = t^{1-α}/Γ(2-α) at any point
        let tc = TimeConfig::new(0.4, 1.0, 8).unwrap();
        let w = Weights::new(&tc);
        for j in 0..8 {
            let s: f64 = (0..=j).map(|l| w.c(j, l)).sum();
            let t = (j as f64 + w.sigma) * tc.dt();
            let exact = t.powf(1.0 - tc.alpha) / gamma(2.0 - tc.alpha);
            assert!((w.mu * s * tc.dt() - exact).abs() < 1e-12, "j = {j}");
        }
    }

    #[test]
    fn thomas_solves_tridiagonal() {
        let diag = [4.0, 5.0, 6.0, 7.0];
        let off = [1.0, -2.0, 0.5];
        let x = [1.0, -1.0, 2.0, 0.25];
        let mut rhs = vec![0.0; 4];
        stiffness_apply(&diag, &off, &x, &mut rhs);
        let mut scratch = Vec::new();
        thomas(&diag, &off, &mut rhs, &mut scratch);
        for (a, b) in rhs.iter().zip(&x) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_initial_data() {
        let mut p = problem(1.0, 10);
        p.u0[0] = 1.0;
        assert!(matches!(solve_forward(&p, &Builtin::Zero), Err(Error::Input(_))));
        p.u0 = Field::zeros(3);
        assert!(solve_forward(&p, &Builtin::Zero).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        let mut p = problem(1.0, 50);
        p.u0 *= 10.0;
        p.time = TimeConfig::new(1.0, 5.0, 50).unwrap();
        let err = solve_forward(&p, &Builtin::Polynomial(vec![0.0, 0.0, 3.0])).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. } | Error::Solver { .. }), "{err:?}");
    }

    #[test]
    fn caputo_rejects_incomplete_history() {
        let p = problem(0.5, 10);
        let mut h = solve_forward(&p, &Builtin::Zero).unwrap();
        h.states.pop();
        assert!(caputo_at_final(&p.time, &h).is_err());
    }
}
