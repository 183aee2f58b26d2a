//! Canonical test problems: known `f`, a steady source, final-time data
//! generated by the forward solver.

use std::sync::Arc;

use crate::data::{add_noise, smooth_data, OverposedData};
use crate::error::{invalid, Result};
use crate::fixedpoint::data_interval;
use crate::forward::{solve_forward, Problem, Source, TimeConfig};
use crate::reaction::{Builtin, ClampInterval, Reaction};
use crate::spectral::{Boundary, EllipticOperator, Field, Grid1D};

/// Setup of a synthetic experiment on `Ω = (0, 1)` with `a ≡ 1`, `c ≡ 0`,
/// `u0 = 0` and a steady source `r(x) = amplitude · shape(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub truth: Builtin,
    pub n: usize,
    pub n_steps: usize,
    pub alpha: f64,
    pub t_final: f64,
    pub left: Boundary,
    pub right: Boundary,
    /// Length `L` of the domain `(0, L)`.
    pub length: f64,
    pub amplitude: f64,
    pub shape: SourceShape,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceShape {
    Constant,
    /// `sin(πx/2L)`
    QuarterSine,
}

impl SourceShape {
    fn eval(&self, x: f64, length: f64) -> f64 {
        match self {
            SourceShape::Constant => 1.0,
            SourceShape::QuarterSine => (std::f64::consts::FRAC_PI_2 * x / length).sin(),
        }
    }
}

impl BenchmarkSpec {
    /// `f^{(a)}(u) = 2u(1−u)(u−0.75)` with data ranging over about `[0, 2]`.
    pub fn zeldovich() -> Self {
        BenchmarkSpec {
            truth: Builtin::Zeldovich { a: 0.75 },
            n: 401,
            n_steps: 400,
            alpha: 1.0,
            t_final: 1.0,
            left: Boundary::Dirichlet,
            right: Boundary::Robin(0.0),
            length: 1.0,
            amplitude: 9.0,
            shape: SourceShape::QuarterSine,
        }
    }

    /// The piecewise `f^{(b)}` with data ranging over about `[0, 2]`.
    pub fn lipschitz_b() -> Self {
        BenchmarkSpec {
            truth: Builtin::LipschitzB,
            amplitude: 5.0,
            ..Self::zeldovich()
        }
    }

    pub fn with_time(mut self, alpha: f64, t_final: f64) -> Self {
        self.alpha = alpha;
        self.t_final = t_final;
        self
    }

    /// Rescales the source amplitude so that `max g = peak`, keeping the data
    /// range fixed across `T` and `α`; see [`calibrate_amplitude`].
    pub fn with_peak(mut self, peak: f64) -> Result<Self> {
        self.amplitude = 1.0;
        let b = self.build()?;
        let shape = b.problem.source.at(b.problem.grid(), 0.0);
        self.amplitude = calibrate_amplitude(&b.problem, &shape, &self.truth, peak)?;
        Ok(self)
    }

    pub fn build(&self) -> Result<Benchmark> {
        let grid = Grid1D::new(0.0, self.length, self.n)?;
        let op = EllipticOperator::laplacian(grid.clone(), self.left, self.right)?;
        let shape = self.shape;
        let source = Source::Steady(grid.sample(|x| self.amplitude * shape.eval(x, self.length)));
        let problem = Problem {
            op: Arc::new(op),
            time: TimeConfig::new(self.alpha, self.t_final, self.n_steps)?,
            u0: Field::zeros(self.n),
            source,
            clamp: ClampInterval::unbounded(),
        };
        let g = solve_forward(&problem, &self.truth)?.final_state().clone();
        Ok(Benchmark {
            spec: self.clone(),
            problem,
            g,
        })
    }
}

/// A built benchmark: the forward problem and its exact final-time data.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub spec: BenchmarkSpec,
    /// The problem with an unbounded clamp, as used to generate `g`.
    pub problem: Problem,
    pub g: Field,
}

impl Benchmark {
    /// Noisy, smoothed data and the problem clamped to its range.
    pub fn data(&self, level: f64, seed: u64, sigma: f64) -> Result<(Problem, OverposedData)> {
        let (gd, delta) = add_noise(self.problem.grid(), &self.g, level, seed)?;
        let data = smooth_data(&self.problem.op, &gd, delta, sigma, None)?;
        let problem = self.problem.with_clamp(data_interval(&data)?);
        Ok((problem, data))
    }

    /// Noiseless data used as is, with `𝕃g` from the discrete operator.
    pub fn exact_data(&self) -> Result<(Problem, OverposedData)> {
        let data = OverposedData::exact(&self.problem.op, &self.g);
        let problem = self.problem.with_clamp(data_interval(&data)?);
        Ok((problem, data))
    }
}

/// The amplitude `A` for which the steady source `A · shape` drives the
/// final state of `problem` to `max u(·, T) = peak`, to a relative `1e-7`.
///
/// The final maximum is assumed to grow with `A`; amplitudes whose forward
/// solve fails count as overshooting.
pub fn calibrate_amplitude(problem: &Problem, shape: &Field, f: &dyn Reaction, peak: f64) -> Result<f64> {
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(invalid(format!("peak must be positive, got {peak}")));
    }
    let overshoots = |amplitude: f64| -> bool {
        let p = Problem {
            source: Source::Steady(shape * amplitude),
            ..problem.clone()
        };
        match solve_forward(&p, f) {
            Ok(h) => h.final_state().max() >= peak,
            Err(_) => true,
        }
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while !overshoots(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e8 {
            return Err(invalid(format!("peak {peak} is not reachable by scaling the source")));
        }
    }
    while hi - lo > 1e-7 * hi {
        let mid = 0.5 * (lo + hi);
        if overshoots(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
