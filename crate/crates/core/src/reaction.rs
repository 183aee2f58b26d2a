//! Reaction terms `f(u)`: closed-form builtins used as ground truth and
//! starting guesses, and the Gaussian RBF representation that the
//! reconstruction methods work with.

use crate::error::{invalid, Result};

/// A scalar nonlinearity with its derivative.
pub trait Reaction: Send + Sync {
    fn eval(&self, u: f64) -> f64;
    fn deriv(&self, u: f64) -> f64;
}

/// The interval `[g_min, g_max]` into which the state is clamped before `f`
/// sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampInterval {
    pub g_min: f64,
    pub g_max: f64,
}

impl ClampInterval {
    pub fn new(g_min: f64, g_max: f64) -> Result<Self> {
        if !(g_min <= g_max) {
            return Err(invalid(format!(
                "clamp interval needs g_min <= g_max, got [{g_min}, {g_max}]"
            )));
        }
        Ok(ClampInterval { g_min, g_max })
    }

    /// No clamping at all; used when generating data from a known `f`.
    pub fn unbounded() -> Self {
        ClampInterval {
            g_min: f64::NEG_INFINITY,
            g_max: f64::INFINITY,
        }
    }

    /// The range of a field.
    pub fn of(values: &[f64]) -> Result<Self> {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(lo, hi)
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.max(self.g_min).min(self.g_max)
    }

    pub fn contains(&self, u: f64) -> bool {
        u >= self.g_min && u <= self.g_max
    }

    pub fn width(&self) -> f64 {
        self.g_max - self.g_min
    }
}

/// Closed-form reaction terms.
#[derive(Debug, Clone, PartialEq)]
pub enum Builtin {
    Zero,
    /// `2u(1-u)(u-a)`
    Zeldovich {
        a: f64,
    },
    /// `8u²` for `u ≤ ½`, `(1 + cos(5(u-½))) e^{-(u-½)}` above.
    LipschitzB,
    /// `Σ_k coeffs[k] u^k`
    Polynomial(Vec<f64>),
    /// `1 + sin(4u)`
    SinInit,
}

impl Reaction for Builtin {
    fn eval(&self, u: f64) -> f64 {
        match self {
            Builtin::Zero => 0.0,
            Builtin::Zeldovich { a } => 2.0 * u * (1.0 - u) * (u - a),
            Builtin::LipschitzB => {
                if u <= 0.5 {
                    8.0 * u * u
                } else {
                    let s = u - 0.5;
                    (1.0 + (5.0 * s).cos()) * (-s).exp()
                }
            }
            Builtin::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * u + ck),
            Builtin::SinInit => 1.0 + (4.0 * u).sin(),
        }
    }

    fn deriv(&self, u: f64) -> f64 {
        match self {
            Builtin::Zero => 0.0,
            Builtin::Zeldovich { a } => 2.0 * (-3.0 * u * u + 2.0 * (1.0 + a) * u - a),
            Builtin::LipschitzB => {
                if u <= 0.5 {
                    16.0 * u
                } else {
                    let s = u - 0.5;
                    -(5.0 * (5.0 * s).sin() + 1.0 + (5.0 * s).cos()) * (-s).exp()
                }
            }
            Builtin::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, &ck)| acc * u + k as f64 * ck),
            Builtin::SinInit => 4.0 * (4.0 * u).cos(),
        }
    }
}

/// `f(u) = Σ_j c_j exp(-(P(u) - u_j)² / s)` with `P` the clamp onto the
/// interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionTerm {
    centers: Vec<f64>,
    width: f64,
    coeffs: Vec<f64>,
    interval: ClampInterval,
}

impl ReactionTerm {
    pub fn new(centers: Vec<f64>, width: f64, coeffs: Vec<f64>, interval: ClampInterval) -> Result<Self> {
        if centers.is_empty() {
            return Err(invalid("need at least one basis center"));
        }
        if centers.len() != coeffs.len() {
            return Err(invalid(format!(
                "{} centers but {} coefficients",
                centers.len(),
                coeffs.len()
            )));
        }
        if !(width > 0.0) || !width.is_finite() {
            return Err(invalid(format!("basis width must be positive, got {width}")));
        }
        if !interval.g_min.is_finite() || !interval.g_max.is_finite() {
            return Err(invalid("basis interval must be finite"));
        }
        if centers.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("basis centers must be strictly increasing"));
        }
        if !centers.iter().all(|&c| interval.contains(c)) {
            return Err(invalid("basis centers must lie inside the interval"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("basis coefficients must be finite"));
        }
        Ok(ReactionTerm {
            centers,
            width,
            coeffs,
            interval,
        })
    }

    /// `m` equispaced centers spanning the interval, width `(2Δ)²` with `Δ`
    /// the center spacing, all coefficients zero.
    pub fn uniform(interval: ClampInterval, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(invalid("need at least two basis functions"));
        }
        if !(interval.width() > 0.0) {
            return Err(invalid(format!(
                "basis interval [{}, {}] is degenerate",
                interval.g_min, interval.g_max
            )));
        }
        let spacing = interval.width() / (m - 1) as f64;
        let mut centers: Vec<f64> = (0..m).map(|j| interval.g_min + spacing * j as f64).collect();
        centers[m - 1] = interval.g_max;
        Self::new(centers, (2.0 * spacing).powi(2), vec![0.0; m], interval)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn interval(&self) -> ClampInterval {
        self.interval
    }

    pub fn spacing(&self) -> f64 {
        if self.len() < 2 {
            self.interval.width()
        } else {
            self.interval.width() / (self.len() - 1) as f64
        }
    }

    /// Same basis, new coefficients.
    pub fn with_coeffs(&self, coeffs: Vec<f64>) -> Result<Self> {
        Self::new(self.centers.clone(), self.width, coeffs, self.interval)
    }

    /// Same centers and coefficients, Gaussian width `s` replaced.
    pub fn with_width(&self, width: f64) -> Result<Self> {
        Self::new(self.centers.clone(), width, self.coeffs.clone(), self.interval)
    }

    /// Same basis, zero coefficients.
    pub fn zeroed(&self) -> Self {
        ReactionTerm {
            coeffs: vec![0.0; self.len()],
            ..self.clone()
        }
    }

    /// `b_j(u)` with no clamping.
    pub fn basis(&self, j: usize, u: f64) -> f64 {
        let d = u - self.centers[j];
        (-d * d / self.width).exp()
    }

    /// All basis functions at the clamped argument.
    pub fn basis_values(&self, u: f64) -> Vec<f64> {
        let v = self.interval.clamp(u);
        (0..self.len()).map(|j| self.basis(j, v)).collect()
    }

    /// `Σ_j c_j b_j(P(u))`.
    pub fn eval(&self, u: f64) -> f64 {
        let v = self.interval.clamp(u);
        self.coeffs.iter().enumerate().map(|(j, c)| c * self.basis(j, v)).sum()
    }

    /// Derivative of [`eval`](Self::eval); zero outside the interval.
    pub fn deriv(&self, u: f64) -> f64 {
        if !self.interval.contains(u) {
            return 0.0;
        }
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| -2.0 * (u - self.centers[j]) / self.width * c * self.basis(j, u))
            .sum()
    }

    /// `max|f| + max|f'|` over the interval, sampled on a fine grid.
    pub fn w1inf_norm(&self) -> f64 {
        let samples = 20 * self.len() + 1;
        let (mut f_max, mut d_max) = (0.0f64, 0.0f64);
        for k in 0..samples {
            let u = self.interval.g_min + self.interval.width() * k as f64 / (samples - 1) as f64;
            f_max = f_max.max(self.eval(u).abs());
            d_max = d_max.max(self.deriv(u).abs());
        }
        f_max + d_max
    }

    /// Samples `(u, f(u))` at `n` equispaced points of the interval.
    pub fn sample(&self, n: usize) -> Vec<(f64, f64)> {
        let n = n.max(2);
        (0..n)
            .map(|k| {
                let u = self.interval.g_min + self.interval.width() * k as f64 / (n - 1) as f64;
                (u, self.eval(u))
            })
            .collect()
    }
}

impl Reaction for ReactionTerm {
    fn eval(&self, u: f64) -> f64 {
        ReactionTerm::eval(self, u)
    }

    fn deriv(&self, u: f64) -> f64 {
        ReactionTerm::deriv(self, u)
    }
}
