//! Synthetic noise and the smoothing of final-time data.
//!
//! Noisy data `g^δ` is filtered in the eigenbasis of the elliptic operator,
//!
//! ```text
//! ĝ_j = (g^δ, φ_j) / (1 + μ λ_j^σ),   j < N,
//! ```
//!
//! which minimizes `Σ_j (ĝ_j − (g^δ, φ_j))² + μ Σ_j λ_j^σ ĝ_j²`. The weight `μ`
//! follows the discrepancy principle, and `𝕃g̃ = −Σ_j λ_j ĝ_j φ_j` comes for
//! free.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::spectral::{EllipticOperator, Field, Grid1D};

/// Upper end of the accepted misfit bracket `[δ, τ_s δ]`.
pub const DISCREPANCY_FACTOR: f64 = 1.2;

/// Adds uniform noise scaled to exactly `level · ‖g‖`, returning the noisy
/// field and the realized `δ = ‖g^δ − g‖`.
pub fn add_noise(grid: &Grid1D, g: &Field, level: f64, seed: u64) -> Result<(Field, f64)> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(invalid(format!("noise level must be >= 0, got {level}")));
    }
    if level == 0.0 {
        return Ok((g.clone(), 0.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = Field::from_fn(g.len(), |_, _| rng.random_range(-1.0..1.0));
    let delta = level * grid.l2_norm(g);
    let norm = grid.l2_norm(&e);
    if norm == 0.0 {
        return Ok((g.clone(), 0.0));
    }
    Ok((g + e * (delta / norm), delta))
}

/// Final-time data before and after smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct OverposedData {
    /// `g^δ`
    pub raw: Field,
    /// `δ`
    pub delta: f64,
    /// `g̃`
    pub smoothed: Field,
    /// `𝕃g̃`
    pub lap_smoothed: Field,
    /// eigen-coefficients `ĝ_j`
    pub coeffs: Vec<f64>,
    pub sigma: f64,
    pub n_modes: usize,
    /// the penalty weight chosen by the discrepancy principle
    pub mu: f64,
    /// `‖g̃ − g^δ‖`
    pub misfit: f64,
}

impl OverposedData {
    /// Wraps noiseless, already smooth data.
    pub fn exact(op: &EllipticOperator, g: &Field) -> Self {
        let lap = -op.apply(g);
        OverposedData {
            raw: g.clone(),
            delta: 0.0,
            smoothed: g.clone(),
            lap_smoothed: lap,
            coeffs: Vec::new(),
            sigma: f64::NAN,
            n_modes: 0,
            mu: 0.0,
            misfit: 0.0,
        }
    }

    pub fn range(&self) -> (f64, f64) {
        let lo = self.smoothed.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.smoothed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Largest mode count with `λ_j ≤ (n/4)²`.
pub fn default_modes(op: &EllipticOperator) -> usize {
    let cap = (op.grid().len() as f64 / 4.0).powi(2);
    op.eigenvalues().iter().take_while(|&&l| l <= cap).count().max(1)
}

struct Filter<'a> {
    op: &'a EllipticOperator,
    raw: &'a Field,
    proj: Vec<f64>,
    weights: Vec<f64>,
}

impl Filter<'_> {
    fn coeffs(&self, mu: f64) -> Vec<f64> {
        self.proj
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| c / (1.0 + mu * w))
            .collect()
    }

    fn misfit(&self, mu: f64) -> f64 {
        let g = self.op.synthesize(&self.coeffs(mu));
        self.op.grid().l2_norm(&(g - self.raw))
    }
}

/// Filtered coefficients `ĝ_j = (g^δ, φ_j) / (1 + μ λ_j^σ)` for a fixed `μ ≥ 0`.
pub fn filter_coefficients(
    op: &EllipticOperator,
    gdelta: &Field,
    sigma: f64,
    n_modes: usize,
    mu: f64,
) -> Result<Vec<f64>> {
    if gdelta.len() != op.grid().len() {
        return Err(Error::Input(format!(
            "data has {} values, grid {}",
            gdelta.len(),
            op.grid().len()
        )));
    }
    if n_modes == 0 || n_modes > op.total_modes() {
        return Err(invalid(format!(
            "n_modes must lie in 1..={}, got {n_modes}",
            op.total_modes()
        )));
    }
    if !(mu >= 0.0) {
        return Err(invalid(format!("mu must be >= 0, got {mu}")));
    }
    Ok(op
        .coefficients(gdelta, n_modes)
        .iter()
        .zip(op.eigenvalues())
        .map(|(c, l)| c / (1.0 + mu * l.powf(sigma)))
        .collect())
}

/// Smooths `g^δ` with the `Ḣ^σ` penalty, picking `μ` so that
/// `‖g̃ − g^δ‖ ∈ [δ, 1.2δ]`. `n_modes = None` uses [`default_modes`].
///
/// If the truncated expansion alone already misses the data by `δ` or more,
/// `μ = 0` is used and the misfit is reported as is.
pub fn smooth_data(
    op: &EllipticOperator,
    gdelta: &Field,
    delta: f64,
    sigma: f64,
    n_modes: Option<usize>,
) -> Result<OverposedData> {
    if gdelta.len() != op.grid().len() {
        return Err(Error::Input(format!(
            "data has {} values, grid {}",
            gdelta.len(),
            op.grid().len()
        )));
    }
    if !(sigma > 1.5) {
        return Err(invalid(format!("smoothing order sigma must exceed 3/2, got {sigma}")));
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(invalid(format!("noise level must be >= 0, got {delta}")));
    }
    let n_modes = n_modes.unwrap_or_else(|| default_modes(op));
    if n_modes == 0 || n_modes > op.total_modes() {
        return Err(invalid(format!(
            "n_modes must lie in 1..={}, got {n_modes}",
            op.total_modes()
        )));
    }
    let filter = Filter {
        op,
        raw: gdelta,
        proj: op.coefficients(gdelta, n_modes),
        weights: op.eigenvalues()[..n_modes].iter().map(|l| l.powf(sigma)).collect(),
    };

    let mu = if delta == 0.0 || filter.misfit(0.0) >= delta {
        0.0
    } else {
        if op.grid().l2_norm(gdelta) <= delta {
            return Err(Error::DegenerateData(format!(
                "noise level {delta} is not below the data norm {}",
                op.grid().l2_norm(gdelta)
            )));
        }
        // bracket in log μ, then bisect towards the smallest μ whose misfit
        // reaches δ; that keeps the misfit at the lower end of [δ, 1.2δ]
        let scale = filter.weights[0].recip();
        let mut lo = scale * 1e-30;
        let mut hi = scale;
        while filter.misfit(hi) < delta {
            lo = hi;
            hi *= 1e3;
            if hi > scale * 1e60 {
                return Err(Error::DegenerateData("discrepancy level not reachable".into()));
            }
        }
        let accept = 1.0 + (DISCREPANCY_FACTOR - 1.0) / 20.0;
        for _ in 0..200 {
            let r = filter.misfit(hi);
            if r <= accept * delta || hi / lo < 1.0 + 1e-12 {
                break;
            }
            let mid = (lo * hi).sqrt();
            if filter.misfit(mid) < delta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };

    let coeffs = filter.coeffs(mu);
    let smoothed = op.synthesize(&coeffs);
    let lap: Vec<f64> = coeffs.iter().zip(op.eigenvalues()).map(|(c, l)| -l * c).collect();
    let lap_smoothed = op.synthesize(&lap);
    let misfit = op.grid().l2_norm(&(&smoothed - gdelta));
    Ok(OverposedData {
        raw: gdelta.clone(),
        delta,
        smoothed,
        lap_smoothed,
        coeffs,
        sigma,
        n_modes,
        mu,
        misfit,
    })
}
