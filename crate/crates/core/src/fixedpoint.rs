//! The fixed-point reconstruction `f_{k+1} = ℙ 𝕊 f_k`.
//!
//! `𝕊 f = D_t^α u(·, T; f) − 𝕃g̃ − r(·, T)` is what the PDE says `f(g̃)`
//! must be, and `ℙ` turns those nodal values back into a function of `u` by a
//! least-squares fit in the Gaussian basis. All regularization lives in the
//! smoothing of the data; the iteration itself is unregularized.

use nalgebra::{DMatrix, DVector};

use crate::data::OverposedData;
use crate::error::{invalid, Error, Result};
use crate::forward::{caputo_at_final, solve_forward, Problem};
use crate::reaction::{ClampInterval, Reaction, ReactionTerm};
use crate::spectral::Field;
use crate::trace::{sup_change, CoverageMask, IterationRecord, ReconstructionTrace, Status};

/// Relative ridge added to the Gram matrix.
const RIDGE: f64 = 1e-12;
/// Refinement sweeps that remove most of the ridge bias.
const REFINE_SWEEPS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointConfig {
    pub max_iters: usize,
    /// Stop once `‖f_{k+1} − f_k‖_∞ ≤ stall_tol · (1 + ‖f_k‖_∞)`.
    pub stall_tol: f64,
    /// Rescale iterates to `‖f‖_{W^{1,∞}} ≤ ρ`.
    pub rho_cap: Option<f64>,
    /// Keep every iterate, not only the last.
    pub record_trace: bool,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            max_iters: 20,
            stall_tol: 1e-6,
            rho_cap: None,
            record_trace: true,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.stall_tol > 0.0) {
            return Err(invalid("stall_tol must be positive"));
        }
        if let Some(rho) = self.rho_cap {
            if !(rho > 0.0) {
                return Err(invalid("rho_cap must be positive"));
            }
        }
        Ok(())
    }
}

/// Least-squares fit `Σ_j c_j b_j(g_i) ≈ y_i` in the basis of `template`.
///
/// Solves the normal equations with a ridge of `1e-12 · tr(G)/m` followed by
/// three sweeps of iterative refinement against the unregularized Gram
/// matrix.
pub fn project(y: &[f64], g: &[f64], template: &ReactionTerm) -> Result<ReactionTerm> {
    if y.len() != g.len() || y.is_empty() {
        return Err(Error::Input("projection needs one target value per data value".into()));
    }
    let m = template.len();
    let b = DMatrix::from_fn(g.len(), m, |i, j| template.basis(j, template.interval().clamp(g[i])));
    let gram = b.transpose() * &b;
    let rhs = b.transpose() * DVector::from_column_slice(y);
    let ridge = RIDGE * gram.trace() / m as f64;
    let mut reg = gram.clone();
    for k in 0..m {
        reg[(k, k)] += ridge;
    }
    let chol = reg.cholesky().ok_or_else(|| Error::Projection {
        condition: condition_estimate(&gram),
    })?;
    let mut c = chol.solve(&rhs);
    for _ in 0..REFINE_SWEEPS {
        let r = &rhs - &gram * &c;
        c += chol.solve(&r);
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Projection {
            condition: condition_estimate(&gram),
        });
    }
    template.with_coeffs(c.iter().copied().collect())
}

pub(crate) fn condition_estimate(gram: &DMatrix<f64>) -> f64 {
    let s = gram.clone().symmetric_eigenvalues();
    let max = s.iter().copied().fold(0.0, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Least-squares fit of an arbitrary reaction term on `20m + 1` equispaced
/// points of the template's interval.
pub fn fit_reaction(f: &dyn Reaction, template: &ReactionTerm) -> Result<ReactionTerm> {
    let iv = template.interval();
    let n = 20 * template.len() + 1;
    let u: Vec<f64> = (0..n)
        .map(|k| iv.g_min + iv.width() * k as f64 / (n - 1) as f64)
        .collect();
    let y: Vec<f64> = u.iter().map(|&v| f.eval(v)).collect();
    project(&y, &u, template)
}

/// `ℙ y`: fits `y` over the free nodes of the smoothed data.
pub fn project_onto_basis(
    y: &Field,
    problem: &Problem,
    gdata: &OverposedData,
    template: &ReactionTerm,
) -> Result<ReactionTerm> {
    let free = problem.op.free_nodes();
    project(&y.as_slice()[free.clone()], &gdata.smoothed.as_slice()[free], template)
}

/// Clamp interval `[min g̃, max g̃]` of the data.
pub fn data_interval(gdata: &OverposedData) -> Result<ClampInterval> {
    let (lo, hi) = gdata.range();
    ClampInterval::new(lo, hi)
}

pub(crate) fn check_clamp(problem: &Problem, gdata: &OverposedData) -> Result<()> {
    let iv = data_interval(gdata)?;
    let tol = 1e-12 * (1.0 + iv.g_min.abs().max(iv.g_max.abs()));
    if (problem.clamp.g_min - iv.g_min).abs() > tol || (problem.clamp.g_max - iv.g_max).abs() > tol {
        return Err(invalid(format!(
            "clamp interval [{}, {}] differs from the data range [{}, {}]",
            problem.clamp.g_min, problem.clamp.g_max, iv.g_min, iv.g_max
        )));
    }
    Ok(())
}

/// `𝕊 f = D_t^α u(·, T; f) − 𝕃g̃ − r(·, T)`.
pub fn apply_s(f: &dyn Reaction, problem: &Problem, gdata: &OverposedData) -> Result<Field> {
    check_clamp(problem, gdata)?;
    let hist = solve_forward(problem, f)?;
    let d = caputo_at_final(&problem.time, &hist)?;
    let r = problem.source.at(problem.grid(), problem.time.t_final);
    Ok(d - &gdata.lap_smoothed - r)
}

/// The default starting basis: 25 Gaussians on the data range, zero
/// coefficients.
pub fn default_basis(gdata: &OverposedData) -> Result<ReactionTerm> {
    ReactionTerm::uniform(data_interval(gdata)?, 25)
}

/// Coverage of the basis interval by the smoothed data on the free nodes.
pub fn coverage(problem: &Problem, gdata: &OverposedData, basis: &ReactionTerm) -> CoverageMask {
    let free = problem.op.free_nodes();
    CoverageMask::new(basis.interval(), basis.spacing(), &gdata.smoothed.as_slice()[free])
}

fn apply_rho_cap(f: ReactionTerm, rho: Option<f64>) -> Result<ReactionTerm> {
    match rho {
        Some(rho) => {
            let norm = f.w1inf_norm();
            if norm > rho {
                let scale = rho / norm;
                let c = f.coeffs().iter().map(|c| c * scale).collect();
                f.with_coeffs(c)
            } else {
                Ok(f)
            }
        }
        None => Ok(f),
    }
}

/// One application of `𝕋 = ℙ ∘ 𝕊`, returning the new iterate and the
/// projection misfit `‖f_{k+1}(g̃) − y‖` (discrete L² over the free nodes).
pub fn fixed_point_step(
    f: &ReactionTerm,
    problem: &Problem,
    gdata: &OverposedData,
    rho_cap: Option<f64>,
) -> Result<(ReactionTerm, f64)> {
    let y = apply_s(f, problem, gdata)?;
    let next = apply_rho_cap(project_onto_basis(&y, problem, gdata, f)?, rho_cap)?;
    let fitted = Field::from_iterator(y.len(), gdata.smoothed.iter().map(|&g| next.eval(g)));
    let mut diff = fitted - &y;
    for i in (0..diff.len()).filter(|i| !problem.op.free_nodes().contains(i)) {
        diff[i] = 0.0;
    }
    Ok((next, problem.grid().l2_norm(&diff)))
}

/// Iterates `f_{k+1} = 𝕋 f_k` until the iterates stall or `max_iters`.
///
/// A failing forward solve ends the run with [`Status::Failed`] and keeps the
/// iterates computed so far.
pub fn run_fixed_point(
    cfg: &FixedPointConfig,
    problem: &Problem,
    gdata: &OverposedData,
    f0: &ReactionTerm,
    truth: Option<&dyn Reaction>,
) -> Result<ReconstructionTrace> {
    cfg.validate()?;
    check_clamp(problem, gdata)?;
    let mask = coverage(problem, gdata, f0);
    let err = |f: &ReactionTerm| truth.map(|t| mask.sup_distance(f, t));
    let mut trace = ReconstructionTrace {
        initial: f0.clone(),
        initial_error: err(f0),
        records: Vec::new(),
        final_f: f0.clone(),
        status: Status::MaxIters,
        coverage: mask.clone(),
    };
    let mut f = f0.clone();
    for iter in 1..=cfg.max_iters {
        let (next, residual) = match fixed_point_step(&f, problem, gdata, cfg.rho_cap) {
            Ok(v) => v,
            Err(e) => {
                trace.status = Status::Failed(e);
                break;
            }
        };
        let step = sup_change(&next, &f);
        let scale = 1.0 + sup_change(&f, &f.zeroed());
        trace.records.push(IterationRecord {
            iter,
            residual,
            true_error: err(&next),
            step,
            snapshot: (cfg.record_trace || iter == cfg.max_iters).then(|| next.clone()),
        });
        f = next;
        if step <= cfg.stall_tol * scale {
            trace.status = Status::Stalled;
            break;
        }
    }
    if let Some(last) = trace.records.last_mut() {
        last.snapshot.get_or_insert_with(|| f.clone());
    }
    trace.final_f = f;
    Ok(trace)
}
