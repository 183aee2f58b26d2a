//! Regularized Newton reconstruction from the forward map
//! `F(f) = u(·, T; f)`.
//!
//! Each step linearizes `F` about the current iterate,
//!
//! ```text
//! F(f_k + h) ≈ F(f_k) + F'(f_k) h,   F'(f_k) h = v(·, T),
//! D_t^α v − 𝕃v − f_k'(Pu) χ v = h(Pu),   v(·, 0) = 0,
//! ```
//!
//! and solves a regularized linear least-squares problem in the coefficients
//! of the Gaussian basis. Two regularizations are offered: a Tikhonov
//! penalty `γ_k ‖f − f_0‖²_X` with `γ_k = γ_0 κ^k`, or an Ivanov constraint
//! `‖f − f_0‖_X ≤ ϱ`. Both add `ε₀ I + ε₂ R` to the Gauss–Newton matrix,
//! with `R_{jk} = ∫ b_j b_k λ(u) du`. The iteration stops by the discrepancy
//! principle `‖F(f_k) − g^δ‖ ≤ τ δ`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::OverposedData;
use crate::error::{invalid, Error, Result};
use crate::fixedpoint::{check_clamp, condition_estimate, coverage};
use crate::forward::{solve_forward, Linearization, Problem, StateHistory};
use crate::reaction::{Reaction, ReactionTerm};
use crate::spectral::Field;
use crate::trace::{sup_change, IterationRecord, ReconstructionTrace, Status};

/// Multiplier bisection steps for the Ivanov constraint.
const IVANOV_ITERS: usize = 60;
/// Relative accuracy of the active Ivanov constraint.
const IVANOV_TOL: f64 = 1e-8;
/// Consecutive residual increases before the step cap is halved.
const GROWTH_LIMIT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Tikhonov,
    Ivanov,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonConfig {
    pub variant: Variant,
    pub gamma0: f64,
    pub kappa: f64,
    /// Ivanov radius `ϱ` in the `X`-norm.
    pub varrho: f64,
    /// Discrepancy factor `τ > 1`.
    pub tau: f64,
    pub max_iters: usize,
    /// Reuse the Jacobian of `f_0` throughout.
    pub freeze_jacobian: bool,
    /// Reuse the Jacobian of iterate `k` from iteration `k` on; overrides
    /// nothing when `freeze_jacobian` is set.
    pub freeze_after: Option<usize>,
    /// Largest accepted update in the `X`-norm.
    pub step_cap: f64,
    pub eps0: f64,
    pub eps2: f64,
    /// `(u, λ(u))` samples of the weight in `R`, interpolated linearly and
    /// held constant beyond the ends; `None` means `λ ≡ 1`.
    pub lambda_weight: Option<Vec<(f64, f64)>>,
    pub record_trace: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            variant: Variant::Tikhonov,
            gamma0: 1e-2,
            kappa: 0.5,
            varrho: 10.0,
            tau: 1.5,
            max_iters: 30,
            freeze_jacobian: false,
            freeze_after: None,
            step_cap: 1.0,
            eps0: 1e-10,
            eps2: 1e-6,
            lambda_weight: None,
            record_trace: true,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 > 0.0) {
            return Err(invalid("gamma0 must be positive"));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(invalid("kappa must lie in (0, 1)"));
        }
        if !(self.varrho > 0.0) {
            return Err(invalid("varrho must be positive"));
        }
        if !(self.tau > 1.0) {
            return Err(invalid("tau must exceed 1"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.step_cap > 0.0) {
            return Err(invalid("step_cap must be positive"));
        }
        if !(self.eps0 >= 0.0) || !(self.eps2 >= 0.0) {
            return Err(invalid("eps0 and eps2 must be >= 0"));
        }
        if let Some(table) = &self.lambda_weight {
            if table.is_empty() || table.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                return Err(invalid("lambda_weight needs strictly increasing abscissae"));
            }
            if table.iter().any(|(_, l)| !(*l >= 0.0)) {
                return Err(invalid("lambda_weight values must be >= 0"));
            }
        }
        Ok(())
    }

    fn gamma(&self, k: usize) -> f64 {
        self.gamma0 * self.kappa.powi(k as i32)
    }

    fn weight(&self, u: f64) -> f64 {
        let Some(table) = &self.lambda_weight else {
            return 1.0;
        };
        let k = table.partition_point(|&(x, _)| x <= u);
        if k == 0 {
            table[0].1
        } else if k == table.len() {
            table[k - 1].1
        } else {
            let (x0, l0) = table[k - 1];
            let (x1, l1) = table[k];
            l0 + (l1 - l0) * (u - x0) / (x1 - x0)
        }
    }
}

/// `F(f) = u(·, T; f)`.
pub fn forward_map(f: &dyn Reaction, problem: &Problem) -> Result<Field> {
    Ok(solve_forward(problem, f)?.final_state().clone())
}

/// `F'(f) b_j`, the response to the `j`-th basis function.
pub fn jacobian_column(lin: &Linearization, f: &ReactionTerm, j: usize) -> Field {
    lin.solve(&|u| f.basis(j, u))
}

/// `F(f)` together with the Jacobian, one column per basis function; the
/// columns are computed concurrently.
pub fn jacobian(f: &ReactionTerm, problem: &Problem) -> Result<(Field, DMatrix<f64>)> {
    let hist = solve_forward(problem, f)?;
    let jac = jacobian_from(f, problem, &hist)?;
    Ok((hist.final_state().clone(), jac))
}

fn jacobian_from(f: &ReactionTerm, problem: &Problem, hist: &StateHistory) -> Result<DMatrix<f64>> {
    let lin = Linearization::new(problem, f, hist)?;
    let columns: Vec<Field> = (0..f.len())
        .into_par_iter()
        .map(|j| jacobian_column(&lin, f, j))
        .collect();
    Ok(DMatrix::from_columns(&columns))
}

/// Simpson weights and nodes on `4m + 1` points of the basis interval.
fn simpson(template: &ReactionTerm) -> Vec<(f64, f64)> {
    let iv = template.interval();
    let n = 4 * template.len() + 1;
    let h = iv.width() / (n - 1) as f64;
    (0..n)
        .map(|k| {
            let w = if k == 0 || k == n - 1 {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (iv.g_min + h * k as f64, w * h / 3.0)
        })
        .collect()
}

fn basis_deriv(template: &ReactionTerm, j: usize, u: f64) -> f64 {
    -2.0 * (u - template.centers()[j]) / template.width() * template.basis(j, u)
}

/// Gram matrix of the discrete `H¹(I)` inner product on coefficients,
/// `M_{jk} = ∫ b_j b_k + b_j' b_k' du`.
pub fn h1_gram(template: &ReactionTerm) -> DMatrix<f64> {
    let m = template.len();
    let mut gram = DMatrix::zeros(m, m);
    for (u, w) in simpson(template) {
        let b = template.basis_values(u);
        let db: Vec<f64> = (0..m).map(|j| basis_deriv(template, j, u)).collect();
        for j in 0..m {
            for k in 0..m {
                gram[(j, k)] += w * (b[j] * b[k] + db[j] * db[k]);
            }
        }
    }
    gram
}

/// `R_{jk} = ∫ b_j b_k λ(u) du` over the basis interval.
pub fn smoothing_matrix(template: &ReactionTerm, cfg: &NewtonConfig) -> DMatrix<f64> {
    let m = template.len();
    let mut r = DMatrix::zeros(m, m);
    for (u, w) in simpson(template) {
        let b = template.basis_values(u);
        let lw = w * cfg.weight(u);
        for j in 0..m {
            for k in 0..m {
                r[(j, k)] += lw * b[j] * b[k];
            }
        }
    }
    r
}

/// The matrices that do not change between iterations.
#[derive(Debug, Clone)]
pub struct Penalties {
    /// `X`-metric
    pub metric: DMatrix<f64>,
    /// `ε₀ I + ε₂ R`
    pub jacobian_penalty: DMatrix<f64>,
}

impl Penalties {
    pub fn new(template: &ReactionTerm, cfg: &NewtonConfig) -> Self {
        let m = template.len();
        let jacobian_penalty = DMatrix::identity(m, m) * cfg.eps0 + smoothing_matrix(template, cfg) * cfg.eps2;
        Penalties {
            metric: h1_gram(template),
            jacobian_penalty,
        }
    }

    pub fn x_norm(&self, c: &DVector<f64>) -> f64 {
        c.dot(&(&self.metric * c)).max(0.0).sqrt()
    }
}

/// The linearized least-squares data of one step: the Jacobian, the
/// residual `F(f_k) − g^δ` and the quadrature weights of the data norm.
#[derive(Debug, Clone)]
pub struct LinearizedProblem {
    pub jacobian: DMatrix<f64>,
    pub residual: Field,
    pub weights: Vec<f64>,
}

impl LinearizedProblem {
    /// `Jᵀ W J` and `Jᵀ W r`.
    fn normal_equations(&self) -> (DMatrix<f64>, DVector<f64>) {
        let w = DVector::from_column_slice(&self.weights);
        let mut wj = self.jacobian.clone();
        for (mut row, wi) in wj.row_iter_mut().zip(w.iter()) {
            row *= *wi;
        }
        (self.jacobian.transpose() * &wj, wj.transpose() * &self.residual)
    }
}

fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let condition = || condition_estimate(&a);
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Step { condition: condition() })?;
    let x = chol.solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Step { condition: condition() });
    }
    Ok(x)
}

/// One regularized Gauss–Newton update of `f_k` (iteration index `k`), capped
/// to `step_cap` in the `X`-norm.
pub fn newton_step(
    cfg: &NewtonConfig,
    k: usize,
    fk: &ReactionTerm,
    f0: &ReactionTerm,
    lp: &LinearizedProblem,
    pen: &Penalties,
    step_cap: f64,
) -> Result<ReactionTerm> {
    let ck = DVector::from_column_slice(fk.coeffs());
    let c0 = DVector::from_column_slice(f0.coeffs());
    let offset = &ck - &c0;
    let (gn, grad) = lp.normal_equations();
    let base = gn + &pen.jacobian_penalty;
    let m_off = &pen.metric * &offset;

    // (A + ν M) δ = −Jᵀ W r − ν M (c_k − c_0)
    let solve_with = |nu: f64| -> Result<DVector<f64>> {
        let a = &base + &pen.metric * nu;
        solve_spd(a, &(-&grad - &m_off * nu))
    };

    let mut delta = match cfg.variant {
        Variant::Tikhonov => solve_with(cfg.gamma(k))?,
        Variant::Ivanov => {
            let norm_at = |d: &DVector<f64>| pen.x_norm(&(&offset + d));
            let free = solve_with(0.0)?;
            if norm_at(&free) <= cfg.varrho {
                free
            } else {
                let scale = base.trace().max(f64::MIN_POSITIVE) / base.nrows() as f64;
                let mut lo = 0.0;
                let mut hi = scale * 1e-12;
                let mut best = solve_with(hi)?;
                while norm_at(&best) > cfg.varrho {
                    lo = hi;
                    hi *= 10.0;
                    if hi > scale * 1e40 {
                        return Err(Error::NoConvergence {
                            what: "Ivanov multiplier search",
                            residual: norm_at(&best) - cfg.varrho,
                        });
                    }
                    best = solve_with(hi)?;
                }
                for _ in 0..IVANOV_ITERS {
                    if (cfg.varrho - norm_at(&best)).abs() <= IVANOV_TOL * cfg.varrho {
                        break;
                    }
                    let mid = if lo == 0.0 { hi / 10.0 } else { (lo * hi).sqrt() };
                    let trial = solve_with(mid)?;
                    if norm_at(&trial) > cfg.varrho {
                        lo = mid;
                    } else {
                        hi = mid;
                        best = trial;
                    }
                }
                best
            }
        }
    };

    let size = pen.x_norm(&delta);
    if size > step_cap {
        delta *= step_cap / size;
    }
    fk.with_coeffs((ck + delta).iter().copied().collect())
}

/// Newton iteration from `f0` with discrepancy stopping.
///
/// The data misfit is measured against the raw data `g^δ`; the basis
/// interval and clamp come from the smoothed data. A failing solve ends the
/// run with [`Status::Failed`].
pub fn run_newton(
    cfg: &NewtonConfig,
    problem: &Problem,
    gdata: &OverposedData,
    f0: &ReactionTerm,
    truth: Option<&dyn Reaction>,
) -> Result<ReconstructionTrace> {
    cfg.validate()?;
    check_clamp(problem, gdata)?;
    if gdata.raw.len() != problem.grid().len() {
        return Err(Error::Input("data and grid sizes differ".into()));
    }
    let mask = coverage(problem, gdata, f0);
    let err = |f: &ReactionTerm| truth.map(|t| mask.sup_distance(f, t));
    let pen = Penalties::new(f0, cfg);
    let weights = problem.grid().weights();
    let target = cfg.tau * gdata.delta;
    let freeze_at = if cfg.freeze_jacobian { Some(0) } else { cfg.freeze_after };

    let mut trace = ReconstructionTrace {
        initial: f0.clone(),
        initial_error: err(f0),
        records: Vec::new(),
        final_f: f0.clone(),
        status: Status::MaxIters,
        coverage: mask.clone(),
    };

    let hist = match solve_forward(problem, f0) {
        Ok(h) => h,
        Err(e) => {
            trace.status = Status::Failed(e);
            return Ok(trace);
        }
    };
    let mut residual = hist.final_state() - &gdata.raw;
    let mut misfit = problem.grid().l2_norm(&residual);
    if misfit <= target {
        trace.status = Status::Discrepancy;
        return Ok(trace);
    }

    let mut f = f0.clone();
    let mut hist = Some(hist);
    let mut frozen: Option<DMatrix<f64>> = None;
    let mut step_cap = cfg.step_cap;
    let mut growth = 0;
    let mut halved = false;

    for k in 0..cfg.max_iters {
        let jac = match &frozen {
            Some(j) => j.clone(),
            None => {
                let h = match hist.take() {
                    Some(h) => h,
                    None => match solve_forward(problem, &f) {
                        Ok(h) => h,
                        Err(e) => {
                            trace.status = Status::Failed(e);
                            break;
                        }
                    },
                };
                let j = match jacobian_from(&f, problem, &h) {
                    Ok(j) => j,
                    Err(e) => {
                        trace.status = Status::Failed(e);
                        break;
                    }
                };
                if freeze_at.is_some_and(|at| k >= at) {
                    frozen = Some(j.clone());
                }
                j
            }
        };
        let lp = LinearizedProblem {
            jacobian: jac,
            residual: residual.clone(),
            weights: weights.clone(),
        };
        let next = match newton_step(cfg, k, &f, f0, &lp, &pen, step_cap) {
            Ok(n) => n,
            Err(e) => {
                trace.status = Status::Failed(e);
                break;
            }
        };
        let next_hist = match solve_forward(problem, &next) {
            Ok(h) => h,
            Err(e) => {
                trace.status = Status::Failed(e);
                break;
            }
        };
        let next_residual = next_hist.final_state() - &gdata.raw;
        let next_misfit = problem.grid().l2_norm(&next_residual);
        let iter = k + 1;
        trace.records.push(IterationRecord {
            iter,
            residual: next_misfit,
            true_error: err(&next),
            step: sup_change(&next, &f),
            snapshot: (cfg.record_trace || iter == cfg.max_iters).then(|| next.clone()),
        });

        let grew = next_misfit > misfit;
        f = next;
        residual = next_residual;
        misfit = next_misfit;
        hist = Some(next_hist);

        if misfit <= target {
            trace.status = Status::Discrepancy;
            break;
        }
        if grew {
            if halved {
                trace.status = Status::Diverged;
                break;
            }
            growth += 1;
            if growth >= GROWTH_LIMIT {
                step_cap *= 0.5;
                halved = true;
                growth = 0;
            }
        } else {
            growth = 0;
        }
    }
    if let Some(last) = trace.records.last_mut() {
        last.snapshot.get_or_insert_with(|| f.clone());
    }
    trace.final_f = f;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reaction::ClampInterval;

    fn template() -> ReactionTerm {
        ReactionTerm::uniform(ClampInterval::new(0.0, 2.0).unwrap(), 9).unwrap()
    }

    #[test]
    fn defaults_are_valid_and_checked() {
        let cfg = NewtonConfig::default();
        cfg.validate().unwrap();
        for bad in [
            NewtonConfig {
                kappa: 1.0,
                ..cfg.clone()
            },
            NewtonConfig {
                tau: 1.0,
                ..cfg.clone()
            },
            NewtonConfig {
                varrho: 0.0,
                ..cfg.clone()
            },
            NewtonConfig {
                gamma0: 0.0,
                ..cfg.clone()
            },
            NewtonConfig {
                lambda_weight: Some(vec![(1.0, 1.0), (0.5, 1.0)]),
                ..cfg.clone()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn h1_gram_is_symmetric_positive_definite() {
        let m = h1_gram(&template());
        assert!((&m - m.transpose()).amax() < 1e-14);
        assert!(m.clone().cholesky().is_some());
        // constant coefficients: b ≈ const in the interior, the H¹ norm
        // exceeds the L² norm
        let r = smoothing_matrix(&template(), &NewtonConfig::default());
        let c = DVector::from_element(9, 1.0);
        assert!(c.dot(&(&m * &c)) > c.dot(&(&r * &c)));
    }

    #[test]
    fn simpson_integrates_cubics_exactly() {
        let nodes = simpson(&template());
        let integral: f64 = nodes.iter().map(|(u, w)| w * u.powi(3)).sum();
        assert!((integral - 4.0).abs() < 1e-12);
    }

    #[test]
    fn weight_table_interpolates() {
        let cfg = NewtonConfig {
            lambda_weight: Some(vec![(0.0, 1.0), (1.0, 3.0)]),
            ..Default::default()
        };
        assert_eq!(cfg.weight(-1.0), 1.0);
        assert_eq!(cfg.weight(0.5), 2.0);
        assert_eq!(cfg.weight(7.0), 3.0);
    }
}
