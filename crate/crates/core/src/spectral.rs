//! The elliptic operator `-𝕃 = -(a u')' - c u` on an interval, discretized by
//! conservative second-order finite differences, and its eigen-expansion.
//!
//! Impedance conditions `∂_ν u + γ u = 0` are imposed through half cells at the
//! end nodes, which keeps the stiffness matrix `K` symmetric. The discrete
//! operator is `A = W⁻¹ K` with the trapezoid mass `W`, so `A` is self-adjoint
//! in the `W`-weighted inner product and its eigenvectors are orthonormal in
//! it. A Dirichlet end removes the boundary node from the unknowns; fields keep
//! the full grid length and vanish there.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{invalid, Error, Result};
use crate::mlf::ml;

pub type Field = DVector<f64>;

/// Uniform mesh on `[x_min, x_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    nodes: Vec<f64>,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(invalid(format!("need x_min < x_max, got [{x_min}, {x_max}]")));
        }
        if n < 3 {
            return Err(invalid(format!("need at least 3 nodes, got {n}")));
        }
        let h = (x_max - x_min) / (n - 1) as f64;
        let nodes = (0..n).map(|i| x_min + h * i as f64).collect();
        Ok(Grid1D { x_min, x_max, nodes })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nodes.len() - 1) as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Trapezoid weights; these define the discrete L² inner product.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.h();
        let n = self.len();
        (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect()
    }

    /// Samples `f` at the nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_iterator(self.len(), self.nodes.iter().map(|&x| f(x)))
    }

    pub fn inner(&self, u: &Field, v: &Field) -> f64 {
        let h = self.h();
        let n = self.len();
        let interior: f64 = (1..n - 1).map(|i| u[i] * v[i]).sum();
        h * (interior + 0.5 * (u[0] * v[0] + u[n - 1] * v[n - 1]))
    }

    pub fn l2_norm(&self, v: &Field) -> f64 {
        self.inner(v, v).sqrt()
    }
}

/// Boundary condition at one end of the interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// `∂_ν u + γ u = 0` with `γ ≥ 0`; `γ = 0` is the Neumann condition.
    Robin(f64),
    /// `u = 0`, the `γ → ∞` limit.
    Dirichlet,
}

/// Optional construction controls for [`EllipticOperator`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    /// Replaces `c` by `c - shift`, making a pure Neumann operator definite.
    pub shift: f64,
    /// Number of leading modes used by the solution operators. `None` means
    /// `min(#unknowns, 200)`.
    pub active_modes: Option<usize>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            shift: 0.0,
            active_modes: None,
        }
    }
}

/// Discrete `-𝕃` with cached eigenpairs.
#[derive(Debug, Clone)]
pub struct EllipticOperator {
    grid: Grid1D,
    a: Vec<f64>,
    c: Vec<f64>,
    left: Boundary,
    right: Boundary,
    free: Range<usize>,
    /// stiffness `K` on the free nodes
    diag: Vec<f64>,
    off: Vec<f64>,
    /// trapezoid mass on the free nodes
    mass: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// full-length, `W`-orthonormal eigenvectors as columns
    eigenvectors: DMatrix<f64>,
    active: usize,
}

impl EllipticOperator {
    pub fn build(grid: Grid1D, a: &[f64], c: &[f64], left: Boundary, right: Boundary) -> Result<Self> {
        Self::build_with(grid, a, c, left, right, BuildOptions::default())
    }

    /// The operator `-u''` with constant coefficients `a ≡ 1`, `c ≡ 0`.
    pub fn laplacian(grid: Grid1D, left: Boundary, right: Boundary) -> Result<Self> {
        let n = grid.len();
        Self::build(grid, &vec![1.0; n], &vec![0.0; n], left, right)
    }

    pub fn build_with(
        grid: Grid1D,
        a: &[f64],
        c: &[f64],
        left: Boundary,
        right: Boundary,
        options: BuildOptions,
    ) -> Result<Self> {
        let n = grid.len();
        if a.len() != n || c.len() != n {
            return Err(Error::Input(format!(
                "coefficient fields must have {n} values, got a: {}, c: {}",
                a.len(),
                c.len()
            )));
        }
        if let Some(i) = a.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(invalid(format!("a must be positive, a[{i}] = {}", a[i])));
        }
        if let Some(i) = c.iter().position(|&v| !(v <= 0.0)) {
            return Err(invalid(format!("c must be nonpositive, c[{i}] = {}", c[i])));
        }
        for b in [left, right] {
            if let Boundary::Robin(g) = b {
                if !(g >= 0.0) || !g.is_finite() {
                    return Err(invalid(format!("impedance coefficient must be >= 0, got {g}")));
                }
            }
        }
        if !(options.shift >= 0.0) {
            return Err(invalid("positivity shift must be >= 0"));
        }
        let c: Vec<f64> = c.iter().map(|v| v - options.shift).collect();
        let h = grid.h();
        let lo = usize::from(left == Boundary::Dirichlet);
        let hi = n - usize::from(right == Boundary::Dirichlet);
        let free = lo..hi;
        let a_half: Vec<f64> = a.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();

        let mut diag = Vec::with_capacity(hi - lo);
        let mut mass = Vec::with_capacity(hi - lo);
        for i in free.clone() {
            let (d, m) = if i == 0 {
                let Boundary::Robin(g) = left else { unreachable!() };
                (a_half[0] / h + a[0] * g - 0.5 * h * c[0], 0.5 * h)
            } else if i == n - 1 {
                let Boundary::Robin(g) = right else { unreachable!() };
                (a_half[n - 2] / h + a[n - 1] * g - 0.5 * h * c[n - 1], 0.5 * h)
            } else {
                ((a_half[i - 1] + a_half[i]) / h - h * c[i], h)
            };
            diag.push(d);
            mass.push(m);
        }
        let off: Vec<f64> = free.clone().skip(1).map(|i| -a_half[i - 1] / h).collect();

        // symmetric form S = W^{-1/2} K W^{-1/2}
        let m = free.len();
        let mut s = DMatrix::<f64>::zeros(m, m);
        for k in 0..m {
            s[(k, k)] = diag[k] / mass[k];
            if k + 1 < m {
                let v = off[k] / (mass[k] * mass[k + 1]).sqrt();
                s[(k, k + 1)] = v;
                s[(k + 1, k)] = v;
            }
        }
        let eig = s.symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let scale = eigenvalues[m - 1].abs().max(1.0);
        if eigenvalues[0] <= 1e-10 * scale {
            return Err(Error::Definiteness {
                index: 1,
                value: eigenvalues[0],
            });
        }
        let mut eigenvectors = DMatrix::<f64>::zeros(n, m);
        for (col, &j) in order.iter().enumerate() {
            let psi = eig.eigenvectors.column(j);
            let pivot = psi.iter().copied().find(|v| v.abs() > 1e-8).unwrap_or(1.0);
            let sign = pivot.signum();
            for k in 0..m {
                eigenvectors[(lo + k, col)] = sign * psi[k] / mass[k].sqrt();
            }
        }
        let active = options.active_modes.unwrap_or(200).min(m).max(1);
        Ok(EllipticOperator {
            grid,
            a: a.to_vec(),
            c,
            left,
            right,
            free,
            diag,
            off,
            mass,
            eigenvalues,
            eigenvectors,
            active,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn boundaries(&self) -> (Boundary, Boundary) {
        (self.left, self.right)
    }

    pub fn diffusion(&self) -> &[f64] {
        &self.a
    }

    pub fn potential(&self) -> &[f64] {
        &self.c
    }

    /// Indices of the nodes carrying unknowns (Dirichlet ends excluded).
    pub fn free_nodes(&self) -> Range<usize> {
        self.free.clone()
    }

    /// Diagonal and off-diagonal of the symmetric stiffness matrix on the free
    /// nodes.
    pub fn stiffness(&self) -> (&[f64], &[f64]) {
        (&self.diag, &self.off)
    }

    /// Lumped mass on the free nodes.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Ascending eigenvalues, all of them.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, j: usize) -> f64 {
        self.eigenvalues[j]
    }

    /// The `j`-th eigenvector (0-based), full grid length.
    pub fn eigenvector(&self, j: usize) -> DVectorView<'_, f64> {
        self.eigenvectors.column(j)
    }

    pub fn eigenvector_field(&self, j: usize) -> Field {
        self.eigenvectors.column(j).into_owned()
    }

    pub fn total_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of modes used by [`apply_e`](Self::apply_e) and friends.
    pub fn active_modes(&self) -> usize {
        self.active
    }

    pub fn with_active_modes(mut self, j: usize) -> Self {
        self.active = j.clamp(1, self.total_modes());
        self
    }

    /// `A v = -𝕃 v` (zero at Dirichlet nodes).
    pub fn apply(&self, v: &Field) -> Field {
        let mut out = Field::zeros(self.grid.len());
        let lo = self.free.start;
        let m = self.free.len();
        for k in 0..m {
            let mut s = self.diag[k] * v[lo + k];
            if k > 0 {
                s += self.off[k - 1] * v[lo + k - 1];
            }
            if k + 1 < m {
                s += self.off[k] * v[lo + k + 1];
            }
            out[lo + k] = s / self.mass[k];
        }
        out
    }

    /// Discrete L² inner product.
    pub fn inner(&self, u: &Field, v: &Field) -> f64 {
        self.grid.inner(u, v)
    }

    /// `(v, φ_j)` for the first `modes` eigenvectors.
    pub fn coefficients(&self, v: &Field, modes: usize) -> Vec<f64> {
        let w = self.grid.weights();
        let wv = Field::from_iterator(v.len(), v.iter().zip(&w).map(|(a, b)| a * b));
        (0..modes.min(self.total_modes()))
            .map(|j| self.eigenvectors.column(j).dot(&wv))
            .collect()
    }

    /// `Σ_j coeffs[j] φ_j`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Field {
        let mut out = Field::zeros(self.grid.len());
        for (j, &cj) in coeffs.iter().enumerate() {
            if cj != 0.0 {
                out.axpy(cj, &self.eigenvectors.column(j), 1.0);
            }
        }
        out
    }

    /// `‖v‖_{Ḣ^s} = (Σ_j λ_j^s (v, φ_j)²)^{1/2}` over all modes.
    pub fn hdot_norm(&self, v: &Field, s: f64) -> f64 {
        self.coefficients(v, self.total_modes())
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, l)| l.powf(s) * c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// Solution operator `𝔼(t) v = Σ_j E_{α,1}(-λ_j t^α)(v, φ_j) φ_j`.
    pub fn apply_e(&self, alpha: f64, t: f64, v: &Field) -> Result<Field> {
        check_alpha(alpha)?;
        if !(t >= 0.0) {
            return Err(invalid(format!("time must be >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(v.clone());
        }
        let ta = t.powf(alpha);
        let coeffs: Vec<f64> = self
            .coefficients(v, self.active)
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, l)| c * ml(alpha, 1.0, -l * ta))
            .collect();
        Ok(self.synthesize(&coeffs))
    }

    /// `∫_0^t 𝔼̄(t - s) r(s) ds` for a source sampled on `times`.
    ///
    /// Per mode, the source coefficient is interpolated linearly in `s` and
    /// integrated exactly against the kernel `τ^{α-1} E_{α,α}(-λ τ^α)`, using
    /// its first two antiderivatives `τ^α E_{α,α+1}(-λτ^α)` and
    /// `τ^{α+1} E_{α,α+2}(-λτ^α)`.
    pub fn apply_ebar_convolution(&self, alpha: f64, t: f64, times: &[f64], source: &[Field]) -> Result<Field> {
        check_alpha(alpha)?;
        if times.len() != source.len() || times.len() < 2 {
            return Err(Error::Input("need at least two source samples, one per time".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Input("source times must be strictly increasing".into()));
        }
        let tol = 1e-12 * t.abs().max(1.0);
        if times[0].abs() > tol || *times.last().unwrap() < t - tol {
            return Err(Error::Input(format!(
                "time grid [{}, {}] does not cover [0, {t}]",
                times[0],
                times.last().unwrap()
            )));
        }
        if t == 0.0 {
            return Ok(Field::zeros(self.grid.len()));
        }
        // trim the grid to [0, t], interpolating the last sample
        let mut ts: Vec<f64> = Vec::new();
        let mut rs: Vec<Vec<f64>> = Vec::new();
        for (k, &tk) in times.iter().enumerate() {
            if tk < t - tol {
                ts.push(tk);
                rs.push(self.coefficients(&source[k], self.active));
            } else {
                let (t0, r0) = (times[k - 1], &source[k - 1]);
                let theta = (t - t0) / (tk - t0);
                let rt = r0 * (1.0 - theta) + &source[k] * theta;
                ts.push(t);
                rs.push(self.coefficients(&rt, self.active));
                break;
            }
        }
        let mut out = vec![0.0; self.active];
        for (j, slot) in out.iter_mut().enumerate() {
            let lambda = self.eigenvalues[j];
            let k1 = |tau: f64| {
                if tau <= 0.0 {
                    0.0
                } else {
                    tau.powf(alpha) * ml(alpha, alpha + 1.0, -lambda * tau.powf(alpha))
                }
            };
            let k2 = |tau: f64| {
                if tau <= 0.0 {
                    0.0
                } else {
                    tau.powf(alpha + 1.0) * ml(alpha, alpha + 2.0, -lambda * tau.powf(alpha))
                }
            };
            let taus: Vec<f64> = ts.iter().map(|s| t - s).collect();
            let k1v: Vec<f64> = taus.iter().map(|&x| k1(x)).collect();
            let k2v: Vec<f64> = taus.iter().map(|&x| k2(x)).collect();
            let mut acc = 0.0;
            for k in 0..ts.len() - 1 {
                let dt = ts[k + 1] - ts[k];
                let (r0, r1) = (rs[k][j], rs[k + 1][j]);
                let m0 = k1v[k] - k1v[k + 1];
                let m1 = k2v[k] - k2v[k + 1] - dt * k1v[k + 1];
                acc += r0 * m0 + (r1 - r0) / dt * m1;
            }
            *slot = acc;
        }
        Ok(self.synthesize(&out))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

/// The `Ḣ^s` scale built on an operator's eigenpairs.
#[derive(Debug, Clone, Copy)]
pub struct SobolevScale<'a> {
    pub op: &'a EllipticOperator,
    pub s: f64,
}

impl SobolevScale<'_> {
    pub fn norm(&self, v: &Field) -> f64 {
        self.op.hdot_norm(v, self.s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> Grid1D {
        Grid1D::new(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid1D::new(1.0, 0.0, 10).is_err());
        assert!(Grid1D::new(0.0, 1.0, 2).is_err());
        let g = unit(5);
        assert_eq!(g.h(), 0.25);
        assert_eq!(g.weights().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn dirichlet_ground_state() {
        let op = EllipticOperator::laplacian(unit(401), Boundary::Dirichlet, Boundary::Dirichlet).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((op.eigenvalue(0) - pi2).abs() / pi2 < 1e-3);
        let phi = op.eigenvector(0);
        assert_eq!(phi[0], 0.0);
        assert_eq!(phi[400], 0.0);
        assert!(phi.iter().skip(1).take(399).all(|&v| v > 0.0));
    }

    #[test]
    fn neumann_with_unit_potential() {
        let g = unit(401);
        let op =
            EllipticOperator::build(g, &[1.0; 401], &[-1.0; 401], Boundary::Robin(0.0), Boundary::Robin(0.0)).unwrap();
        assert!((op.eigenvalue(0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn pure_neumann_is_rejected_unless_shifted() {
        let g = unit(51);
        let err = EllipticOperator::laplacian(g.clone(), Boundary::Robin(0.0), Boundary::Robin(0.0)).unwrap_err();
        assert!(matches!(err, Error::Definiteness { index: 1, .. }));
        let opts = BuildOptions {
            shift: 1e-3,
            ..Default::default()
        };
        let op = EllipticOperator::build_with(
            g,
            &[1.0; 51],
            &[0.0; 51],
            Boundary::Robin(0.0),
            Boundary::Robin(0.0),
            opts,
        )
        .unwrap();
        assert!((op.eigenvalue(0) - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_coefficients() {
        let g = unit(11);
        assert!(EllipticOperator::build(
            g.clone(),
            &[0.0; 11],
            &[0.0; 11],
            Boundary::Dirichlet,
            Boundary::Dirichlet
        )
        .is_err());
        assert!(EllipticOperator::build(
            g.clone(),
            &[1.0; 11],
            &[1.0; 11],
            Boundary::Dirichlet,
            Boundary::Dirichlet
        )
        .is_err());
        assert!(EllipticOperator::build(
            g.clone(),
            &[1.0; 11],
            &[0.0; 11],
            Boundary::Robin(-1.0),
            Boundary::Dirichlet
        )
        .is_err());
        assert!(EllipticOperator::build(g, &[1.0; 10], &[0.0; 11], Boundary::Dirichlet, Boundary::Dirichlet).is_err());
    }

    #[test]
    fn apply_at_time_zero_is_identity() {
        let op = EllipticOperator::laplacian(unit(41), Boundary::Robin(1.0), Boundary::Dirichlet).unwrap();
        let v = op.grid().sample(|x| x * (1.0 - x) + 0.3);
        assert_eq!(op.apply_e(0.5, 0.0, &v).unwrap(), v);
    }

    #[test]
    fn convolution_of_zero_source_vanishes() {
        let op = EllipticOperator::laplacian(unit(41), Boundary::Dirichlet, Boundary::Dirichlet).unwrap();
        let times: Vec<f64> = (0..=10).map(|k| 0.1 * k as f64).collect();
        let zero = vec![Field::zeros(41); 11];
        let out = op.apply_ebar_convolution(0.6, 1.0, &times, &zero).unwrap();
        assert_eq!(out.amax(), 0.0);
        assert!(op.apply_ebar_convolution(0.6, 2.0, &times, &zero).is_err());
    }
}
