//! Iteration records shared by the reconstruction methods.

use std::io::Write;

use crate::error::Error;
use crate::io::{fmt_num, write_table};
use crate::reaction::{ClampInterval, Reaction, ReactionTerm};

/// The part of the interval actually sampled by the data.
///
/// The interval is cut into cells of one basis spacing; a cell counts as
/// covered when at least one data value falls into it. Outside the covered
/// cells the data carry no information about `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMask {
    interval: ClampInterval,
    cell: f64,
    covered: Vec<bool>,
}

impl CoverageMask {
    pub fn new(interval: ClampInterval, spacing: f64, values: &[f64]) -> Self {
        let cells = ((interval.width() / spacing).round() as usize).max(1);
        let cell = interval.width() / cells as f64;
        let mut covered = vec![false; cells];
        for &v in values {
            if interval.contains(v) && cell > 0.0 {
                let k = (((v - interval.g_min) / cell) as usize).min(cells - 1);
                covered[k] = true;
            }
        }
        CoverageMask {
            interval,
            cell,
            covered,
        }
    }

    pub fn contains(&self, u: f64) -> bool {
        if !self.interval.contains(u) || self.cell == 0.0 {
            return false;
        }
        let k = (((u - self.interval.g_min) / self.cell) as usize).min(self.covered.len() - 1);
        self.covered[k]
    }

    /// Fraction of the interval that is covered.
    pub fn fraction(&self) -> f64 {
        self.covered.iter().filter(|&&c| c).count() as f64 / self.covered.len() as f64
    }

    /// Evaluation points for sup-norm comparisons: 40 per cell, covered cells only.
    pub fn sample_points(&self) -> Vec<f64> {
        let per = 40;
        let mut pts = Vec::new();
        for (k, &c) in self.covered.iter().enumerate() {
            if c {
                let lo = self.interval.g_min + self.cell * k as f64;
                pts.extend((0..=per).map(|i| lo + self.cell * i as f64 / per as f64));
            }
        }
        pts
    }

    /// `sup |f − g|` over the covered points.
    pub fn sup_distance(&self, f: &dyn Reaction, g: &dyn Reaction) -> f64 {
        self.sample_points()
            .into_iter()
            .map(|u| (f.eval(u) - g.eval(u)).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// Method-specific residual: the projection misfit for the fixed point,
    /// the data misfit `‖F(f_k) − g^δ‖` for Newton.
    pub residual: f64,
    /// `‖f_k − f_act‖_∞` over the coverage mask, when the truth is known.
    pub true_error: Option<f64>,
    /// `‖f_k − f_{k−1}‖_∞` over the interval.
    pub step: f64,
    pub snapshot: Option<ReactionTerm>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    /// Successive iterates stopped changing.
    Stalled,
    /// The discrepancy principle was met.
    Discrepancy,
    MaxIters,
    /// The residual kept growing after the step cap was reduced.
    Diverged,
    /// A forward or linear solve failed; the trace ends at the last good iterate.
    Failed(Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionTrace {
    pub initial: ReactionTerm,
    /// Error of the initial guess, when the truth is known.
    pub initial_error: Option<f64>,
    pub records: Vec<IterationRecord>,
    pub final_f: ReactionTerm,
    pub status: Status,
    pub coverage: CoverageMask,
}

impl ReconstructionTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn converged(&self) -> bool {
        matches!(self.status, Status::Stalled | Status::Discrepancy)
    }

    pub fn record(&self, iter: usize) -> Option<&IterationRecord> {
        self.records.iter().find(|r| r.iter == iter)
    }

    /// Writes `iter,residual,true_error` records; missing errors are `NaN`.
    pub fn write_csv(&self, out: impl Write) -> std::io::Result<()> {
        write_table(
            out,
            &["iter", "residual", "true_error"],
            self.records
                .iter()
                .map(|r| vec![r.iter as f64, r.residual, r.true_error.unwrap_or(f64::NAN)]),
        )
    }

    /// Writes `iter,u,f_u` samples for every stored snapshot.
    pub fn write_snapshots(&self, mut out: impl Write, samples: usize) -> std::io::Result<()> {
        writeln!(out, "iter,u,f_u")?;
        for r in &self.records {
            if let Some(f) = &r.snapshot {
                for (u, v) in f.sample(samples) {
                    writeln!(out, "{},{},{}", r.iter, fmt_num(u), fmt_num(v))?;
                }
            }
        }
        Ok(())
    }
}

/// `sup |f − g|` on a uniform grid of the interval.
pub(crate) fn sup_change(a: &ReactionTerm, b: &ReactionTerm) -> f64 {
    let iv = a.interval();
    let n = 20 * a.len() + 1;
    (0..n)
        .map(|k| {
            let u = iv.g_min + iv.width() * k as f64 / (n - 1) as f64;
            (a.eval(u) - b.eval(u)).abs()
        })
        .fold(0.0, f64::max)
}
