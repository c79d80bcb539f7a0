//! Alternating analog/digital optimization for the three analog structures.
//!
//! All solvers share one outer loop: refine the analog matrix with the digital
//! precoders held fixed, refresh the digital precoders, record the average
//! rate, and stop once the rate settles.

pub mod ds;
pub mod fc;
pub mod pc;

use std::time::Instant;

use serde::Serialize;

use crate::channel::ChannelRealization;
use crate::config::Structure;
use crate::constants::{SOLVER_MAX_ITERS, SOLVER_REL_TOL};
use crate::error::{Error, Result};
use crate::evalcore::{average_rate, update_digital, HybridPrecoder};
use crate::numerics::ComplexMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Snap phases to the codebook. Disabling it is only meaningful for
    /// relaxation experiments; the result then violates the codebook
    /// invariant by design.
    pub quantize: bool,
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { quantize: true, rel_tol: SOLVER_REL_TOL, max_iters: SOLVER_MAX_ITERS }
    }
}

/// Counters for the fallback paths a solve went through.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SolverFlags {
    /// Element updates whose phase argument was exactly zero (phase 0 used).
    pub zero_argument_phases: usize,
    /// Subarray blocks initialized randomly because their channel block was zero.
    pub fallback_blocks: usize,
    /// RF chains that lost every antenna and were reassigned one.
    pub repaired_columns: usize,
    /// Column updates rolled back because they made the analog matrix singular.
    pub rejected_columns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverReport {
    /// Entry 0 is the rate at the initial point; entry `t` the rate after
    /// outer iteration `t`. When the best iterate is not the last one its
    /// rate is appended, so the final entry always matches the returned
    /// precoder.
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    pub wall_time: f64,
    /// Seconds spent in each outer iteration (analog step, digital refresh
    /// and rate evaluation).
    pub iteration_times: Vec<f64>,
    pub flags: SolverFlags,
}

impl SolverReport {
    pub fn final_rate(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }

    /// Relative rate change of outer iteration `iteration + 1` with respect
    /// to iteration `iteration`; zero when the solver stopped earlier.
    pub fn relative_change_after(&self, iteration: usize) -> f64 {
        match (self.objective_trace.get(iteration), self.objective_trace.get(iteration + 1)) {
            (Some(&a), Some(&b)) if iteration < self.iterations_run => {
                if a == 0.0 {
                    (b - a).abs()
                } else {
                    (b - a).abs() / a.abs()
                }
            }
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub precoder: HybridPrecoder,
    pub report: SolverReport,
}

impl Solution {
    pub fn rate(&self) -> f64 {
        self.report.final_rate()
    }
}

/// The shared outer loop. `step` improves `f_rf` with `f_bb` as the current
/// digital precoders and must leave `f_bb` consistent with the new `f_rf`.
pub(crate) fn run_alternating(
    channel: &ChannelRealization,
    structure: Structure,
    f_rf: ComplexMatrix,
    opts: &SolverOptions,
    mut flags: SolverFlags,
    mut step: impl FnMut(&mut ComplexMatrix, &mut Vec<ComplexMatrix>, &mut SolverFlags) -> Result<()>,
) -> Result<Solution> {
    let start = Instant::now();
    let mut f_rf = f_rf;
    let mut f_bb = update_digital(channel, &f_rf)?;
    let mut trace = vec![average_rate(channel, &f_rf, &f_bb)?.average];
    let mut best = (trace[0], f_rf.clone(), f_bb.clone());
    let mut converged = false;
    let mut iterations = 0;
    let mut iteration_times = Vec::new();
    while iterations < opts.max_iters {
        let tick = Instant::now();
        step(&mut f_rf, &mut f_bb, &mut flags)?;
        iterations += 1;
        let rate = average_rate(channel, &f_rf, &f_bb)?.average;
        iteration_times.push(tick.elapsed().as_secs_f64());
        if !rate.is_finite() {
            return Err(Error::Invariant(format!("non-finite rate after iteration {iterations}")));
        }
        let prev = *trace.last().expect("non-empty");
        trace.push(rate);
        if rate > best.0 {
            best = (rate, f_rf.clone(), f_bb.clone());
        }
        if (rate - prev).abs() <= opts.rel_tol * prev.abs() {
            converged = true;
            break;
        }
    }
    if !converged && best.0 > *trace.last().expect("non-empty") {
        trace.push(best.0);
        f_rf = best.1;
        f_bb = best.2;
    }
    Ok(Solution {
        precoder: HybridPrecoder { f_rf, f_bb, structure },
        report: SolverReport {
            objective_trace: trace,
            iterations_run: iterations,
            converged,
            wall_time: start.elapsed().as_secs_f64(),
            iteration_times,
            flags,
        },
    })
}
