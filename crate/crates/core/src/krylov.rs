//! Jacobi-preconditioned conjugate gradient over a [`MultContext`].
//!
//! Starts from `x = 0` and stops when `||b - A x||_2 / ||b||_2 <= rtol`
//! (unpreconditioned residual, recurred) or after `max_iterations`. Dot
//! products are summed per rank over its owned rows, then the rank partials
//! are added in rank order, so results are reproducible for a fixed rank
//! count regardless of execution model or thread count.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::engine::{EngineError, MultContext};
use crate::layout::RowRange;

/// Iteration cap of the benchmark protocol.
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;
pub const DEFAULT_RTOL: f64 = 1e-5;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SolveError {
    #[error("zero diagonal entry in row {row}: Jacobi preconditioner is singular")]
    SingularPreconditioner { row: usize },

    #[error("CG breakdown at iteration {iteration}: p'Ap = {curvature} (matrix not SPD?)")]
    Breakdown { iteration: usize, curvature: f64 },

    #[error("vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    pub final_relative_residual: f64,
    pub wall_time: Duration,
    /// Always `iterations + 1`: one product for the initial residual.
    pub spmv_count: usize,
}

/// `z[i] = r[i] / diag[i]`.
pub fn jacobi_apply(diag: &[f64], r: &[f64]) -> Result<Vec<f64>, SolveError> {
    if diag.len() != r.len() {
        return Err(SolveError::DimensionMismatch {
            expected: diag.len(),
            got: r.len(),
        });
    }
    if let Some(row) = diag.iter().position(|&d| d == 0.0) {
        return Err(SolveError::SingularPreconditioner { row });
    }
    Ok(r.iter().zip(diag).map(|(r, d)| r / d).collect())
}

/// Dot product reduced per rank, then across ranks in rank order.
pub fn ranked_dot(ranges: &[RowRange], a: &[f64], b: &[f64]) -> f64 {
    ranges
        .iter()
        .map(|rg| {
            a[rg.as_range()]
                .iter()
                .zip(&b[rg.as_range()])
                .fold(0.0, |acc, (x, y)| acc + x * y)
        })
        .fold(0.0, |acc, part| acc + part)
}

pub fn cg_solve(
    ctx: &mut MultContext,
    b: &[f64],
    rtol: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, SolveReport), SolveError> {
    cg_solve_observed(ctx, b, rtol, max_iterations, |_, _, _| {})
}

/// [`cg_solve`] calling `observe(iteration, x, relative_residual)` after
/// every update of the iterate.
pub fn cg_solve_observed(
    ctx: &mut MultContext,
    b: &[f64],
    rtol: f64,
    max_iterations: usize,
    mut observe: impl FnMut(usize, &[f64], f64),
) -> Result<(Vec<f64>, SolveReport), SolveError> {
    let n = ctx.nrows();
    if b.len() != n {
        return Err(SolveError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let started = Instant::now();
    let diag = ctx.matrix().diagonal();
    if let Some(row) = diag.iter().position(|&d| d == 0.0) {
        return Err(SolveError::SingularPreconditioner { row });
    }
    let ranges = ctx.ranges().to_vec();
    let dot = |u: &[f64], v: &[f64]| ranked_dot(&ranges, u, v);

    let mut x = vec![0.0; n];
    let ax = ctx.mat_mult(&x)?;
    let mut spmv_count = 1;
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let b_norm = dot(b, b).sqrt();
    let rel = |r: &[f64]| {
        if b_norm == 0.0 {
            0.0
        } else {
            dot(r, r).sqrt() / b_norm
        }
    };

    let mut residual = rel(&r);
    let mut iterations = 0;
    let mut converged = residual <= rtol;
    if !converged && max_iterations > 0 {
        let mut z = jacobi_apply(&diag, &r)?;
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        loop {
            let q = ctx.mat_mult(&p)?;
            spmv_count += 1;
            iterations += 1;
            let curvature = dot(&p, &q);
            if !(curvature > 0.0) {
                return Err(SolveError::Breakdown {
                    iteration: iterations,
                    curvature,
                });
            }
            let alpha = rz / curvature;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            residual = rel(&r);
            observe(iterations, &x, residual);
            if residual <= rtol {
                converged = true;
                break;
            }
            if iterations == max_iterations {
                break;
            }
            z = jacobi_apply(&diag, &r)?;
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }

    Ok((
        x,
        SolveReport {
            iterations,
            converged,
            final_relative_residual: residual,
            wall_time: started.elapsed(),
            spmv_count,
        },
    ))
}
