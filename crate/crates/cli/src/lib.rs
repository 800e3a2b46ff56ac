//! Benchmark harness around the `hybrid_spmv` engine.
//!
//! Each command mirrors one subcommand of the `hspmv` binary. Multiply
//! timings follow a fixed protocol: the result is checked bitwise against
//! the serial kernel, then 3 warm-up multiplies run, then `reps` timed
//! multiplies whose median is reported. Rows are appended to a CSV file
//! whose first row per matrix is the efficiency baseline.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use hybrid_spmv::{
    balance_stats, balanced_partition, build_layouts, cg_solve, create_context, create_fabric,
    decompose_rows, equal_rows_partition, gen_extruded_laplacian, greedy_partition,
    read_matrix_market_file, spmv_flops, spmv_serial, write_matrix_market, CsrMatrix, EngineError,
    ExecConfig, LatencyModel, MultContext, SolveError, SparseError,
};
use thiserror::Error;

mod record;

pub use record::{
    append_record, gflops, parallel_efficiency, read_records, BenchRecord, CSV_HEADER,
};

pub const WARMUP_MULTIPLIES: usize = 3;

#[derive(Error, Debug)]
pub enum BenchError {
    #[error(
        "result differs from the serial kernel at row {row}: got {got:e}, expected {expected:e}"
    )]
    OracleMismatch { row: usize, got: f64, expected: f64 },

    #[error("{0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Matrix(#[from] SparseError),

    #[error(transparent)]
    Engine(#[from] EngineError),

    #[error(transparent)]
    Solve(#[from] SolveError),
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Csv(e.to_string())
    }
}

/// Everything needed to build an engine context.
#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub exec: ExecConfig,
    pub latency: LatencyModel,
}

impl RunConfig {
    pub fn context(&self, a: &CsrMatrix) -> Result<MultContext, BenchError> {
        let fabric = create_fabric(self.exec.nranks, self.latency);
        Ok(create_context(a, self.exec, fabric)?)
    }
}

/// Name used for a matrix file in the `matrix` column.
pub fn matrix_id(path: &Path) -> String {
    path.file_stem()
        .or_else(|| path.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Wall-clock granularity of the timer, estimated.
pub fn timer_resolution() -> Duration {
    hybrid_spmv::clock::timer_resolution()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenSummary {
    pub nrows: usize,
    pub nnz: usize,
    /// nnz grows by this much per added layer ...
    pub nnz_per_layer: usize,
    /// ... from this value at zero layers.
    pub nnz_at_zero_layers: i64,
}

/// Writes the extruded Laplacian to `out` as Matrix Market.
pub fn cmd_gen(nx: usize, ny: usize, layers: usize, out: &Path) -> Result<GenSummary, BenchError> {
    let a = gen_extruded_laplacian(nx, ny, layers)?;
    std::fs::write(out, write_matrix_market(&a))?;
    // Each layer adds nx*ny points and their in-plane and downward edges.
    let (nx, ny) = (nx as i64, ny as i64);
    let per_layer = 7 * nx * ny - 2 * nx - 2 * ny;
    Ok(GenSummary {
        nrows: a.nrows(),
        nnz: a.nnz(),
        nnz_per_layer: per_layer as usize,
        nnz_at_zero_layers: -2 * nx * ny,
    })
}

/// Fails unless `ctx` reproduces the serial kernel bit for bit on `x`.
pub fn verify_against_serial(ctx: &mut MultContext, x: &[f64]) -> Result<(), BenchError> {
    let expected = spmv_serial(ctx.matrix(), x)?;
    check_bitwise(&ctx.mat_mult(x)?, &expected)
}

pub fn check_bitwise(got: &[f64], expected: &[f64]) -> Result<(), BenchError> {
    if got.len() != expected.len() {
        return Err(BenchError::Config(format!(
            "result has {} rows, expected {}",
            got.len(),
            expected.len()
        )));
    }
    match got
        .iter()
        .zip(expected)
        .position(|(g, e)| g.to_bits() != e.to_bits())
    {
        Some(row) => Err(BenchError::OracleMismatch {
            row,
            got: got[row],
            expected: expected[row],
        }),
        None => Ok(()),
    }
}

/// Times `reps` multiplies after the warm-ups.
pub fn time_multiplies(
    ctx: &mut MultContext,
    x: &[f64],
    reps: usize,
) -> Result<Vec<Duration>, BenchError> {
    for _ in 0..WARMUP_MULTIPLIES {
        ctx.mat_mult(x)?;
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        ctx.mat_mult(x)?;
        times.push(start.elapsed());
    }
    Ok(times)
}

pub fn median(times: &[Duration]) -> Duration {
    let mut t = times.to_vec();
    t.sort();
    match t.len() {
        0 => Duration::ZERO,
        n if n % 2 == 1 => t[n / 2],
        n => (t[n / 2 - 1] + t[n / 2]) / 2,
    }
}

/// Input vector for multiply benchmarks: varied but reproducible.
pub fn bench_vector(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 1.0 + ((i * 37) % 101) as f64 / 101.0)
        .collect()
}

#[derive(Debug, Clone)]
pub struct SpmvArgs {
    pub matrix: PathBuf,
    pub run: RunConfig,
    pub reps: usize,
    pub csv: Option<PathBuf>,
}

pub fn cmd_spmv(args: &SpmvArgs) -> Result<BenchRecord, BenchError> {
    let a = read_matrix_market_file(&args.matrix)?;
    spmv_record(
        &a,
        &matrix_id(&args.matrix),
        args.run,
        args.reps,
        args.csv.as_deref(),
    )
}

/// The multiply benchmark on an in-memory matrix.
pub fn spmv_record(
    a: &CsrMatrix,
    matrix: &str,
    run: RunConfig,
    reps: usize,
    csv: Option<&Path>,
) -> Result<BenchRecord, BenchError> {
    if reps == 0 {
        return Err(BenchError::Config("reps must be at least 1".into()));
    }
    let mut ctx = run.context(a)?;
    let x = bench_vector(a.ncols());
    verify_against_serial(&mut ctx, &x)?;
    let times = time_multiplies(&mut ctx, &x, reps)?;
    let mut record = BenchRecord {
        matrix: matrix.to_string(),
        model: run.exec.model,
        nranks: run.exec.nranks,
        threads: run.exec.threads_per_rank,
        reps,
        median_s: median(&times).as_secs_f64(),
        flops: spmv_flops(a.nnz()) * reps as u64,
        efficiency: 1.0,
        iterations: None,
        converged: None,
        error: None,
    };
    if let Some(path) = csv {
        append_record(path, &mut record)?;
    }
    Ok(record)
}

#[derive(Debug, Clone)]
pub struct CgArgs {
    pub matrix: PathBuf,
    pub run: RunConfig,
    pub rtol: f64,
    pub max_iterations: usize,
    pub csv: Option<PathBuf>,
}

pub fn cmd_cg(args: &CgArgs) -> Result<BenchRecord, BenchError> {
    let a = read_matrix_market_file(&args.matrix)?;
    cg_record(
        &a,
        &matrix_id(&args.matrix),
        args.run,
        args.rtol,
        args.max_iterations,
        args.csv.as_deref(),
    )
}

/// The solve benchmark on an in-memory matrix, with `b` all ones.
///
/// A breakdown (matrix not SPD) is reported in the `error` column rather
/// than failing the command.
pub fn cg_record(
    a: &CsrMatrix,
    matrix: &str,
    run: RunConfig,
    rtol: f64,
    max_iterations: usize,
    csv: Option<&Path>,
) -> Result<BenchRecord, BenchError> {
    let mut ctx = run.context(a)?;
    verify_against_serial(&mut ctx, &bench_vector(a.ncols()))?;
    let b = vec![1.0; a.nrows()];
    let mut record = BenchRecord {
        matrix: matrix.to_string(),
        model: run.exec.model,
        nranks: run.exec.nranks,
        threads: run.exec.threads_per_rank,
        reps: 1,
        median_s: 0.0,
        flops: 0,
        efficiency: 1.0,
        iterations: None,
        converged: None,
        error: None,
    };
    let start = Instant::now();
    match cg_solve(&mut ctx, &b, rtol, max_iterations) {
        Ok((_, report)) => {
            record.median_s = report.wall_time.as_secs_f64();
            record.flops = spmv_flops(a.nnz()) * report.spmv_count as u64;
            record.iterations = Some(report.iterations);
            record.converged = Some(report.converged);
        }
        Err(e @ SolveError::Breakdown { iteration, .. }) => {
            record.median_s = start.elapsed().as_secs_f64();
            record.flops = spmv_flops(a.nnz()) * (iteration as u64 + 1);
            record.converged = Some(false);
            record.error = Some(e.to_string());
        }
        Err(e) => return Err(e.into()),
    }
    if let Some(path) = csv {
        append_record(path, &mut record)?;
    }
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    EqualRows,
    Greedy,
    GreedyDiffuse,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::EqualRows, Scheme::Greedy, Scheme::GreedyDiffuse];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::EqualRows => "equal-rows",
            Scheme::Greedy => "greedy",
            Scheme::GreedyDiffuse => "greedy+diffuse",
        }
    }
}

/// Imbalance of the three schemes for one rank's block.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionStatsRow {
    pub rank: usize,
    /// `"diag"` or `"off"`.
    pub block: &'static str,
    pub nnz: usize,
    /// Max load and imbalance, in [`Scheme::ALL`] order.
    pub max_load: [usize; 3],
    pub imbalance: [f64; 3],
}

impl PartitionStatsRow {
    pub fn imbalance_of(&self, scheme: Scheme) -> f64 {
        self.imbalance[Scheme::ALL.iter().position(|&s| s == scheme).unwrap()]
    }
}

/// Thread partition quality per rank and block, over the per-row work the
/// engine balances in each phase.
pub fn partition_stats(
    a: &CsrMatrix,
    nranks: usize,
    workers: usize,
) -> Result<Vec<PartitionStatsRow>, BenchError> {
    if workers == 0 {
        return Err(BenchError::Config("workers must be at least 1".into()));
    }
    let ranges = decompose_rows(a.nrows(), nranks, None).map_err(EngineError::from)?;
    let layouts = build_layouts(a, &ranges).map_err(EngineError::from)?;
    let mut rows = Vec::new();
    for layout in &layouts {
        let (first, second) = layout.phase_weights();
        for (block, weights) in [("diag", first), ("off", second)] {
            let mut max_load = [0; 3];
            let mut imbalance = [0.0; 3];
            for (i, scheme) in Scheme::ALL.into_iter().enumerate() {
                let p = match scheme {
                    Scheme::EqualRows => equal_rows_partition(weights.len(), workers),
                    Scheme::Greedy => greedy_partition(&weights, workers),
                    Scheme::GreedyDiffuse => balanced_partition(&weights, workers),
                }
                .map_err(EngineError::from)?;
                let stats = balance_stats(&p, &weights);
                max_load[i] = stats.max_load;
                imbalance[i] = stats.imbalance;
            }
            rows.push(PartitionStatsRow {
                rank: layout.rank,
                block,
                nnz: weights.iter().sum(),
                max_load,
                imbalance,
            });
        }
    }
    Ok(rows)
}

pub fn format_partition_stats(rows: &[PartitionStatsRow], workers: usize) -> String {
    let mut out = format!("# workers per rank: {workers}\n");
    out.push_str("rank  block        nnz");
    for s in Scheme::ALL {
        out.push_str(&format!("  {:>16}", s.name()));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{:>4}  {:<5} {:>10}", r.rank, r.block, r.nnz));
        for imb in r.imbalance {
            out.push_str(&format!("  {imb:>16.4}"));
        }
        out.push('\n');
    }
    out
}
