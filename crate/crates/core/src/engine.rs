//! Distributed SpMV under four execution models.
//!
//! A [`MultContext`] owns one long-lived thread group per rank. Each multiply
//! runs in two phases separated by a rank-local barrier: the first phase
//! needs only owned vector entries, the second needs the ghost entries
//! gathered through the fabric.
//!
//! * `Vector`: the master thread posts the exchange, then all `T` threads
//!   compute the first phase over an equal row split. After a barrier the
//!   master alone waits for the ghosts (paying the latency with nobody else
//!   working) and unpacks them; then all threads compute the second phase.
//! * `Task`: thread 0 is a dedicated communication thread. It posts, waits
//!   and unpacks while threads `1..T` compute the first phase, so the
//!   exchange overlaps the computation. Only the `T - 1` workers compute the
//!   second phase.
//! * `TaskBalanced`: as `Task`, with greedy + diffusion partitions over each
//!   phase's per-row work instead of equal row counts.
//! * `Serial`: [`spmv_serial`] on the calling thread.
//!
//! Every model produces output bitwise equal to [`spmv_serial`]: each row is
//! folded in ascending column order by exactly one thread (see
//! [`crate::layout`] for how rows are split across the phases).

use std::collections::HashMap;
use std::ops::Range;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::balance::{balanced_partition, equal_rows_partition, BalanceError, ThreadPartition};
use crate::clock::{self, Span, Stopwatch};
use crate::fabric::{Fabric, FabricError, MessageHandle};
use crate::layout::{
    build_layouts, build_scatter_plan, decompose_rows, LayoutError, RankLayout, RankPlan, RowRange,
    ScatterPlan,
};
use crate::sparse::{spmv_serial, CsrMatrix, SparseError};
use crate::sync::PhaseBarrier;

const SCATTER_TAG: u32 = 0;
/// Priority handicap of threads other than the one that communicates.
const COMPUTE_NICE: i32 = 5;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("fabric has {fabric} ranks but the configuration asks for {config}")]
    FabricSize { fabric: usize, config: usize },

    #[error("input vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rank {rank}: {source}")]
    Exchange { rank: usize, source: FabricError },

    #[error(transparent)]
    Layout(#[from] LayoutError),

    #[error(transparent)]
    Balance(#[from] BalanceError),

    #[error(transparent)]
    Sparse(#[from] SparseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExecModel {
    Serial,
    Vector,
    Task,
    TaskBalanced,
}

impl ExecModel {
    pub const ALL: [ExecModel; 4] = [
        ExecModel::Serial,
        ExecModel::Vector,
        ExecModel::Task,
        ExecModel::TaskBalanced,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExecModel::Serial => "serial",
            ExecModel::Vector => "vector",
            ExecModel::Task => "task",
            ExecModel::TaskBalanced => "task-balanced",
        }
    }

    pub fn is_task(self) -> bool {
        matches!(self, ExecModel::Task | ExecModel::TaskBalanced)
    }
}

impl std::fmt::Display for ExecModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ExecModel {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExecModel::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| EngineError::Config(format!("unknown model {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecConfig {
    pub model: ExecModel,
    pub nranks: usize,
    pub threads_per_rank: usize,
    /// Split rows between ranks by nonzeros instead of row count.
    pub weighted_decomp: bool,
}

impl ExecConfig {
    pub fn new(model: ExecModel, nranks: usize, threads_per_rank: usize) -> Self {
        ExecConfig {
            model,
            nranks,
            threads_per_rank,
            weighted_decomp: false,
        }
    }

    pub fn serial() -> Self {
        Self::new(ExecModel::Serial, 1, 1)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.nranks == 0 {
            return Err(EngineError::Config("nranks must be at least 1".into()));
        }
        if self.threads_per_rank == 0 {
            return Err(EngineError::Config(
                "threads_per_rank must be at least 1".into(),
            ));
        }
        if self.model.is_task() && self.threads_per_rank < 2 {
            return Err(EngineError::Config(format!(
                "{} model needs at least 2 threads per rank (one communication thread), got {}",
                self.model, self.threads_per_rank
            )));
        }
        Ok(())
    }

    /// Threads that compute. Task models reserve one for communication.
    pub fn workers(&self) -> usize {
        match self.model {
            ExecModel::Serial => 1,
            ExecModel::Vector => self.threads_per_rank,
            ExecModel::Task | ExecModel::TaskBalanced => self.threads_per_rank - 1,
        }
    }

    /// Cores the configuration occupies.
    pub fn cores(&self) -> usize {
        match self.model {
            ExecModel::Serial => 1,
            _ => self.nranks * self.threads_per_rank,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Owned columns only.
    Diag,
    /// Needs ghost columns.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    EqualRows,
    GreedyDiffuse,
}

type CacheKey = (usize, Phase, usize, Scheme);

/// Thread partitions computed once per (rank, phase, worker count, scheme).
#[derive(Debug, Default)]
pub struct PartitionCache {
    entries: Mutex<HashMap<CacheKey, Arc<ThreadPartition>>>,
    builds: AtomicUsize,
}

impl PartitionCache {
    pub fn get_or_build(
        &self,
        layout: &RankLayout,
        phase: Phase,
        workers: usize,
        scheme: Scheme,
    ) -> Result<Arc<ThreadPartition>, BalanceError> {
        let key = (layout.rank, phase, workers, scheme);
        let mut entries = self.entries.lock().unwrap();
        if let Some(p) = entries.get(&key) {
            return Ok(Arc::clone(p));
        }
        let partition = match scheme {
            Scheme::EqualRows => equal_rows_partition(layout.own.len(), workers)?,
            Scheme::GreedyDiffuse => {
                let (first, second) = layout.phase_weights();
                let weights = match phase {
                    Phase::Diag => first,
                    Phase::Off => second,
                };
                balanced_partition(&weights, workers)?
            }
        };
        self.builds.fetch_add(1, Ordering::Relaxed);
        let partition = Arc::new(partition);
        entries.insert(key, Arc::clone(&partition));
        Ok(partition)
    }

    /// Number of partitions computed so far.
    pub fn builds(&self) -> usize {
        self.builds.load(Ordering::Relaxed)
    }
}

/// What one thread did during one multiply. Offsets are measured from the
/// moment the caller released the rank threads.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ThreadTiming {
    /// Whether the thread computes rows (false for a communication thread).
    pub computes: bool,
    /// Global rows handled in each phase.
    pub diag_rows: Range<usize>,
    pub off_rows: Range<usize>,
    pub diag_start: Duration,
    pub diag: Span,
    pub off_start: Duration,
    pub off: Span,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankTimings {
    /// Offsets of the exchange steps from the release of the threads.
    pub post_start: Duration,
    pub wait_start: Duration,
    /// Packing and posting the exchange.
    pub post: Duration,
    /// First phase, from its first thread starting to its last finishing.
    pub diag: Duration,
    /// Waiting for the ghosts and unpacking them.
    pub wait: Duration,
    /// Second phase, from its first thread starting to its last finishing.
    pub off: Duration,
    pub threads: Vec<ThreadTiming>,
}

fn phase_window<'a>(threads: impl Iterator<Item = (&'a Duration, &'a Span)> + Clone) -> Duration {
    let start = threads.clone().map(|(s, _)| *s).min();
    let end = threads.map(|(s, span)| *s + span.wall).max();
    match (start, end) {
        (Some(s), Some(e)) => e - s,
        _ => Duration::ZERO,
    }
}

impl RankTimings {
    /// Largest per-thread busy time in the first phase.
    pub fn diag_max_busy(&self) -> Duration {
        self.threads
            .iter()
            .map(|t| t.diag.busy)
            .max()
            .unwrap_or_default()
    }

    pub fn off_max_busy(&self) -> Duration {
        self.threads
            .iter()
            .map(|t| t.off.busy)
            .max()
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MultiplyTimings {
    /// Wall time of the whole multiply as seen by the caller.
    pub total: Duration,
    pub ranks: Vec<RankTimings>,
}

impl MultiplyTimings {
    pub fn diag(&self) -> Duration {
        self.ranks.iter().map(|r| r.diag).max().unwrap_or_default()
    }

    pub fn wait(&self) -> Duration {
        self.ranks.iter().map(|r| r.wait).max().unwrap_or_default()
    }

    pub fn off(&self) -> Duration {
        self.ranks.iter().map(|r| r.off).max().unwrap_or_default()
    }

    pub fn post(&self) -> Duration {
        self.ranks.iter().map(|r| r.post).max().unwrap_or_default()
    }

    pub fn diag_max_busy(&self) -> Duration {
        self.ranks
            .iter()
            .map(|r| r.diag_max_busy())
            .max()
            .unwrap_or_default()
    }
}

#[derive(Default)]
struct RankReport {
    post_start: Duration,
    post: Duration,
    wait_start: Duration,
    wait: Duration,
    threads: Vec<ThreadTiming>,
    error: Option<EngineError>,
}

struct RankShared {
    layout: RankLayout,
    plan: RankPlan,
    model: ExecModel,
    fabric: Fabric,
    diag_part: Arc<ThreadPartition>,
    off_part: Arc<ThreadPartition>,
    x_local: RwLock<Vec<f64>>,
    ghost: RwLock<Vec<f64>>,
    /// Output rows as f64 bits; each element has a single writer per phase.
    y: Vec<AtomicU64>,
    phase: PhaseBarrier,
    report: Mutex<RankReport>,
}

struct Control {
    start: PhaseBarrier,
    finish: PhaseBarrier,
    shutdown: AtomicBool,
    epoch: Mutex<Instant>,
}

/// Everything a distributed multiply needs, precomputed once per matrix.
pub struct MultContext {
    matrix: Arc<CsrMatrix>,
    cfg: ExecConfig,
    ranges: Vec<RowRange>,
    plan: ScatterPlan,
    cache: PartitionCache,
    ranks: Vec<Arc<RankShared>>,
    layouts_serial: Vec<RankLayout>,
    control: Option<Arc<Control>>,
    threads: Vec<JoinHandle<()>>,
}

impl std::fmt::Debug for MultContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultContext")
            .field("cfg", &self.cfg)
            .field("ranges", &self.ranges)
            .finish_non_exhaustive()
    }
}

/// Decomposes `a`, builds layouts, scatter plan and cached thread
/// partitions, and spawns the rank thread groups.
pub fn create_context(
    a: &CsrMatrix,
    cfg: ExecConfig,
    fabric: Fabric,
) -> Result<MultContext, EngineError> {
    MultContext::new(a, cfg, fabric)
}

impl MultContext {
    pub fn new(a: &CsrMatrix, cfg: ExecConfig, fabric: Fabric) -> Result<Self, EngineError> {
        cfg.validate()?;
        if !a.is_square() {
            return Err(LayoutError::NotSquare {
                nrows: a.nrows(),
                ncols: a.ncols(),
            }
            .into());
        }
        if cfg.model != ExecModel::Serial && fabric.nranks() != cfg.nranks {
            return Err(EngineError::FabricSize {
                fabric: fabric.nranks(),
                config: cfg.nranks,
            });
        }

        let weights = cfg.weighted_decomp.then(|| a.row_nnz_counts());
        let ranges = decompose_rows(a.nrows(), cfg.nranks, weights.as_deref())?;
        let layouts = build_layouts(a, &ranges)?;
        let plan = build_scatter_plan(&layouts)?;
        let matrix = Arc::new(a.clone());
        let cache = PartitionCache::default();

        if cfg.model == ExecModel::Serial {
            return Ok(MultContext {
                matrix,
                cfg,
                ranges,
                plan,
                cache,
                ranks: Vec::new(),
                layouts_serial: layouts,
                control: None,
                threads: Vec::new(),
            });
        }

        let workers = cfg.workers();
        let scheme = match cfg.model {
            ExecModel::TaskBalanced => Scheme::GreedyDiffuse,
            _ => Scheme::EqualRows,
        };
        let mut ranks = Vec::with_capacity(cfg.nranks);
        for layout in layouts {
            let diag_part = cache.get_or_build(&layout, Phase::Diag, workers, scheme)?;
            let off_part = cache.get_or_build(&layout, Phase::Off, workers, scheme)?;
            let n = layout.own.len();
            let nghost = layout.ghost_cols.len();
            ranks.push(Arc::new(RankShared {
                plan: plan.ranks[layout.rank].clone(),
                model: cfg.model,
                fabric: fabric.clone(),
                diag_part,
                off_part,
                x_local: RwLock::new(vec![0.0; n]),
                ghost: RwLock::new(vec![0.0; nghost]),
                y: (0..n).map(|_| AtomicU64::new(0)).collect(),
                phase: PhaseBarrier::new(cfg.threads_per_rank),
                report: Mutex::new(RankReport {
                    threads: vec![ThreadTiming::default(); cfg.threads_per_rank],
                    ..Default::default()
                }),
                layout,
            }));
        }

        let total_threads = cfg.nranks * cfg.threads_per_rank;
        let control = Arc::new(Control {
            start: PhaseBarrier::new(total_threads + 1),
            finish: PhaseBarrier::new(total_threads + 1),
            shutdown: AtomicBool::new(false),
            epoch: Mutex::new(Instant::now()),
        });
        let mut threads = Vec::with_capacity(total_threads);
        for rank in &ranks {
            for t in 0..cfg.threads_per_rank {
                let rank = Arc::clone(rank);
                let control = Arc::clone(&control);
                let handle = std::thread::Builder::new()
                    .name(format!("rank{}-t{}", rank.layout.rank, t))
                    .spawn(move || worker_loop(&rank, t, &control))
                    .expect("spawn rank thread");
                threads.push(handle);
            }
        }

        Ok(MultContext {
            matrix,
            cfg,
            ranges,
            plan,
            cache,
            ranks,
            layouts_serial: Vec::new(),
            control: Some(control),
            threads,
        })
    }

    pub fn config(&self) -> &ExecConfig {
        &self.cfg
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ranges(&self) -> &[RowRange] {
        &self.ranges
    }

    pub fn plan(&self) -> &ScatterPlan {
        &self.plan
    }

    pub fn layout(&self, rank: usize) -> &RankLayout {
        match self.ranks.get(rank) {
            Some(r) => &r.layout,
            None => &self.layouts_serial[rank],
        }
    }

    /// Cached partitions `(first phase, second phase)` of `rank`, or `None`
    /// for the serial model.
    pub fn partitions(&self, rank: usize) -> Option<(Arc<ThreadPartition>, Arc<ThreadPartition>)> {
        self.ranks
            .get(rank)
            .map(|r| (Arc::clone(&r.diag_part), Arc::clone(&r.off_part)))
    }

    pub fn partition_cache(&self) -> &PartitionCache {
        &self.cache
    }

    /// `y = A x`.
    pub fn mat_mult(&mut self, x: &[f64]) -> Result<Vec<f64>, EngineError> {
        self.run(x).map(|(y, _)| y)
    }

    /// `y = A x` together with per-rank phase timings.
    pub fn mult_phase_timings(
        &mut self,
        x: &[f64],
    ) -> Result<(Vec<f64>, MultiplyTimings), EngineError> {
        self.run(x)
    }

    fn run(&mut self, x: &[f64]) -> Result<(Vec<f64>, MultiplyTimings), EngineError> {
        if x.len() != self.matrix.ncols() {
            return Err(EngineError::DimensionMismatch {
                expected: self.matrix.ncols(),
                got: x.len(),
            });
        }
        let Some(control) = &self.control else {
            let sw = Stopwatch::start();
            let y = spmv_serial(&self.matrix, x)?;
            let span = sw.stop();
            let timings = MultiplyTimings {
                total: span.wall,
                ranks: vec![RankTimings {
                    diag: span.wall,
                    threads: vec![ThreadTiming {
                        computes: true,
                        diag_rows: 0..self.matrix.nrows(),
                        diag: span,
                        ..Default::default()
                    }],
                    ..Default::default()
                }],
            };
            return Ok((y, timings));
        };

        for rank in &self.ranks {
            rank.x_local
                .write()
                .unwrap()
                .copy_from_slice(&x[rank.layout.own.as_range()]);
        }
        let started = Instant::now();
        *control.epoch.lock().unwrap() = started;
        control.start.wait();
        control.finish.wait();
        let total = started.elapsed();

        let mut y = Vec::with_capacity(self.matrix.nrows());
        let mut timings = MultiplyTimings {
            total,
            ranks: Vec::with_capacity(self.ranks.len()),
        };
        for rank in &self.ranks {
            let mut report = rank.report.lock().unwrap();
            if let Some(e) = report.error.take() {
                return Err(e);
            }
            y.extend(
                rank.y
                    .iter()
                    .map(|v| f64::from_bits(v.load(Ordering::Relaxed))),
            );
            let threads = report.threads.clone();
            timings.ranks.push(RankTimings {
                post_start: report.post_start,
                post: report.post,
                wait_start: report.wait_start,
                wait: report.wait,
                diag: phase_window(
                    threads
                        .iter()
                        .filter(|t| t.computes)
                        .map(|t| (&t.diag_start, &t.diag)),
                ),
                off: phase_window(
                    threads
                        .iter()
                        .filter(|t| t.computes)
                        .map(|t| (&t.off_start, &t.off)),
                ),
                threads,
            });
        }
        Ok((y, timings))
    }
}

impl Drop for MultContext {
    fn drop(&mut self) {
        if let Some(control) = &self.control {
            control.shutdown.store(true, Ordering::SeqCst);
            control.start.wait();
            for t in self.threads.drain(..) {
                let _ = t.join();
            }
        }
    }
}

fn worker_loop(rank: &RankShared, t: usize, control: &Control) {
    if t != 0 {
        clock::lower_thread_priority(COMPUTE_NICE);
    }
    loop {
        // Communication starts the multiply, so it should get the core first.
        if t == 0 {
            control.start.wait_first();
        } else {
            control.start.wait();
        }
        if control.shutdown.load(Ordering::SeqCst) {
            return;
        }
        let epoch = *control.epoch.lock().unwrap();
        let timing = match rank.model {
            ExecModel::Vector => vector_multiply(rank, t, epoch),
            _ => task_multiply(rank, t, epoch),
        };
        rank.report.lock().unwrap().threads[t] = timing;
        control.finish.arrive();
    }
}

fn store_row(rank: &RankShared) -> impl Fn(usize, f64) + '_ {
    |r, v| rank.y[r].store(v.to_bits(), Ordering::Relaxed)
}

fn load_row(rank: &RankShared) -> impl Fn(usize) -> f64 + '_ {
    |r| f64::from_bits(rank.y[r].load(Ordering::Relaxed))
}

fn global(rank: &RankShared, rows: Range<usize>) -> Range<usize> {
    let b = rank.layout.own.begin;
    rows.start + b..rows.end + b
}

fn compute_diag(rank: &RankShared, rows: Range<usize>, epoch: Instant) -> (Duration, Span) {
    let x = rank.x_local.read().unwrap();
    let at = epoch.elapsed();
    let sw = Stopwatch::start();
    rank.layout.diag_phase(rows, &x, store_row(rank));
    (at, sw.stop())
}

fn compute_off(rank: &RankShared, rows: Range<usize>, epoch: Instant) -> (Duration, Span) {
    let x = rank.x_local.read().unwrap();
    let ghost = rank.ghost.read().unwrap();
    let at = epoch.elapsed();
    let sw = Stopwatch::start();
    rank.layout
        .off_phase(rows, &x, &ghost, load_row(rank), store_row(rank));
    (at, sw.stop())
}

fn post_exchange(rank: &RankShared) -> Result<Vec<MessageHandle>, FabricError> {
    let me = rank.layout.rank;
    let begin = rank.layout.own.begin;
    let x = rank.x_local.read().unwrap();
    let mut handles = Vec::with_capacity(rank.plan.sends.len() + rank.plan.recvs.len());
    for e in &rank.plan.recvs {
        handles.push(
            rank.fabric
                .post_recv(me, e.peer, e.indices.len(), SCATTER_TAG)?,
        );
    }
    for e in &rank.plan.sends {
        let payload = e.indices.iter().map(|&g| x[g - begin]).collect();
        handles.push(rank.fabric.post_send(me, e.peer, payload, SCATTER_TAG)?);
    }
    Ok(handles)
}

fn complete_exchange(rank: &RankShared, handles: Vec<MessageHandle>) -> Result<(), FabricError> {
    let payloads = rank.fabric.wait_all(handles)?;
    let mut ghost = rank.ghost.write().unwrap();
    // Receives were posted first and in plan order.
    for (e, payload) in rank.plan.recvs.iter().zip(payloads) {
        let payload = payload.expect("receive handle yields a payload");
        ghost[e.ghost_offset..e.ghost_offset + payload.len()].copy_from_slice(&payload);
    }
    Ok(())
}

fn record_error(rank: &RankShared, e: FabricError) {
    let mut report = rank.report.lock().unwrap();
    report.error.get_or_insert(EngineError::Exchange {
        rank: rank.layout.rank,
        source: e,
    });
}

/// Posts the exchange; on failure the error is recorded and nothing is posted.
fn master_post(rank: &RankShared, epoch: Instant) -> Vec<MessageHandle> {
    let start = Instant::now();
    let handles = post_exchange(rank).unwrap_or_else(|e| {
        record_error(rank, e);
        Vec::new()
    });
    let mut report = rank.report.lock().unwrap();
    report.post_start = start - epoch;
    report.post = start.elapsed();
    handles
}

fn master_wait(rank: &RankShared, handles: Vec<MessageHandle>, epoch: Instant) {
    let start = Instant::now();
    if let Err(e) = complete_exchange(rank, handles) {
        record_error(rank, e);
    }
    let mut report = rank.report.lock().unwrap();
    report.wait_start = start - epoch;
    report.wait = start.elapsed();
}

fn vector_multiply(rank: &RankShared, t: usize, epoch: Instant) -> ThreadTiming {
    let handles = (t == 0).then(|| master_post(rank, epoch));
    let diag_rows = rank.diag_part.rows(t);
    let (diag_start, diag) = compute_diag(rank, diag_rows.clone(), epoch);
    rank.phase.wait();
    if let Some(handles) = handles {
        master_wait(rank, handles, epoch);
    }
    rank.phase.wait();
    let off_rows = rank.off_part.rows(t);
    let (off_start, off) = compute_off(rank, off_rows.clone(), epoch);
    ThreadTiming {
        computes: true,
        diag_rows: global(rank, diag_rows),
        off_rows: global(rank, off_rows),
        diag_start,
        diag,
        off_start,
        off,
    }
}

fn task_multiply(rank: &RankShared, t: usize, epoch: Instant) -> ThreadTiming {
    if t == 0 {
        let handles = master_post(rank, epoch);
        master_wait(rank, handles, epoch);
        rank.phase.wait();
        let at = rank.layout.own.begin;
        return ThreadTiming {
            computes: false,
            diag_rows: at..at,
            off_rows: at..at,
            ..Default::default()
        };
    }
    let w = t - 1;
    let diag_rows = rank.diag_part.rows(w);
    let (diag_start, diag) = compute_diag(rank, diag_rows.clone(), epoch);
    rank.phase.wait();
    let off_rows = rank.off_part.rows(w);
    let (off_start, off) = compute_off(rank, off_rows.clone(), epoch);
    ThreadTiming {
        computes: true,
        diag_rows: global(rank, diag_rows),
        off_rows: global(rank, off_rows),
        diag_start,
        diag,
        off_start,
        off,
    }
}
