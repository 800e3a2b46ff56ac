//! Distributed sparse matrix-vector multiplication at desk scale.
//!
//! Ranks are thread groups inside one process that exchange vector entries
//! through an in-process [`fabric`] with injected latency. Each rank stores
//! its rows as a diagonal block (owned columns) and an off-diagonal block
//! (ghost columns), and multiplies in two phases so the exchange can overlap
//! the first phase. Three threaded execution models are provided:
//! vector-based (master-only communication), task-based (a dedicated
//! communication thread), and task-based with nonzero-balanced thread
//! partitions. All of them reproduce the serial kernel bit for bit.
//!
//! ```
//! use hybrid_spmv::{create_context, create_fabric, gen_extruded_laplacian, spmv_serial};
//! use hybrid_spmv::{ExecConfig, ExecModel, LatencyModel};
//!
//! let a = gen_extruded_laplacian(4, 4, 4).unwrap();
//! let x = vec![1.0; a.nrows()];
//! let cfg = ExecConfig::new(ExecModel::Task, 2, 3);
//! let mut ctx = create_context(&a, cfg, create_fabric(2, LatencyModel::zero())).unwrap();
//! assert_eq!(ctx.mat_mult(&x).unwrap(), spmv_serial(&a, &x).unwrap());
//! ```

pub mod balance;
pub mod clock;
pub mod engine;
pub mod fabric;
pub mod krylov;
pub mod layout;
pub mod sparse;
pub mod sync;

pub use balance::{
    balance_stats, balanced_partition, diffuse, equal_rows_partition, greedy_partition,
    BalanceError, BalanceStats, ThreadPartition,
};
pub use engine::{
    create_context, EngineError, ExecConfig, ExecModel, MultContext, MultiplyTimings, Phase,
    RankTimings, Scheme, ThreadTiming,
};
pub use fabric::{create_fabric, Fabric, FabricError, LatencyModel, MessageHandle, ProgressMode};
pub use krylov::{
    cg_solve, cg_solve_observed, jacobi_apply, SolveError, SolveReport, DEFAULT_MAX_ITERATIONS,
    DEFAULT_RTOL,
};
pub use layout::{
    build_layouts, build_rank_layout, build_scatter_plan, decompose_rows, LayoutError, RankLayout,
    RowRange, ScatterPlan,
};
pub use sparse::{
    gen_arrowhead, gen_extruded_laplacian, gen_tridiagonal, read_matrix_market,
    read_matrix_market_file, spmv_flops, spmv_serial, write_matrix_market, CsrMatrix, SparseError,
};
