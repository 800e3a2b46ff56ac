//! Matrices shared by the benchmarks.

use hybrid_spmv::{gen_arrowhead, gen_extruded_laplacian, CsrMatrix};

/// A regular stencil and a skewed arrowhead, large enough that a multiply
/// takes well over the cost of waking the rank threads.
pub fn bench_matrices() -> Vec<(&'static str, CsrMatrix)> {
    vec![
        (
            "laplacian-32x32x32",
            gen_extruded_laplacian(32, 32, 32).unwrap(),
        ),
        ("arrowhead-16384", gen_arrowhead(16_384)),
    ]
}

pub fn bench_vector(n: usize) -> Vec<f64> {
    (0..n).map(|i| 1.0 + (i % 17) as f64 * 0.125).collect()
}
