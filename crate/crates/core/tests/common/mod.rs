#![allow(dead_code)]

use std::sync::{Mutex, MutexGuard};
use std::time::Duration;

use hybrid_spmv::CsrMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random symmetric, strictly diagonally dominant matrix with positive
/// diagonal (hence SPD). `density` is the off-diagonal fill fraction.
pub fn random_spd(n: usize, density: f64, seed: u64) -> CsrMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Vec::new();
    let mut row_abs = vec![0.0f64; n];
    for i in 0..n {
        for j in 0..i {
            if rng.gen::<f64>() < density {
                let v: f64 = rng.gen_range(-1.0..1.0);
                t.push((i, j, v));
                t.push((j, i, v));
                row_abs[i] += v.abs();
                row_abs[j] += v.abs();
            }
        }
    }
    for (i, s) in row_abs.iter().enumerate() {
        t.push((i, i, s + rng.gen_range(0.5..2.0)));
    }
    CsrMatrix::from_triplets(&t, n, n).unwrap()
}

pub fn random_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect()
}

pub fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    v[v.len() / 2]
}

static EXCLUSIVE: Mutex<()> = Mutex::new(());

/// Serializes tests that measure time or load the machine heavily.
pub fn exclusive() -> MutexGuard<'static, ()> {
    EXCLUSIVE.lock().unwrap_or_else(|e| e.into_inner())
}
