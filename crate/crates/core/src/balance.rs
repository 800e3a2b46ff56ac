//! Contiguous thread partitions of a block's rows.
//!
//! Three schemes are provided: an equal row split, a greedy nonzero split,
//! and a local diffusion pass that moves single rows across boundaries to
//! shave the heavier side of each neighbouring pair.

use std::ops::Range;

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum BalanceError {
    #[error("worker count must be at least 1")]
    NoWorkers,

    #[error("invalid partition boundaries: {0}")]
    InvalidBoundaries(String),
}

/// Row boundaries `b[0] = 0 <= b[1] <= ... <= b[W] = nrows`; worker `t`
/// owns rows `b[t]..b[t+1]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ThreadPartition {
    boundaries: Vec<usize>,
}

impl ThreadPartition {
    pub fn from_boundaries(boundaries: Vec<usize>) -> Result<Self, BalanceError> {
        if boundaries.len() < 2 {
            return Err(BalanceError::InvalidBoundaries(
                "need at least two boundaries".into(),
            ));
        }
        if boundaries[0] != 0 {
            return Err(BalanceError::InvalidBoundaries(format!(
                "first boundary is {}",
                boundaries[0]
            )));
        }
        if boundaries.windows(2).any(|w| w[0] > w[1]) {
            return Err(BalanceError::InvalidBoundaries(
                "boundaries decrease".into(),
            ));
        }
        Ok(ThreadPartition { boundaries })
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn workers(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn nrows(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    pub fn rows(&self, worker: usize) -> Range<usize> {
        self.boundaries[worker]..self.boundaries[worker + 1]
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.boundaries.windows(2).map(|w| w[0]..w[1])
    }

    /// Per-worker sums of `weights`.
    pub fn loads(&self, weights: &[usize]) -> Vec<usize> {
        self.ranges().map(|r| weights[r].iter().sum()).collect()
    }
}

/// Load summary of a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceStats {
    pub loads: Vec<usize>,
    pub max_load: usize,
    pub mean_load: f64,
    /// `max_load / mean_load`, or 1.0 for an empty block.
    pub imbalance: f64,
}

/// Splits `nrows` into `workers` runs; the first `nrows % workers` runs get
/// one extra row.
pub fn equal_rows_partition(nrows: usize, workers: usize) -> Result<ThreadPartition, BalanceError> {
    if workers == 0 {
        return Err(BalanceError::NoWorkers);
    }
    let base = nrows / workers;
    let extra = nrows % workers;
    let mut boundaries = Vec::with_capacity(workers + 1);
    boundaries.push(0);
    let mut acc = 0;
    for t in 0..workers {
        acc += base + usize::from(t < extra);
        boundaries.push(acc);
    }
    Ok(ThreadPartition { boundaries })
}

/// Greedy nonzero split.
///
/// Rows are walked in order; a worker's block closes right after the row
/// where its running load first reaches `remaining / remaining_workers`, and
/// the target is recomputed after every cut. The last worker takes whatever
/// is left. When no weight remains, the remaining rows are split evenly.
pub fn greedy_partition(
    row_nnz: &[usize],
    workers: usize,
) -> Result<ThreadPartition, BalanceError> {
    if workers == 0 {
        return Err(BalanceError::NoWorkers);
    }
    let nrows = row_nnz.len();
    let mut remaining: u128 = row_nnz.iter().map(|&w| w as u128).sum();
    let mut boundaries = Vec::with_capacity(workers + 1);
    boundaries.push(0);
    let mut row = 0;
    for t in 0..workers - 1 {
        let left = (workers - t) as u128;
        if remaining == 0 {
            let tail = equal_rows_partition(nrows - row, workers - t)?;
            boundaries.extend(
                tail.boundaries[1..tail.boundaries.len() - 1]
                    .iter()
                    .map(|b| b + row),
            );
            break;
        }
        let mut load: u128 = 0;
        // load >= remaining / left, compared without division.
        while row < nrows && load * left < remaining {
            load += row_nnz[row] as u128;
            row += 1;
        }
        remaining -= load;
        boundaries.push(row);
    }
    boundaries.push(nrows);
    debug_assert_eq!(boundaries.len(), workers + 1);
    Ok(ThreadPartition { boundaries })
}

/// Refines `partition` by one-row boundary moves.
///
/// Each sweep visits the interior boundaries left to right and makes at most
/// one move per boundary: the move is taken only if it strictly lowers the
/// larger of the two adjacent loads. Stops after a sweep with no move, or
/// after `max_sweeps` sweeps.
pub fn diffuse(
    partition: &ThreadPartition,
    row_nnz: &[usize],
    max_sweeps: usize,
) -> ThreadPartition {
    diffuse_traced(partition, row_nnz, max_sweeps, |_| {})
}

/// [`diffuse`] that reports the global maximum load after every accepted move.
pub fn diffuse_traced(
    partition: &ThreadPartition,
    row_nnz: &[usize],
    max_sweeps: usize,
    mut on_move: impl FnMut(usize),
) -> ThreadPartition {
    debug_assert_eq!(partition.nrows(), row_nnz.len());
    let mut b = partition.boundaries.clone();
    let mut loads = partition.loads(row_nnz);
    let workers = loads.len();
    for _ in 0..max_sweeps {
        let mut moved = false;
        for k in 1..workers {
            let (left, right) = (loads[k - 1], loads[k]);
            let current = left.max(right);
            // Hand the last row of the left block to the right block.
            if b[k] > b[k - 1] {
                let w = row_nnz[b[k] - 1];
                if (left - w).max(right + w) < current {
                    b[k] -= 1;
                    loads[k - 1] -= w;
                    loads[k] += w;
                    moved = true;
                    on_move(*loads.iter().max().unwrap());
                    continue;
                }
            }
            // Hand the first row of the right block to the left block.
            if b[k + 1] > b[k] {
                let w = row_nnz[b[k]];
                if (left + w).max(right - w) < current {
                    b[k] += 1;
                    loads[k - 1] += w;
                    loads[k] -= w;
                    moved = true;
                    on_move(*loads.iter().max().unwrap());
                }
            }
        }
        if !moved {
            break;
        }
    }
    ThreadPartition { boundaries: b }
}

/// Greedy split followed by diffusion with `max_sweeps = nrows`.
pub fn balanced_partition(
    row_nnz: &[usize],
    workers: usize,
) -> Result<ThreadPartition, BalanceError> {
    let greedy = greedy_partition(row_nnz, workers)?;
    Ok(diffuse(&greedy, row_nnz, row_nnz.len()))
}

pub fn balance_stats(partition: &ThreadPartition, row_nnz: &[usize]) -> BalanceStats {
    let loads = partition.loads(row_nnz);
    let total: usize = loads.iter().sum();
    let max_load = loads.iter().copied().max().unwrap_or(0);
    let mean_load = total as f64 / loads.len() as f64;
    let imbalance = if total == 0 {
        1.0
    } else {
        max_load as f64 / mean_load
    };
    BalanceStats {
        loads,
        max_load,
        mean_load,
        imbalance,
    }
}


#[cfg(test)]
mod tests {
    use super::oracle::optimal_max_load;
    use super::*;
    use proptest::prelude::*;

    fn bounds(p: &ThreadPartition) -> Vec<usize> {
        p.boundaries().to_vec()
    }

    #[test]
    fn oracle_fixtures() {
        assert_eq!(optimal_max_load(&[3, 1, 1, 3], 2), 4);
        assert_eq!(optimal_max_load(&[5, 1, 1, 1], 2), 5);
        assert_eq!(optimal_max_load(&[2, 2, 5, 1, 1, 1], 2), 8);
        assert_eq!(optimal_max_load(&[9, 1, 1, 1], 2), 9);
    }

    #[test]
    fn equal_rows() {
        assert_eq!(
            bounds(&equal_rows_partition(10, 4).unwrap()),
            vec![0, 3, 6, 8, 10]
        );
        assert_eq!(
            bounds(&equal_rows_partition(3, 5).unwrap()),
            vec![0, 1, 2, 3, 3, 3]
        );
        assert_eq!(bounds(&equal_rows_partition(0, 2).unwrap()), vec![0, 0, 0]);
        assert_eq!(equal_rows_partition(4, 0), Err(BalanceError::NoWorkers));
    }

    #[test]
    fn greedy_fixtures() {
        let p = greedy_partition(&[3, 1, 1, 3], 2).unwrap();
        assert_eq!(bounds(&p), vec![0, 2, 4]);
        assert_eq!(p.loads(&[3, 1, 1, 3]), vec![4, 4]);

        let p = greedy_partition(&[5, 1, 1, 1], 2).unwrap();
        assert_eq!(bounds(&p), vec![0, 1, 4]);
        assert_eq!(p.loads(&[5, 1, 1, 1]), vec![5, 3]);

        let p = greedy_partition(&[2, 2, 5, 1, 1, 1], 2).unwrap();
        assert_eq!(bounds(&p), vec![0, 3, 6]);
    }

    #[test]
    fn greedy_uniform_equals_equal_rows() {
        for n in 0..40 {
            for w in 1..9 {
                for weight in [0, 1, 7] {
                    assert_eq!(
                        greedy_partition(&vec![weight; n], w).unwrap(),
                        equal_rows_partition(n, w).unwrap(),
                        "n={n} w={w} weight={weight}"
                    );
                }
            }
        }
    }

    #[test]
    fn diffuse_fixtures() {
        let w = [2, 2, 5, 1, 1, 1];
        let g = greedy_partition(&w, 2).unwrap();
        assert_eq!(g.loads(&w), vec![9, 3]);
        let d = diffuse(&g, &w, w.len());
        assert_eq!(bounds(&d), vec![0, 2, 6]);
        assert_eq!(d.loads(&w), vec![4, 8]);

        let w = [5, 1, 1, 1];
        let g = greedy_partition(&w, 2).unwrap();
        assert_eq!(diffuse(&g, &w, w.len()), g);

        let w = [3, 1, 1, 3];
        let g = greedy_partition(&w, 2).unwrap();
        assert_eq!(diffuse(&g, &w, 10), g);
    }

    #[test]
    fn diffuse_respects_sweep_cap() {
        let w = [1, 1, 1, 1, 1, 1, 1, 1];
        let start = ThreadPartition::from_boundaries(vec![0, 8, 8]).unwrap();
        let one = diffuse(&start, &w, 1);
        assert_eq!(bounds(&one), vec![0, 7, 8]);
        let full = diffuse(&start, &w, 8);
        assert_eq!(bounds(&full), vec![0, 4, 8]);
        assert_eq!(diffuse(&start, &w, 0), start);
    }

    #[test]
    fn stats_fixtures() {
        let p = ThreadPartition::from_boundaries(vec![0, 2, 4]).unwrap();
        let s = balance_stats(&p, &[3, 1, 1, 3]);
        assert_eq!(s.loads, vec![4, 4]);
        assert_eq!(s.imbalance, 1.0);

        let p = ThreadPartition::from_boundaries(vec![0, 1, 4]).unwrap();
        assert_eq!(balance_stats(&p, &[5, 1, 1, 1]).imbalance, 1.25);

        let p = ThreadPartition::from_boundaries(vec![0, 3, 6]).unwrap();
        assert_eq!(balance_stats(&p, &[2, 2, 5, 1, 1, 1]).imbalance, 1.5);

        let p = equal_rows_partition(3, 2).unwrap();
        let s = balance_stats(&p, &[0, 0, 0]);
        assert_eq!(s.imbalance, 1.0);
        assert_eq!(s.max_load, 0);
    }

    #[test]
    fn invalid_boundaries() {
        assert!(ThreadPartition::from_boundaries(vec![0]).is_err());
        assert!(ThreadPartition::from_boundaries(vec![1, 2]).is_err());
        assert!(ThreadPartition::from_boundaries(vec![0, 3, 2]).is_err());
    }

    fn valid(p: &ThreadPartition, nrows: usize, workers: usize) -> bool {
        let b = p.boundaries();
        b.len() == workers + 1
            && b[0] == 0
            && b[workers] == nrows
            && b.windows(2).all(|w| w[0] <= w[1])
    }

    proptest! {
        #[test]
        fn partitions_are_valid(weights in prop::collection::vec(0usize..50, 0..60), workers in 1usize..9) {
            let n = weights.len();
            let e = equal_rows_partition(n, workers).unwrap();
            let g = greedy_partition(&weights, workers).unwrap();
            let d = diffuse(&g, &weights, n);
            prop_assert!(valid(&e, n, workers));
            prop_assert!(valid(&g, n, workers));
            prop_assert!(valid(&d, n, workers));
            prop_assert_eq!(balance_stats(&d, &weights).loads.iter().sum::<usize>(), weights.iter().sum::<usize>());
        }

        #[test]
        fn greedy_diffuse_brackets_optimum(weights in prop::collection::vec(0usize..20, 0..12), workers in 1usize..5) {
            let opt = optimal_max_load(&weights, workers);
            let g = greedy_partition(&weights, workers).unwrap();
            let start = balance_stats(&g, &weights).max_load;
            let mut prev = start;
            let d = diffuse_traced(&g, &weights, weights.len(), |m| {
                assert!(m <= prev);
                prev = m;
            });
            let max = balance_stats(&d, &weights).max_load;
            let heaviest = weights.iter().copied().max().unwrap_or(0);
            prop_assert!(max >= opt);
            prop_assert!(max <= opt + heaviest);
            prop_assert!(max <= start);
        }

        #[test]
        fn partitioning_is_pure(weights in prop::collection::vec(0usize..30, 0..40), workers in 1usize..6) {
            prop_assert_eq!(balanced_partition(&weights, workers).unwrap(), balanced_partition(&weights, workers).unwrap());
        }
    }
}
