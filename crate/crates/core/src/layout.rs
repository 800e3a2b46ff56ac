//! Row-block decomposition into per-rank diagonal and off-diagonal blocks,
//! and the scatter plan that fills each rank's ghost buffer.
//!
//! A rank owning rows `[begin, end)` also owns vector entries `[begin, end)`.
//! Its diagonal block holds the entries whose column it owns (columns shifted
//! by `begin`); the off-diagonal block holds the rest, with columns compacted
//! through the sorted `ghost_cols` list.
//!
//! Because ghost columns are sorted and ownership is contiguous, every row's
//! off-diagonal entries split into a *low* run (columns below `begin`) and a
//! *high* run (columns at or above `end`). The two-phase kernels below use
//! that split to reproduce the ascending-column fold of
//! [`spmv_serial`](crate::sparse::spmv_serial) bit for bit:
//!
//! * rows without low entries are folded over the diagonal block in the
//!   first phase and continued over the high run in the second;
//! * rows with low entries are folded entirely in the second phase
//!   (low run, diagonal block, high run).

use std::ops::Range;

use thiserror::Error;

use crate::balance::{greedy_partition, BalanceError};
use crate::sparse::{fold_row, CsrMatrix};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum LayoutError {
    #[error("need at least one rank")]
    NoRanks,

    #[error("distributed layouts need a square matrix, got {nrows}x{ncols}")]
    NotSquare { nrows: usize, ncols: usize },

    #[error("row ranges do not tile 0..{nrows}: {detail}")]
    BadRanges { nrows: usize, detail: String },

    #[error("rank {rank} does not exist ({nranks} ranks)")]
    NoSuchRank { rank: usize, nranks: usize },

    #[error("weights have length {got}, expected {expected}")]
    WeightLength { expected: usize, got: usize },

    #[error("ghost column {col} of rank {rank} is owned by no rank")]
    UnownedGhost { rank: usize, col: usize },

    #[error("layouts are inconsistent: {0}")]
    Inconsistent(String),

    #[error(transparent)]
    Balance(#[from] BalanceError),
}

/// Half-open range of global rows `[begin, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RowRange {
    pub begin: usize,
    pub end: usize,
}

impl RowRange {
    pub fn new(begin: usize, end: usize) -> Self {
        assert!(begin <= end, "RowRange begin {begin} > end {end}");
        RowRange { begin, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.begin
    }

    pub fn is_empty(&self) -> bool {
        self.begin == self.end
    }

    pub fn contains(&self, i: usize) -> bool {
        self.begin <= i && i < self.end
    }

    pub fn as_range(&self) -> Range<usize> {
        self.begin..self.end
    }
}

/// Splits `nrows` rows among `nranks` ranks.
///
/// Without weights the first `nrows % nranks` ranks get one extra row. With
/// per-row weights the greedy nonzero split is used. Trailing ranks may end
/// up empty.
pub fn decompose_rows(
    nrows: usize,
    nranks: usize,
    weights: Option<&[usize]>,
) -> Result<Vec<RowRange>, LayoutError> {
    if nranks == 0 {
        return Err(LayoutError::NoRanks);
    }
    let partition = match weights {
        None => crate::balance::equal_rows_partition(nrows, nranks)?,
        Some(w) => {
            if w.len() != nrows {
                return Err(LayoutError::WeightLength {
                    expected: nrows,
                    got: w.len(),
                });
            }
            greedy_partition(w, nranks)?
        }
    };
    Ok(partition
        .ranges()
        .map(|r| RowRange::new(r.start, r.end))
        .collect())
}

fn check_ranges(ranges: &[RowRange], nrows: usize) -> Result<(), LayoutError> {
    let bad = |detail: String| LayoutError::BadRanges { nrows, detail };
    if ranges.is_empty() {
        return Err(LayoutError::NoRanks);
    }
    if ranges[0].begin != 0 {
        return Err(bad(format!("first range starts at {}", ranges[0].begin)));
    }
    for (k, w) in ranges.windows(2).enumerate() {
        if w[0].end != w[1].begin {
            return Err(bad(format!(
                "rank {} ends at {} but rank {} starts at {}",
                k,
                w[0].end,
                k + 1,
                w[1].begin
            )));
        }
    }
    for (k, r) in ranges.iter().enumerate() {
        if r.begin > r.end {
            return Err(bad(format!("rank {k} has begin > end")));
        }
    }
    let last = ranges.last().unwrap().end;
    if last != nrows {
        return Err(bad(format!("last range ends at {last}")));
    }
    Ok(())
}

/// Rank owning global index `i`; empty ranks never own anything.
pub fn owner_of(ranges: &[RowRange], i: usize) -> Option<usize> {
    let k = ranges.partition_point(|r| r.end <= i);
    (k < ranges.len() && ranges[k].contains(i)).then_some(k)
}

/// One rank's share of the matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RankLayout {
    pub rank: usize,
    pub own: RowRange,
    /// Owned rows against owned columns, columns shifted by `own.begin`.
    pub diag: CsrMatrix,
    /// Owned rows against ghost columns, column `j` meaning `ghost_cols[j]`.
    pub off: CsrMatrix,
    /// Global indices of the non-owned columns this rank touches, ascending.
    pub ghost_cols: Vec<usize>,
    /// Number of ghost columns below `own.begin`.
    pub low_ghosts: usize,
}

/// Extracts rank `rank`'s diagonal and off-diagonal blocks.
pub fn build_rank_layout(
    a: &CsrMatrix,
    ranges: &[RowRange],
    rank: usize,
) -> Result<RankLayout, LayoutError> {
    if !a.is_square() {
        return Err(LayoutError::NotSquare {
            nrows: a.nrows(),
            ncols: a.ncols(),
        });
    }
    check_ranges(ranges, a.nrows())?;
    let own = *ranges.get(rank).ok_or(LayoutError::NoSuchRank {
        rank,
        nranks: ranges.len(),
    })?;

    let mut ghost_cols: Vec<usize> = own
        .as_range()
        .flat_map(|r| a.row(r).0.iter().copied())
        .filter(|&c| !own.contains(c))
        .collect();
    ghost_cols.sort_unstable();
    ghost_cols.dedup();
    let low_ghosts = ghost_cols.partition_point(|&c| c < own.begin);

    let n = own.len();
    let mut d_offsets = Vec::with_capacity(n + 1);
    let mut d_cols = Vec::new();
    let mut d_vals = Vec::new();
    let mut o_offsets = Vec::with_capacity(n + 1);
    let mut o_cols = Vec::new();
    let mut o_vals = Vec::new();
    d_offsets.push(0);
    o_offsets.push(0);
    for r in own.as_range() {
        let (cols, vals) = a.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            if own.contains(c) {
                d_cols.push(c - own.begin);
                d_vals.push(v);
            } else {
                // Monotone map, so ascending order survives compaction.
                let j = ghost_cols.binary_search(&c).expect("collected above");
                o_cols.push(j);
                o_vals.push(v);
            }
        }
        d_offsets.push(d_cols.len());
        o_offsets.push(o_cols.len());
    }

    Ok(RankLayout {
        rank,
        own,
        diag: CsrMatrix::from_parts_unchecked(n, n, d_offsets, d_cols, d_vals),
        off: CsrMatrix::from_parts_unchecked(n, ghost_cols.len(), o_offsets, o_cols, o_vals),
        ghost_cols,
        low_ghosts,
    })
}

/// Layouts for every rank of `ranges`.
pub fn build_layouts(a: &CsrMatrix, ranges: &[RowRange]) -> Result<Vec<RankLayout>, LayoutError> {
    (0..ranges.len())
        .map(|r| build_rank_layout(a, ranges, r))
        .collect()
}

impl RankLayout {
    /// Whether local row `row` touches a ghost column below `own.begin`.
    #[inline]
    pub fn has_low_ghosts(&self, row: usize) -> bool {
        let (cols, _) = self.off.row(row);
        cols.first().is_some_and(|&c| c < self.low_ghosts)
    }

    /// Work in each phase per local row, in stored entries.
    ///
    /// First phase: the diagonal block of rows without low ghosts. Second
    /// phase: the off-diagonal entries, plus the diagonal block of rows that
    /// are deferred because they have low ghosts.
    pub fn phase_weights(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.own.len();
        let mut first = Vec::with_capacity(n);
        let mut second = Vec::with_capacity(n);
        for r in 0..n {
            let d = self.diag.row_nnz(r);
            let o = self.off.row_nnz(r);
            if self.has_low_ghosts(r) {
                first.push(0);
                second.push(d + o);
            } else {
                first.push(d);
                second.push(o);
            }
        }
        (first, second)
    }

    /// First phase over local `rows`: needs only owned vector entries.
    ///
    /// Writes the diagonal-block fold for rows without low ghosts; deferred
    /// rows are left untouched.
    #[inline]
    pub fn diag_phase(&self, rows: Range<usize>, x_local: &[f64], mut out: impl FnMut(usize, f64)) {
        let (dcols, dvals) = (self.diag.col_indices(), self.diag.values());
        let doffs = &self.diag.row_offsets()[rows.start..=rows.end];
        if self.low_ghosts == 0 {
            for (r, w) in rows.zip(doffs.windows(2)) {
                out(
                    r,
                    fold_row(0.0, &dcols[w[0]..w[1]], &dvals[w[0]..w[1]], x_local),
                );
            }
            return;
        }
        let ocols = self.off.col_indices();
        let ooffs = &self.off.row_offsets()[rows.start..=rows.end];
        for ((r, w), o) in rows.zip(doffs.windows(2)).zip(ooffs.windows(2)) {
            if o[0] < o[1] && ocols[o[0]] < self.low_ghosts {
                continue;
            }
            out(
                r,
                fold_row(0.0, &dcols[w[0]..w[1]], &dvals[w[0]..w[1]], x_local),
            );
        }
    }

    /// Second phase over local `rows`, once the ghost buffer is filled.
    ///
    /// `partial(r)` must return what [`diag_phase`](Self::diag_phase) wrote
    /// for row `r`. Rows without off-diagonal entries are skipped.
    #[inline]
    pub fn off_phase(
        &self,
        rows: Range<usize>,
        x_local: &[f64],
        ghost: &[f64],
        partial: impl Fn(usize) -> f64,
        mut out: impl FnMut(usize, f64),
    ) {
        for r in rows {
            let (ocols, ovals) = self.off.row(r);
            if ocols.is_empty() {
                continue;
            }
            let acc = if ocols[0] < self.low_ghosts {
                let split = ocols.partition_point(|&c| c < self.low_ghosts);
                let (dcols, dvals) = self.diag.row(r);
                let acc = fold_row(0.0, &ocols[..split], &ovals[..split], ghost);
                let acc = fold_row(acc, dcols, dvals, x_local);
                fold_row(acc, &ocols[split..], &ovals[split..], ghost)
            } else {
                fold_row(partial(r), ocols, ovals, ghost)
            };
            out(r, acc);
        }
    }

    /// Both phases over every owned row.
    pub fn two_phase_multiply(&self, x_local: &[f64], ghost: &[f64]) -> Vec<f64> {
        assert_eq!(x_local.len(), self.own.len());
        assert_eq!(ghost.len(), self.ghost_cols.len());
        let n = self.own.len();
        let mut y = vec![0.0; n];
        self.diag_phase(0..n, x_local, |r, v| y[r] = v);
        let partial = y.clone();
        self.off_phase(0..n, x_local, ghost, |r| partial[r], |r, v| y[r] = v);
        y
    }

    /// Fills a ghost buffer straight from a global vector.
    pub fn gather_ghosts(&self, x: &[f64]) -> Vec<f64> {
        self.ghost_cols.iter().map(|&c| x[c]).collect()
    }
}

/// One directed transfer of vector entries between two ranks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange {
    pub peer: usize,
    /// Global indices, ascending.
    pub indices: Vec<usize>,
    /// For receives: where the first entry lands in the ghost buffer. The
    /// entries from one peer occupy a contiguous run.
    pub ghost_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RankPlan {
    /// Sorted by peer.
    pub sends: Vec<Exchange>,
    /// Sorted by peer.
    pub recvs: Vec<Exchange>,
}

/// Send and receive lists for every rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScatterPlan {
    pub ranks: Vec<RankPlan>,
}

impl ScatterPlan {
    pub fn nranks(&self) -> usize {
        self.ranks.len()
    }

    /// Indices rank `from` ships to rank `to` (empty if none).
    pub fn send_list(&self, from: usize, to: usize) -> &[usize] {
        self.ranks[from]
            .sends
            .iter()
            .find(|e| e.peer == to)
            .map_or(&[], |e| &e.indices)
    }

    /// Indices rank `to` expects from rank `from` (empty if none).
    pub fn recv_list(&self, to: usize, from: usize) -> &[usize] {
        self.ranks[to]
            .recvs
            .iter()
            .find(|e| e.peer == from)
            .map_or(&[], |e| &e.indices)
    }

    pub fn is_empty(&self) -> bool {
        self.ranks
            .iter()
            .all(|p| p.sends.is_empty() && p.recvs.is_empty())
    }
}

/// Derives the scatter plan from the ghost lists of a full set of layouts.
pub fn build_scatter_plan(layouts: &[RankLayout]) -> Result<ScatterPlan, LayoutError> {
    let ranges: Vec<RowRange> = layouts.iter().map(|l| l.own).collect();
    for (k, l) in layouts.iter().enumerate() {
        if l.rank != k {
            return Err(LayoutError::Inconsistent(format!(
                "layout at position {k} claims rank {}",
                l.rank
            )));
        }
    }
    let nrows = ranges.last().map_or(0, |r| r.end);
    check_ranges(&ranges, nrows)?;

    let mut plans = vec![RankPlan::default(); layouts.len()];
    for l in layouts {
        let mut offset = 0;
        while offset < l.ghost_cols.len() {
            let col = l.ghost_cols[offset];
            let owner =
                owner_of(&ranges, col).ok_or(LayoutError::UnownedGhost { rank: l.rank, col })?;
            let end = offset + l.ghost_cols[offset..].partition_point(|&c| c < ranges[owner].end);
            let indices = l.ghost_cols[offset..end].to_vec();
            plans[l.rank].recvs.push(Exchange {
                peer: owner,
                indices: indices.clone(),
                ghost_offset: offset,
            });
            plans[owner].sends.push(Exchange {
                peer: l.rank,
                indices,
                ghost_offset: 0,
            });
            offset = end;
        }
    }
    // Receivers were visited in rank order, so sends are already sorted by peer.
    Ok(ScatterPlan { ranks: plans })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{gen_arrowhead, gen_tridiagonal, spmv_serial};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn rr(b: usize, e: usize) -> RowRange {
        RowRange::new(b, e)
    }

    /// Smallest max load over the cuts of a two-way split, by brute force.
    fn best_two_way(w: &[usize]) -> usize {
        (0..=w.len())
            .map(|k| w[..k].iter().sum::<usize>().max(w[k..].iter().sum()))
            .min()
            .unwrap()
    }

    #[test]
    fn decompose_fixtures() {
        assert_eq!(
            decompose_rows(10, 3, None).unwrap(),
            vec![rr(0, 4), rr(4, 7), rr(7, 10)]
        );
        assert_eq!(decompose_rows(4, 1, None).unwrap(), vec![rr(0, 4)]);
        let w = [9, 1, 1, 1];
        let ranges = decompose_rows(4, 2, Some(&w)).unwrap();
        assert_eq!(ranges, vec![rr(0, 1), rr(1, 4)]);
        assert_eq!(best_two_way(&w), 9);
        assert_eq!(
            decompose_rows(2, 4, None).unwrap(),
            vec![rr(0, 1), rr(1, 2), rr(2, 2), rr(2, 2)]
        );
        assert_eq!(decompose_rows(3, 0, None), Err(LayoutError::NoRanks));
        assert!(decompose_rows(3, 2, Some(&[1, 2])).is_err());
    }

    #[test]
    fn tridiagonal_two_ranks() {
        let a = gen_tridiagonal(4);
        let ranges = [rr(0, 2), rr(2, 4)];
        let l0 = build_rank_layout(&a, &ranges, 0).unwrap();
        assert_eq!(l0.ghost_cols, vec![2]);
        assert_eq!(l0.off.nnz(), 1);
        assert_eq!(l0.off.get(1, 0), Some(-1.0));
        let l1 = build_rank_layout(&a, &ranges, 1).unwrap();
        assert_eq!(l1.ghost_cols, vec![1]);
        assert_eq!(l1.low_ghosts, 1);

        let plan = build_scatter_plan(&[l0, l1]).unwrap();
        assert_eq!(plan.recv_list(0, 1), &[2]);
        assert_eq!(plan.recv_list(1, 0), &[1]);
        assert_eq!(plan.send_list(1, 0), &[2]);
        assert_eq!(plan.send_list(0, 1), &[1]);
    }

    #[test]
    fn block_diagonal_has_no_coupling() {
        let t: Vec<_> = (0..3)
            .flat_map(|b| {
                let o = 2 * b;
                [
                    (o, o, 2.0),
                    (o, o + 1, 1.0),
                    (o + 1, o, 1.0),
                    (o + 1, o + 1, 2.0),
                ]
            })
            .collect();
        let a = CsrMatrix::from_triplets(&t, 6, 6).unwrap();
        let ranges = [rr(0, 2), rr(2, 4), rr(4, 6)];
        let layouts = build_layouts(&a, &ranges).unwrap();
        for l in &layouts {
            assert_eq!(l.off.nnz(), 0);
            assert!(l.ghost_cols.is_empty());
        }
        assert!(build_scatter_plan(&layouts).unwrap().is_empty());
    }

    #[test]
    fn single_rank_is_whole_matrix() {
        let a = gen_tridiagonal(7);
        let l = build_rank_layout(&a, &[rr(0, 7)], 0).unwrap();
        assert_eq!(l.diag, a);
        assert_eq!(l.off.nnz(), 0);
    }

    #[test]
    fn arrow_plan_eight_ranks() {
        let a = gen_arrowhead(64);
        let ranges = decompose_rows(64, 8, None).unwrap();
        let layouts = build_layouts(&a, &ranges).unwrap();
        let plan = build_scatter_plan(&layouts).unwrap();
        let owner = 7;
        for r in 0..7 {
            assert_eq!(plan.recv_list(r, owner), &[63]);
            assert_eq!(plan.ranks[r].recvs.len(), 1);
        }
        assert_eq!(plan.ranks[owner].sends.len(), 7);
        // The dense last row needs every other rank's entries.
        assert_eq!(plan.ranks[owner].recvs.len(), 7);
    }

    #[test]
    fn layout_errors() {
        let a = gen_tridiagonal(4);
        assert!(matches!(
            build_rank_layout(&a, &[rr(0, 2), rr(3, 4)], 0),
            Err(LayoutError::BadRanges { .. })
        ));
        assert!(matches!(
            build_rank_layout(&a, &[rr(0, 3)], 0),
            Err(LayoutError::BadRanges { .. })
        ));
        assert!(matches!(
            build_rank_layout(&a, &[rr(0, 4)], 1),
            Err(LayoutError::NoSuchRank { .. })
        ));
        let rect = CsrMatrix::zeros(2, 3);
        assert!(matches!(
            build_rank_layout(&rect, &[rr(0, 2)], 0),
            Err(LayoutError::NotSquare { .. })
        ));
    }

    #[test]
    fn plan_rejects_unowned_ghost() {
        let a = gen_tridiagonal(4);
        let ranges = [rr(0, 2), rr(2, 4)];
        let mut layouts = build_layouts(&a, &ranges).unwrap();
        layouts[0].ghost_cols = vec![9];
        assert_eq!(
            build_scatter_plan(&layouts),
            Err(LayoutError::UnownedGhost { rank: 0, col: 9 })
        );
    }

    #[test]
    fn owner_lookup_skips_empty_ranks() {
        let ranges = [rr(0, 2), rr(2, 2), rr(2, 5)];
        assert_eq!(owner_of(&ranges, 1), Some(0));
        assert_eq!(owner_of(&ranges, 2), Some(2));
        assert_eq!(owner_of(&ranges, 5), None);
    }

    fn random_matrix(rng: &mut impl Rng, n: usize, density: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j || rng.gen_bool(density) {
                    t.push((i, j, rng.gen_range(-1.0..1.0)));
                }
            }
        }
        CsrMatrix::from_triplets(&t, n, n).unwrap()
    }

    fn random_ranges(rng: &mut impl Rng, n: usize, nranks: usize) -> Vec<RowRange> {
        let mut cuts: Vec<usize> = (0..nranks - 1).map(|_| rng.gen_range(0..=n)).collect();
        cuts.sort_unstable();
        let mut b = vec![0];
        b.extend(cuts);
        b.push(n);
        b.windows(2).map(|w| rr(w[0], w[1])).collect()
    }

    proptest! {
        #[test]
        fn reassembly_reproduces_matrix(seed in any::<u64>(), n in 1usize..60, nranks in 1usize..7) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, n, 0.15);
            let ranges = random_ranges(&mut rng, n, nranks);
            let layouts = build_layouts(&a, &ranges).unwrap();
            let mut t = Vec::new();
            for l in &layouts {
                prop_assert!(l.ghost_cols.iter().all(|&c| !l.own.contains(c)));
                prop_assert!(l.ghost_cols.windows(2).all(|w| w[0] < w[1]));
                prop_assert_eq!(l.off.ncols(), l.ghost_cols.len());
                for (r, c, v) in l.diag.triplets() {
                    t.push((r + l.own.begin, c + l.own.begin, v));
                }
                for (r, c, v) in l.off.triplets() {
                    t.push((r + l.own.begin, l.ghost_cols[c], v));
                }
            }
            prop_assert_eq!(CsrMatrix::from_triplets(&t, n, n).unwrap(), a);
        }

        #[test]
        fn plan_is_symmetric_and_covers_ghosts(seed in any::<u64>(), n in 1usize..60, nranks in 1usize..7) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, n, 0.1);
            let ranges = random_ranges(&mut rng, n, nranks);
            let layouts = build_layouts(&a, &ranges).unwrap();
            let plan = build_scatter_plan(&layouts).unwrap();
            for r in 0..nranks {
                for q in 0..nranks {
                    prop_assert_eq!(plan.send_list(r, q), plan.recv_list(q, r));
                }
                let mut got: Vec<usize> = plan.ranks[r].recvs.iter().flat_map(|e| e.indices.clone()).collect();
                for e in &plan.ranks[r].recvs {
                    prop_assert_eq!(&layouts[r].ghost_cols[e.ghost_offset..e.ghost_offset + e.indices.len()], &e.indices[..]);
                    prop_assert!(e.indices.windows(2).all(|w| w[0] < w[1]));
                }
                got.sort_unstable();
                prop_assert_eq!(&got, &layouts[r].ghost_cols);
            }
        }

        #[test]
        fn two_phase_matches_serial_bitwise(seed in any::<u64>(), n in 1usize..80, nranks in 1usize..6) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, n, 0.2);
            let ranges = random_ranges(&mut rng, n, nranks);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let expect = spmv_serial(&a, &x).unwrap();
            let mut y = Vec::new();
            for l in build_layouts(&a, &ranges).unwrap() {
                let ghost = l.gather_ghosts(&x);
                y.extend(l.two_phase_multiply(&x[l.own.as_range()], &ghost));
            }
            let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&y), bits(&expect));
        }
    }
}
