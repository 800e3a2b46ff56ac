//! Compressed sparse row storage and the serial reference kernel.
//!
//! Every block the engine touches (whole matrix, per-rank diagonal block,
//! per-rank off-diagonal block) is a [`CsrMatrix`]. Within a row, column
//! indices are strictly increasing, and [`spmv_serial`] folds the products
//! left to right in that order. Every parallel execution path reproduces
//! that fold exactly, which is what makes bitwise comparisons meaningful.

mod generate;
mod market;

pub use generate::{gen_arrowhead, gen_extruded_laplacian, gen_tridiagonal};
pub use market::{read_matrix_market, read_matrix_market_file, write_matrix_market};

use std::ops::Range;

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SparseError {
    #[error("entry {index} at ({row}, {col}) is outside a {nrows}x{ncols} matrix")]
    EntryOutOfBounds {
        index: usize,
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },

    #[error("row_offsets has length {len}, expected {expected}")]
    RowOffsetsLength { len: usize, expected: usize },

    #[error("row_offsets[0] is {0}, expected 0")]
    RowOffsetsStart(usize),

    #[error("row_offsets decreases at row {row}")]
    RowOffsetsDecreasing { row: usize },

    #[error("row_offsets ends at {end} but there are {nnz} stored entries")]
    RowOffsetsEnd { end: usize, nnz: usize },

    #[error("{col_indices} column indices but {values} values")]
    LengthMismatch { col_indices: usize, values: usize },

    #[error("column {col} in row {row} is out of range for {ncols} columns")]
    ColumnOutOfRange {
        row: usize,
        col: usize,
        ncols: usize,
    },

    #[error("columns in row {row} are not strictly increasing")]
    UnsortedRow { row: usize },

    #[error("vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid dimensions must be positive, got {nx}x{ny}x{layers}")]
    ZeroDimension { nx: usize, ny: usize, layers: usize },

    #[error("matrix market: {0}")]
    MatrixMarket(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SparseError {
    fn from(e: std::io::Error) -> Self {
        SparseError::Io(e.to_string())
    }
}

/// Compressed sparse row matrix with `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, checking every structural invariant.
    pub fn new(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, SparseError> {
        let m = CsrMatrix {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds without validation. Callers must uphold the CSR invariants.
    pub(crate) fn from_parts_unchecked(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        let m = CsrMatrix {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        };
        debug_assert!(m.validate().is_ok());
        m
    }

    /// An `nrows x ncols` matrix with no stored entries.
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            row_offsets: vec![0; nrows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Assembles a matrix from `(row, col, value)` triplets.
    ///
    /// Duplicate coordinates are summed in input order. An entry whose sum
    /// is exactly zero is still stored.
    pub fn from_triplets(
        entries: &[(usize, usize, f64)],
        nrows: usize,
        ncols: usize,
    ) -> Result<Self, SparseError> {
        for (index, &(row, col, _)) in entries.iter().enumerate() {
            if row >= nrows || col >= ncols {
                return Err(SparseError::EntryOutOfBounds {
                    index,
                    row,
                    col,
                    nrows,
                    ncols,
                });
            }
        }

        // Counting sort by row keeps input order within a row, so duplicates
        // are summed in the order they were given.
        let mut counts = vec![0usize; nrows + 1];
        for &(row, _, _) in entries {
            counts[row + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut by_row = vec![(0usize, 0.0f64); entries.len()];
        for &(row, col, v) in entries {
            by_row[next[row]] = (col, v);
            next[row] += 1;
        }

        let mut row_offsets = Vec::with_capacity(nrows + 1);
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        row_offsets.push(0);
        for row in 0..nrows {
            let slot = &mut by_row[counts[row]..counts[row + 1]];
            slot.sort_by_key(|&(c, _)| c);
            let mut iter = slot.iter().copied();
            if let Some((mut cur_col, mut cur_val)) = iter.next() {
                for (c, v) in iter {
                    if c == cur_col {
                        cur_val += v;
                    } else {
                        col_indices.push(cur_col);
                        values.push(cur_val);
                        cur_col = c;
                        cur_val = v;
                    }
                }
                col_indices.push(cur_col);
                values.push(cur_val);
            }
            row_offsets.push(col_indices.len());
        }

        Ok(Self::from_parts_unchecked(
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        ))
    }

    /// Checks every CSR invariant.
    pub fn validate(&self) -> Result<(), SparseError> {
        if self.row_offsets.len() != self.nrows + 1 {
            return Err(SparseError::RowOffsetsLength {
                len: self.row_offsets.len(),
                expected: self.nrows + 1,
            });
        }
        if self.row_offsets[0] != 0 {
            return Err(SparseError::RowOffsetsStart(self.row_offsets[0]));
        }
        if self.col_indices.len() != self.values.len() {
            return Err(SparseError::LengthMismatch {
                col_indices: self.col_indices.len(),
                values: self.values.len(),
            });
        }
        for row in 0..self.nrows {
            if self.row_offsets[row + 1] < self.row_offsets[row] {
                return Err(SparseError::RowOffsetsDecreasing { row });
            }
        }
        let end = self.row_offsets[self.nrows];
        if end != self.col_indices.len() {
            return Err(SparseError::RowOffsetsEnd {
                end,
                nnz: self.col_indices.len(),
            });
        }
        for row in 0..self.nrows {
            let cols = &self.col_indices[self.row_offsets[row]..self.row_offsets[row + 1]];
            if let Some(&col) = cols.iter().find(|&&c| c >= self.ncols) {
                return Err(SparseError::ColumnOutOfRange {
                    row,
                    col,
                    ncols: self.ncols,
                });
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SparseError::UnsortedRow { row });
            }
        }
        Ok(())
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row_span(&self, row: usize) -> Range<usize> {
        self.row_offsets[row]..self.row_offsets[row + 1]
    }

    /// Column indices and values of one row.
    #[inline]
    pub fn row(&self, row: usize) -> (&[usize], &[f64]) {
        let span = self.row_span(row);
        (&self.col_indices[span.clone()], &self.values[span])
    }

    #[inline]
    pub fn row_nnz(&self, row: usize) -> usize {
        self.row_offsets[row + 1] - self.row_offsets[row]
    }

    /// Stored entries per row.
    pub fn row_nnz_counts(&self) -> Vec<usize> {
        self.row_offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Stored value at `(row, col)`, if any.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let (cols, vals) = self.row(row);
        cols.binary_search(&col).ok().map(|k| vals[k])
    }

    /// Main diagonal, with zero where no entry is stored.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i).unwrap_or(0.0))
            .collect()
    }

    /// Iterates stored entries as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut col_indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (r, c, v) in self.triplets() {
            col_indices[next[c]] = r;
            values[next[c]] = v;
            next[c] += 1;
        }
        Self::from_parts_unchecked(self.ncols, self.nrows, counts, col_indices, values)
    }

    pub fn is_symmetric(&self) -> bool {
        self.is_square() && self.transpose() == *self
    }

    /// Dense row-major copy. Only meant for small matrices.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            dense[r][c] = v;
        }
        dense
    }
}

/// Folds `values[k] * x[cols[k]]` left to right onto `acc`.
///
/// This is the one accumulation primitive of the crate; all kernels are built
/// from it so that they round identically.
#[inline]
pub fn fold_row(mut acc: f64, cols: &[usize], values: &[f64], x: &[f64]) -> f64 {
    for (&c, &v) in cols.iter().zip(values) {
        acc += v * x[c];
    }
    acc
}

/// Floating-point operations of one multiply: a multiply and an add per
/// stored entry.
pub fn spmv_flops(nnz: usize) -> u64 {
    2 * nnz as u64
}

/// `y = A x` with each row summed in ascending column order.
pub fn spmv_serial(a: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>, SparseError> {
    let mut y = vec![0.0; a.nrows()];
    spmv_serial_into(a, x, &mut y)?;
    Ok(y)
}

pub fn spmv_serial_into(a: &CsrMatrix, x: &[f64], y: &mut [f64]) -> Result<(), SparseError> {
    if x.len() != a.ncols() {
        return Err(SparseError::DimensionMismatch {
            expected: a.ncols(),
            got: x.len(),
        });
    }
    if y.len() != a.nrows() {
        return Err(SparseError::DimensionMismatch {
            expected: a.nrows(),
            got: y.len(),
        });
    }
    for (row, out) in y.iter_mut().enumerate() {
        let (cols, vals) = a.row(row);
        *out = fold_row(0.0, cols, vals, x);
    }
    Ok(())
}
