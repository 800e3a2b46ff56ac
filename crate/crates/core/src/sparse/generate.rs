//! Synthetic test and benchmark matrices.

use super::{CsrMatrix, SparseError};

/// 7-point Laplacian on an `nx x ny x layers` grid.
///
/// Node `(x, y, z)` has index `x + nx * (y + ny * z)`. The diagonal is 7 on
/// every row, boundary rows included, so the matrix is strictly diagonally
/// dominant and therefore SPD. Adding layers grows the matrix affinely.
pub fn gen_extruded_laplacian(
    nx: usize,
    ny: usize,
    layers: usize,
) -> Result<CsrMatrix, SparseError> {
    if nx == 0 || ny == 0 || layers == 0 {
        return Err(SparseError::ZeroDimension { nx, ny, layers });
    }
    let n = nx * ny * layers;
    let plane = nx * ny;
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(7 * n);
    let mut values = Vec::with_capacity(7 * n);
    row_offsets.push(0);
    for z in 0..layers {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                // Pushed in ascending column order.
                let mut off = |c: usize| {
                    col_indices.push(c);
                    values.push(-1.0);
                };
                if z > 0 {
                    off(i - plane);
                }
                if y > 0 {
                    off(i - nx);
                }
                if x > 0 {
                    off(i - 1);
                }
                col_indices.push(i);
                values.push(7.0);
                let mut off = |c: usize| {
                    col_indices.push(c);
                    values.push(-1.0);
                };
                if x + 1 < nx {
                    off(i + 1);
                }
                if y + 1 < ny {
                    off(i + nx);
                }
                if z + 1 < layers {
                    off(i + plane);
                }
                row_offsets.push(col_indices.len());
            }
        }
    }
    Ok(CsrMatrix::from_parts_unchecked(
        n,
        n,
        row_offsets,
        col_indices,
        values,
    ))
}

/// Symmetric arrowhead: dense last row and last column over a diagonal.
///
/// Rows `0..n-1` hold two entries; the last row holds `n`. Diagonally
/// dominant, hence SPD.
pub fn gen_arrowhead(n: usize) -> CsrMatrix {
    if n == 0 {
        return CsrMatrix::zeros(0, 0);
    }
    let last = n - 1;
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(3 * n);
    let mut values = Vec::with_capacity(3 * n);
    row_offsets.push(0);
    for i in 0..last {
        col_indices.extend([i, last]);
        values.extend([2.0, -1.0]);
        row_offsets.push(col_indices.len());
    }
    col_indices.extend(0..n);
    values.extend(std::iter::repeat(-1.0).take(last));
    values.push(n as f64 + 1.0);
    row_offsets.push(col_indices.len());
    CsrMatrix::from_parts_unchecked(n, n, row_offsets, col_indices, values)
}

/// `[-1, 4, -1]` tridiagonal matrix.
pub fn gen_tridiagonal(n: usize) -> CsrMatrix {
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        if i > 0 {
            t.push((i, i - 1, -1.0));
        }
        t.push((i, i, 4.0));
        if i + 1 < n {
            t.push((i, i + 1, -1.0));
        }
    }
    CsrMatrix::from_triplets(&t, n, n).expect("indices in range")
}
