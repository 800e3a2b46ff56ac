//! Matrix Market coordinate format (`real`/`integer`, `general`/`symmetric`).

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use super::{CsrMatrix, SparseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

fn bad(msg: impl Into<String>) -> SparseError {
    SparseError::MatrixMarket(msg.into())
}

fn parse_header(line: &str) -> Result<Symmetry, SparseError> {
    let tokens: Vec<String> = line
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" {
        return Err(bad(format!("malformed header line {line:?}")));
    }
    if tokens[1] != "matrix" {
        return Err(bad(format!("unsupported object {:?}", tokens[1])));
    }
    if tokens[2] != "coordinate" {
        return Err(bad(format!("unsupported format {:?}", tokens[2])));
    }
    match tokens[3].as_str() {
        "real" | "integer" => {}
        other => return Err(bad(format!("unsupported field {other:?}"))),
    }
    match tokens[4].as_str() {
        "general" => Ok(Symmetry::General),
        "symmetric" => Ok(Symmetry::Symmetric),
        other => Err(bad(format!("unsupported symmetry {other:?}"))),
    }
}

fn parse_usize(tok: Option<&str>, what: &str, line_no: usize) -> Result<usize, SparseError> {
    tok.ok_or_else(|| bad(format!("line {line_no}: missing {what}")))?
        .parse()
        .map_err(|_| bad(format!("line {line_no}: invalid {what}")))
}

/// Reads a coordinate Matrix Market stream into canonical CSR.
///
/// Symmetric files are expanded to full storage and duplicate coordinates
/// are summed.
pub fn read_matrix_market<R: Read>(source: R) -> Result<CsrMatrix, SparseError> {
    let mut lines = BufReader::new(source).lines().enumerate();

    let symmetry = match lines.next() {
        Some((_, line)) => parse_header(&line?)?,
        None => return Err(bad("empty input")),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    let mut seen = 0usize;
    for (idx, line) in lines {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        match size {
            None => {
                let m = parse_usize(toks.next(), "row count", line_no)?;
                let n = parse_usize(toks.next(), "column count", line_no)?;
                let nnz = parse_usize(toks.next(), "entry count", line_no)?;
                if toks.next().is_some() {
                    return Err(bad(format!("line {line_no}: trailing tokens on size line")));
                }
                if symmetry == Symmetry::Symmetric && m != n {
                    return Err(bad(format!("symmetric matrix must be square, got {m}x{n}")));
                }
                triplets.reserve(nnz);
                size = Some((m, n, nnz));
            }
            Some((m, n, nnz)) => {
                if seen == nnz {
                    return Err(bad(format!("more than the declared {nnz} entries")));
                }
                let i = parse_usize(toks.next(), "row index", line_no)?;
                let j = parse_usize(toks.next(), "column index", line_no)?;
                let v: f64 = toks
                    .next()
                    .ok_or_else(|| bad(format!("line {line_no}: missing value")))?
                    .parse()
                    .map_err(|_| bad(format!("line {line_no}: invalid value")))?;
                if i == 0 || j == 0 || i > m || j > n {
                    return Err(bad(format!(
                        "line {line_no}: index ({i}, {j}) outside declared {m}x{n}"
                    )));
                }
                let (r, c) = (i - 1, j - 1);
                triplets.push((r, c, v));
                if symmetry == Symmetry::Symmetric && r != c {
                    triplets.push((c, r, v));
                }
                seen += 1;
            }
        }
    }

    let (m, n, nnz) = size.ok_or_else(|| bad("missing size line"))?;
    if seen != nnz {
        return Err(bad(format!("declared {nnz} entries but found {seen}")));
    }
    CsrMatrix::from_triplets(&triplets, m, n)
}

pub fn read_matrix_market_file(path: impl AsRef<Path>) -> Result<CsrMatrix, SparseError> {
    let file = std::fs::File::open(path.as_ref())?;
    read_matrix_market(file)
}

/// Writes `a` as a coordinate `real general` file.
///
/// Values use the shortest representation that parses back to the same
/// bits, so reading the output reproduces the CSR arrays exactly.
pub fn write_matrix_market(a: &CsrMatrix) -> String {
    let mut out = String::with_capacity(64 + a.nnz() * 24);
    out.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "{} {} {}", a.nrows(), a.ncols(), a.nnz());
    for (r, c, v) in a.triplets() {
        let _ = writeln!(out, "{} {} {}", r + 1, c + 1, v);
    }
    out
}
