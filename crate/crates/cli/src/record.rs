//! Result rows and the CSV file they are appended to.

use std::fs::OpenOptions;
use std::path::Path;

use hybrid_spmv::{ExecConfig, ExecModel};

use crate::BenchError;

pub const CSV_HEADER: [&str; 12] = [
    "matrix",
    "model",
    "nranks",
    "threads",
    "reps",
    "median_s",
    "flops",
    "gflops",
    "efficiency",
    "iterations",
    "converged",
    "error",
];

/// One benchmark measurement. Solve-only fields are `None` for multiply
/// runs.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub matrix: String,
    pub model: ExecModel,
    pub nranks: usize,
    pub threads: usize,
    pub reps: usize,
    pub median_s: f64,
    pub flops: u64,
    pub efficiency: f64,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

impl BenchRecord {
    /// Rate over all repetitions: `flops` counts every repetition, so it is
    /// divided by the median repetition time times the repetition count.
    pub fn gflops(&self) -> f64 {
        gflops(self.flops, self.median_s * self.reps as f64)
    }

    pub fn cores(&self) -> usize {
        ExecConfig::new(self.model, self.nranks, self.threads).cores()
    }

    fn is_solve(&self) -> bool {
        self.iterations.is_some() || self.error.is_some()
    }

    fn to_fields(&self) -> Vec<String> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        vec![
            self.matrix.clone(),
            self.model.to_string(),
            self.nranks.to_string(),
            self.threads.to_string(),
            self.reps.to_string(),
            self.median_s.to_string(),
            self.flops.to_string(),
            self.gflops().to_string(),
            self.efficiency.to_string(),
            opt(self.iterations.map(|v| v.to_string())),
            opt(self.converged.map(|v| v.to_string())),
            opt(self.error.clone()),
        ]
    }

    fn from_fields(r: &csv::StringRecord) -> Result<Self, BenchError> {
        let bad = |what: &str| BenchError::Csv(format!("unreadable {what} in row {r:?}"));
        let get = |i: usize| r.get(i).unwrap_or("");
        let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
        Ok(BenchRecord {
            matrix: get(0).to_string(),
            model: get(1).parse().map_err(|_| bad("model"))?,
            nranks: get(2).parse().map_err(|_| bad("nranks"))?,
            threads: get(3).parse().map_err(|_| bad("threads"))?,
            reps: get(4).parse().map_err(|_| bad("reps"))?,
            median_s: get(5).parse().map_err(|_| bad("median_s"))?,
            flops: get(6).parse().map_err(|_| bad("flops"))?,
            efficiency: get(8).parse().map_err(|_| bad("efficiency"))?,
            iterations: opt(get(9))
                .map(|s| s.parse())
                .transpose()
                .map_err(|_| bad("iterations"))?,
            converged: opt(get(10))
                .map(|s| s.parse())
                .transpose()
                .map_err(|_| bad("converged"))?,
            error: opt(get(11)),
        })
    }
}

/// `flops / (seconds * 1e9)`.
pub fn gflops(flops: u64, seconds: f64) -> f64 {
    flops as f64 / (seconds * 1e9)
}

/// `(t_base * cores_base) / (t * cores)`.
pub fn parallel_efficiency(t_base: f64, cores_base: usize, t: f64, cores: usize) -> f64 {
    (t_base * cores_base as f64) / (t * cores as f64)
}

pub fn read_records(path: &Path) -> Result<Vec<BenchRecord>, BenchError> {
    if !path.exists() || std::fs::metadata(path)?.len() == 0 {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(BenchError::Csv(format!(
            "{} has header {:?}, expected {:?}",
            path.display(),
            header,
            CSV_HEADER
        )));
    }
    reader
        .records()
        .map(|r| BenchRecord::from_fields(&r?))
        .collect()
}

/// Sets `record.efficiency` against the baseline, then appends it.
///
/// The baseline is the first row already in the file for the same matrix
/// and the same kind of run (multiply or solve). Without one the record is
/// its own baseline and gets exactly 1.0.
pub fn append_record(path: &Path, record: &mut BenchRecord) -> Result<(), BenchError> {
    let existing = read_records(path)?;
    let baseline = existing
        .iter()
        .find(|r| r.matrix == record.matrix && r.is_solve() == record.is_solve());
    record.efficiency = match baseline {
        Some(b) => parallel_efficiency(b.median_s, b.cores(), record.median_s, record.cores()),
        None => 1.0,
    };

    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut writer = csv::Writer::from_writer(file);
    if existing.is_empty() && std::fs::metadata(path)?.len() == 0 {
        writer.write_record(CSV_HEADER)?;
    }
    writer.write_record(record.to_fields())?;
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(model: ExecModel, nranks: usize, threads: usize, median_s: f64) -> BenchRecord {
        BenchRecord {
            matrix: "m".into(),
            model,
            nranks,
            threads,
            reps: 10,
            median_s,
            flops: 2_000,
            efficiency: f64::NAN,
            iterations: None,
            converged: None,
            error: None,
        }
    }

    #[test]
    fn gflops_from_definition() {
        assert_eq!(gflops(2 * 1_000_000 * 100, 0.1), 2.0);
    }

    #[test]
    fn record_rate_is_per_repetition() {
        let mut r = record(ExecModel::Serial, 1, 1, 0.001);
        r.reps = 100;
        r.flops = 2 * 1_000_000 * 100;
        assert!((r.gflops() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn efficiency_fixtures() {
        assert_eq!(parallel_efficiency(1.0, 1, 1.0, 1), 1.0);
        assert_eq!(parallel_efficiency(8.0, 1, 1.0, 8), 1.0);
        assert_eq!(parallel_efficiency(8.0, 1, 2.0, 8), 0.5);
    }

    #[test]
    fn baseline_is_first_row_for_the_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let mut base = record(ExecModel::Serial, 1, 1, 0.8);
        append_record(&path, &mut base).unwrap();
        assert_eq!(base.efficiency, 1.0);

        let mut par = record(ExecModel::Vector, 2, 2, 0.4);
        append_record(&path, &mut par).unwrap();
        assert_eq!(par.efficiency, 0.5);

        let mut other = record(ExecModel::Vector, 2, 2, 0.4);
        other.matrix = "n".into();
        append_record(&path, &mut other).unwrap();
        assert_eq!(other.efficiency, 1.0);

        let rows = read_records(&path).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].efficiency, 0.5);
        assert_eq!(rows[0].model, ExecModel::Serial);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(text.matches("matrix,model").count(), 1);
    }

    #[test]
    fn inapplicable_fields_are_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        append_record(&path, &mut record(ExecModel::Task, 1, 2, 1.0)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(",1,,,"), "{text}");
    }

    #[test]
    fn foreign_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_records(&path), Err(BenchError::Csv(_))));
    }
}
