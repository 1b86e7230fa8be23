//! File formats: circuits as JSON, numeric tables as CSV with a header row.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use qnn_core::nalgebra::DMatrix;
use qnn_core::stats::SampleEnsemble;
use qnn_core::{CircuitSpec, Dataset, QnnError};
use serde::Serialize;

/// CLI failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input (exit 2).
    Config { message: String, path: Option<PathBuf> },
    Core(QnnError),
}

impl CliError {
    pub fn config(message: impl Into<String>) -> CliError {
        CliError::Config {
            message: message.into(),
            path: None,
        }
    }

    pub fn at(path: &Path, message: impl Into<String>) -> CliError {
        CliError::Config {
            message: message.into(),
            path: Some(path.to_path_buf()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Core(QnnError::Capacity { .. }) => 3,
            CliError::Core(QnnError::NumericFault { .. } | QnnError::Conditioning { .. } | QnnError::StepRejected { .. }) => 4,
            CliError::Core(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Core(e) => match e {
                QnnError::InvalidCircuit(_) => "invalid-circuit",
                QnnError::Index(_) => "index",
                QnnError::Capacity { .. } => "capacity",
                QnnError::Argument(_) => "argument",
                QnnError::Construction(_) => "construction",
                QnnError::Conditioning { .. } => "conditioning",
                QnnError::NumericFault { .. } => "numeric-fault",
                QnnError::StepRejected { .. } => "step-rejected",
            },
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let (message, path) = match self {
            CliError::Config { message, path } => (message.clone(), path.as_ref().map(|p| p.display().to_string())),
            CliError::Core(e) => (e.to_string(), None),
        };
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": message,
            "path": path,
        })
    }
}

impl From<QnnError> for CliError {
    fn from(e: QnnError) -> CliError {
        CliError::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::at(path, format!("cannot read {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::at(dir, format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::at(path, format!("cannot write {}: {e}", path.display())))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_text(path, &to_json(value))
}

pub fn read_circuit(path: &Path) -> CliResult<CircuitSpec> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::at(path, format!("malformed circuit file {}: {e}", path.display())))
}

fn csv_rows(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| CliError::at(path, format!("cannot read {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let bad = |e: &dyn std::fmt::Display| CliError::at(path, format!("malformed CSV {}: {e}", path.display()));
    let header: Vec<String> = rdr.headers().map_err(|e| bad(&e))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(&e))?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>().map_err(|e| bad(&format!("{v:?}: {e}"))))
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::at(dir, format!("cannot create {}: {e}", dir.display())))?;
    }
    csv::Writer::from_path(path).map_err(|e| CliError::at(path, format!("cannot write {}: {e}", path.display())))
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    let fail = |e: csv::Error| CliError::at(path, format!("cannot write {}: {e}", path.display()));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(&r).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::at(path, e.to_string()))
}

pub fn fmt_f64(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:e}")
    }
}

/// Input vectors, one per row (`x0, x1, ...`).
pub fn read_inputs(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let (header, rows) = csv_rows(path)?;
    let cols: Vec<usize> = header.iter().enumerate().filter(|(_, h)| h.starts_with('x')).map(|(i, _)| i).collect();
    Ok(rows.into_iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect())
}

/// Labelled data: `x0, x1, ..., y`.
pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let (header, rows) = csv_rows(path)?;
    let ycol = header
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| CliError::at(path, format!("{} has no `y` column", path.display())))?;
    let xcols: Vec<usize> = header.iter().enumerate().filter(|(_, h)| h.starts_with('x')).map(|(i, _)| i).collect();
    let inputs = rows.iter().map(|r| xcols.iter().map(|&c| r[c]).collect()).collect();
    let labels = rows.iter().map(|r| r[ycol]).collect();
    Ok(Dataset::new(inputs, labels)?)
}

pub fn write_dataset(path: &Path, data: &Dataset) -> CliResult<()> {
    let dim = data.inputs.first().map_or(0, Vec::len);
    let mut header: Vec<String> = (0..dim).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    write_rows(
        path,
        &header,
        data.inputs.iter().zip(&data.labels).map(|(x, y)| {
            let mut r: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
            r.push(fmt_f64(*y));
            r
        }),
    )
}

/// Square matrix with columns `c0, c1, ...`.
pub fn read_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    let (_, rows) = csv_rows(path)?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(CliError::at(path, format!("{} is not a square matrix", path.display())));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> CliResult<()> {
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("c{j}")).collect();
    write_rows(path, &header, m.row_iter().map(|r| r.iter().map(|v| fmt_f64(*v)).collect()))
}

pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> CliResult<()> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    write_rows(path, &header, rows.iter().map(|r| r.iter().map(|v| fmt_f64(*v)).collect()))
}

/// Parameter vector: one `theta` column.
pub fn read_theta(path: &Path) -> CliResult<Vec<f64>> {
    let (_, rows) = csv_rows(path)?;
    Ok(rows.into_iter().filter_map(|r| r.first().copied()).collect())
}

pub fn write_theta(path: &Path, theta: &[f64]) -> CliResult<()> {
    write_table(path, &["theta"], &theta.iter().map(|v| vec![*v]).collect::<Vec<_>>())
}

/// Ensemble in long form: `seed, probe_index, value`.
pub fn write_ensemble(path: &Path, ens: &SampleEnsemble) -> CliResult<()> {
    let header: Vec<String> = ["seed", "probe_index", "value"].iter().map(|s| s.to_string()).collect();
    let s = ens.samples();
    let rows = (0..s).flat_map(|i| {
        ens.values
            .iter()
            .enumerate()
            .map(move |(a, v)| vec![i.to_string(), a.to_string(), fmt_f64(v[i])])
    });
    write_rows(path, &header, rows)
}

pub fn read_ensemble(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let (header, rows) = csv_rows(path)?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::at(path, format!("{} has no `{name}` column", path.display())))
    };
    let (cs, cp, cv) = (col("seed")?, col("probe_index")?, col("value")?);
    let mut by_probe: Vec<Vec<(u64, f64)>> = Vec::new();
    for r in rows {
        let a = r[cp] as usize;
        if by_probe.len() <= a {
            by_probe.resize(a + 1, Vec::new());
        }
        by_probe[a].push((r[cs] as u64, r[cv]));
    }
    Ok(by_probe
        .into_iter()
        .map(|mut v| {
            v.sort_by_key(|p| p.0);
            v.into_iter().map(|p| p.1).collect()
        })
        .collect())
}

pub fn parse_vector(s: &str) -> CliResult<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| CliError::config(format!("bad number {v:?}: {e}"))))
        .collect()
}
