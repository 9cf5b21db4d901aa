//! Matrix and table CSV I/O.
//!
//! Matrix files are plain numeric: one matrix row per line, comma-separated,
//! no header; dimensions are inferred on read. Values are printed with 17
//! significant digits so files parse back to the exact in-memory doubles.
//! Tabular files (traces, benchmark results) carry a header line.

use std::fs;
use std::io::Write;
use std::path::Path;

use deepmf::Matrix;

use crate::cli_error::{CliError, CliResult};

/// 17 significant digits: lossless for f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_matrix(path: &Path, m: &Matrix) -> CliResult<()> {
    let mut out = String::with_capacity(m.rows() * m.cols() * 24);
    for i in 0..m.rows() {
        let row = m.row(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

pub fn read_matrix(path: &Path) -> CliResult<Matrix> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    CliError::config(format!(
                        "{}:{}: cannot parse '{}' as a number",
                        path.display(),
                        line_no + 1,
                        cell.trim()
                    ))
                })
            })
            .collect::<CliResult<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(CliError::config(format!(
                    "{}:{}: row has {} entries, expected {}",
                    path.display(),
                    line_no + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::config(format!("{}: empty matrix file", path.display())));
    }
    let cols = rows[0].len();
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    let rows_n = data.len() / cols;
    Matrix::new(rows_n, cols, data).map_err(CliError::from)
}

pub fn write_table(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> CliResult<()> {
    let file = fs::File::create(path)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| CliError::Io(format!("writing {}: {e}", path.display()));
    writeln!(w, "{}", header.join(",")).map_err(io_err)?;
    for row in rows {
        writeln!(w, "{}", row.join(",")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
