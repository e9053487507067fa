//! File formats: headerless numeric CSV for matrices, binary PGM for
//! abundance maps, JSON for reports.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{PnmuError, Result};
use crate::grid::GridShape;
use crate::linalg::DenseMatrix;

fn io_err(path: &Path, source: std::io::Error) -> PnmuError {
    PnmuError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses comma-separated rows of numbers. Blank lines are skipped.
pub fn parse_matrix_csv(text: &str, path: &Path) -> Result<DenseMatrix> {
    let mut data = Vec::new();
    let mut n_cols: Option<usize> = None;
    let mut n_rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for (colno, cell) in line.split(',').enumerate() {
            let cell = cell.trim();
            let value: f64 = cell.parse().map_err(|_| PnmuError::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                column: colno + 1,
                message: format!("'{cell}' is not a number"),
            })?;
            if !value.is_finite() {
                return Err(PnmuError::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    column: colno + 1,
                    message: format!("'{cell}' is not finite"),
                });
            }
            data.push(value);
            count += 1;
        }
        match n_cols {
            None => n_cols = Some(count),
            Some(c) if c != count => {
                return Err(PnmuError::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    column: count.min(c) + 1,
                    message: format!("row has {count} values, expected {c}"),
                });
            }
            Some(_) => {}
        }
        n_rows += 1;
    }
    let n_cols = n_cols.ok_or_else(|| PnmuError::Parse {
        path: path.to_path_buf(),
        line: 1,
        column: 1,
        message: "no data rows".into(),
    })?;
    DenseMatrix::from_vec(n_rows, n_cols, data)
}

pub fn read_matrix_csv(path: &Path) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_matrix_csv(&text, path)
}

/// One row per line, 17 significant digits per value.
pub fn format_matrix_csv(m: &DenseMatrix) -> String {
    let mut out = String::with_capacity(m.as_slice().len() * 24);
    for i in 0..m.n_rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(m: &DenseMatrix, path: &Path) -> Result<()> {
    fs::write(path, format_matrix_csv(m)).map_err(|e| io_err(path, e))
}

/// Renders an abundance column as an 8-bit image, brightest at the column maximum.
pub fn encode_pgm(column: &[f64], grid: GridShape) -> Result<Vec<u8>> {
    if column.len() != grid.n_pixels() {
        return Err(PnmuError::shape(format!(
            "column of length {} for a {}x{} image",
            column.len(),
            grid.height(),
            grid.width()
        )));
    }
    let mx = column.iter().copied().fold(0.0_f64, f64::max);
    let mut out = format!("P5\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    for row in 0..grid.height() {
        for col in 0..grid.width() {
            let v = column[grid.index(row, col)];
            let level = if mx > 0.0 {
                (255.0 * v.max(0.0) / mx).round().clamp(0.0, 255.0) as u8
            } else {
                0
            };
            out.push(level);
        }
    }
    Ok(out)
}

pub fn write_pgm(column: &[f64], grid: GridShape, path: &Path) -> Result<()> {
    let bytes = encode_pgm(column, grid)?;
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Decodes a binary PGM written by [`encode_pgm`]: `(width, height, pixels)` in raster order.
pub fn decode_pgm(bytes: &[u8]) -> Option<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?.to_string());
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return None;
    }
    let width: usize = fields[1].parse().ok()?;
    let height: usize = fields[2].parse().ok()?;
    let pixels = bytes.get(pos + 1..)?.to_vec();
    (pixels.len() == width * height).then_some((width, height, pixels))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))
}

/// Lowercase hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}
