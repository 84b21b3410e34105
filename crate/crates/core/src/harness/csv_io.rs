use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Dataset, Mask};

/// Token marking a missing cell.
pub const NA: &str = "NA";

/// A data matrix read from CSV, with its header.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub names: Vec<String>,
    pub data: Dataset,
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Reads a header row and decimal or `NA` cells. Variable roles are left empty.
///
/// Lines and columns in errors are 1-based; the header is line 1.
pub fn read_csv<R: Read>(reader: R) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| parse_error(1, 1, e.to_string()))?,
        None => return Err(parse_error(1, 1, "empty file")),
    };
    let names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    let p = names.len();
    if p == 0 || names.iter().any(String::is_empty) {
        return Err(parse_error(1, 1, "header has an empty variable name"));
    }

    let mut values = Vec::new();
    let mut rows = 0;
    for (idx, rec) in records.enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| parse_error(line, 1, e.to_string()))?;
        if rec.len() != p {
            return Err(parse_error(
                line,
                rec.len().min(p) + 1,
                format!("expected {p} fields, found {}", rec.len()),
            ));
        }
        for (col, field) in rec.iter().enumerate() {
            let field = field.trim();
            let v = if field == NA {
                f64::NAN
            } else {
                match field.parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => return Err(parse_error(line, col + 1, format!("`{field}` is not a number or {NA}"))),
                }
            };
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_error(2, 1, "no data rows"));
    }
    let y = DMatrix::from_row_slice(rows, p, &values);
    Ok(CsvTable {
        names,
        data: Dataset::from_observed(y, vec![], vec![])?,
    })
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<CsvTable> {
    read_csv(std::fs::File::open(path)?)
}

/// Writes a header and the matrix, with `NA` wherever `mask` is unobserved.
///
/// Numbers use the shortest representation that parses back to the same bits.
pub fn write_matrix_csv<W: Write>(writer: W, names: &[String], y: &DMatrix<f64>, mask: Option<&Mask>) -> Result<()> {
    if names.len() != y.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} names for {} columns",
            names.len(),
            y.ncols()
        )));
    }
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(names).map_err(csv_io)?;
    let mut row = Vec::with_capacity(y.ncols());
    for i in 0..y.nrows() {
        row.clear();
        for j in 0..y.ncols() {
            let observed = mask.map_or(!y[(i, j)].is_nan(), |m| m.is_observed(i, j));
            row.push(if observed { format!("{}", y[(i, j)]) } else { NA.to_string() });
        }
        wtr.write_record(&row).map_err(csv_io)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_csv(path: impl AsRef<Path>, table: &CsvTable) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_matrix_csv(file, &table.names, table.data.values(), Some(table.data.omega()))
}

/// Default column names `V1, V2, ...`.
pub fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|k| format!("V{k}")).collect()
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}
