//! Plain-text CSV helpers. Numbers are written with 17 significant digits so
//! every value round-trips exactly.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::spectral::{Field, Grid1D};

/// Formats `v` with 17 significant digits and a `.` decimal separator.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a header and rows of numbers.
pub fn write_table<W: Write>(
    mut out: W,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> std::io::Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.into_iter().map(fmt_num).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Writes a field as `x,value` records.
pub fn write_field<W: Write>(out: W, grid: &Grid1D, v: &Field) -> std::io::Result<()> {
    write_table(
        out,
        &["x", "value"],
        grid.nodes().iter().zip(v.iter()).map(|(x, u)| vec![*x, *u]),
    )
}

/// Reads a headed numeric table with `columns` columns.
pub fn read_table<R: Read>(input: R, columns: usize) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Input(format!("csv: {e}")))?;
        if record.len() != columns {
            return Err(Error::Input(format!(
                "csv record {} has {} fields, expected {columns}",
                line + 1,
                record.len()
            )));
        }
        let row = record
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Input(format!("csv record {}: not a number: {s:?}", line + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads `x,value` records and checks that the abscissae match the grid.
pub fn read_field<R: Read>(input: R, grid: &Grid1D) -> Result<Field> {
    let rows = read_table(input, 2)?;
    if rows.len() != grid.len() {
        return Err(Error::Input(format!(
            "field has {} records, grid has {} nodes",
            rows.len(),
            grid.len()
        )));
    }
    let tol = 1e-9 * grid.h();
    for (row, x) in rows.iter().zip(grid.nodes()) {
        if (row[0] - x).abs() > tol {
            return Err(Error::Input(format!(
                "field abscissa {} does not match grid node {x}",
                row[0]
            )));
        }
    }
    Ok(Field::from_iterator(rows.len(), rows.iter().map(|r| r[1])))
}
