//! CSV plumbing: header-aware numeric tables and round-trip float formatting.

use std::path::Path;

use ndarray::Array2;

use crate::CliError;

/// Format a float with 17 significant digits so parsing it back is exact.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A CSV file read fully into memory: header plus rows of raw cells.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<csv::StringRecord>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table, CliError> {
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
        let header = rdr
            .headers()
            .map_err(|e| CliError::data(format!("bad header in {}: {e}", path.display())))?
            .iter()
            .map(str::to_owned)
            .collect();
        let rows = rdr
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::data(format!("bad row in {}: {e}", path.display())))?;
        Ok(Table { header, rows })
    }

    fn column_index(&self, name: &str) -> Result<usize, CliError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::data(format!("column '{name}' not found in input")))
    }

    /// Extract named columns as a numeric matrix (rows x columns).
    pub fn numeric_columns(&self, names: &[String]) -> Result<Array2<f64>, CliError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n))
            .collect::<Result<_, _>>()?;
        let mut out = Array2::zeros((self.rows.len(), idx.len()));
        for (r, row) in self.rows.iter().enumerate() {
            for (c, &i) in idx.iter().enumerate() {
                let cell = row.get(i).unwrap_or("");
                out[[r, c]] = cell.trim().parse::<f64>().map_err(|_| {
                    CliError::data(format!(
                        "non-numeric cell '{cell}' at row {}, column '{}'",
                        r + 2, // 1-based with header line
                        names[c]
                    ))
                })?;
            }
        }
        Ok(out)
    }
}

/// Write a CSV with a header row; every cell already stringified.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_path(path)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    wtr.write_record(header)
        .and_then(|_| rows.iter().try_for_each(|r| wtr.write_record(r)))
        .and_then(|_| wtr.flush().map_err(Into::into))
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}
