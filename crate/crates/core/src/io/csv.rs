//! Labelled numeric tables.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{RecourseError, Result};

pub const DEFAULT_LABEL_COLUMN: &str = "label";

/// Raw (unstandardized) feature rows plus 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<LabelledTable> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| RecourseError::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_csv(file, label_column)
}

/// Parse a headed CSV. Row numbers in errors count data rows from 1.
pub fn read_csv<R: Read>(reader: R, label_column: &str) -> Result<LabelledTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    for (i, h) in headers.iter().enumerate() {
        if h.is_empty() {
            return Err(RecourseError::Csv(format!("header {} is empty", i + 1)));
        }
        if headers[..i].contains(h) {
            return Err(RecourseError::Csv(format!("duplicate header `{h}`")));
        }
    }
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| RecourseError::Csv(format!("missing label column `{label_column}`")))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(RecourseError::Empty("csv has no feature columns"));
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record?;
        let mut values = Vec::with_capacity(feature_names.len());
        for (c, cell) in record.iter().enumerate() {
            let cell_err = |message: String| RecourseError::CsvCell {
                row,
                column: headers[c].clone(),
                message,
            };
            if c == label_idx {
                let label = match cell {
                    "0" | "0.0" => 0,
                    "1" | "1.0" => 1,
                    other => return Err(cell_err(format!("label must be 0 or 1, got `{other}`"))),
                };
                labels.push(label);
            } else {
                let v: f64 = cell.parse().map_err(|_| cell_err(format!("`{cell}` is not a number")))?;
                if !v.is_finite() {
                    return Err(cell_err(format!("`{cell}` is not finite")));
                }
                values.push(v);
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(RecourseError::Empty("csv has no data rows"));
    }
    Ok(LabelledTable {
        feature_names,
        rows,
        labels,
    })
}

pub fn write_csv(path: impl AsRef<Path>, table: &LabelledTable, label_column: &str) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())
        .map_err(|e| RecourseError::Io(format!("{}: {e}", path.as_ref().display())))?;
    write_table(file, table, label_column)
}

pub fn write_table<W: Write>(writer: W, table: &LabelledTable, label_column: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = table.feature_names.clone();
    header.push(label_column.to_owned());
    w.write_record(&header)?;
    for (row, label) in table.rows.iter().zip(&table.labels) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(label.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let t = LabelledTable {
            feature_names: vec!["a".into(), "b".into()],
            rows: vec![vec![0.5, -1.25], vec![3.0, 1e-9]],
            labels: vec![0, 1],
        };
        let mut buf = Vec::new();
        write_table(&mut buf, &t, "label").unwrap();
        assert_eq!(read_csv(buf.as_slice(), "label").unwrap(), t);
    }

    #[test]
    fn label_column_may_be_anywhere() {
        let t = read_csv("y,a\n1,2.5\n0,3\n".as_bytes(), "y").unwrap();
        assert_eq!(t.feature_names, vec!["a"]);
        assert_eq!(t.rows, vec![vec![2.5], vec![3.0]]);
        assert_eq!(t.labels, vec![1, 0]);
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let err = read_csv("a,b,label\n1,2,0\n1,x,1\n".as_bytes(), "label").unwrap_err();
        match err {
            RecourseError::CsvCell { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = read_csv("a,label\n1,2\n".as_bytes(), "label").unwrap_err();
        assert!(matches!(err, RecourseError::CsvCell { row: 1, .. }));
        assert!(read_csv("a,b\n1,2\n".as_bytes(), "label").is_err());
        assert!(read_csv("a,label\nNaN,1\n".as_bytes(), "label").is_err());
        assert!(read_csv("a,a,label\n1,2,0\n".as_bytes(), "label").is_err());
    }
}
