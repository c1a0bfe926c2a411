//! CSV prediction files.
//!
//! Classification and regression files have `y_true` and `y_pred` columns;
//! clustering files have numeric feature columns plus one label column.

use std::io::Read;

use super::MetricsError;

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source)
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, MetricsError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| MetricsError::Input(format!("missing column `{name}`")))
}

fn bad(e: csv::Error) -> MetricsError {
    MetricsError::Input(e.to_string())
}

/// Reads `y_true` and `y_pred` as labels.
pub fn read_classification_csv<R: Read>(
    source: R,
) -> Result<(Vec<String>, Vec<String>), MetricsError> {
    let mut rdr = reader(source);
    let headers = rdr.headers().map_err(bad)?.clone();
    let (t, p) = (column(&headers, "y_true")?, column(&headers, "y_pred")?);
    let mut y_true = Vec::new();
    let mut y_pred = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(bad)?;
        y_true.push(record[t].to_string());
        y_pred.push(record[p].to_string());
    }
    Ok((y_true, y_pred))
}

fn number(text: &str, line: usize, col: &str) -> Result<f64, MetricsError> {
    text.parse().map_err(|_| {
        MetricsError::Input(format!(
            "row {line}: `{text}` in column `{col}` is not a number"
        ))
    })
}

/// Reads `y_true` and `y_pred` as numbers.
pub fn read_regression_csv<R: Read>(source: R) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    let mut rdr = reader(source);
    let headers = rdr.headers().map_err(bad)?.clone();
    let (t, p) = (column(&headers, "y_true")?, column(&headers, "y_pred")?);
    let mut y_true = Vec::new();
    let mut y_pred = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(bad)?;
        y_true.push(number(&record[t], i + 1, "y_true")?);
        y_pred.push(number(&record[p], i + 1, "y_pred")?);
    }
    Ok((y_true, y_pred))
}

/// Reads every column except `label_column` as a coordinate.
pub fn read_clustering_csv<R: Read>(
    source: R,
    label_column: &str,
) -> Result<(Vec<Vec<f64>>, Vec<String>), MetricsError> {
    let mut rdr = reader(source);
    let headers = rdr.headers().map_err(bad)?.clone();
    let l = column(&headers, label_column)?;
    if headers.len() < 2 {
        return Err(MetricsError::Input("no feature columns".into()));
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(bad)?;
        let mut point = Vec::with_capacity(record.len() - 1);
        for (c, cell) in record.iter().enumerate() {
            if c != l {
                point.push(number(cell, i + 1, &headers[c])?);
            }
        }
        points.push(point);
        labels.push(record[l].to_string());
    }
    Ok((points, labels))
}
