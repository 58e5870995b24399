//! `label,f0,f1,...` CSV datasets.

use std::path::Path;

use ndarray::Array2;

use super::LabeledDataset;
use crate::{Error, Result};

pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".to_owned());
    parse_csv(&text, name)
}

pub(crate) fn parse_csv(text: &str, name: String) -> Result<LabeledDataset> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_reader(text.as_bytes());

    let header = reader
        .headers()
        .map_err(|e| Error::format(format!("line 1: {e}")))?
        .clone();
    if header.get(0) != Some("label") || header.len() < 2 {
        return Err(Error::format(
            "line 1: header must be `label,f0,f1,...` with at least one feature column",
        ));
    }
    for (j, col) in header.iter().skip(1).enumerate() {
        if col != format!("f{j}") {
            return Err(Error::format(format!(
                "line 1: feature column {} is named '{col}', expected 'f{j}'",
                j + 1
            )));
        }
    }
    let dim = header.len() - 1;

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::format(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != dim + 1 {
            return Err(Error::format(format!(
                "line {line}: ragged row with {} columns, header has {}",
                record.len(),
                dim + 1
            )));
        }
        let label: u32 = record[0]
            .parse()
            .map_err(|_| Error::format(format!("line {line}: non-numeric label '{}'", &record[0])))?;
        labels.push(label);
        for cell in record.iter().skip(1) {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::format(format!("line {line}: non-numeric cell '{cell}'")))?;
            if !v.is_finite() {
                return Err(Error::format(format!("line {line}: non-finite cell '{cell}'")));
            }
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::format("no examples"));
    }
    let features = Array2::from_shape_vec((labels.len(), dim), values)
        .map_err(|e| Error::format(e.to_string()))?;
    LabeledDataset::new(name, features, labels)
}

/// Writes a dataset in the format read by [`load_csv`]. Values are written
/// with Rust's shortest round-trip float formatting.
pub fn write_csv(data: &LabeledDataset, path: &Path) -> Result<()> {
    let mut w = ::csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    let mut header = vec!["label".to_owned()];
    header.extend((0..data.dim()).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(|e| Error::Io(e.into()))?;
    for (i, &label) in data.labels().iter().enumerate() {
        let mut row = vec![label.to_string()];
        row.extend(data.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}
