//! CIFAR-10 / CIFAR-100 binary record files.
//!
//! CIFAR-10 records are `label (1 byte) | 3072 pixel bytes`; CIFAR-100
//! records are `coarse (1) | fine (1) | 3072 pixel bytes`. Pixels are stored
//! as three 1024-byte planes (R, G, B), row-major within each plane.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::{Error, Result};

const PIXELS: usize = 32 * 32 * 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CifarVariant {
    Cifar10,
    /// CIFAR-100 with the fine (100-way) label.
    Cifar100Fine,
}

impl CifarVariant {
    fn record_len(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 1 + PIXELS,
            CifarVariant::Cifar100Fine => 2 + PIXELS,
        }
    }
}

pub fn load_cifar_binary(path: &Path, variant: CifarVariant) -> Result<LabeledDataset> {
    let bytes = std::fs::read(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cifar".to_owned());
    parse_cifar(&bytes, variant, name)
}

pub(crate) fn parse_cifar(bytes: &[u8], variant: CifarVariant, name: String) -> Result<LabeledDataset> {
    let rec = variant.record_len();
    if bytes.is_empty() {
        return Err(Error::format("empty CIFAR file"));
    }
    if bytes.len() % rec != 0 {
        let whole = bytes.len() / rec;
        return Err(Error::format(format!(
            "truncated record at byte offset {}: file length {} is not a multiple of {rec}",
            whole * rec,
            bytes.len()
        )));
    }
    let n = bytes.len() / rec;
    let mut features = Array2::<f64>::zeros((n, PIXELS));
    let mut labels = Vec::with_capacity(n);
    for (i, record) in bytes.chunks_exact(rec).enumerate() {
        let offset = i * rec;
        let (label, pixels) = match variant {
            CifarVariant::Cifar10 => {
                if record[0] > 9 {
                    return Err(Error::format(format!(
                        "label byte {} out of range 0..=9 at byte offset {offset}",
                        record[0]
                    )));
                }
                (record[0], &record[1..])
            }
            CifarVariant::Cifar100Fine => {
                if record[0] > 19 {
                    return Err(Error::format(format!(
                        "coarse label byte {} out of range 0..=19 at byte offset {offset}",
                        record[0]
                    )));
                }
                if record[1] > 99 {
                    return Err(Error::format(format!(
                        "fine label byte {} out of range 0..=99 at byte offset {}",
                        record[1],
                        offset + 1
                    )));
                }
                (record[1], &record[2..])
            }
        };
        labels.push(u32::from(label));
        for (dst, &p) in features.row_mut(i).iter_mut().zip(pixels) {
            *dst = f64::from(p) / 255.0;
        }
    }
    LabeledDataset::new(name, features, labels)
}
