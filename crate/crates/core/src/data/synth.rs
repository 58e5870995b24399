use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::LabeledDataset;
use crate::{seed, Error, Result};

/// Isotropic unit-variance Gaussian classes. Class `c` is centred at
/// `separation * u_c` for a seeded random unit vector `u_c`. Rows are grouped
/// by class.
pub fn synth_gaussians(
    num_classes: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if num_classes < 2 || per_class < 4 || dim < 2 {
        return Err(Error::contract(format!(
            "synth_gaussians needs num_classes >= 2, per_class >= 4, dim >= 2 \
             (got {num_classes}, {per_class}, {dim})"
        )));
    }
    if !(separation >= 0.0) || !separation.is_finite() {
        return Err(Error::contract(format!("separation must be >= 0, got {separation}")));
    }

    let mut centre_rng = seed::derived_rng(seed, "synth-centres", &[]);
    let mut centres = Array2::<f64>::zeros((num_classes, dim));
    for mut row in centres.rows_mut() {
        loop {
            row.iter_mut()
                .for_each(|v| *v = centre_rng.sample::<f64, _>(StandardNormal));
            let norm = row.dot(&row).sqrt();
            if norm > 1e-12 {
                row.mapv_inplace(|v| separation * v / norm);
                break;
            }
        }
    }

    let n = num_classes * per_class;
    let mut features = Array2::<f64>::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for c in 0..num_classes {
        let mut rng = seed::derived_rng(seed, "synth-points", &[c as u64]);
        for k in 0..per_class {
            let i = c * per_class + k;
            for j in 0..dim {
                features[[i, j]] = centres[[c, j]] + rng.sample::<f64, _>(StandardNormal);
            }
            labels.push(c as u32);
        }
    }
    LabeledDataset::new(format!("gauss-{num_classes}x{dim}-s{seed}"), features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = synth_gaussians(4, 3, 5, 2.0, 9).unwrap();
        let b = synth_gaussians(4, 3, 5, 2.0, 9).unwrap();
        let bits = |d: &LabeledDataset| d.features().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.labels(), b.labels());
        let c = synth_gaussians(4, 3, 5, 2.0, 10).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn shape() {
        let d = synth_gaussians(10, 16, 100, 4.0, 1).unwrap();
        assert_eq!(d.len(), 1000);
        assert_eq!(d.dim(), 16);
        assert_eq!(d.class_set().len(), 10);
    }

    #[test]
    fn preconditions() {
        assert!(synth_gaussians(1, 4, 10, 1.0, 0).is_err());
        assert!(synth_gaussians(3, 1, 10, 1.0, 0).is_err());
        assert!(synth_gaussians(3, 4, 3, 1.0, 0).is_err());
        assert!(synth_gaussians(3, 4, 10, -1.0, 0).is_err());
        assert!(synth_gaussians(3, 4, 10, f64::NAN, 0).is_err());
    }
}
