use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::LabeledDataset;
use crate::{seed, Error, Result};

/// Multiplies features by a seeded Gaussian matrix scaled by
/// `1/sqrt(out_dim)`, then standardizes each output dimension to zero mean and
/// unit variance over the dataset. Dimensions with zero variance are only
/// centred.
pub fn random_project(data: &LabeledDataset, out_dim: usize, seed: u64) -> Result<LabeledDataset> {
    if out_dim == 0 {
        return Err(Error::contract("random_project needs out_dim >= 1"));
    }
    let mut rng = seed::derived_rng(seed, "projection", &[]);
    let scale = 1.0 / (out_dim as f64).sqrt();
    let proj = Array2::from_shape_simple_fn((data.dim(), out_dim), || {
        rng.sample::<f64, _>(StandardNormal) * scale
    });
    let mut out = data.features().dot(&proj);
    standardize_columns(&mut out);

    let mut ds = LabeledDataset::new(
        format!("{}-proj{out_dim}", data.name()),
        out,
        data.labels().to_vec(),
    )?;
    if let Some(src) = data.source_labels() {
        ds = ds.with_source_labels(src.to_vec());
    }
    Ok(ds)
}

fn standardize_columns(x: &mut Array2<f64>) {
    let n = x.nrows() as f64;
    if n == 0.0 {
        return;
    }
    for mut col in x.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
        let var = col.iter().map(|v| v * v).sum::<f64>() / n;
        if var > 1e-24 {
            let sd = var.sqrt();
            col.mapv_inplace(|v| v / sd);
        } else {
            log::warn!("zero-variance projected dimension; left unscaled");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_gaussians;

    #[test]
    fn standardized_output() {
        let d = synth_gaussians(5, 8, 20, 3.0, 4).unwrap();
        let p = random_project(&d, 8, 1).unwrap();
        for col in p.features().axis_iter(Axis(1)) {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn labels_untouched() {
        let d = synth_gaussians(3, 4, 6, 1.0, 4).unwrap();
        let p = random_project(&d, 2, 9).unwrap();
        assert_eq!(p.labels(), d.labels());
        assert_eq!(p.dim(), 2);
    }

    #[test]
    fn constant_input_is_not_an_error() {
        let d = LabeledDataset::new("c", Array2::from_elem((4, 3), 1.0), vec![0, 0, 1, 1]).unwrap();
        let p = random_project(&d, 2, 0).unwrap();
        assert!(p.features().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn deterministic() {
        let d = synth_gaussians(3, 4, 6, 1.0, 4).unwrap();
        assert_eq!(random_project(&d, 5, 3).unwrap(), random_project(&d, 5, 3).unwrap());
        assert!(random_project(&d, 0, 3).is_err());
    }
}
