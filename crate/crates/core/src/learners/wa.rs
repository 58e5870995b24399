//! Weight aligning: rescale new-class classifier rows so their mean norm
//! matches the mean norm of old-class rows.

use ndarray::Array2;

use crate::{Error, Result};

fn mean_row_norm(w: &Array2<f64>, rows: &[usize]) -> f64 {
    rows.iter().map(|&r| w.row(r).dot(&w.row(r)).sqrt()).sum::<f64>() / rows.len() as f64
}

/// `weights` has one row per class. Rows in `new` are multiplied by
/// `mean ||old rows|| / mean ||new rows||`; all other rows are untouched.
pub fn wa_align(weights: &Array2<f64>, old: &[usize], new: &[usize]) -> Result<Array2<f64>> {
    if old.is_empty() || new.is_empty() {
        return Err(Error::contract("weight aligning needs old and new classes"));
    }
    if old.iter().chain(new).any(|&r| r >= weights.nrows()) {
        return Err(Error::contract("class row outside the head"));
    }
    let mut out = weights.clone();
    let new_norm = mean_row_norm(weights, new);
    if new_norm == 0.0 {
        log::warn!("weight aligning skipped: new-class rows have zero norm");
        return Ok(out);
    }
    let gamma = mean_row_norm(weights, old) / new_norm;
    for &r in new {
        out.row_mut(r).mapv_inplace(|v| v * gamma);
    }
    Ok(out)
}
