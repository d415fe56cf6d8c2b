//! Singular value decomposition of the reshaped weight tensor and projections of
//! one-hot data onto its principal directions.
//!
//! The weight tensor is transposed to `[q][i][mu]` and reshaped to a
//! `(n_states * n_visible) x n_hidden` matrix, so row `q * n_visible + i` holds the
//! couplings of Potts state `q` at site `i`. One-hot data is flattened with the same
//! row index, which makes the projection a plain matrix product.

use nalgebra::{DMatrix, DVector};

use super::PottsRBM;
use crate::dataset::OneHotDataset;
use crate::error::{Error, Result};

pub fn reshaped_weights(model: &PottsRBM) -> DMatrix<f64> {
    let (nv, nq, nh) = model.shape();
    DMatrix::from_fn(nq * nv, nh, |r, mu| model.weight(r % nv, mu, r / nv))
}

/// Singular values of the reshaped weight matrix in descending order; the length is
/// `min(n_states * n_visible, n_hidden)`.
pub fn weight_spectrum(model: &PottsRBM) -> Vec<f64> {
    if model.n_hidden() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = reshaped_weights(model)
        .singular_values()
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Left singular vectors sorted by decreasing singular value, completed to `k`
/// orthonormal columns when `k` exceeds the rank of the thin decomposition.
fn principal_directions(model: &PottsRBM, k: usize) -> DMatrix<f64> {
    let w = reshaped_weights(model);
    let rows = w.nrows();
    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(k);
    if w.ncols() > 0 {
        let svd = w.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        for &c in order.iter().take(k) {
            let mut col = u.column(c).into_owned();
            // fix the sign: largest-magnitude entry positive
            let pivot = col.iamax();
            if col[pivot] < 0.0 {
                col.neg_mut();
            }
            columns.push(col);
        }
    }
    // Gram-Schmidt completion against the canonical basis
    let mut e = 0;
    while columns.len() < k && e < rows {
        let mut cand = DVector::zeros(rows);
        cand[e] = 1.0;
        for _ in 0..2 {
            for c in &columns {
                let d = c.dot(&cand);
                cand.axpy(-d, c, 1.0);
            }
        }
        let norm = cand.norm();
        if norm > 1e-8 {
            columns.push(cand / norm);
        }
        e += 1;
    }
    DMatrix::from_columns(&columns)
}

/// Projects the one-hot encoding of every sample onto the first `k` principal
/// directions of the weight matrix. Returns an `n_samples x k` matrix.
pub fn project_dataset(model: &PottsRBM, data: &OneHotDataset, k: usize) -> Result<DMatrix<f64>> {
    let (nv, nq, _) = model.shape();
    if data.n_visible() != nv || data.n_states() != nq {
        return Err(Error::shape(format!(
            "dataset is {}x{}, model expects {nv}x{nq}",
            data.n_visible(),
            data.n_states()
        )));
    }
    if k == 0 || k > nv * nq {
        return Err(Error::OutOfRange(format!(
            "projection dimension {k} must lie in 1..={}",
            nv * nq
        )));
    }
    let u = principal_directions(model, k);
    let mut out = DMatrix::zeros(data.n_samples(), k);
    for (m, row) in data.samples().enumerate() {
        for c in 0..k {
            out[(m, c)] = row.iter().enumerate().map(|(i, &q)| u[(q * nv + i, c)]).sum();
        }
    }
    Ok(out)
}
