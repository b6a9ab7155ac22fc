//! Linear canonical correlation analysis.
//!
//! Needs paired samples (`n = k`). Both sides are centered and whitened, the
//! cross-covariance of the whitened data is decomposed by SVD, and the
//! singular vectors are mapped back through the whitening matrices.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::dataset::DataSet;
use crate::linalg;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CcaResult {
    /// `m × r` canonical directions in the input coordinates.
    pub u: DMatrix<f64>,
    /// `l × r`.
    pub v: DMatrix<f64>,
    /// Canonical correlations, non-increasing.
    pub correlations: Vec<f64>,
}

/// `r = min(m, l)` canonical pairs. Each pair is sign-normalized jointly so
/// the largest-magnitude entry of `u` is positive.
pub fn fit_linear_cca(x: &DataSet, y: &DataSet) -> Result<CcaResult> {
    let (n, k) = (x.n_rows(), y.n_rows());
    if n != k {
        return Err(Error::NoCorrespondence { n, k });
    }
    let (m, l) = (x.n_cols(), y.n_cols());
    if n <= m.max(l) {
        return Err(Error::TooFewRows { n, m: m.max(l) });
    }
    let xc = linalg::center_columns(x.values(), &linalg::column_means(x.values()));
    let yc = linalg::center_columns(y.values(), &linalg::column_means(y.values()));
    let wx = linalg::inverse_sqrt_spd(&linalg::covariance(&xc)).ok_or(Error::SingularCovariance)?;
    let wy = linalg::inverse_sqrt_spd(&linalg::covariance(&yc)).ok_or(Error::SingularCovariance)?;
    let cxy = xc.tr_mul(&yc) / n as f64;
    let whitened = &wx * cxy * &wy;

    let r = m.min(l);
    let svd = whitened.svd(true, true);
    let left = svd.u.as_ref().expect("requested U");
    let right_t = svd.v_t.as_ref().expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });

    let mut us = Vec::with_capacity(r);
    let mut vs = Vec::with_capacity(r);
    let mut correlations = Vec::with_capacity(r);
    for &i in order.iter().take(r) {
        let mut u: DVector<f64> = &wx * left.column(i);
        let mut v: DVector<f64> = &wy * right_t.row(i).transpose();
        if linalg::fix_sign(&mut u) {
            v.neg_mut();
        }
        us.push(u);
        vs.push(v);
        correlations.push(svd.singular_values[i].min(1.0));
    }
    if us.len() != r {
        return Err(Error::DimensionMismatch(format!("expected {r} canonical pairs, found {}", us.len())));
    }
    Ok(CcaResult {
        u: DMatrix::from_columns(&us),
        v: DMatrix::from_columns(&vs),
        correlations,
    })
}

/// `Σᵢ (uᵀxᵢ − vᵀyᵢ)²` over paired rows.
pub fn paired_squared_error(x: &DMatrix<f64>, y: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    (x * u - y * v).norm_squared()
}
