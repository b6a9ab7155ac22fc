//! Dense linear-algebra helpers shared by the solver, baselines and metrics.

use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Residual norm below which a candidate vector counts as linearly dependent.
const DEPENDENCE_TOL: f64 = 1e-8;

/// Removes from `v` its components along every column in `basis`, twice.
///
/// The second pass ("twice is enough") restores orthogonality lost to
/// cancellation in the first.
fn orthogonalize_against(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(v);
            v.axpy(-c, q, 1.0);
        }
    }
}

/// Gram–Schmidt in the given order, dropping vectors that are (numerically)
/// in the span of their predecessors.
pub fn orthonormalize(vectors: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut w = v.clone();
        orthogonalize_against(&mut w, &basis);
        let norm = w.norm();
        if norm > DEPENDENCE_TOL {
            basis.push(w / norm);
        }
    }
    basis
}

/// Extends an orthonormal set to `target` vectors in `dim` dimensions by
/// running Gram–Schmidt over the standard basis `e_0, e_1, …` in order.
pub fn complete_in_order(basis: &[DVector<f64>], dim: usize, target: usize) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = basis.to_vec();
    for i in 0..dim {
        if out.len() >= target {
            break;
        }
        let mut e = DVector::zeros(dim);
        e[i] = 1.0;
        orthogonalize_against(&mut e, &out);
        let norm = e.norm();
        if norm > 1e-6 {
            out.push(e / norm);
        }
    }
    out
}

/// Orthonormal basis (as columns) of the orthogonal complement of the
/// columns of `prev`, which must be orthonormal. Uses pivoted Gram–Schmidt
/// over the standard basis so the result is deterministic and well
/// conditioned.
pub fn complement_basis(prev: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = prev.nrows();
    let mut basis: Vec<DVector<f64>> = prev.column_iter().map(|c| c.into_owned()).collect();
    let start = basis.len();
    let mut candidates: Vec<DVector<f64>> = (0..dim)
        .map(|i| {
            let mut e = DVector::zeros(dim);
            e[i] = 1.0;
            orthogonalize_against(&mut e, &basis);
            e
        })
        .collect();
    while basis.len() < dim {
        let (best, norm) = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.norm()))
            .fold((usize::MAX, 0.0), |acc, (i, n)| if n > acc.1 { (i, n) } else { acc });
        if best == usize::MAX || norm <= DEPENDENCE_TOL {
            break;
        }
        let mut q = candidates.swap_remove(best);
        orthogonalize_against(&mut q, &basis);
        let q = q.normalize();
        for c in candidates.iter_mut() {
            let d = q.dot(c);
            c.axpy(-d, &q, 1.0);
        }
        basis.push(q);
    }
    let cols: Vec<DVector<f64>> = basis.split_off(start);
    if cols.is_empty() {
        DMatrix::zeros(dim, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis of the column span of `m` (same column count when `m`
/// has full column rank).
pub fn span_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = m.column_iter().map(|c| c.into_owned()).collect();
    let basis = orthonormalize(&cols);
    if basis.is_empty() {
        DMatrix::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&basis)
    }
}

/// Normalizes every column to unit length; zero columns stay zero.
pub fn normalize_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut c in out.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
    out
}

pub fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

pub fn center_columns(m: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut c) in out.column_iter_mut().enumerate() {
        c.add_scalar_mut(-means[j]);
    }
    out
}

/// Population covariance `XᵀX / n` of already-centered data.
pub fn covariance(centered: &DMatrix<f64>) -> DMatrix<f64> {
    let n = centered.nrows() as f64;
    let mut c = centered.tr_mul(centered) / n;
    symmetrize(&mut c);
    c
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// `C^{-1/2}` for a symmetric positive-definite matrix. Returns `None` when
/// the smallest eigenvalue is not safely positive.
pub fn inverse_sqrt_spd(c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(c.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= max * 1e-12 {
        return None;
    }
    let d = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| 1.0 / libm::sqrt(l)),
    );
    let q = &eig.eigenvectors;
    let mut w = q * DMatrix::from_diagonal(&d) * q.transpose();
    symmetrize(&mut w);
    Some(w)
}

/// Eigenvectors of a symmetric matrix for its `r` largest eigenvalues, in
/// decreasing order, each with its largest-magnitude entry made positive.
pub fn top_eigenvectors(c: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(c.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let cols: Vec<DVector<f64>> = order
        .iter()
        .take(r)
        .map(|&i| {
            let mut v = eig.eigenvectors.column(i).into_owned();
            fix_sign(&mut v);
            v
        })
        .collect();
    DMatrix::from_columns(&cols)
}

/// Flips `v` so that its largest-magnitude entry is positive (first such
/// entry on ties). Returns whether a flip happened.
pub fn fix_sign(v: &mut DVector<f64>) -> bool {
    let mut idx = 0;
    let mut best = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            idx = i;
        }
    }
    if !v.is_empty() && v[idx] < 0.0 {
        v.neg_mut();
        true
    } else {
        false
    }
}

/// Matrix exponential by scaling and squaring with a degree-6 Padé
/// approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    let inf_norm = a
        .row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while inf_norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = a * scale;
    const Q: usize = 6;
    let mut c = 1.0;
    let mut power = DMatrix::<f64>::identity(d, d);
    let mut num = DMatrix::<f64>::identity(d, d);
    let mut den = DMatrix::<f64>::identity(d, d);
    for j in 1..=Q {
        c *= (Q - j + 1) as f64 / (j * (2 * Q - j + 1)) as f64;
        power = &power * &a;
        num += &power * c;
        if j % 2 == 0 {
            den += &power * c;
        } else {
            den -= &power * c;
        }
    }
    let mut e = den.lu().solve(&num).unwrap_or_else(|| DMatrix::identity(d, d));
    for _ in 0..squarings {
        e = &e * &e;
    }
    e
}

/// Median of a slice (mean of the two middle elements for even lengths).
/// Reorders the slice. Panics on an empty slice.
pub fn median_in_place(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median of the Euclidean distances between all row pairs `i < j`.
pub fn pairwise_distance_median(rows: &DMatrix<f64>) -> f64 {
    let n = rows.nrows();
    let t = rows.transpose();
    let mut dists = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        let a = t.column(i);
        for j in (i + 1)..n {
            let b = t.column(j);
            let mut s = 0.0;
            for (x, y) in a.iter().zip(b.iter()) {
                let d = x - y;
                s += d * d;
            }
            dists.push(libm::sqrt(s));
        }
    }
    if dists.is_empty() {
        return 0.0;
    }
    median_in_place(&mut dists)
}

/// Lexicographic comparison of two rows (total order on `f64`).
pub fn cmp_rows(m: &DMatrix<f64>, a: usize, b: usize) -> Ordering {
    for j in 0..m.ncols() {
        match m[(a, j)].total_cmp(&m[(b, j)]) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Row indices of `m` sorted lexicographically by value, ties by index.
pub fn lexicographic_order(m: &DMatrix<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.sort_by(|&a, &b| cmp_rows(m, a, b).then(a.cmp(&b)));
    idx
}

pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let u = DVector::from_vec(vec![1.0, 2.0, 0.0, -1.0]).normalize();
        let prev = DMatrix::from_columns(core::slice::from_ref(&u));
        let b = complement_basis(&prev);
        assert_eq!(b.ncols(), 3);
        let g = b.tr_mul(&b);
        assert_abs_diff_eq!(g, DMatrix::identity(3, 3), epsilon = 1e-12);
        assert_abs_diff_eq!((b.transpose() * u).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn complement_of_nothing_is_identity_span() {
        let b = complement_basis(&DMatrix::zeros(3, 0));
        assert_abs_diff_eq!(b.tr_mul(&b), DMatrix::identity(3, 3), epsilon = 1e-14);
    }

    #[test]
    fn expm_of_rotation_generator() {
        let t = 0.7;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
        let e = expm(&a);
        let expected = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        assert_abs_diff_eq!(e, expected, epsilon = 1e-14);
    }

    #[test]
    fn expm_large_skew_stays_orthogonal() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 3.0, -7.0, -3.0, 0.0, 2.5, 7.0, -2.5, 0.0]);
        let e = expm(&a);
        assert_abs_diff_eq!(e.tr_mul(&e), DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn expm_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -2.0, 0.0]));
        let e = expm(&a);
        assert_abs_diff_eq!(e[(0, 0)], 1f64.exp(), epsilon = 1e-13);
        assert_abs_diff_eq!(e[(1, 1)], (-2f64).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(e[(2, 2)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median_in_place(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_in_place(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median_in_place(&mut [5.0]), 5.0);
    }

    #[test]
    fn inverse_sqrt_round_trip() {
        let c = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let w = inverse_sqrt_spd(&c).unwrap();
        assert_abs_diff_eq!(&w * &c * &w, DMatrix::identity(2, 2), epsilon = 1e-12);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(inverse_sqrt_spd(&singular).is_none());
    }

    #[test]
    fn completion_follows_standard_basis_order() {
        let v = DVector::from_vec(vec![1.0, 1.0, 0.0]).normalize();
        let full = complete_in_order(&[v], 3, 3);
        assert_eq!(full.len(), 3);
        let m = DMatrix::from_columns(&full);
        assert_abs_diff_eq!(m.tr_mul(&m), DMatrix::identity(3, 3), epsilon = 1e-14);
        // e_0 minus its projection on (1,1,0)/√2 is (1,-1,0)/√2.
        assert_abs_diff_eq!(full[1][0], 1.0 / 2f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(full[2][2], 1.0, epsilon = 1e-14);
    }
}
