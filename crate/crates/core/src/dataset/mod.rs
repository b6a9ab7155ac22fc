//! Datasets and preprocessing.
//!
//! A [`DataSet`] is an `n × m` real matrix (rows are realizations, columns are
//! attributes) plus attribute names and flags recording which preprocessing
//! steps produced it. Preprocessing steps are recorded as a
//! [`FeatureTransform`] so the exact same arithmetic can be replayed on new
//! data (or on the training data) after a fit.

mod synthetic;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::linalg;
use crate::{Error, Result};

pub use synthetic::{generate_synthetic, GroundTruth, RelationKind, SyntheticSpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Preprocessing {
    pub rescaled_unit: bool,
    pub centered: bool,
    pub whitened: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    values: DMatrix<f64>,
    names: Vec<String>,
    preprocessing: Preprocessing,
    /// Original `(min, max)` per column, kept after [`rescale_unit`].
    unit_ranges: Option<Vec<(f64, f64)>>,
}

impl DataSet {
    /// Validates shape (n ≥ 2, m ≥ 1), finiteness and the name count.
    pub fn new(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let (rows, cols) = values.shape();
        if rows < 2 || cols < 1 {
            return Err(Error::TooSmall { rows, cols });
        }
        if names.len() != cols {
            return Err(Error::NameCount {
                expected: names.len(),
                found: cols,
            });
        }
        for col in 0..cols {
            for row in 0..rows {
                if !values[(row, col)].is_finite() {
                    return Err(Error::NonFinite { row, col });
                }
            }
        }
        Ok(Self {
            values,
            names,
            preprocessing: Preprocessing::default(),
            unit_ranges: None,
        })
    }

    /// Like [`DataSet::new`] with names `col_0, col_1, …`.
    pub fn unnamed(values: DMatrix<f64>) -> Result<Self> {
        let names = default_names("col_", values.ncols());
        Self::new(values, names)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn preprocessing(&self) -> Preprocessing {
        self.preprocessing
    }

    pub fn unit_ranges(&self) -> Option<&[(f64, f64)]> {
        self.unit_ranges.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    fn derived(&self, values: DMatrix<f64>, preprocessing: Preprocessing) -> Self {
        Self {
            values,
            names: self.names.clone(),
            preprocessing,
            unit_ranges: self.unit_ranges.clone(),
        }
    }

    /// Subset of rows, in the given order. Flags are kept.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        self.derived(linalg::select_rows(&self.values, rows), self.preprocessing)
    }

    /// Rows sorted lexicographically by value. Two datasets holding the same
    /// multiset of rows map to bit-identical canonical forms.
    pub fn canonical_row_order(&self) -> Self {
        let order = linalg::lexicographic_order(&self.values);
        self.select_rows(&order)
    }

    /// Subtracts column means.
    pub fn center(&self) -> Self {
        let means = linalg::column_means(&self.values);
        let mut flags = self.preprocessing;
        flags.centered = true;
        self.derived(linalg::center_columns(&self.values, &means), flags)
    }
}

pub(crate) fn default_names(prefix: &str, count: usize) -> Vec<String> {
    (0..count).map(|i| format!("{prefix}{i}")).collect()
}

/// Maps every column affinely onto `[0, 1]`.
///
/// Each output column attains exactly 0 and 1. Applying it to already
/// rescaled data is the identity.
pub fn rescale_unit(ds: &DataSet) -> Result<DataSet> {
    let ranges = column_ranges(ds)?;
    let values = apply_rescale(&ds.values, &ranges);
    let composed = match &ds.unit_ranges {
        // Already on [0, 1]: the map is the identity.
        Some(prev) if ranges.iter().all(|&r| r == (0.0, 1.0)) => prev.clone(),
        Some(prev) => prev
            .iter()
            .zip(&ranges)
            .map(|(&(plo, phi), &(lo, hi))| {
                let w = phi - plo;
                (plo + lo * w, plo + hi * w)
            })
            .collect(),
        None => ranges,
    };
    let mut flags = ds.preprocessing;
    flags.rescaled_unit = true;
    Ok(DataSet {
        values,
        names: ds.names.clone(),
        preprocessing: flags,
        unit_ranges: Some(composed),
    })
}

fn column_ranges(ds: &DataSet) -> Result<Vec<(f64, f64)>> {
    ds.values
        .column_iter()
        .enumerate()
        .map(|(index, c)| {
            let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                Ok((lo, hi))
            } else {
                Err(Error::ConstantColumn {
                    index,
                    name: ds.names[index].clone(),
                })
            }
        })
        .collect()
}

fn apply_rescale(values: &DMatrix<f64>, ranges: &[(f64, f64)]) -> DMatrix<f64> {
    let mut out = values.clone();
    for (j, mut c) in out.column_iter_mut().enumerate() {
        let (lo, hi) = ranges[j];
        let w = hi - lo;
        c.apply(|v| *v = (*v - lo) / w);
    }
    out
}

/// Centers the data and maps its empirical covariance to the identity
/// (symmetric, "ZCA" whitening: already-white data is left unchanged).
pub fn whiten(ds: &DataSet) -> Result<DataSet> {
    whiten_with_transform(ds).map(|(d, _)| d)
}

pub(crate) fn whiten_with_transform(ds: &DataSet) -> Result<(DataSet, [TransformStep; 2])> {
    let (n, m) = ds.values.shape();
    if n <= m {
        return Err(Error::TooFewRows { n, m });
    }
    let means = linalg::column_means(&ds.values);
    let centered = linalg::center_columns(&ds.values, &means);
    let cov = linalg::covariance(&centered);
    let w = linalg::inverse_sqrt_spd(&cov).ok_or(Error::SingularCovariance)?;
    let values = &centered * &w;
    let mut flags = ds.preprocessing;
    flags.centered = true;
    flags.whitened = true;
    Ok((
        ds.derived(values, flags),
        [TransformStep::Center(means), TransformStep::Linear(w)],
    ))
}

/// One replayable preprocessing step.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformStep {
    /// Column-wise `(v - min) / (max - min)`.
    Rescale(Vec<(f64, f64)>),
    /// Column-wise `v - mean`.
    Center(DVector<f64>),
    /// Right-multiplication of each row by the matrix.
    Linear(DMatrix<f64>),
}

/// The preprocessing applied to one side before fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTransform {
    dim: usize,
    steps: Vec<TransformStep>,
}

impl FeatureTransform {
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            steps: Vec::new(),
        }
    }

    pub fn from_steps(dim: usize, steps: Vec<TransformStep>) -> Result<Self> {
        for s in &steps {
            let ok = match s {
                TransformStep::Rescale(r) => r.len() == dim && r.iter().all(|(lo, hi)| hi > lo),
                TransformStep::Center(m) => m.len() == dim,
                TransformStep::Linear(w) => w.shape() == (dim, dim),
            };
            if !ok {
                return Err(Error::DimensionMismatch(format!(
                    "transform step does not match dimension {dim}"
                )));
            }
        }
        Ok(Self { dim, steps })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> &[TransformStep] {
        &self.steps
    }

    pub fn is_identity(&self) -> bool {
        self.steps.is_empty()
    }

    pub(crate) fn push(&mut self, step: TransformStep) {
        self.steps.push(step);
    }

    /// Replays the steps on raw values.
    pub fn apply(&self, values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if values.ncols() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "data has {} columns, transform expects {}",
                values.ncols(),
                self.dim
            )));
        }
        let mut out = values.clone();
        for s in &self.steps {
            out = match s {
                TransformStep::Rescale(r) => apply_rescale(&out, r),
                TransformStep::Center(m) => linalg::center_columns(&out, m),
                TransformStep::Linear(w) => &out * w,
            };
        }
        Ok(out)
    }
}

/// Which preprocessing the solver applies before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PrepPlan {
    pub canonical_order: bool,
    pub center: bool,
    pub whiten: bool,
}

/// Applies the solver's preprocessing to one side, recording the transform.
///
/// Rescaling to `[0, 1]` is applied unless the data already carries that flag.
pub(crate) fn prepare(ds: &DataSet, plan: PrepPlan) -> Result<(DataSet, FeatureTransform)> {
    let mut transform = FeatureTransform::identity(ds.n_cols());
    let mut cur = if plan.canonical_order {
        ds.canonical_row_order()
    } else {
        ds.clone()
    };
    if !cur.preprocessing.rescaled_unit {
        let ranges = column_ranges(&cur)?;
        cur = rescale_unit(&cur)?;
        transform.push(TransformStep::Rescale(ranges));
    }
    if plan.whiten {
        let (w, steps) = whiten_with_transform(&cur)?;
        cur = w;
        for s in steps {
            transform.push(s);
        }
    } else if plan.center {
        let means = linalg::column_means(&cur.values);
        cur = cur.center();
        transform.push(TransformStep::Center(means));
    }
    Ok((cur, transform))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ds(rows: usize, cols: usize, data: &[f64]) -> DataSet {
        DataSet::unnamed(DMatrix::from_row_slice(rows, cols, data)).unwrap()
    }

    #[test]
    fn new_rejects_bad_input() {
        assert_eq!(
            DataSet::unnamed(DMatrix::from_row_slice(1, 2, &[1.0, 2.0])),
            Err(Error::TooSmall { rows: 1, cols: 2 })
        );
        assert_eq!(
            DataSet::unnamed(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, f64::NAN, 0.0])),
            Err(Error::NonFinite { row: 1, col: 0 })
        );
        let e = DataSet::new(DMatrix::zeros(3, 2), vec!["a".into()]);
        assert!(matches!(e, Err(Error::NameCount { .. })));
    }

    #[test]
    fn generated_names() {
        let d = ds(2, 3, &[0.0; 6]);
        assert_eq!(d.names(), ["col_0", "col_1", "col_2"]);
    }

    #[test]
    fn rescale_maps_onto_unit_interval() {
        let d = ds(3, 1, &[2.0, 4.0, 6.0]);
        let r = rescale_unit(&d).unwrap();
        assert_eq!(r.values().as_slice(), &[0.0, 0.5, 1.0]);
        assert!(r.preprocessing().rescaled_unit);
        assert_eq!(r.unit_ranges(), Some(&[(2.0, 6.0)][..]));
    }

    #[test]
    fn rescale_identity_on_unit_data() {
        let d = ds(3, 1, &[0.0, 0.25, 1.0]);
        let r = rescale_unit(&d).unwrap();
        assert_eq!(r.values(), d.values());
    }

    #[test]
    fn rescale_rejects_constant_column() {
        let d = ds(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        assert!(matches!(
            rescale_unit(&d),
            Err(Error::ConstantColumn { index: 1, .. })
        ));
    }

    #[test]
    fn whiten_identity_on_white_data() {
        // Centered, covariance (1/n)XᵀX = I for n = 4.
        let d = ds(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        let w = whiten(&d).unwrap();
        assert_abs_diff_eq!(w.values(), d.values(), epsilon = 1e-8);
        assert!(w.preprocessing().whitened && w.preprocessing().centered);
    }

    #[test]
    fn whiten_diagonal_covariance() {
        // Covariance [[4, 0], [0, 1]].
        let d = ds(4, 2, &[2.0, 1.0, 2.0, -1.0, -2.0, 1.0, -2.0, -1.0]);
        let w = whiten(&d).unwrap();
        let cov = linalg::covariance(w.values());
        assert_abs_diff_eq!(cov, DMatrix::identity(2, 2), epsilon = 1e-8);
    }

    #[test]
    fn whiten_needs_more_rows_than_columns() {
        let d = ds(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(whiten(&d), Err(Error::TooFewRows { n: 2, m: 2 }));
    }

    #[test]
    fn whiten_singular_covariance() {
        let d = ds(4, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]);
        assert_eq!(whiten(&d), Err(Error::SingularCovariance));
    }

    #[test]
    fn transform_replays_preparation_exactly() {
        let d = ds(5, 2, &[0.3, 9.0, 1.7, 2.0, -4.0, 3.5, 2.2, 8.0, 0.1, -1.0]);
        let plan = PrepPlan {
            canonical_order: false,
            center: true,
            whiten: true,
        };
        let (prepared, t) = prepare(&d, plan).unwrap();
        assert_eq!(&t.apply(d.values()).unwrap(), prepared.values());
    }

    proptest! {
        #[test]
        fn rescale_is_idempotent(data in proptest::collection::vec(-1e3f64..1e3, 12)) {
            let d = ds(6, 2, &data);
            if let Ok(once) = rescale_unit(&d) {
                let twice = rescale_unit(&once).unwrap();
                prop_assert_eq!(&twice, &once);
                for c in once.values().column_iter() {
                    prop_assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
                    prop_assert!(c.iter().any(|&v| v == 0.0) && c.iter().any(|&v| v == 1.0));
                }
            }
        }

        #[test]
        fn whitening_is_correct(data in proptest::collection::vec(-10f64..10.0, 60)) {
            let d = ds(20, 3, &data);
            if let Ok(w) = whiten(&d) {
                for c in w.values().column_iter() {
                    prop_assert!((c.sum() / 20.0).abs() <= 1e-10);
                }
                let cov = linalg::covariance(w.values());
                prop_assert!((cov - DMatrix::<f64>::identity(3, 3)).amax() <= 1e-8);
            }
        }

        #[test]
        fn canonical_order_ignores_row_permutation(
            data in proptest::collection::vec(-5f64..5.0, 18),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let d = ds(6, 3, &data);
            let mut perm: Vec<usize> = (0..6).collect();
            perm.shuffle(&mut crate::rng::stream(seed, 0, 0));
            let shuffled = d.select_rows(&perm);
            prop_assert_eq!(shuffled.canonical_row_order(), d.canonical_row_order());
        }
    }
}
