//! Synthetic pairs of datasets with planted relations.
//!
//! `X` has i.i.d. standard normal attributes. The first four attributes of
//! `Y` are functions of `X₁ … X₅` plus Gaussian noise; the remaining ones are
//! independent standard normal noise.
//!
//! | relation  | Y₁            | Y₂            | Y₃       | Y₄             |
//! |-----------|---------------|---------------|----------|----------------|
//! | linear    | X₁ + 2X₂      | X₃ + 2X₄      | X₅       | X₂ + X₅        |
//! | mixed     | X₁² + 2X₂     | X₃³ + 2X₄     | X₅       | X₂ + X₅        |
//! | nonlinear | X₁² + 2X₂     | X₃³ + 2X₄     | exp(X₅)  | cos(X₂ + X₅)   |
//!
//! Noise has standard deviation 0.5, except on Y₄ of the nonlinear relation
//! (0.1).

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::{default_names, DataSet};
use crate::linalg;
use crate::rng::{self, purpose};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RelationKind {
    Linear,
    Mixed,
    Nonlinear,
}

impl RelationKind {
    pub const ALL: [RelationKind; 3] = [Self::Linear, Self::Mixed, Self::Nonlinear];

    pub fn name(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Mixed => "mixed",
            Self::Nonlinear => "nonlinear",
        }
    }

    /// Weights of `X₁ … X₅` in each of the four relations. Attributes that
    /// enter non-linearly get weight 1.
    fn participation(self) -> [[f64; 5]; 4] {
        // Every kind touches the same attributes with the same linear
        // coefficients; non-linear terms (X₁², X₃³, exp X₅, cos(X₂+X₅))
        // count as weight 1.
        [
            [1.0, 2.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 2.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0],
            [0.0, 1.0, 0.0, 0.0, 1.0],
        ]
    }

    fn noise_std(self, relation: usize) -> f64 {
        match (self, relation) {
            (Self::Nonlinear, 3) => 0.1,
            _ => 0.5,
        }
    }

    fn evaluate(self, x: &[f64], noise: &[f64; 4]) -> [f64; 4] {
        let [x1, x2, x3, x4, x5] = [x[0], x[1], x[2], x[3], x[4]];
        let clean = match self {
            Self::Linear => [x1 + 2.0 * x2, x3 + 2.0 * x4, x5, x2 + x5],
            Self::Mixed => [x1 * x1 + 2.0 * x2, x3 * x3 * x3 + 2.0 * x4, x5, x2 + x5],
            Self::Nonlinear => [
                x1 * x1 + 2.0 * x2,
                x3 * x3 * x3 + 2.0 * x4,
                libm::exp(x5),
                libm::cos(x2 + x5),
            ],
        };
        [
            clean[0] + noise[0],
            clean[1] + noise[1],
            clean[2] + noise[2],
            clean[3] + noise[3],
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticSpec {
    pub relation: RelationKind,
    /// Rows of `X`.
    pub n: usize,
    /// Rows of `Y` before dropping.
    pub k: usize,
    /// Attributes of `X` (≥ 5).
    pub m: usize,
    /// Attributes of `Y`: ≥ 5, or exactly `3 + extra_noise_y` for the
    /// noisy-attribute sweep.
    pub l: usize,
    /// Number of noisy attributes `c` in the noisy-attribute sweep (0 = off).
    pub extra_noise_y: usize,
    /// Fraction of `Y` rows removed uniformly at random, in `[0, 1)`.
    pub drop_fraction: f64,
    /// Independently permute the rows of both datasets.
    pub shuffle_rows: bool,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Paired data with `n = k` rows, intact order, nothing dropped.
    pub fn paired(relation: RelationKind, n: usize, m: usize, l: usize, seed: u64) -> Self {
        Self {
            relation,
            n,
            k: n,
            m,
            l,
            extra_noise_y: 0,
            drop_fraction: 0.0,
            shuffle_rows: false,
            seed,
        }
    }

    /// The noisy-attribute sweep shape: `X ∈ ℝ^{5+c}`, `Y ∈ ℝ^{3+c}`.
    pub fn noisy(relation: RelationKind, n: usize, c: usize, seed: u64) -> Self {
        Self {
            extra_noise_y: c,
            ..Self::paired(relation, n, 5 + c, 3 + c, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidSpec(msg));
        if self.n < 2 || self.k < 2 {
            return bad(format!("need n, k >= 2 (got n = {}, k = {})", self.n, self.k));
        }
        if self.m < 5 {
            return bad(format!("m must be at least 5, got {}", self.m));
        }
        let sweep_shape = self.extra_noise_y > 0 && self.l == 3 + self.extra_noise_y;
        if self.l < 4 || (self.l < 5 && !sweep_shape) {
            return bad(format!(
                "l must be at least 5 (or 3 + c with c > 0), got l = {} with c = {}",
                self.l, self.extra_noise_y
            ));
        }
        if !(0.0..1.0).contains(&self.drop_fraction) {
            return bad(format!("drop fraction must lie in [0, 1), got {}", self.drop_fraction));
        }
        if self.k - self.dropped_rows() < 2 {
            return bad("dropping leaves fewer than 2 rows of Y".into());
        }
        Ok(())
    }

    /// `round(ρ·k)`.
    pub fn dropped_rows(&self) -> usize {
        libm::round(self.drop_fraction * self.k as f64) as usize
    }
}

/// Ground-truth canonical directions, orthonormal columns, `r = min(m, l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl GroundTruth {
    pub fn r(&self) -> usize {
        self.u.ncols()
    }

    /// One normalized direction per relation, orthonormalized in relation
    /// order, then completed with the standard basis up to `min(m, l)`
    /// columns.
    pub fn for_relation(kind: RelationKind, m: usize, l: usize) -> Self {
        let r = m.min(l);
        let weights = kind.participation();
        let xs: Vec<DVector<f64>> = weights
            .iter()
            .map(|w| {
                let mut v = DVector::zeros(m);
                for (i, &c) in w.iter().enumerate() {
                    v[i] = c;
                }
                v.normalize()
            })
            .collect();
        let ys: Vec<DVector<f64>> = (0..4)
            .map(|j| {
                let mut v = DVector::zeros(l);
                v[j] = 1.0;
                v
            })
            .collect();
        let build = |vs: &[DVector<f64>], dim: usize| {
            let mut basis = linalg::orthonormalize(vs);
            basis.truncate(r);
            DMatrix::from_columns(&linalg::complete_in_order(&basis, dim, r))
        };
        Self {
            u: build(&xs, m),
            v: build(&ys, l),
        }
    }
}

fn standard_normal(rng: &mut rng::Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws `(X, Y, ground truth)` for the spec. Identical specs give
/// bit-identical outputs.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(DataSet, DataSet, GroundTruth)> {
    spec.validate()?;
    let rows = spec.n.max(spec.k);
    let m = spec.m;
    let l = spec.l;

    let mut x_rng = rng::stream(spec.seed, purpose::X_DRAW, 0);
    // Row-major draw so that growing n keeps the earlier rows.
    let mut latent = DMatrix::zeros(rows, m);
    for i in 0..rows {
        for j in 0..m {
            latent[(i, j)] = standard_normal(&mut x_rng);
        }
    }

    let mut noise_rng = rng::stream(spec.seed, purpose::RELATION_NOISE, 0);
    let mut extra_rng = rng::stream(spec.seed, purpose::Y_EXTRA, 0);
    let mut y = DMatrix::zeros(spec.k, l);
    let mut row = [0.0; 5];
    for i in 0..spec.k {
        let mut noise = [0.0; 4];
        for (r, e) in noise.iter_mut().enumerate() {
            *e = spec.relation.noise_std(r) * standard_normal(&mut noise_rng);
        }
        for (j, v) in row.iter_mut().enumerate() {
            *v = latent[(i, j)];
        }
        let rel = spec.relation.evaluate(&row, &noise);
        for j in 0..4 {
            y[(i, j)] = rel[j];
        }
        for j in 4..l {
            y[(i, j)] = standard_normal(&mut extra_rng);
        }
    }

    let mut x_rows: Vec<usize> = (0..spec.n).collect();
    let mut y_rows: Vec<usize> = (0..spec.k).collect();

    let drop = spec.dropped_rows();
    if drop > 0 {
        let mut drop_rng = rng::stream(spec.seed, purpose::DROP, 0);
        let mut removed = rand::seq::index::sample(&mut drop_rng, spec.k, drop).into_vec();
        removed.sort_unstable();
        y_rows.retain(|i| removed.binary_search(i).is_err());
    }
    if spec.shuffle_rows {
        x_rows.shuffle(&mut rng::stream(spec.seed, purpose::SHUFFLE_X, 0));
        y_rows.shuffle(&mut rng::stream(spec.seed, purpose::SHUFFLE_Y, 0));
    }

    let x_values = linalg::select_rows(&latent, &x_rows);
    let y_values = linalg::select_rows(&y, &y_rows);
    let xs = DataSet::new(x_values, default_names("x", m))?;
    let ys = DataSet::new(y_values, default_names("y", l))?;
    Ok((xs, ys, GroundTruth::for_relation(spec.relation, m, l)))
}
