//! Divergences between projected samples.
//!
//! Three measures are provided, each with an analytic gradient with respect
//! to the projected values:
//!
//! - [`mallows`]: the extended Mallows distance, `Σᵢ Σⱼ |xᵢ − yⱼ|ᵗ`
//! - [`quadratic`]: `∫ (p − q)²` with Gaussian kernel density estimates
//! - [`pearson`]: symmetric relative Pearson divergence through a
//!   least-squares density-ratio model (univariate and multivariate)
//!
//! Gradients treat bandwidths, kernel centers and ratio-model coefficients as
//! constants ("frozen" objectives); the solver refreshes them once per outer
//! iteration.

pub mod bandwidth;
pub mod mallows;
pub mod pearson;
pub mod quadratic;

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

pub use bandwidth::{median_bandwidths, multi_bandwidths, Bandwidths};
pub use mallows::{mallows_gradient, mallows_value};
pub use pearson::{
    fit_ratio_model, pearson_gradient, pearson_multi_value, pearson_value, PearsonFit,
    RatioModel,
};
pub use quadratic::{quadratic_gradient, quadratic_value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DivergenceKind {
    Mallows,
    Quadratic,
    Pearson,
    PearsonMulti,
}

impl DivergenceKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mallows => "mallows",
            Self::Quadratic => "quadratic",
            Self::Pearson => "pearson",
            Self::PearsonMulti => "pearson_multi",
        }
    }
}

/// Ridge parameter of the density-ratio model.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Regularization {
    Fixed(f64),
    /// K-fold cross-validation over [`DivergenceSpec::cv_grid`].
    CrossValidated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BandwidthPolicy {
    MedianHeuristic,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DivergenceSpec {
    pub kind: DivergenceKind,
    /// Mallows order `t ≥ 1`; only `t = 2` has a gradient.
    pub mallows_order: u32,
    /// Kernel centers of the ratio model; `None` means `min(200, n)`.
    pub center_count: Option<usize>,
    pub regularization: Regularization,
    pub cv_grid: Vec<f64>,
    pub cv_folds: usize,
    pub bandwidth_policy: BandwidthPolicy,
    /// Builds the ratio-model matrix with the cross term
    /// `ω(y_r, c_i)·ω(x_r, c_j)` as sometimes printed, instead of the
    /// symmetric `ω(y_r, c_i)·ω(y_r, c_j)`. Kept for comparison only.
    pub printed_cross_term: bool,
}

impl DivergenceSpec {
    /// Fallback ridge parameter when the system is singular and no grid is
    /// available.
    pub const DEFAULT_REGULARIZATION: f64 = 0.1;

    pub fn new(kind: DivergenceKind) -> Self {
        Self {
            kind,
            mallows_order: 2,
            center_count: None,
            regularization: Regularization::CrossValidated,
            cv_grid: vec![1e-3, 1e-2, 1e-1, 1.0],
            cv_folds: 5,
            bandwidth_policy: BandwidthPolicy::MedianHeuristic,
            printed_cross_term: false,
        }
    }

    pub fn mallows() -> Self {
        Self::new(DivergenceKind::Mallows)
    }

    pub fn quadratic() -> Self {
        Self::new(DivergenceKind::Quadratic)
    }

    pub fn pearson() -> Self {
        Self::new(DivergenceKind::Pearson)
    }

    pub fn pearson_multi() -> Self {
        Self::new(DivergenceKind::PearsonMulti)
    }

    /// `d = min(200, n)` unless overridden; never more than `n`.
    pub fn centers_for(&self, n: usize) -> usize {
        self.center_count.unwrap_or(200).min(n).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mallows_order < 1 {
            return Err(Error::InvalidConfig("Mallows order must be >= 1".into()));
        }
        if let Regularization::Fixed(l) = self.regularization {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidConfig("regularization must be >= 0".into()));
            }
        }
        if self.regularization == Regularization::CrossValidated {
            if self.cv_grid.is_empty() || self.cv_grid.iter().any(|l| !(*l >= 0.0)) {
                return Err(Error::InvalidConfig(
                    "cross-validation grid must be non-empty and nonnegative".into(),
                ));
            }
            if self.cv_folds < 2 {
                return Err(Error::InvalidConfig("need at least 2 folds".into()));
            }
        }
        if self.center_count == Some(0) {
            return Err(Error::InvalidConfig("center count must be positive".into()));
        }
        Ok(())
    }
}

/// One-dimensional projections `xᵢ = uᵀ𝐱ᵢ` and `yⱼ = β·vᵀ𝐲ⱼ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSamples {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl ProjectedSamples {
    /// Requires at least two finite values per side.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::check(&x, &y)?;
        Ok(Self { x, y })
    }

    pub(crate) fn check(x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() < 2 || y.len() < 2 || !x.iter().chain(y).all(|v| v.is_finite()) {
            return Err(Error::InvalidSamples);
        }
        Ok(())
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn swapped(&self) -> Self {
        Self {
            x: self.y.clone(),
            y: self.x.clone(),
        }
    }
}

/// Value and gradient of a frozen objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub value: f64,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}
