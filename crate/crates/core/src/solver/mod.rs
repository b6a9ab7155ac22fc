//! The four formulations and their optimizers.
//!
//! - `cda`: pairs found one at a time on the unit spheres, each orthogonal to
//!   the previous ones (deflation). Natural-gradient rotations with a
//!   derivative-free step search.
//! - `mcda`: all `r` pairs at once on the Stiefel manifolds, same optimizer,
//!   multivariate Pearson divergence.
//! - `rcda`: deflation with the unit-norm constraints replaced by
//!   reconstruction costs, solved with L-BFGS.
//! - `mrcda`: the joint version of `rcda`.
//!
//! [`fit`] applies the preprocessing (canonical row order, rescaling to
//! `[0, 1]`, centering and whitening as configured) and records it in the
//! returned [`CanonicalBasis`], so [`project`] can replay it on any data.

mod lbfgs;
mod linesearch;
mod measure;
mod multi;
mod pair;

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::dataset::{prepare, DataSet, FeatureTransform, PrepPlan};
use crate::divergence::bandwidth::DistanceMedians;
use crate::divergence::{DivergenceKind, DivergenceSpec};
use crate::linalg;
use crate::scaling::{ScalingMatrix, ScalingMode};
use crate::{Error, Result};

pub use multi::{fit_mcda, fit_mrcda};
pub use pair::{fit_cda_pair, fit_rcda_pair, reconstruction_cost, PairFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Formulation {
    Cda,
    Mcda,
    Rcda,
    Mrcda,
}

impl Formulation {
    pub const ALL: [Formulation; 4] = [Self::Cda, Self::Mcda, Self::Rcda, Self::Mrcda];

    pub fn name(self) -> &'static str {
        match self {
            Self::Cda => "cda",
            Self::Mcda => "mcda",
            Self::Rcda => "rcda",
            Self::Mrcda => "mrcda",
        }
    }

    /// Reconstruction-cost variants (unconstrained).
    pub fn is_reconstruction(self) -> bool {
        matches!(self, Self::Rcda | Self::Mrcda)
    }

    /// Joint variants that fit all pairs at once.
    pub fn is_joint(self) -> bool {
        matches!(self, Self::Mcda | Self::Mrcda)
    }
}

/// Number of canonical pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PairCount {
    /// `min(m, l)`.
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverConfig {
    pub formulation: Formulation,
    pub divergence: DivergenceSpec,
    pub scaling: ScalingMode,
    /// Weight of the `X` reconstruction cost.
    pub lambda_recon: f64,
    /// Weight of the `Y` reconstruction cost.
    pub delta_recon: f64,
    pub max_outer_iters: usize,
    pub grad_tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
    pub r_pairs: PairCount,
    /// `None`: whiten for the reconstruction formulations only.
    pub whiten_inputs: Option<bool>,
    pub lbfgs_history: usize,
    /// Evaluation budget of the step-size search.
    pub step_evals: usize,
}

impl SolverConfig {
    pub fn new(formulation: Formulation, divergence: DivergenceSpec) -> Self {
        Self {
            formulation,
            divergence,
            scaling: ScalingMode::default(),
            lambda_recon: 0.5,
            delta_recon: 0.5,
            max_outer_iters: 300,
            grad_tolerance: 1e-6,
            restarts: 5,
            seed: 0,
            r_pairs: PairCount::Auto,
            whiten_inputs: None,
            lbfgs_history: 10,
            step_evals: 30,
        }
    }

    pub fn whiten(&self) -> bool {
        self.whiten_inputs.unwrap_or(self.formulation.is_reconstruction())
    }

    pub fn validate(&self) -> Result<()> {
        self.divergence.validate()?;
        self.scaling.validate()?;
        if !(self.lambda_recon > 0.0 && self.delta_recon > 0.0) {
            return Err(Error::InvalidConfig("reconstruction weights must be positive".into()));
        }
        if self.restarts < 1 {
            return Err(Error::InvalidConfig("need at least one restart".into()));
        }
        if !(self.grad_tolerance > 0.0) {
            return Err(Error::InvalidConfig("gradient tolerance must be positive".into()));
        }
        if self.lbfgs_history < 1 || self.step_evals < 4 {
            return Err(Error::InvalidConfig("optimizer budgets too small".into()));
        }
        let kind = self.divergence.kind;
        match self.formulation {
            Formulation::Mcda | Formulation::Mrcda if kind != DivergenceKind::PearsonMulti => {
                Err(Error::UnsupportedDivergence {
                    formulation: self.formulation.name(),
                    found: kind.name(),
                })
            }
            _ if kind == DivergenceKind::Mallows && self.divergence.mallows_order != 2 => {
                Err(Error::UnsupportedOrder(self.divergence.mallows_order))
            }
            _ => Ok(()),
        }
    }

    /// Resolved pair count, capped at `min(m, l)`.
    pub fn pair_count(&self, m: usize, l: usize) -> Result<usize> {
        let r = match self.r_pairs {
            PairCount::Auto => m.min(l),
            PairCount::Fixed(r) => r.min(m.min(l)),
        };
        if r == 0 {
            return Err(Error::NothingToFit);
        }
        Ok(r)
    }
}

/// Convergence record of one pair (or of the joint fit, for `mcda`/`mrcda`).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairDiagnostics {
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Index of the restart that was kept.
    pub restart: usize,
    /// Final objective of every restart; the kept one is the smallest.
    pub restart_objectives: Vec<f64>,
    /// Steps where the strong-Wolfe search failed and a steepest-descent step
    /// was taken instead.
    pub fallback_steps: usize,
    /// A ratio-model system was singular and regularized.
    pub singular_fallback: bool,
    /// Wall-clock seconds (only with the `std` feature).
    pub seconds: Option<f64>,
}

/// Result of [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalBasis {
    pub formulation: Formulation,
    pub divergence: DivergenceKind,
    /// `m × r`, as fitted (not normalized for the reconstruction variants).
    pub u: DMatrix<f64>,
    /// `l × r`.
    pub v: DMatrix<f64>,
    pub gammas: ScalingMatrix,
    /// Divergence of each pair at the fitted vectors. The joint formulations
    /// have a single joint value, repeated for every pair.
    pub objectives: Vec<f64>,
    /// One entry per pair for deflation fits, one entry for joint fits.
    pub diagnostics: Vec<PairDiagnostics>,
    pub x_transform: FeatureTransform,
    pub y_transform: FeatureTransform,
}

impl CanonicalBasis {
    pub fn r(&self) -> usize {
        self.u.ncols()
    }

    pub fn betas(&self) -> &[f64] {
        self.gammas.betas()
    }

    pub fn normalized_u(&self) -> DMatrix<f64> {
        linalg::normalize_columns(&self.u)
    }

    pub fn normalized_v(&self) -> DMatrix<f64> {
        linalg::normalize_columns(&self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    X,
    Y,
}

/// Latent coordinates of `ds`: `X̃U` for side `x`, `ỸVΓ` for side `y`, where
/// the tilde is the basis' recorded preprocessing.
pub fn project(basis: &CanonicalBasis, ds: &DataSet, side: Side) -> Result<DMatrix<f64>> {
    let (transform, w) = match side {
        Side::X => (&basis.x_transform, &basis.u),
        Side::Y => (&basis.y_transform, &basis.v),
    };
    if ds.n_cols() != w.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} columns, basis side has {}",
            ds.n_cols(),
            w.nrows()
        )));
    }
    let values = transform.apply(ds.values())?;
    let mut out = values * w;
    if side == Side::Y {
        for (mut c, b) in out.column_iter_mut().zip(basis.betas()) {
            c *= *b;
        }
    }
    Ok(out)
}

/// Fits a canonical basis between `x` and `y`.
///
/// Rows are put in a canonical order first, so any row permutation of the
/// inputs gives the same result. Columns are rescaled to `[0, 1]` unless the
/// data is flagged as rescaled; the reconstruction formulations also center,
/// and whitening follows [`SolverConfig::whiten`]. Non-convergence within
/// `max_outer_iters` is reported in the diagnostics, not as an error.
pub fn fit(x: &DataSet, y: &DataSet, cfg: &SolverConfig) -> Result<CanonicalBasis> {
    cfg.validate()?;
    let r = cfg.pair_count(x.n_cols(), y.n_cols())?;
    let plan = PrepPlan {
        canonical_order: true,
        center: cfg.formulation.is_reconstruction(),
        whiten: cfg.whiten(),
    };
    let (xp, x_transform) = prepare(x, plan)?;
    let (yp, y_transform) = prepare(y, plan)?;
    let parts = fit_prepared(xp.values(), yp.values(), cfg, r)?;
    Ok(parts.into_basis(cfg, x_transform, y_transform))
}

/// Raw pieces of a fit on prepared data.
#[derive(Debug, Clone)]
pub(crate) struct Parts {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub betas: Vec<f64>,
    pub objectives: Vec<f64>,
    pub diagnostics: Vec<PairDiagnostics>,
}

impl Parts {
    pub fn into_basis(self, cfg: &SolverConfig, x_transform: FeatureTransform, y_transform: FeatureTransform) -> CanonicalBasis {
        CanonicalBasis {
            formulation: cfg.formulation,
            divergence: cfg.divergence.kind,
            u: self.u,
            v: self.v,
            gammas: ScalingMatrix::new(self.betas).expect("scaling factors are non-zero"),
            objectives: self.objectives,
            diagnostics: self.diagnostics,
            x_transform,
            y_transform,
        }
    }
}

pub(crate) fn fit_prepared(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &SolverConfig, r: usize) -> Result<Parts> {
    let medians = medians_for(&cfg.divergence, x, y)?;
    match cfg.formulation {
        Formulation::Cda | Formulation::Rcda => pair::deflate(x, y, cfg, r, medians),
        Formulation::Mcda => multi::mcda(x, y, cfg, r, medians),
        Formulation::Mrcda => multi::mrcda(x, y, cfg, r, medians),
    }
}

pub(crate) fn medians_for(spec: &DivergenceSpec, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Option<DistanceMedians>> {
    if spec.kind == DivergenceKind::Mallows {
        Ok(None)
    } else {
        DistanceMedians::of(x, y).map(Some)
    }
}

/// Wall-clock timer; a no-op without `std`.
pub(crate) struct Clock {
    #[cfg(feature = "std")]
    start: std::time::Instant,
}

impl Clock {
    pub fn start() -> Self {
        Self {
            #[cfg(feature = "std")]
            start: std::time::Instant::now(),
        }
    }

    pub fn seconds(&self) -> Option<f64> {
        #[cfg(feature = "std")]
        {
            Some(self.start.elapsed().as_secs_f64())
        }
        #[cfg(not(feature = "std"))]
        {
            None
        }
    }
}

/// Relative-change stopping rule over a sliding window.
pub(crate) fn stalled(history: &[f64], window: usize, tol: f64) -> bool {
    if history.len() <= window {
        return false;
    }
    let f = history[history.len() - 1];
    let old = history[history.len() - 1 - window];
    (old - f).abs() <= tol * f.abs().max(1e-300)
}

pub(crate) const REL_TOL: f64 = 1e-9;
pub(crate) const REL_WINDOW: usize = 5;
