//! Recovery metric against a known ground truth, and subspace-cluster
//! scoring built on CDA distances.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::dataset::{DataSet, GroundTruth};
use crate::solver::{fit, PairCount, SolverConfig};
use crate::{Error, Result};

/// `(‖UUᵀ − U_gr U_grᵀ‖_F + ‖VVᵀ − V_gr V_grᵀ‖_F) / (2√(2r))`.
///
/// `U` and `V` should have orthonormal columns (use
/// [`crate::linalg::span_basis`] on unnormalized fits); the formula is then
/// zero exactly when both spans match the ground truth.
pub fn subspace_error(u: &DMatrix<f64>, v: &DMatrix<f64>, gt: &GroundTruth) -> Result<f64> {
    let r = gt.r();
    if u.ncols() != r || v.ncols() != r || gt.v.ncols() != r {
        return Err(Error::DimensionMismatch(format!(
            "expected {r} columns on both sides, got {} and {}",
            u.ncols(),
            v.ncols()
        )));
    }
    if u.nrows() != gt.u.nrows() || v.nrows() != gt.v.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "bases are {}x{} and {}x{}, ground truth {}x{} and {}x{}",
            u.nrows(),
            r,
            v.nrows(),
            r,
            gt.u.nrows(),
            r,
            gt.v.nrows(),
            r
        )));
    }
    let du = u * u.transpose() - &gt.u * gt.u.transpose();
    let dv = v * v.transpose() - &gt.v * gt.v.transpose();
    Ok((du.norm() + dv.norm()) / (2.0 * libm::sqrt(2.0 * r as f64)))
}

/// A subspace cluster: its objects restricted to its relevant attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRecord {
    data: DataSet,
    cover: BTreeSet<u64>,
    cost: f64,
}

impl ClusterRecord {
    /// Needs a non-empty cover and a positive cost.
    pub fn new(data: DataSet, cover: BTreeSet<u64>, cost: f64) -> Result<Self> {
        if cover.is_empty() {
            return Err(Error::DegenerateCluster("empty cover".to_string()));
        }
        if !(cost > 0.0 && cost.is_finite()) {
            return Err(Error::DegenerateCluster(format!("cost must be positive, got {cost}")));
        }
        Ok(Self { data, cover, cost })
    }

    pub fn data(&self) -> &DataSet {
        &self.data
    }

    pub fn cover(&self) -> &BTreeSet<u64> {
        &self.cover
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDistance {
    /// Mean objective over the `w` fitted pairs.
    pub distance: f64,
    /// `min` of the two attribute counts.
    pub w: usize,
}

/// Mean CDA objective over `w = min(dim C, dim C′)` pairs. Raw objectives
/// are averaged, so distances are comparable only within one divergence
/// kind.
pub fn cluster_distance(c: &ClusterRecord, other: &ClusterRecord, cfg: &SolverConfig) -> Result<ClusterDistance> {
    let w = c.data.n_cols().min(other.data.n_cols());
    let mut cfg = cfg.clone();
    cfg.r_pairs = PairCount::Fixed(w);
    let basis = fit(&c.data, &other.data, &cfg).map_err(|e| match e {
        Error::ConstantColumn { .. } | Error::DegenerateSample | Error::TooSmall { .. } => {
            Error::DegenerateCluster(e.to_string())
        }
        other => other,
    })?;
    let objectives = &basis.objectives[..w];
    Ok(ClusterDistance {
        distance: objectives.iter().sum::<f64>() / w as f64,
        w,
    })
}

/// `|cov(C) \ ⋃ cov(C′)| / (cost(C) · Σ dist(C, C′))` over the selected
/// clusters. The distance sum counts as 1 when nothing is selected yet, and
/// a zero sum (an already selected copy of `C`) gives 0.
pub fn cluster_potential(c: &ClusterRecord, selected: &[ClusterRecord], cfg: &SolverConfig) -> Result<f64> {
    let distances = selected
        .iter()
        .map(|s| cluster_distance(c, s, cfg).map(|d| d.distance))
        .collect::<Result<Vec<f64>>>()?;
    Ok(potential_from(c, selected, &distances))
}

/// [`cluster_potential`] with precomputed distances to `selected`.
pub fn potential_from(c: &ClusterRecord, selected: &[ClusterRecord], distances: &[f64]) -> f64 {
    let fresh = c
        .cover
        .iter()
        .filter(|id| !selected.iter().any(|s| s.cover.contains(id)))
        .count();
    if fresh == 0 {
        return 0.0;
    }
    let sum = if selected.is_empty() {
        1.0
    } else {
        distances.iter().sum::<f64>()
    };
    if !(sum > 0.0) {
        return 0.0;
    }
    fresh as f64 / (c.cost * sum)
}
