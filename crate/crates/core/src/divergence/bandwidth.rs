//! Median-heuristic bandwidths.
//!
//! `σ_X` is the median Euclidean distance between raw rows of `X` and `σ_Y`
//! the same for `β·Y`. Medians are taken over pairs `i < j` only: counting the
//! zero self-distances would halve the median and collapse it to zero for
//! small samples.

use nalgebra::DMatrix;

use crate::linalg::pairwise_distance_median;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidths {
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl Bandwidths {
    pub fn new(sigma_x: f64, sigma_y: f64) -> Result<Self> {
        if !(sigma_x > 0.0 && sigma_y > 0.0 && sigma_x.is_finite() && sigma_y.is_finite()) {
            return Err(Error::DegenerateSample);
        }
        Ok(Self { sigma_x, sigma_y })
    }
}

/// Raw-distance medians of both samples, computed once per fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceMedians {
    pub x: f64,
    pub y: f64,
}

impl DistanceMedians {
    pub fn of(x_rows: &DMatrix<f64>, y_rows: &DMatrix<f64>) -> Result<Self> {
        if x_rows.nrows() < 2 || y_rows.nrows() < 2 {
            return Err(Error::InvalidSamples);
        }
        let x = pairwise_distance_median(x_rows);
        let y = pairwise_distance_median(y_rows);
        if !(x > 0.0 && y > 0.0) {
            return Err(Error::DegenerateSample);
        }
        Ok(Self { x, y })
    }

    /// `σ_X = med_X`, `σ_Y = |β|·med_Y`.
    pub fn univariate(&self, beta: f64) -> Result<Bandwidths> {
        Bandwidths::new(self.x, beta.abs() * self.y)
    }

    /// Multivariate convention: `σ_X = r·med_X`, `σ_Y = (Σβᵢ)·med_Y`.
    pub fn multivariate(&self, betas: &[f64]) -> Result<Bandwidths> {
        let sum: f64 = betas.iter().sum();
        Bandwidths::new(betas.len() as f64 * self.x, sum.abs() * self.y)
    }
}

/// Median-heuristic bandwidths for one-dimensional projections.
pub fn median_bandwidths(x_rows: &DMatrix<f64>, y_rows: &DMatrix<f64>, beta: f64) -> Result<Bandwidths> {
    DistanceMedians::of(x_rows, y_rows)?.univariate(beta)
}

/// Bandwidths for `r`-dimensional projections with scaling factors `betas`.
pub fn multi_bandwidths(x_rows: &DMatrix<f64>, y_rows: &DMatrix<f64>, betas: &[f64]) -> Result<Bandwidths> {
    DistanceMedians::of(x_rows, y_rows)?.multivariate(betas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn naive_median(rows: &DMatrix<f64>) -> f64 {
        let mut d = Vec::new();
        for i in 0..rows.nrows() {
            for j in 0..rows.nrows() {
                if i < j {
                    d.push((rows.row(i) - rows.row(j)).norm());
                }
            }
        }
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = d.len();
        if n % 2 == 1 {
            d[n / 2]
        } else {
            (d[n / 2 - 1] + d[n / 2]) / 2.0
        }
    }

    #[test]
    fn single_pair() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let bw = median_bandwidths(&x, &x, 1.0).unwrap();
        assert_eq!(bw.sigma_x, 1.0);
    }

    #[test]
    fn sigma_y_linear_in_beta() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 2.0, 0.5, -1.0, 3.0]);
        let y = DMatrix::from_row_slice(3, 1, &[0.3, 0.9, 2.0]);
        let a = median_bandwidths(&x, &y, 1.5).unwrap();
        let b = median_bandwidths(&x, &y, 3.0).unwrap();
        assert_eq!(b.sigma_y, 2.0 * a.sigma_y);
        assert_eq!(a.sigma_x, b.sigma_x);
    }

    #[test]
    fn degenerate_sample() {
        let x = DMatrix::from_row_slice(3, 1, &[2.0, 2.0, 2.0]);
        let y = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(median_bandwidths(&x, &y, 1.0), Err(Error::DegenerateSample));
    }

    #[test]
    fn matches_quadratic_loop_reference() {
        use rand::Rng;
        let mut rng = crate::rng::stream(17, 0, 0);
        let x = DMatrix::from_fn(100, 4, |_, _| rng.random_range(-2.0..2.0));
        let y = DMatrix::from_fn(100, 3, |_, _| rng.random_range(0.0..1.0));
        let bw = median_bandwidths(&x, &y, 1.0).unwrap();
        assert_eq!(bw.sigma_x, naive_median(&x));
        assert_eq!(bw.sigma_y, naive_median(&y));
    }

    #[test]
    fn multivariate_convention() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 2.0]);
        let y = DMatrix::from_row_slice(2, 1, &[0.0, 3.0]);
        let bw = multi_bandwidths(&x, &y, &[1.0, 0.5, 2.0]).unwrap();
        assert_eq!(bw.sigma_x, 6.0);
        assert_eq!(bw.sigma_y, 10.5);
    }
}
