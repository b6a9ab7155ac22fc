//! Symmetric relative Pearson divergence through a least-squares
//! density-ratio model.
//!
//! The ratio `p / (½p + ½q)` is modelled as `g(z) = Σ θᵢ ω(z, cᵢ)` with
//! Gaussian RBF basis functions centered on `d` points of the numerator
//! sample. The coefficients have the closed form `θ = (E + λI)⁻¹ e` and the
//! divergence is read off with the plug-in estimator
//!
//! ```text
//! −1/(4n) Σ ĝ(xᵢ)² − 1/(4k) Σ ĝ(yⱼ)² + 1/n Σ ĝ(xᵢ) − ½
//! ```
//!
//! One direction uses `x` as numerator with bandwidth `σ_X`, the other swaps
//! the roles and uses `σ_Y`. Samples may be points in `ℝʳ` (row-major flat
//! slices), which covers the multivariate variant with the same code.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use super::{Bandwidths, DivergenceSpec, Gradient, ProjectedSamples, Regularization};
use crate::rng::{purpose, stream};
use crate::{Error, Result};

/// Fitted ratio model `ĝ(z) = Σ θᵢ exp(−‖z − cᵢ‖² / 2σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioModel {
    /// `d × dim`, row-major.
    pub centers: Vec<f64>,
    pub dim: usize,
    pub theta: Vec<f64>,
    pub bandwidth: f64,
    pub regularization: f64,
    /// Set when the unregularized system was singular and a positive ridge
    /// value was substituted.
    pub singular_fallback: bool,
}

impl RatioModel {
    pub fn n_centers(&self) -> usize {
        self.theta.len()
    }

    fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    /// `ĝ(z)`.
    pub fn eval(&self, z: &[f64]) -> f64 {
        let inv = 0.5 / (self.bandwidth * self.bandwidth);
        (0..self.n_centers())
            .map(|i| self.theta[i] * libm::exp(-sq_dist(z, self.center(i)) * inv))
            .sum()
    }

    /// `ĝ(z)` and its gradient with respect to `z`, written into `slope`.
    pub fn eval_with_slope(&self, z: &[f64], slope: &mut [f64]) -> f64 {
        let var = self.bandwidth * self.bandwidth;
        let inv = 0.5 / var;
        slope.iter_mut().for_each(|s| *s = 0.0);
        let mut g = 0.0;
        for i in 0..self.n_centers() {
            let c = self.center(i);
            let w = self.theta[i] * libm::exp(-sq_dist(z, c) * inv);
            g += w;
            for ((s, &a), &b) in slope.iter_mut().zip(z).zip(c) {
                *s -= w * (a - b) / var;
            }
        }
        g
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Row-major point set in `ℝ^dim`.
#[derive(Clone, Copy)]
pub(crate) struct Points<'a> {
    pub data: &'a [f64],
    pub dim: usize,
}

impl<'a> Points<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Self {
        debug_assert!(dim > 0 && data.len().is_multiple_of(dim));
        Self { data, dim }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Copy of the rows in sorted order.
    fn sorted(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for i in self.sorted_order() {
            out.extend_from_slice(self.row(i));
        }
        out
    }

    /// Row indices in lexicographic order of the values, ties by index.
    fn sorted_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            for (p, q) in self.row(a).iter().zip(self.row(b)) {
                match p.partial_cmp(q) {
                    Some(Ordering::Equal) | None => continue,
                    Some(o) => return o,
                }
            }
            a.cmp(&b)
        });
        idx
    }
}

/// Picks `d` centers from the sorted sample with a seeded index draw, so the
/// choice depends only on the multiset of points and the seed.
fn select_centers(num: Points, d: usize, seed: u64, direction: u64) -> Vec<f64> {
    let n = num.len();
    let order = num.sorted_order();
    let mut picks: Vec<usize> = if d >= n {
        (0..n).collect()
    } else {
        let mut rng = stream(seed, purpose::CENTERS, direction);
        rand::seq::index::sample(&mut rng, n, d).into_vec()
    };
    picks.sort_unstable();
    let mut centers = Vec::with_capacity(picks.len() * num.dim);
    for p in picks {
        centers.extend_from_slice(num.row(order[p]));
    }
    centers
}

/// Basis matrix `Φ` with `Φ[r, i] = ω(z_r, c_i)` over the given rows.
fn design(points: Points, rows: &[usize], centers: &[f64], sigma: f64) -> DMatrix<f64> {
    let dim = points.dim;
    let d = centers.len() / dim;
    let inv = 0.5 / (sigma * sigma);
    DMatrix::from_fn(rows.len(), d, |r, i| {
        libm::exp(-sq_dist(points.row(rows[r]), &centers[i * dim..(i + 1) * dim]) * inv)
    })
}

fn column_sums(phi: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(phi.ncols(), phi.column_iter().map(|c| c.sum()))
}

/// `E` and `e` for one direction. With `printed_cross_term` the denominator
/// part of `E` uses `ω(y_r, c_i)·ω(x_r, c_j)` over `r < min(n, k)`.
pub(crate) fn build_system(
    num: Points,
    den: Points,
    centers: &[f64],
    sigma: f64,
    printed_cross_term: bool,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = num.len();
    let k = den.len();
    let all_n: Vec<usize> = (0..n).collect();
    let all_k: Vec<usize> = (0..k).collect();
    let phi_x = design(num, &all_n, centers, sigma);
    let phi_y = design(den, &all_k, centers, sigma);
    let e = column_sums(&phi_x) / n as f64;
    let mut big = phi_x.tr_mul(&phi_x) / (2.0 * n as f64);
    if printed_cross_term {
        let t = n.min(k);
        let px = phi_x.rows(0, t);
        let py = phi_y.rows(0, t);
        big += py.tr_mul(&px) / (2.0 * k as f64);
    } else {
        big += phi_y.tr_mul(&phi_y) / (2.0 * k as f64);
    }
    (big, e)
}

/// Solves `(E + λI)θ = e`: Cholesky with an LU fallback, then one step of
/// iterative refinement. `None` if the system is numerically singular.
pub(crate) fn solve_ridge(big: &DMatrix<f64>, e: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let mut a = big.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    let solve = |rhs: &DVector<f64>| -> Option<DVector<f64>> {
        if let Some(ch) = a.clone().cholesky() {
            let l = ch.l();
            let min_diag = l.diagonal().min();
            let max_diag = l.diagonal().max();
            if min_diag > 1e-7 * max_diag {
                return Some(ch.solve(rhs));
            }
        }
        let lu = a.clone().lu();
        let u = lu.u();
        let scale = u.diagonal().abs().max();
        if u.diagonal().iter().any(|v| v.abs() <= 1e-13 * scale) {
            return None;
        }
        lu.solve(rhs)
    };
    let mut theta = solve(e)?;
    let residual = e - &a * &theta;
    if let Some(corr) = solve(&residual) {
        theta += corr;
    }
    theta.iter().all(|v| v.is_finite()).then_some(theta)
}

/// Held-out criterion `½θᵀEθ − eᵀθ`.
fn surrogate(big: &DMatrix<f64>, e: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    0.5 * theta.dot(&(big * theta)) - e.dot(theta)
}

/// K-fold cross-validation over `spec.cv_grid`. Folds are assigned by rank in
/// the sorted sample. Returns the ridge value with the smallest mean held-out
/// criterion, the first one on ties.
fn cross_validate(num: Points, den: Points, centers: &[f64], sigma: f64, spec: &DivergenceSpec) -> f64 {
    let folds = spec.cv_folds.min(num.len()).min(den.len());
    if folds < 2 {
        return DivergenceSpec::DEFAULT_REGULARIZATION;
    }
    let fold_of = |p: Points| {
        let mut f = vec![0usize; p.len()];
        for (rank, &row) in p.sorted_order().iter().enumerate() {
            f[row] = rank % folds;
        }
        f
    };
    let fx = fold_of(num);
    let fy = fold_of(den);
    let all_x: Vec<usize> = (0..num.len()).collect();
    let all_y: Vec<usize> = (0..den.len()).collect();
    let phi_x = design(num, &all_x, centers, sigma);
    let phi_y = design(den, &all_y, centers, sigma);
    let d = centers.len() / num.dim;

    // Per-fold raw sums: Gram of x rows, Gram of y rows, column sums of x rows.
    let mut gx = vec![DMatrix::zeros(d, d); folds];
    let mut gy = vec![DMatrix::zeros(d, d); folds];
    let mut sx = vec![DVector::zeros(d); folds];
    let mut cx = vec![0usize; folds];
    let mut cy = vec![0usize; folds];
    for f in 0..folds {
        let rx: Vec<usize> = all_x.iter().copied().filter(|&i| fx[i] == f).collect();
        let ry: Vec<usize> = all_y.iter().copied().filter(|&i| fy[i] == f).collect();
        let px = phi_x.select_rows(&rx);
        let py = phi_y.select_rows(&ry);
        gx[f] = px.tr_mul(&px);
        gy[f] = py.tr_mul(&py);
        sx[f] = column_sums(&px);
        cx[f] = rx.len();
        cy[f] = ry.len();
    }
    let total_gx: DMatrix<f64> = gx.iter().fold(DMatrix::zeros(d, d), |a, b| a + b);
    let total_gy: DMatrix<f64> = gy.iter().fold(DMatrix::zeros(d, d), |a, b| a + b);
    let total_sx: DVector<f64> = sx.iter().fold(DVector::zeros(d), |a, b| a + b);
    let system = |gxx: &DMatrix<f64>, gyy: &DMatrix<f64>, s: &DVector<f64>, nx: usize, ny: usize| {
        let big = gxx / (2.0 * nx as f64) + gyy / (2.0 * ny as f64);
        (big, s / nx as f64)
    };

    let mut best = (f64::INFINITY, DivergenceSpec::DEFAULT_REGULARIZATION);
    for &lambda in &spec.cv_grid {
        let mut score = 0.0;
        let mut ok = true;
        for f in 0..folds {
            let (e_tr, v_tr) = system(
                &(&total_gx - &gx[f]),
                &(&total_gy - &gy[f]),
                &(&total_sx - &sx[f]),
                num.len() - cx[f],
                den.len() - cy[f],
            );
            let (e_te, v_te) = system(&gx[f], &gy[f], &sx[f], cx[f], cy[f]);
            match solve_ridge(&e_tr, &v_tr, lambda) {
                Some(theta) => score += surrogate(&e_te, &v_te, &theta),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && score / (folds as f64) < best.0 {
            best = (score / folds as f64, lambda);
        }
    }
    best.1
}

fn smallest_positive(spec: &DivergenceSpec) -> f64 {
    spec.cv_grid
        .iter()
        .copied()
        .filter(|l| *l > 0.0)
        .fold(None, |a: Option<f64>, b| Some(a.map_or(b, |a| a.min(b))))
        .unwrap_or(DivergenceSpec::DEFAULT_REGULARIZATION)
}

/// Fits one direction with numerator `num`. `lambda` overrides `spec`'s
/// regularization when given (used to reuse a cross-validated value).
pub(crate) fn fit_direction(
    num: Points,
    den: Points,
    spec: &DivergenceSpec,
    sigma: f64,
    seed: u64,
    direction: u64,
    lambda: Option<f64>,
) -> Result<RatioModel> {
    if num.len() < 2 || den.len() < 2 {
        return Err(Error::InvalidSamples);
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::DegenerateSample);
    }
    // Sums run over sorted rows so the fit depends only on the multisets.
    let (num_sorted, den_sorted) = (num.sorted(), den.sorted());
    let num = Points::new(&num_sorted, num.dim);
    let den = Points::new(&den_sorted, den.dim);
    let centers = select_centers(num, spec.centers_for(num.len()), seed, direction);
    let lambda = match (lambda, spec.regularization) {
        (Some(l), _) | (None, Regularization::Fixed(l)) => l,
        (None, Regularization::CrossValidated) => cross_validate(num, den, &centers, sigma, spec),
    };
    let (big, e) = build_system(num, den, &centers, sigma, spec.printed_cross_term);
    let (theta, regularization, singular_fallback) = match solve_ridge(&big, &e, lambda) {
        Some(t) => (t, lambda, false),
        None if lambda == 0.0 => {
            let l = smallest_positive(spec);
            (solve_ridge(&big, &e, l).ok_or(Error::SingularSystem)?, l, true)
        }
        None => return Err(Error::SingularSystem),
    };
    Ok(RatioModel {
        centers,
        dim: num.dim,
        theta: theta.as_slice().to_vec(),
        bandwidth: sigma,
        regularization,
        singular_fallback,
    })
}

/// Ratio model for the `x → y` direction: centers from `x`, bandwidth `σ_X`.
pub fn fit_ratio_model(s: &ProjectedSamples, spec: &DivergenceSpec, bw: &Bandwidths, seed: u64) -> Result<RatioModel> {
    spec.validate()?;
    fit_direction(Points::new(s.x(), 1), Points::new(s.y(), 1), spec, bw.sigma_x, seed, 0, None)
}

/// The plug-in estimate from model values at the numerator and denominator
/// samples.
pub(crate) fn plug_in(g_num: &[f64], g_den: &[f64]) -> f64 {
    let n = g_num.len() as f64;
    let k = g_den.len() as f64;
    let sq_num: f64 = g_num.iter().map(|g| g * g).sum();
    let sq_den: f64 = g_den.iter().map(|g| g * g).sum();
    let lin: f64 = g_num.iter().sum();
    -sq_num / (4.0 * n) - sq_den / (4.0 * k) + lin / n - 0.5
}

/// Both ratio models of the symmetric divergence.
#[derive(Debug, Clone, PartialEq)]
pub struct PearsonFit {
    /// Numerator `x`, bandwidth `σ_X`.
    pub forward: RatioModel,
    /// Numerator `y`, bandwidth `σ_Y`.
    pub backward: RatioModel,
}

impl PearsonFit {
    /// Fits both directions on row-major point sets of dimension `dim`.
    /// `lambdas` fixes the ridge values (forward, backward), skipping
    /// cross-validation.
    pub fn fit(
        x: &[f64],
        y: &[f64],
        dim: usize,
        spec: &DivergenceSpec,
        bw: &Bandwidths,
        seed: u64,
        lambdas: Option<[f64; 2]>,
    ) -> Result<Self> {
        let (px, py) = (Points::new(x, dim), Points::new(y, dim));
        let forward = fit_direction(px, py, spec, bw.sigma_x, seed, 0, lambdas.map(|l| l[0]))?;
        let backward = fit_direction(py, px, spec, bw.sigma_y, seed, 1, lambdas.map(|l| l[1]))?;
        Ok(Self { forward, backward })
    }

    pub fn lambdas(&self) -> [f64; 2] {
        [self.forward.regularization, self.backward.regularization]
    }

    pub fn singular_fallback(&self) -> bool {
        self.forward.singular_fallback || self.backward.singular_fallback
    }

    /// Unclamped estimates `[PE(p‖q), PE(q‖p)]`.
    pub fn directions(&self, x: &[f64], y: &[f64]) -> [f64; 2] {
        let dim = self.forward.dim;
        let (xs, ys) = (Points::new(x, dim).sorted(), Points::new(y, dim).sorted());
        let (px, py) = (Points::new(&xs, dim), Points::new(&ys, dim));
        let gx_f: Vec<f64> = (0..px.len()).map(|i| self.forward.eval(px.row(i))).collect();
        let gy_f: Vec<f64> = (0..py.len()).map(|j| self.forward.eval(py.row(j))).collect();
        let gy_b: Vec<f64> = (0..py.len()).map(|j| self.backward.eval(py.row(j))).collect();
        let gx_b: Vec<f64> = (0..px.len()).map(|i| self.backward.eval(px.row(i))).collect();
        [plug_in(&gx_f, &gy_f), plug_in(&gy_b, &gx_b)]
    }

    /// Reported value: each direction clamped at 0, then summed.
    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let [a, b] = self.directions(x, y);
        a.max(0.0) + b.max(0.0)
    }

    pub fn value_unclamped(&self, x: &[f64], y: &[f64]) -> f64 {
        let [a, b] = self.directions(x, y);
        a + b
    }

    /// Unclamped value and its gradient with models, centers and bandwidths
    /// frozen. `dx`, `dy` are row-major like the inputs.
    pub fn gradient(&self, x: &[f64], y: &[f64]) -> Gradient {
        let dim = self.forward.dim;
        let (px, py) = (Points::new(x, dim), Points::new(y, dim));
        let mut dx = vec![0.0; x.len()];
        let mut dy = vec![0.0; y.len()];
        let f = accumulate(&self.forward, px, py, &mut dx, &mut dy);
        let b = accumulate(&self.backward, py, px, &mut dy, &mut dx);
        Gradient { value: f + b, dx, dy }
    }
}

/// Adds the gradient of one direction's plug-in estimate and returns its
/// value.
///
/// `∂/∂aᵢ = (1/na)(1 − ĝ(aᵢ)/2)·ĝ′(aᵢ)`, `∂/∂bⱼ = −(1/(2nb))·ĝ(bⱼ)·ĝ′(bⱼ)`.
fn accumulate(model: &RatioModel, num: Points, den: Points, d_num: &mut [f64], d_den: &mut [f64]) -> f64 {
    let dim = num.dim;
    let na = num.len() as f64;
    let nb = den.len() as f64;
    let mut slope = vec![0.0; dim];
    let (mut sq_num, mut lin, mut sq_den) = (0.0, 0.0, 0.0);
    for i in 0..num.len() {
        let g = model.eval_with_slope(num.row(i), &mut slope);
        sq_num += g * g;
        lin += g;
        let w = (1.0 - 0.5 * g) / na;
        for (t, s) in d_num[i * dim..(i + 1) * dim].iter_mut().zip(&slope) {
            *t += w * s;
        }
    }
    for j in 0..den.len() {
        let g = model.eval_with_slope(den.row(j), &mut slope);
        sq_den += g * g;
        let w = -0.5 * g / nb;
        for (t, s) in d_den[j * dim..(j + 1) * dim].iter_mut().zip(&slope) {
            *t += w * s;
        }
    }
    -sq_num / (4.0 * na) - sq_den / (4.0 * nb) + lin / na - 0.5
}

/// Symmetric divergence of univariate projections, each direction clamped at
/// zero.
pub fn pearson_value(s: &ProjectedSamples, spec: &DivergenceSpec, bw: &Bandwidths, seed: u64) -> Result<f64> {
    spec.validate()?;
    Ok(PearsonFit::fit(s.x(), s.y(), 1, spec, bw, seed, None)?.value(s.x(), s.y()))
}

/// Gradient of the unclamped symmetric estimate with both ratio models
/// frozen at their fit on `s`.
pub fn pearson_gradient(
    s: &ProjectedSamples,
    spec: &DivergenceSpec,
    bw: &Bandwidths,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.validate()?;
    let g = PearsonFit::fit(s.x(), s.y(), 1, spec, bw, seed, None)?.gradient(s.x(), s.y());
    Ok((g.dx, g.dy))
}

/// Multivariate variant on `n × r` and `k × r` projections (`Y` already
/// scaled by Γ). Bandwidths follow the multivariate convention, see
/// [`super::multi_bandwidths`].
pub fn pearson_multi_value(
    x_proj: &DMatrix<f64>,
    y_proj: &DMatrix<f64>,
    spec: &DivergenceSpec,
    bw: &Bandwidths,
    seed: u64,
) -> Result<f64> {
    spec.validate()?;
    let r = x_proj.ncols();
    if y_proj.ncols() != r || r == 0 {
        return Err(Error::DimensionMismatch(alloc::format!(
            "projections have {} and {} columns",
            r,
            y_proj.ncols()
        )));
    }
    if x_proj.nrows() < 2 || y_proj.nrows() < 2 || !x_proj.iter().chain(y_proj.iter()).all(|v| v.is_finite()) {
        return Err(Error::InvalidSamples);
    }
    let x = row_major(x_proj);
    let y = row_major(y_proj);
    Ok(PearsonFit::fit(&x, &y, r, spec, bw, seed, None)?.value(&x, &y))
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}
