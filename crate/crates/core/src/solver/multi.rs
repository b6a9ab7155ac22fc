//! Joint formulations: all `r` pairs at once with the multivariate Pearson
//! divergence.
//!
//! `mcda` keeps `UᵀU = VᵀV = I` and moves along geodesic-like curves
//! `U ← exp(−tA)·U` with the skew matrix `A = G Uᵀ − U Gᵀ`. `mrcda` replaces
//! the constraints by reconstruction costs and runs L-BFGS on `(U, V)`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use super::lbfgs::{self, Objective};
use super::linesearch::minimize_1d;
use super::measure::Measure;
use super::pair::lbfgs_config;
use super::{medians_for, stalled, Clock, Formulation, PairDiagnostics, Parts, SolverConfig, REL_TOL, REL_WINDOW};
use super::CanonicalBasis;
use crate::dataset::FeatureTransform;
use crate::divergence::bandwidth::DistanceMedians;
use crate::divergence::pearson::row_major;
use crate::linalg;
use crate::rng::{purpose, stream};
use crate::scaling::BetaMode;
use crate::{Error, Result};

/// Joint constrained fit on prepared data. The returned basis carries
/// identity transforms.
pub fn fit_mcda(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &SolverConfig) -> Result<CanonicalBasis> {
    fit_joint(x, y, cfg, Formulation::Mcda)
}

/// Joint reconstruction-cost fit on prepared (centered) data. The returned
/// basis carries identity transforms.
pub fn fit_mrcda(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &SolverConfig) -> Result<CanonicalBasis> {
    fit_joint(x, y, cfg, Formulation::Mrcda)
}

fn fit_joint(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &SolverConfig, formulation: Formulation) -> Result<CanonicalBasis> {
    if cfg.formulation != formulation {
        return Err(Error::InvalidConfig("configuration is for another formulation".into()));
    }
    cfg.validate()?;
    let r = cfg.pair_count(x.ncols(), y.ncols())?;
    let medians = medians_for(&cfg.divergence, x, y)?;
    let parts = match formulation {
        Formulation::Mcda => mcda(x, y, cfg, r, medians)?,
        _ => mrcda(x, y, cfg, r, medians)?,
    };
    Ok(parts.into_basis(cfg, FeatureTransform::identity(x.ncols()), FeatureTransform::identity(y.ncols())))
}

struct Joint<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DMatrix<f64>,
    r: usize,
}

impl Joint<'_> {
    /// Row-major `XU` and `YVΓ`.
    fn project(&self, u: &DMatrix<f64>, v: &DMatrix<f64>, betas: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let xp = self.x * u;
        let mut yp = self.y * v;
        for (mut c, b) in yp.column_iter_mut().zip(betas) {
            c *= *b;
        }
        (row_major(&xp), row_major(&yp))
    }

    /// Ambient gradients `Xᵀ·dXP` and `Yᵀ·dYP·Γ`.
    fn gradients(&self, dx: &[f64], dy: &[f64], betas: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let dxp = DMatrix::from_row_slice(self.x.nrows(), self.r, dx);
        let dyp = DMatrix::from_row_slice(self.y.nrows(), self.r, dy);
        let gu = self.x.tr_mul(&dxp);
        let mut gv = self.y.tr_mul(&dyp);
        for (mut c, b) in gv.column_iter_mut().zip(betas) {
            c *= *b;
        }
        (gu, gv)
    }

    fn init(&self, seed: u64, restart: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        if restart == 0 {
            let top = |m: &DMatrix<f64>| {
                let c = linalg::covariance(&linalg::center_columns(m, &linalg::column_means(m)));
                linalg::top_eigenvectors(&c, self.r)
            };
            return (top(self.x), top(self.y));
        }
        let mut rng = stream(seed, purpose::RESTART, (u64::from(u16::MAX) << 16) | restart as u64);
        let mut draw = |d: usize| loop {
            let g = DMatrix::<f64>::from_fn(d, self.r, |_, _| StandardNormal.sample(&mut rng));
            let q = linalg::span_basis(&g);
            if q.ncols() == self.r {
                break q;
            }
        };
        let u = draw(self.x.ncols());
        let v = draw(self.y.ncols());
        (u, v)
    }

    /// Per-column rule values, keeping the previous value for degenerate
    /// columns.
    fn rule_betas(&self, cfg: &SolverConfig, u: &DMatrix<f64>, v: &DMatrix<f64>, prev: &[f64]) -> Result<Vec<f64>> {
        (0..self.r)
            .map(|i| {
                let (ui, vi) = (u.column(i), v.column(i));
                match cfg.scaling.beta(ui.as_slice(), vi.as_slice()) {
                    Err(Error::DegenerateDirection) if prev.len() == self.r => Ok(prev[i]),
                    other => other,
                }
            })
            .collect()
    }

    /// Coordinate-wise search of each `βᵢ` in `[βᵢ/2, 2βᵢ]` for the frozen
    /// objective.
    fn search_betas(&self, measure: &Measure, u: &DMatrix<f64>, v: &DMatrix<f64>, betas: &mut [f64]) {
        let ln2 = core::f64::consts::LN_2;
        for i in 0..self.r {
            let b0 = betas[i];
            let mut trial = betas.to_vec();
            let best = minimize_1d(
                |s| {
                    trial[i] = b0 * libm::exp(s);
                    let (xp, yp) = self.project(u, v, &trial);
                    measure.eval(&xp, &yp, false).value
                },
                -ln2,
                ln2,
                20,
            );
            betas[i] = b0 * libm::exp(best.step);
        }
    }
}

fn skew(g: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    g * u.transpose() - u * g.transpose()
}

struct Trial {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    betas: Vec<f64>,
    score: f64,
    iterations: usize,
    grad_norm: f64,
    converged: bool,
    fallback_steps: usize,
    singular_fallback: bool,
}

pub(crate) fn mcda(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &SolverConfig,
    r: usize,
    medians: Option<DistanceMedians>,
) -> Result<Parts> {
    let joint = Joint { x, y, r };
    best_trial(cfg, &joint, medians, |j| mcda_restart(&joint, cfg, medians, j))
}

fn mcda_restart(joint: &Joint, cfg: &SolverConfig, medians: Option<DistanceMedians>, restart: usize) -> Result<Trial> {
    let (mut u, mut v) = joint.init(cfg.seed, restart);
    let mut measure = Measure::new(&cfg.divergence, medians, cfg.seed)?;
    let mut betas: Vec<f64> = Vec::new();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm;
    loop {
        betas = joint.rule_betas(cfg, &u, &v, &betas)?;
        let (xp, yp) = joint.project(&u, &v, &betas);
        measure.refresh(&xp, &yp, &betas)?;
        if cfg.scaling.mode == BetaMode::Optimized {
            joint.search_betas(&measure, &u, &v, &mut betas);
        }
        let (xp, yp) = joint.project(&u, &v, &betas);
        let g = measure.eval(&xp, &yp, true);
        let (gu, gv) = joint.gradients(&g.dx, &g.dy, &betas);
        let au = skew(&gu, &u);
        let av = skew(&gv, &v);
        grad_norm = libm::sqrt(au.norm_squared() + av.norm_squared());
        history.push(g.value);
        if !(grad_norm >= cfg.grad_tolerance) {
            converged = grad_norm < cfg.grad_tolerance;
            break;
        }
        if stalled(&history, REL_WINDOW, REL_TOL) {
            converged = true;
            break;
        }
        if iterations >= cfg.max_outer_iters {
            break;
        }
        let (au, av) = (au / grad_norm, av / grad_norm);
        let at = |tau: f64| {
            let un = linalg::expm(&(&au * -tau)) * &u;
            let vn = linalg::expm(&(&av * -tau)) * &v;
            (un, vn)
        };
        let phi = |tau: f64| {
            let (un, vn) = at(tau);
            let (xp, yp) = joint.project(&un, &vn, &betas);
            measure.eval_refit(&xp, &yp, &betas)
        };
        let mut step = minimize_1d(phi, 0.0, 1.0, cfg.step_evals);
        if !(step.value < g.value) {
            step = minimize_1d(phi, 0.0, 1e-3, cfg.step_evals);
        }
        if !(step.value < g.value) {
            break;
        }
        (u, v) = at(step.step);
        iterations += 1;
    }
    let score = {
        let (xp, yp) = joint.project(&u, &v, &betas);
        measure.report(&xp, &yp)
    };
    Ok(Trial {
        u,
        v,
        betas,
        score,
        iterations,
        grad_norm,
        converged,
        fallback_steps: 0,
        singular_fallback: measure.singular_fallback(),
    })
}

/// `R(U) = tr C − 2 tr(UᵀCU) + tr(UᵀCU·UᵀU)`, the mean reconstruction cost
/// `(1/n) Σ ‖UUᵀxᵢ − xᵢ‖²` with `C = XᵀX/n`.
fn recon_cost(trace: f64, c: &DMatrix<f64>, u: &DMatrix<f64>) -> f64 {
    let cu = c * u;
    let p = u.tr_mul(&cu);
    let q = u.tr_mul(u);
    trace - 2.0 * p.trace() + (p * q).trace()
}

fn recon_gradient(c: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    let cu = c * u;
    let p = u.tr_mul(&cu);
    let q = u.tr_mul(u);
    &cu * -4.0 + &cu * q * 2.0 + u * p * 2.0
}

struct MrcdaObjective<'a> {
    joint: &'a Joint<'a>,
    cfg: &'a SolverConfig,
    measure: Measure,
    betas: Vec<f64>,
    cx: DMatrix<f64>,
    cy: DMatrix<f64>,
    trace_x: f64,
    trace_y: f64,
}

impl MrcdaObjective<'_> {
    fn split(&self, z: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let (m, l, r) = (self.joint.x.ncols(), self.joint.y.ncols(), self.joint.r);
        (
            DMatrix::from_column_slice(m, r, &z[..m * r]),
            DMatrix::from_column_slice(l, r, &z[m * r..]),
        )
    }
}

impl Objective for MrcdaObjective<'_> {
    fn refresh(&mut self, z: &[f64]) -> Result<()> {
        let (u, v) = self.split(z);
        self.betas = self.joint.rule_betas(self.cfg, &u, &v, &self.betas)?;
        let (xp, yp) = self.joint.project(&u, &v, &self.betas);
        self.measure.refresh(&xp, &yp, &self.betas)?;
        if self.cfg.scaling.mode == BetaMode::Optimized {
            let mut betas = core::mem::take(&mut self.betas);
            self.joint.search_betas(&self.measure, &u, &v, &mut betas);
            self.betas = betas;
        }
        Ok(())
    }

    fn eval(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let (u, v) = self.split(z);
        let (xp, yp) = self.joint.project(&u, &v, &self.betas);
        let g = self.measure.eval(&xp, &yp, true);
        let (gu, gv) = self.joint.gradients(&g.dx, &g.dy, &self.betas);
        let gu = gu + recon_gradient(&self.cx, &u) * self.cfg.lambda_recon;
        let gv = gv + recon_gradient(&self.cy, &v) * self.cfg.delta_recon;
        let split = gu.len();
        grad[..split].copy_from_slice(gu.as_slice());
        grad[split..].copy_from_slice(gv.as_slice());
        g.value
            + self.cfg.lambda_recon * recon_cost(self.trace_x, &self.cx, &u)
            + self.cfg.delta_recon * recon_cost(self.trace_y, &self.cy, &v)
    }
}

pub(crate) fn mrcda(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &SolverConfig,
    r: usize,
    medians: Option<DistanceMedians>,
) -> Result<Parts> {
    let joint = Joint { x, y, r };
    let cx = x.tr_mul(x) / x.nrows() as f64;
    let cy = y.tr_mul(y) / y.nrows() as f64;
    let (trace_x, trace_y) = (cx.trace(), cy.trace());
    best_trial(cfg, &joint, medians, |j| {
        let (u, v) = joint.init(cfg.seed, j);
        let mut obj = MrcdaObjective {
            joint: &joint,
            cfg,
            measure: Measure::new(&cfg.divergence, medians, cfg.seed)?,
            betas: Vec::new(),
            cx: cx.clone(),
            cy: cy.clone(),
            trace_x,
            trace_y,
        };
        let mut z0 = vec![0.0; u.len() + v.len()];
        z0[..u.len()].copy_from_slice(u.as_slice());
        z0[u.len()..].copy_from_slice(v.as_slice());
        let out = lbfgs::minimize(&mut obj, z0, &lbfgs_config(cfg))?;
        let (u, v) = obj.split(&out.z);
        if u.column_iter().chain(v.column_iter()).any(|c| c.norm() == 0.0) {
            return Err(Error::DegenerateDirection);
        }
        Ok(Trial {
            u,
            v,
            betas: obj.betas.clone(),
            score: out.value,
            iterations: out.iterations,
            grad_norm: out.grad_norm,
            converged: out.converged,
            fallback_steps: out.fallback_steps,
            singular_fallback: obj.measure.singular_fallback(),
        })
    })
}

fn best_trial(
    cfg: &SolverConfig,
    joint: &Joint,
    medians: Option<DistanceMedians>,
    mut run: impl FnMut(usize) -> Result<Trial>,
) -> Result<Parts> {
    let clock = Clock::start();
    let mut best: Option<(usize, Trial)> = None;
    let mut scores = Vec::with_capacity(cfg.restarts);
    for j in 0..cfg.restarts {
        let t = run(j)?;
        scores.push(t.score);
        if best.as_ref().is_none_or(|(_, b)| t.score < b.score || b.score.is_nan()) {
            best = Some((j, t));
        }
    }
    let (restart, t) = best.expect("at least one restart");
    let (xp, yp) = joint.project(&t.u, &t.v, &t.betas);
    let mut measure = Measure::new(&cfg.divergence, medians, cfg.seed)?;
    measure.refresh(&xp, &yp, &t.betas)?;
    let objective = measure.report(&xp, &yp);
    Ok(Parts {
        objectives: vec![objective; joint.r],
        u: t.u,
        v: t.v,
        betas: t.betas,
        diagnostics: vec![PairDiagnostics {
            iterations: t.iterations,
            grad_norm: t.grad_norm,
            converged: t.converged,
            restart,
            restart_objectives: scores,
            fallback_steps: t.fallback_steps,
            singular_fallback: t.singular_fallback,
            seconds: clock.seconds(),
        }],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recon_matches_direct_sum() {
        let x = DMatrix::from_fn(50, 4, |i, j| libm::sin((i * 7 + j * 3) as f64) + 0.1 * j as f64);
        let u = DMatrix::from_fn(4, 2, |i, j| 0.3 * (i as f64 + 1.0) - 0.5 * j as f64);
        let c = x.tr_mul(&x) / 50.0;
        let direct: f64 = x
            .row_iter()
            .map(|row| {
                let xi = row.transpose();
                (&u * (u.tr_mul(&xi)) - xi).norm_squared()
            })
            .sum::<f64>()
            / 50.0;
        assert!((direct - recon_cost(c.trace(), &c, &u)).abs() <= 1e-10 * direct);
    }

    #[test]
    fn recon_gradient_matches_differences() {
        let c = DMatrix::from_fn(4, 4, |i, j| if i == j { 2.0 } else { 0.2 });
        let u = DMatrix::from_fn(4, 2, |i, j| 0.3 * (i as f64 + 1.0) - 0.5 * j as f64);
        let g = recon_gradient(&c, &u);
        for idx in 0..u.len() {
            let h = 1e-6;
            let mut up = u.clone();
            let mut um = u.clone();
            up[idx] += h;
            um[idx] -= h;
            let fd = (recon_cost(0.0, &c, &up) - recon_cost(0.0, &c, &um)) / (2.0 * h);
            assert!((fd - g[idx]).abs() <= 1e-6 * g[idx].abs().max(1.0));
        }
    }
}
