//! One canonical pair at a time (`cda`, `rcda`) and the deflation driver.
//!
//! Previous pairs are removed by working in orthonormal bases `Bx`, `By` of
//! the complements of the previous vectors: the iterate is `u = Bx·a`,
//! `v = By·b`, so orthogonality holds exactly and the search space shrinks by
//! one dimension per pair.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::lbfgs::{self, LbfgsConfig, Objective};
use super::linesearch::minimize_1d;
use super::measure::Measure;
use super::{medians_for, stalled, Clock, PairDiagnostics, Parts, SolverConfig, REL_TOL, REL_WINDOW};
use crate::divergence::bandwidth::DistanceMedians;
use crate::linalg;
use crate::rng::{purpose, stream};
use crate::scaling::BetaMode;
use crate::{Error, Result};

/// One fitted pair in the input coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFit {
    /// Unit norm for `cda`; as fitted (unnormalized) for `rcda`.
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub beta: f64,
    /// Divergence between `Xu` and `β·Yv`.
    pub objective: f64,
    pub diagnostics: PairDiagnostics,
}

impl PairFit {
    pub fn normalized_u(&self) -> DVector<f64> {
        self.u.normalize()
    }

    pub fn normalized_v(&self) -> DVector<f64> {
        self.v.normalize()
    }
}

/// Constrained pair on the unit spheres, orthogonal to the columns of
/// `prev_u` / `prev_v` (which must be orthonormal). `x` and `y` are taken as
/// already preprocessed.
pub fn fit_cda_pair(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &SolverConfig,
    prev_u: &DMatrix<f64>,
    prev_v: &DMatrix<f64>,
) -> Result<PairFit> {
    cfg.validate()?;
    let medians = medians_for(&cfg.divergence, x, y)?;
    let ctx = Reduced::new(x, y, prev_u, prev_v)?;
    best_of_restarts(&ctx, cfg, medians, prev_u.ncols(), false)
}

/// Reconstruction-cost pair (unconstrained norms), orthogonal to the
/// columns of `prev_u` / `prev_v`. `x` and `y` should be centered, and
/// whitened when the configuration asks for it.
pub fn fit_rcda_pair(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &SolverConfig,
    prev_u: &DMatrix<f64>,
    prev_v: &DMatrix<f64>,
) -> Result<PairFit> {
    cfg.validate()?;
    let medians = medians_for(&cfg.divergence, x, y)?;
    let ctx = Reduced::new(x, y, prev_u, prev_v)?;
    best_of_restarts(&ctx, cfg, medians, prev_u.ncols(), true)
}

/// Mean reconstruction cost `(1/n) Σ ‖u uᵀ xᵢ − xᵢ‖²` by direct summation.
pub fn reconstruction_cost(x: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    let n = x.nrows() as f64;
    let mut total = 0.0;
    for row in x.row_iter() {
        let xi = row.transpose();
        let p = u.dot(&xi);
        total += (u * p - xi).norm_squared();
    }
    total / n
}

pub(crate) fn deflate(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &SolverConfig,
    r: usize,
    medians: Option<DistanceMedians>,
) -> Result<Parts> {
    let recon = cfg.formulation.is_reconstruction();
    let mut us: Vec<DVector<f64>> = Vec::with_capacity(r);
    let mut vs: Vec<DVector<f64>> = Vec::with_capacity(r);
    let mut betas = Vec::with_capacity(r);
    let mut objectives = Vec::with_capacity(r);
    let mut diagnostics = Vec::with_capacity(r);
    for i in 0..r {
        let prev_u = normalized(&us, x.ncols());
        let prev_v = normalized(&vs, y.ncols());
        let ctx = Reduced::new(x, y, &prev_u, &prev_v)?;
        let fit = best_of_restarts(&ctx, cfg, medians, i, recon)?;
        us.push(fit.u);
        vs.push(fit.v);
        betas.push(fit.beta);
        objectives.push(fit.objective);
        diagnostics.push(fit.diagnostics);
    }
    Ok(Parts {
        u: DMatrix::from_columns(&us),
        v: DMatrix::from_columns(&vs),
        betas,
        objectives,
        diagnostics,
    })
}

fn normalized(cols: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    if cols.is_empty() {
        return DMatrix::zeros(dim, 0);
    }
    let unit: Vec<DVector<f64>> = cols.iter().map(|c| c.normalize()).collect();
    DMatrix::from_columns(&unit)
}

/// Data expressed in the complement coordinates.
pub(crate) struct Reduced {
    bx: DMatrix<f64>,
    by: DMatrix<f64>,
    xr: DMatrix<f64>,
    yr: DMatrix<f64>,
    /// Full-data `X` and `Y` (for the final objective).
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    /// Second moments `xrᵀxr / n` and `yrᵀyr / k`, and the full-data traces.
    cx: DMatrix<f64>,
    cy: DMatrix<f64>,
    trace_x: f64,
    trace_y: f64,
}

impl Reduced {
    fn new(x: &DMatrix<f64>, y: &DMatrix<f64>, prev_u: &DMatrix<f64>, prev_v: &DMatrix<f64>) -> Result<Self> {
        if prev_u.nrows() != x.ncols() || prev_v.nrows() != y.ncols() {
            return Err(Error::DimensionMismatch("previous vectors do not match the data".into()));
        }
        let bx = linalg::complement_basis(prev_u);
        let by = linalg::complement_basis(prev_v);
        if bx.ncols() == 0 || by.ncols() == 0 {
            return Err(Error::NothingToFit);
        }
        let xr = x * &bx;
        let yr = y * &by;
        let cx = xr.tr_mul(&xr) / x.nrows() as f64;
        let cy = yr.tr_mul(&yr) / y.nrows() as f64;
        let trace_x = x.iter().map(|v| v * v).sum::<f64>() / x.nrows() as f64;
        let trace_y = y.iter().map(|v| v * v).sum::<f64>() / y.nrows() as f64;
        Ok(Self {
            bx,
            by,
            xr,
            yr,
            x: x.clone(),
            y: y.clone(),
            cx,
            cy,
            trace_x,
            trace_y,
        })
    }

    fn p(&self) -> usize {
        self.bx.ncols()
    }

    fn q(&self) -> usize {
        self.by.ncols()
    }

    fn project(&self, a: &DVector<f64>, b: &DVector<f64>, beta: f64) -> (Vec<f64>, Vec<f64>) {
        let px = &self.xr * a;
        let py = (&self.yr * b) * beta;
        (px.as_slice().to_vec(), py.as_slice().to_vec())
    }

    /// Starting point for a restart: leading principal directions for
    /// restart 0, seeded Gaussian directions otherwise.
    fn init(&self, seed: u64, pair: usize, restart: usize) -> (DVector<f64>, DVector<f64>) {
        if restart == 0 {
            let a = leading_direction(&self.xr);
            let b = leading_direction(&self.yr);
            return (a, b);
        }
        let mut rng = stream(seed, purpose::RESTART, ((pair as u64) << 16) | restart as u64);
        let mut draw = |d: usize| loop {
            let v = DVector::<f64>::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let n = v.norm();
            if n > 1e-12 {
                break v / n;
            }
        };
        let a = draw(self.p());
        let b = draw(self.q());
        (a, b)
    }
}

fn leading_direction(rows: &DMatrix<f64>) -> DVector<f64> {
    let c = linalg::covariance(&linalg::center_columns(rows, &linalg::column_means(rows)));
    linalg::top_eigenvectors(&c, 1).column(0).into_owned()
}

/// `β` by the rule, keeping `fallback` when a direction has no non-zero
/// entry.
fn rule_beta(cfg: &SolverConfig, ctx: &Reduced, a: &DVector<f64>, b: &DVector<f64>, fallback: Option<f64>) -> Result<f64> {
    let u = &ctx.bx * a;
    let v = &ctx.by * b;
    match (cfg.scaling.beta(u.as_slice(), v.as_slice()), fallback) {
        (Ok(beta), _) => Ok(beta),
        (Err(Error::DegenerateDirection), Some(beta)) => Ok(beta),
        (Err(e), _) => Err(e),
    }
}

/// Best `β` in `[β₀/2, 2β₀]` for the frozen objective `f`, searched in
/// `log β`.
fn search_beta(beta0: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let ln2 = core::f64::consts::LN_2;
    let r = minimize_1d(|s| f(beta0 * libm::exp(s)), -ln2, ln2, 20);
    beta0 * libm::exp(r.step)
}

struct RestartFit {
    a: DVector<f64>,
    b: DVector<f64>,
    beta: f64,
    /// Value used to rank restarts.
    score: f64,
    iterations: usize,
    grad_norm: f64,
    converged: bool,
    fallback_steps: usize,
    singular_fallback: bool,
}

fn best_of_restarts(
    ctx: &Reduced,
    cfg: &SolverConfig,
    medians: Option<DistanceMedians>,
    pair: usize,
    recon: bool,
) -> Result<PairFit> {
    let clock = Clock::start();
    let mut best: Option<(usize, RestartFit)> = None;
    let mut scores = Vec::with_capacity(cfg.restarts);
    for j in 0..cfg.restarts {
        let (a, b) = ctx.init(cfg.seed, pair, j);
        let fit = if recon {
            rcda_restart(ctx, cfg, medians, pair, a, b)?
        } else {
            cda_restart(ctx, cfg, medians, pair, a, b)?
        };
        scores.push(fit.score);
        // Strict comparison keeps the lowest restart index on ties.
        if best.as_ref().is_none_or(|(_, b)| fit.score < b.score || b.score.is_nan()) {
            best = Some((j, fit));
        }
    }
    let (restart, fit) = best.expect("at least one restart");
    let u = &ctx.bx * &fit.a;
    let v = &ctx.by * &fit.b;
    let objective = final_objective(ctx, cfg, medians, pair, &u, &v, fit.beta)?;
    Ok(PairFit {
        u,
        v,
        beta: fit.beta,
        objective,
        diagnostics: PairDiagnostics {
            iterations: fit.iterations,
            grad_norm: fit.grad_norm,
            converged: fit.converged,
            restart,
            restart_objectives: scores,
            fallback_steps: fit.fallback_steps,
            singular_fallback: fit.singular_fallback,
            seconds: clock.seconds(),
        },
    })
}

/// Reported divergence of `Xu` and `β·Yv` on the full data.
fn final_objective(
    ctx: &Reduced,
    cfg: &SolverConfig,
    medians: Option<DistanceMedians>,
    pair: usize,
    u: &DVector<f64>,
    v: &DVector<f64>,
    beta: f64,
) -> Result<f64> {
    let px = &ctx.x * u;
    let py = (&ctx.y * v) * beta;
    let mut measure = Measure::new(&cfg.divergence, medians, measure_seed(cfg, pair))?;
    measure.refresh(px.as_slice(), py.as_slice(), &[beta])?;
    Ok(measure.report(px.as_slice(), py.as_slice()))
}

fn measure_seed(cfg: &SolverConfig, pair: usize) -> u64 {
    cfg.seed.wrapping_add(pair as u64)
}

/// Rotates the unit vector `a` by angle `theta` towards `-dir` (a unit
/// vector orthogonal to `a`).
fn rotate(a: &DVector<f64>, dir: &DVector<f64>, theta: f64) -> DVector<f64> {
    let out = a * libm::cos(theta) - dir * libm::sin(theta);
    out.normalize()
}

fn tangent(a: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
    g - a * a.dot(g)
}

fn cda_restart(
    ctx: &Reduced,
    cfg: &SolverConfig,
    medians: Option<DistanceMedians>,
    pair: usize,
    mut a: DVector<f64>,
    mut b: DVector<f64>,
) -> Result<RestartFit> {
    let mut measure = Measure::new(&cfg.divergence, medians, measure_seed(cfg, pair))?;
    let mut beta = rule_beta(cfg, ctx, &a, &b, None)?;
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm;
    loop {
        beta = rule_beta(cfg, ctx, &a, &b, Some(beta))?;
        let (px, py) = ctx.project(&a, &b, beta);
        measure.refresh(&px, &py, &[beta])?;
        if cfg.scaling.mode == BetaMode::Optimized {
            beta = search_beta(beta, |bt| {
                let (px, py) = ctx.project(&a, &b, bt);
                measure.eval(&px, &py, false).value
            });
        }
        let (px, py) = ctx.project(&a, &b, beta);
        let g = measure.eval(&px, &py, true);
        let ga = ctx.xr.tr_mul(&DVector::from_column_slice(&g.dx));
        let gb = ctx.yr.tr_mul(&DVector::from_column_slice(&g.dy)) * beta;
        let ra = tangent(&a, &ga);
        let rb = tangent(&b, &gb);
        grad_norm = libm::sqrt(ra.norm_squared() + rb.norm_squared());
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
        // exp(−tA)·a with A = g aᵀ − a gᵀ is a rotation by t‖r‖ in the plane
        // of a and r. Scaling t by 1/‖(ra, rb)‖ puts at most one radian on
        // either vector at τ = 1.
        let (na, nb) = (ra.norm(), rb.norm());
        let da = if na > 0.0 { &ra / na } else { ra.clone() };
        let db = if nb > 0.0 { &rb / nb } else { rb.clone() };
        let (wa, wb) = (na / grad_norm, nb / grad_norm);
        let at = |tau: f64| (rotate(&a, &da, tau * wa), rotate(&b, &db, tau * wb));
        let phi = |tau: f64| {
            let (a2, b2) = at(tau);
            let (px, py) = ctx.project(&a2, &b2, beta);
            measure.eval_refit(&px, &py, &[beta])
        };
        let mut step = minimize_1d(phi, 0.0, 1.0, cfg.step_evals);
        if !(step.value < g.value) {
            step = minimize_1d(phi, 0.0, 1e-3, cfg.step_evals);
        }
        if !(step.value < g.value) {
            break;
        }
        (a, b) = at(step.step);
        iterations += 1;
    }
    let score = {
        let (px, py) = ctx.project(&a, &b, beta);
        measure.report(&px, &py)
    };
    Ok(RestartFit {
        a,
        b,
        beta,
        score,
        iterations,
        grad_norm,
        converged,
        fallback_steps: 0,
        singular_fallback: measure.singular_fallback(),
    })
}

/// `R(a) = tr C + (‖a‖² − 2)·aᵀC_r a`, the closed form of the mean
/// reconstruction cost for `u = Bx·a`.
fn recon_cost(trace: f64, c: &DMatrix<f64>, a: &DVector<f64>) -> f64 {
    let q = a.dot(&(c * a));
    trace + (a.norm_squared() - 2.0) * q
}

fn recon_gradient(c: &DMatrix<f64>, a: &DVector<f64>) -> DVector<f64> {
    let ca = c * a;
    let q = a.dot(&ca);
    a * (2.0 * q) + ca * (2.0 * (a.norm_squared() - 2.0))
}

struct RcdaObjective<'a> {
    ctx: &'a Reduced,
    cfg: &'a SolverConfig,
    measure: Measure,
    beta: f64,
}

impl RcdaObjective<'_> {
    fn split(&self, z: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let p = self.ctx.p();
        (DVector::from_column_slice(&z[..p]), DVector::from_column_slice(&z[p..]))
    }

    fn penalties(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.cfg.lambda_recon * recon_cost(self.ctx.trace_x, &self.ctx.cx, a)
            + self.cfg.delta_recon * recon_cost(self.ctx.trace_y, &self.ctx.cy, b)
    }
}

impl Objective for RcdaObjective<'_> {
    fn refresh(&mut self, z: &[f64]) -> Result<()> {
        let (a, b) = self.split(z);
        let prev = (self.beta > 0.0).then_some(self.beta);
        self.beta = rule_beta(self.cfg, self.ctx, &a, &b, prev)?;
        let (px, py) = self.ctx.project(&a, &b, self.beta);
        self.measure.refresh(&px, &py, &[self.beta])?;
        if self.cfg.scaling.mode == BetaMode::Optimized {
            let (ctx, measure) = (self.ctx, &self.measure);
            self.beta = search_beta(self.beta, |bt| {
                let (px, py) = ctx.project(&a, &b, bt);
                measure.eval(&px, &py, false).value
            });
        }
        Ok(())
    }

    fn eval(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let (a, b) = self.split(z);
        let (px, py) = self.ctx.project(&a, &b, self.beta);
        let g = self.measure.eval(&px, &py, true);
        let ga = self.ctx.xr.tr_mul(&DVector::from_column_slice(&g.dx))
            + recon_gradient(&self.ctx.cx, &a) * self.cfg.lambda_recon;
        let gb = self.ctx.yr.tr_mul(&DVector::from_column_slice(&g.dy)) * self.beta
            + recon_gradient(&self.ctx.cy, &b) * self.cfg.delta_recon;
        let p = self.ctx.p();
        grad[..p].copy_from_slice(ga.as_slice());
        grad[p..].copy_from_slice(gb.as_slice());
        g.value + self.penalties(&a, &b)
    }
}

fn rcda_restart(
    ctx: &Reduced,
    cfg: &SolverConfig,
    medians: Option<DistanceMedians>,
    pair: usize,
    a: DVector<f64>,
    b: DVector<f64>,
) -> Result<RestartFit> {
    let mut obj = RcdaObjective {
        ctx,
        cfg,
        measure: Measure::new(&cfg.divergence, medians, measure_seed(cfg, pair))?,
        beta: 0.0,
    };
    let mut z0 = vec![0.0; ctx.p() + ctx.q()];
    z0[..ctx.p()].copy_from_slice(a.as_slice());
    z0[ctx.p()..].copy_from_slice(b.as_slice());
    let out = lbfgs::minimize(&mut obj, z0, &lbfgs_config(cfg))?;
    let (a, b) = obj.split(&out.z);
    if a.norm() == 0.0 || b.norm() == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    Ok(RestartFit {
        a,
        b,
        beta: obj.beta,
        score: out.value,
        iterations: out.iterations,
        grad_norm: out.grad_norm,
        converged: out.converged,
        fallback_steps: out.fallback_steps,
        singular_fallback: obj.measure.singular_fallback(),
    })
}

pub(crate) fn lbfgs_config(cfg: &SolverConfig) -> LbfgsConfig {
    LbfgsConfig {
        history: cfg.lbfgs_history,
        max_iters: cfg.max_outer_iters,
        grad_tol: cfg.grad_tolerance,
        rel_tol: REL_TOL,
        rel_window: REL_WINDOW,
    }
}
