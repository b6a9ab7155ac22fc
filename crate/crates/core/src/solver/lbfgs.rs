//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The objective may carry state that is refreshed once per outer iteration
//! (bandwidths, ratio models, scaling factors). Within an iteration it is
//! frozen, so curvature pairs and line searches see a fixed function.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::Result;

pub(crate) trait Objective {
    /// Updates the frozen state at `z`. Called before the first evaluation
    /// and after every accepted step.
    fn refresh(&mut self, z: &[f64]) -> Result<()>;
    /// Value at `z`, writing the gradient into `grad`.
    fn eval(&self, z: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LbfgsConfig {
    pub history: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Stop when the relative objective change over `rel_window` iterations
    /// falls below this.
    pub rel_tol: f64,
    pub rel_window: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct LbfgsOutcome {
    pub z: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Steps taken along the steepest-descent direction after the Wolfe
    /// search failed.
    pub fallback_steps: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

fn moved(z: &[f64], d: &[f64], alpha: f64) -> Vec<f64> {
    z.iter().zip(d).map(|(a, b)| a + alpha * b).collect()
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LS_EVALS: usize = 25;

struct Point {
    alpha: f64,
    value: f64,
    slope: f64,
    z: Vec<f64>,
    grad: Vec<f64>,
}

fn probe<O: Objective>(obj: &O, z: &[f64], d: &[f64], alpha: f64) -> Point {
    let zn = moved(z, d, alpha);
    let mut g = vec![0.0; z.len()];
    let mut value = obj.eval(&zn, &mut g);
    if value.is_nan() {
        value = f64::INFINITY;
    }
    Point {
        alpha,
        value,
        slope: dot(&g, d),
        z: zn,
        grad: g,
    }
}

/// Strong-Wolfe search along `d` (bracketing then zoom). `None` if no
/// acceptable point was found within the evaluation budget.
fn wolfe_search<O: Objective>(obj: &O, z: &[f64], f0: f64, slope0: f64, d: &[f64], alpha0: f64) -> Option<Point> {
    let mut evals = 0;
    let mut prev = Point {
        alpha: 0.0,
        value: f0,
        slope: slope0,
        z: z.to_vec(),
        grad: Vec::new(),
    };
    let mut alpha = alpha0;
    let mut first = true;
    while evals < MAX_LS_EVALS {
        let cur = probe(obj, z, d, alpha);
        evals += 1;
        if cur.value > f0 + C1 * alpha * slope0 || (!first && cur.value >= prev.value) {
            return zoom(obj, z, f0, slope0, d, prev, cur, &mut evals);
        }
        if cur.slope.abs() <= -C2 * slope0 {
            return Some(cur);
        }
        if cur.slope >= 0.0 {
            return zoom(obj, z, f0, slope0, d, cur, prev, &mut evals);
        }
        first = false;
        alpha *= 2.0;
        prev = cur;
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn zoom<O: Objective>(
    obj: &O,
    z: &[f64],
    f0: f64,
    slope0: f64,
    d: &[f64],
    mut lo: Point,
    mut hi: Point,
    evals: &mut usize,
) -> Option<Point> {
    while *evals < MAX_LS_EVALS {
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let width = b - a;
        if width <= 1e-16 * b.max(1.0) {
            break;
        }
        // Minimizer of the quadratic through lo (value, slope) and hi (value),
        // safeguarded towards the interval interior.
        let dlt = hi.alpha - lo.alpha;
        let denom = 2.0 * (hi.value - lo.value - lo.slope * dlt);
        let mut alpha = if denom > 0.0 && denom.is_finite() {
            lo.alpha - lo.slope * dlt * dlt / denom
        } else {
            0.5 * (a + b)
        };
        if !(alpha > a + 0.1 * width && alpha < b - 0.1 * width) {
            alpha = 0.5 * (a + b);
        }
        let cur = probe(obj, z, d, alpha);
        *evals += 1;
        if cur.value > f0 + C1 * alpha * slope0 || cur.value >= lo.value {
            hi = cur;
        } else {
            if cur.slope.abs() <= -C2 * slope0 {
                return Some(cur);
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    // Sufficient decrease without the curvature condition is still a usable
    // step.
    (lo.alpha > 0.0 && lo.value <= f0 + C1 * lo.alpha * slope0).then_some(lo)
}

/// Backtracking along the steepest-descent direction.
fn steepest_step<O: Objective>(obj: &O, z: &[f64], f0: f64, g0: &[f64]) -> Option<Point> {
    let gn = norm(g0);
    let d: Vec<f64> = g0.iter().map(|g| -g).collect();
    let slope0 = -gn * gn;
    let mut alpha = 1.0 / gn.max(1e-300);
    for _ in 0..60 {
        let cur = probe(obj, z, &d, alpha);
        if cur.value <= f0 + C1 * alpha * slope0 && cur.value < f0 {
            return Some(cur);
        }
        alpha *= 0.5;
    }
    None
}

pub(crate) fn minimize<O: Objective>(obj: &mut O, z0: Vec<f64>, cfg: &LbfgsConfig) -> Result<LbfgsOutcome> {
    let dim = z0.len();
    let mut z = z0;
    obj.refresh(&z)?;
    let mut g = vec![0.0; dim];
    let mut f = obj.eval(&z, &mut g);
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.history);
    let mut history: Vec<f64> = vec![f];
    let mut fallback_steps = 0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iters {
        let gnorm = norm(&g);
        if gnorm < cfg.grad_tol {
            converged = true;
            break;
        }
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = memory
            .back()
            .map(|(s, y, _)| dot(s, y) / dot(y, y))
            .unwrap_or(1.0 / gnorm);
        q.iter_mut().for_each(|qi| *qi *= gamma);
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            memory.clear();
            d = g.iter().map(|v| -v / gnorm).collect();
            slope = dot(&g, &d);
        }

        let step = match wolfe_search(obj, &z, f, slope, &d, 1.0) {
            Some(p) => Some(p),
            None => {
                memory.clear();
                let p = steepest_step(obj, &z, f, &g);
                if p.is_some() {
                    fallback_steps += 1;
                }
                p
            }
        };
        let Some(p) = step else {
            break;
        };
        iterations += 1;

        let s: Vec<f64> = p.z.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = p.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if memory.len() == cfg.history {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        z = p.z;
        obj.refresh(&z)?;
        f = obj.eval(&z, &mut g);
        history.push(f);
        if history.len() > cfg.rel_window {
            let old = history[history.len() - 1 - cfg.rel_window];
            if (old - f).abs() <= cfg.rel_tol * f.abs().max(1e-300) {
                converged = true;
                break;
            }
        }
    }
    let grad_norm = norm(&g);
    Ok(LbfgsOutcome {
        z,
        value: f,
        iterations,
        grad_norm,
        converged: converged || grad_norm < cfg.grad_tol,
        fallback_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn refresh(&mut self, _z: &[f64]) -> Result<()> {
            Ok(())
        }
        fn eval(&self, z: &[f64], g: &mut [f64]) -> f64 {
            let (x, y) = (z[0], z[1]);
            g[0] = -2.0 * (1.0 - x) - 400.0 * x * (y - x * x);
            g[1] = 200.0 * (y - x * x);
            (1.0 - x) * (1.0 - x) + 100.0 * (y - x * x) * (y - x * x)
        }
    }

    struct Quadratic {
        scale: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn refresh(&mut self, _z: &[f64]) -> Result<()> {
            Ok(())
        }
        fn eval(&self, z: &[f64], g: &mut [f64]) -> f64 {
            let mut f = 0.0;
            for i in 0..z.len() {
                g[i] = self.scale[i] * z[i];
                f += 0.5 * self.scale[i] * z[i] * z[i];
            }
            f
        }
    }

    fn cfg() -> LbfgsConfig {
        LbfgsConfig {
            history: 10,
            max_iters: 500,
            grad_tol: 1e-10,
            rel_tol: 0.0,
            rel_window: 5,
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let out = minimize(&mut Rosenbrock, vec![-1.2, 1.0], &cfg()).unwrap();
        assert!((out.z[0] - 1.0).abs() < 1e-6 && (out.z[1] - 1.0).abs() < 1e-6, "{out:?}");
        assert!(out.converged);
    }

    #[test]
    fn ill_conditioned_quadratic() {
        let mut q = Quadratic {
            scale: (0..20).map(|i| 10f64.powi(i % 5)).collect(),
        };
        let out = minimize(&mut q, vec![1.0; 20], &cfg()).unwrap();
        assert!(out.value < 1e-16, "{out:?}");
    }
}
