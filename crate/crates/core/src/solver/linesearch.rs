//! Derivative-free one-dimensional minimization for step sizes: golden
//! section on a bracket, refined by a one-dimensional Nelder–Mead.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct StepResult {
    pub step: f64,
    pub value: f64,
    pub evals: usize,
}

/// Minimizes `phi` over `[lo, hi]` with at most `max_evals` evaluations. About
/// two thirds of the budget goes to golden section, the rest to Nelder–Mead
/// around the best point. Returns the best evaluated point.
pub(crate) fn minimize_1d(mut phi: impl FnMut(f64) -> f64, lo: f64, hi: f64, max_evals: usize) -> StepResult {
    let golden_budget = (max_evals * 2 / 3).max(2);
    let mut evals = 0;
    let mut best = StepResult {
        step: lo,
        value: f64::INFINITY,
        evals: 0,
    };
    let mut eval = |t: f64, evals: &mut usize, best: &mut StepResult| {
        let v = phi(t);
        *evals += 1;
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v < best.value {
            best.step = t;
            best.value = v;
        }
        v
    };

    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c, &mut evals, &mut best);
    let mut fd = eval(d, &mut evals, &mut best);
    while evals < golden_budget {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c, &mut evals, &mut best);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d, &mut evals, &mut best);
        }
    }

    // Nelder–Mead on a two-vertex simplex.
    let clamp = |t: f64| t.clamp(lo, hi);
    let (mut x1, mut f1) = (best.step, best.value);
    let mut x2 = clamp(x1 + 0.5 * (b - a).max(1e-12));
    if x2 == x1 {
        x2 = clamp(x1 - 0.5 * (b - a).max(1e-12));
    }
    let mut f2 = eval(x2, &mut evals, &mut best);
    while evals < max_evals && (x2 - x1).abs() > 1e-14 * (hi - lo).max(1e-300) {
        if f2 < f1 {
            core::mem::swap(&mut x1, &mut x2);
            core::mem::swap(&mut f1, &mut f2);
        }
        let xr = clamp(2.0 * x1 - x2);
        let fr = eval(xr, &mut evals, &mut best);
        if fr < f1 && evals < max_evals {
            let xe = clamp(3.0 * x1 - 2.0 * x2);
            let fe = eval(xe, &mut evals, &mut best);
            if fe < fr {
                (x2, f2) = (xe, fe);
            } else {
                (x2, f2) = (xr, fr);
            }
        } else if fr < f2 {
            (x2, f2) = (xr, fr);
        } else if evals < max_evals {
            let xc = 0.5 * (x1 + x2);
            let fc = eval(xc, &mut evals, &mut best);
            (x2, f2) = (xc, fc);
        }
    }
    best.evals = evals;
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_minimum() {
        let r = minimize_1d(|t| (t - 0.3) * (t - 0.3), 0.0, 1.0, 30);
        assert!((r.step - 0.3).abs() < 1e-4, "{r:?}");
        assert!(r.evals <= 30);
    }

    #[test]
    fn boundary_minimum() {
        let r = minimize_1d(|t| -t, 0.0, 1.0, 30);
        assert!(r.step > 0.99, "{r:?}");
    }

    #[test]
    fn respects_budget_and_bracket() {
        let mut calls = 0;
        let r = minimize_1d(
            |t| {
                calls += 1;
                assert!((0.0..=1e-3).contains(&t));
                (t - 5e-4).abs()
            },
            0.0,
            1e-3,
            30,
        );
        assert!(calls <= 30);
        assert!((r.step - 5e-4).abs() < 1e-6);
    }
}
