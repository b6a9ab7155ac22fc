//! A divergence with its per-iteration state (bandwidths, ratio models).

use alloc::vec::Vec;

use crate::divergence::bandwidth::DistanceMedians;
use crate::divergence::{mallows, quadratic, Bandwidths, DivergenceKind, DivergenceSpec, Gradient, PearsonFit};
use crate::{Error, Result};

#[derive(Debug, Clone)]
enum State {
    Mallows,
    Quadratic(Option<Bandwidths>),
    Pearson {
        fit: Option<PearsonFit>,
        lambdas: Option<[f64; 2]>,
    },
}

/// Frozen-objective view of a divergence. [`Measure::refresh`] recomputes
/// bandwidths (and refits ratio models) at the current projections; `eval`
/// then treats them as constants.
#[derive(Debug, Clone)]
pub(crate) struct Measure {
    spec: DivergenceSpec,
    medians: Option<DistanceMedians>,
    seed: u64,
    state: State,
    singular_fallback: bool,
}

impl Measure {
    pub fn new(spec: &DivergenceSpec, medians: Option<DistanceMedians>, seed: u64) -> Result<Self> {
        let state = match spec.kind {
            DivergenceKind::Mallows => {
                if spec.mallows_order != 2 {
                    return Err(Error::UnsupportedOrder(spec.mallows_order));
                }
                State::Mallows
            }
            DivergenceKind::Quadratic => State::Quadratic(None),
            DivergenceKind::Pearson | DivergenceKind::PearsonMulti => State::Pearson {
                fit: None,
                lambdas: None,
            },
        };
        if !matches!(state, State::Mallows) && medians.is_none() {
            return Err(Error::InvalidConfig("kernel divergences need distance medians".into()));
        }
        Ok(Self {
            spec: spec.clone(),
            medians,
            seed,
            state,
            singular_fallback: false,
        })
    }

    pub fn singular_fallback(&self) -> bool {
        self.singular_fallback
    }

    /// `x`, `y` are row-major projections of dimension `betas.len()`.
    pub fn refresh(&mut self, x: &[f64], y: &[f64], betas: &[f64]) -> Result<()> {
        let dim = betas.len();
        match &mut self.state {
            State::Mallows => {}
            State::Quadratic(bw) => {
                *bw = Some(self.medians.expect("checked in new").univariate(betas[0])?);
            }
            State::Pearson { fit, lambdas } => {
                let bw = self.medians.expect("checked in new").multivariate(betas)?;
                let f = PearsonFit::fit(x, y, dim, &self.spec, &bw, self.seed, *lambdas)?;
                if lambdas.is_none() {
                    *lambdas = Some(f.lambdas());
                }
                self.singular_fallback |= f.singular_fallback();
                *fit = Some(f);
            }
        }
        Ok(())
    }

    /// Optimized (unclamped) value, with the gradient when `grad` is set.
    /// Without `grad`, `dx` and `dy` are empty.
    pub fn eval(&self, x: &[f64], y: &[f64], grad: bool) -> Gradient {
        match &self.state {
            State::Mallows if grad => mallows::squared_gradient(x, y),
            State::Mallows => value_only(mallows::squared_sum(x, y)),
            State::Quadratic(bw) => {
                let bw = bw.as_ref().expect("refresh before eval");
                if grad {
                    quadratic::value_and_gradient(x, y, bw)
                } else {
                    value_only(quadratic::value(x, y, bw))
                }
            }
            State::Pearson { fit, .. } => {
                let fit = fit.as_ref().expect("refresh before eval");
                if grad {
                    fit.gradient(x, y)
                } else {
                    value_only(fit.value_unclamped(x, y))
                }
            }
        }
    }

    /// Unclamped value with the ratio models refitted at `(x, y)` (the
    /// regularization chosen at the first refresh is kept). Equal to
    /// `eval(x, y, false).value` for the other kinds, whose state depends
    /// only on `betas`, which is unchanged.
    pub fn eval_refit(&self, x: &[f64], y: &[f64], betas: &[f64]) -> f64 {
        match &self.state {
            State::Pearson { lambdas, .. } => {
                let fitted = self
                    .medians
                    .expect("checked in new")
                    .multivariate(betas)
                    .and_then(|bw| PearsonFit::fit(x, y, betas.len(), &self.spec, &bw, self.seed, *lambdas));
                match fitted {
                    Ok(f) => f.value_unclamped(x, y),
                    Err(_) => f64::INFINITY,
                }
            }
            _ => self.eval(x, y, false).value,
        }
    }

    /// Reported value (Pearson directions clamped at zero).
    pub fn report(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.state {
            State::Pearson { fit: Some(fit), .. } => fit.value(x, y),
            _ => self.eval(x, y, false).value,
        }
    }
}

fn value_only(value: f64) -> Gradient {
    Gradient {
        value,
        dx: Vec::new(),
        dy: Vec::new(),
    }
}
