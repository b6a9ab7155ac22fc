//! Reproducible benchmark suites on synthetic data with known ground truth.
//!
//! Each trial draws one base dataset per relation from a per-trial seed; the
//! settings of a suite (row order, dropped rows, noisy attributes) vary one
//! factor of that draw, and every method sees the same data. Fits are timed
//! individually. With `jobs > 1` fits run on worker threads, but results are
//! assembled in task order, so the report does not depend on `jobs`.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use cda_core::baselines::fit_linear_cca;
use cda_core::dataset::{generate_synthetic, RelationKind, SyntheticSpec};
use cda_core::divergence::{DivergenceKind, DivergenceSpec};
use cda_core::evaluation::subspace_error;
use cda_core::linalg;
use cda_core::rng::{self, purpose};
use cda_core::scaling::BetaMode;
use cda_core::solver::{fit, Formulation, SolverConfig};
use cda_core::{DMatrix, DVector, Error};
use rand::RngCore;
use serde::Deserialize;

use crate::error::{CliError, Result};
use crate::format::parse_divergence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    /// Intact, shuffled and down-sampled rows for the three relations.
    Table1,
    /// Noisy attributes c = 2, 4, …, 10 on the non-linear relation.
    NoiseSweep,
    /// Rule-based against optimized β.
    BetaCompare,
    /// Wall-clock of plain against reconstruction formulations.
    Runtime,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Self::Table1, Self::NoiseSweep, Self::BetaCompare, Self::Runtime];

    pub fn name(self) -> &'static str {
        match self {
            Self::Table1 => "table1",
            Self::NoiseSweep => "noise-sweep",
            Self::BetaCompare => "beta-compare",
            Self::Runtime => "runtime",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A method column: `cca`, or `formulation+divergence`, with a `+opt` suffix
/// for optimized β.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodSpec {
    Cca,
    Cda {
        formulation: Formulation,
        divergence: DivergenceKind,
        beta: BetaMode,
    },
}

impl MethodSpec {
    pub fn cda(formulation: Formulation, divergence: DivergenceKind) -> Self {
        Self::Cda {
            formulation,
            divergence,
            beta: BetaMode::Rule,
        }
    }

    pub fn with_optimized_beta(self) -> Self {
        match self {
            Self::Cda {
                formulation,
                divergence,
                ..
            } => Self::Cda {
                formulation,
                divergence,
                beta: BetaMode::Optimized,
            },
            Self::Cca => Self::Cca,
        }
    }

    /// Solver configuration for one fit; `None` for CCA.
    pub fn solver_config(&self, seed: u64, overrides: &Overrides) -> Option<SolverConfig> {
        let Self::Cda {
            formulation,
            divergence,
            beta,
        } = self
        else {
            return None;
        };
        let mut cfg = SolverConfig::new(*formulation, DivergenceSpec::new(*divergence));
        cfg.scaling.mode = *beta;
        cfg.seed = seed;
        if let Some(r) = overrides.restarts {
            cfg.restarts = r;
        }
        if let Some(it) = overrides.max_outer_iters {
            cfg.max_outer_iters = it;
        }
        Some(cfg)
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Cca => f.write_str("cca"),
            Self::Cda {
                formulation,
                divergence,
                beta,
            } => {
                write!(f, "{}+{}", formulation.name(), divergence.name())?;
                if *beta == BetaMode::Optimized {
                    f.write_str("+opt")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for MethodSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "cca" {
            return Ok(Self::Cca);
        }
        let parts: Vec<&str> = s.split('+').collect();
        let bad = || format!("bad method {s:?} (expected cca or formulation+divergence[+opt], e.g. rcda+mallows)");
        if !(2..=3).contains(&parts.len()) || parts.get(2).is_some_and(|p| *p != "opt") {
            return Err(bad());
        }
        let formulation = Formulation::ALL
            .into_iter()
            .find(|f| f.name() == parts[0])
            .ok_or_else(bad)?;
        let divergence = parse_divergence(parts[1])?;
        let m = Self::cda(formulation, divergence);
        Ok(if parts.len() == 3 { m.with_optimized_beta() } else { m })
    }
}

impl<'de> Deserialize<'de> for MethodSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Solver knobs shared by every fit of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub restarts: Option<usize>,
    pub max_outer_iters: Option<usize>,
}

/// One data condition. `pooled` groups settings whose means are also
/// reported together.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub name: String,
    pub pooled: Option<String>,
    /// Seed is replaced per trial.
    pub spec: SyntheticSpec,
}

pub const DROP_FRACTIONS: [f64; 4] = [0.05, 0.1, 0.15, 0.2];
pub const NOISE_ATTRS: [usize; 5] = [2, 4, 6, 8, 10];

pub fn settings(suite: Suite, n: usize) -> Vec<Setting> {
    let plain = |name: String, spec: SyntheticSpec| Setting {
        name,
        pooled: None,
        spec,
    };
    let mut out = Vec::new();
    match suite {
        Suite::Table1 => {
            for rel in RelationKind::ALL {
                let base = SyntheticSpec::paired(rel, n, 7, 5, 0);
                out.push(plain(format!("intact/{}", rel.name()), base.clone()));
                out.push(plain(
                    format!("shuffled/{}", rel.name()),
                    SyntheticSpec {
                        shuffle_rows: true,
                        ..base.clone()
                    },
                ));
                for rho in DROP_FRACTIONS {
                    out.push(Setting {
                        name: format!("drop{rho}/{}", rel.name()),
                        pooled: Some(format!("drop-pooled/{}", rel.name())),
                        spec: SyntheticSpec {
                            drop_fraction: rho,
                            ..base.clone()
                        },
                    });
                }
            }
        }
        Suite::NoiseSweep => {
            for c in NOISE_ATTRS {
                out.push(plain(format!("c{c}/nonlinear"), SyntheticSpec::noisy(RelationKind::Nonlinear, n, c, 0)));
            }
        }
        Suite::BetaCompare => {
            for rel in RelationKind::ALL {
                out.push(plain(format!("intact/{}", rel.name()), SyntheticSpec::paired(rel, n, 7, 5, 0)));
            }
        }
        Suite::Runtime => {
            out.push(plain("intact/linear".into(), SyntheticSpec::paired(RelationKind::Linear, n, 7, 5, 0)));
        }
    }
    out
}

pub fn default_methods(suite: Suite) -> Vec<MethodSpec> {
    use DivergenceKind::*;
    use Formulation::*;
    let main = vec![
        MethodSpec::cda(Cda, Quadratic),
        MethodSpec::cda(Rcda, Mallows),
        MethodSpec::cda(Mrcda, PearsonMulti),
    ];
    match suite {
        Suite::Table1 | Suite::NoiseSweep => main.into_iter().chain([MethodSpec::Cca]).collect(),
        Suite::BetaCompare => main
            .into_iter()
            .flat_map(|m| [m.clone(), m.with_optimized_beta()])
            .collect(),
        Suite::Runtime => vec![
            MethodSpec::cda(Cda, Mallows),
            MethodSpec::cda(Rcda, Mallows),
            MethodSpec::cda(Mcda, PearsonMulti),
            MethodSpec::cda(Mrcda, PearsonMulti),
        ],
    }
}

/// Data seed of a trial; shared by all settings and methods.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    rng::stream(seed, purpose::BENCH, trial as u64).next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub error: f64,
    pub seconds: f64,
}

/// Orthonormal basis of the fitted span with exactly `r` columns. Columns
/// are normalized first so that near-zero columns of unconstrained fits still
/// count; a rank-deficient fit is completed with standard-basis directions.
fn fitted_span(w: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let basis = linalg::span_basis(&linalg::normalize_columns(w));
    if basis.ncols() == r {
        return basis;
    }
    let cols: Vec<DVector<f64>> = basis.column_iter().map(|c| c.into_owned()).collect();
    DMatrix::from_columns(&linalg::complete_in_order(&cols, w.nrows(), r))
}

/// Generates the data of `spec`, fits `method`, and scores the recovered
/// spans. `None` when the method does not apply (CCA without row
/// correspondence).
pub fn evaluate(method: &MethodSpec, spec: &SyntheticSpec, overrides: &Overrides) -> Result<Option<TrialOutcome>> {
    let (x, y, gt) = generate_synthetic(spec)?;
    let r = gt.r();
    let start = Instant::now();
    let (u, v) = match method.solver_config(spec.seed, overrides) {
        None => match fit_linear_cca(&x, &y) {
            Ok(c) => (c.u, c.v),
            Err(Error::NoCorrespondence { .. }) => return Ok(None),
            Err(e) => return Err(e.into()),
        },
        Some(cfg) => {
            let b = fit(&x, &y, &cfg)?;
            (b.u, b.v)
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let error = subspace_error(&fitted_span(&u, r), &fitted_span(&v, r), &gt)?;
    Ok(Some(TrialOutcome { error, seconds }))
}

/// Everything a run depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub suite: Suite,
    pub trials: usize,
    pub seed: u64,
    pub n: usize,
    pub methods: Vec<MethodSpec>,
    pub overrides: Overrides,
    pub jobs: usize,
}

impl BenchPlan {
    pub fn new(suite: Suite, trials: usize, seed: u64) -> Self {
        Self {
            suite,
            trials,
            seed,
            n: 1000,
            methods: default_methods(suite),
            overrides: Overrides::default(),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub setting: String,
    pub method: String,
    pub trial: usize,
    pub error: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub setting: String,
    pub method: String,
    pub trials: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub plan: BenchPlan,
    pub trial_seeds: Vec<u64>,
    pub settings: Vec<Setting>,
    /// Task order: trial, then setting, then method. Inapplicable
    /// combinations are absent.
    pub rows: Vec<BenchRow>,
}

pub fn run_benchmark(plan: &BenchPlan) -> Result<BenchReport> {
    if plan.trials == 0 {
        return Err(CliError::Config("trials must be at least 1".into()));
    }
    if plan.methods.is_empty() {
        return Err(CliError::Config("no methods to run".into()));
    }
    let settings = settings(plan.suite, plan.n);
    let trial_seeds: Vec<u64> = (0..plan.trials).map(|t| trial_seed(plan.seed, t)).collect();
    let mut tasks = Vec::new();
    for (trial, &seed) in trial_seeds.iter().enumerate() {
        for s in &settings {
            for m in &plan.methods {
                tasks.push((trial, s, m, SyntheticSpec { seed, ..s.spec.clone() }));
            }
        }
    }
    let tasks = &tasks;
    let run = |i: usize| {
        let (_, _, m, spec) = &tasks[i];
        evaluate(m, spec, &plan.overrides)
    };
    let jobs = plan.jobs.clamp(1, tasks.len());
    let outcomes: Vec<Result<Option<TrialOutcome>>> = if jobs == 1 {
        (0..tasks.len()).map(run).collect()
    } else {
        let mut slots: Vec<Option<Result<Option<TrialOutcome>>>> = (0..tasks.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..jobs)
                .map(|w| {
                    let run = &run;
                    scope.spawn(move || {
                        (w..tasks.len())
                            .step_by(jobs)
                            .map(|i| (i, run(i)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("benchmark worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every task ran")).collect()
    };
    let mut rows = Vec::new();
    for ((trial, s, m, _), outcome) in tasks.iter().zip(outcomes) {
        if let Some(o) = outcome? {
            rows.push(BenchRow {
                setting: s.name.clone(),
                method: m.to_string(),
                trial: *trial,
                error: o.error,
                seconds: o.seconds,
            });
        }
    }
    Ok(BenchReport {
        plan: plan.clone(),
        trial_seeds,
        settings,
        rows,
    })
}

fn summarize(setting: &str, method: &str, rows: &[&BenchRow]) -> SummaryRow {
    let k = rows.len() as f64;
    let mean = rows.iter().map(|r| r.error).sum::<f64>() / k;
    let var = if rows.len() > 1 {
        rows.iter().map(|r| (r.error - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    SummaryRow {
        setting: setting.to_owned(),
        method: method.to_owned(),
        trials: rows.len(),
        mean_error: mean,
        std_error: var.sqrt(),
        mean_seconds: rows.iter().map(|r| r.seconds).sum::<f64>() / k,
    }
}

impl BenchReport {
    /// Mean and sample standard deviation per setting and method, followed
    /// by each pooled group after its last member.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let methods: Vec<String> = self.plan.methods.iter().map(ToString::to_string).collect();
        let mut out = Vec::new();
        for (i, s) in self.settings.iter().enumerate() {
            for m in &methods {
                let rows: Vec<&BenchRow> = self.rows.iter().filter(|r| r.setting == s.name && &r.method == m).collect();
                if !rows.is_empty() {
                    out.push(summarize(&s.name, m, &rows));
                }
            }
            let Some(group) = &s.pooled else { continue };
            if self.settings.get(i + 1).is_some_and(|next| next.pooled.as_ref() == Some(group)) {
                continue;
            }
            for m in &methods {
                let rows: Vec<&BenchRow> = self
                    .rows
                    .iter()
                    .filter(|r| {
                        &r.method == m
                            && self
                                .settings
                                .iter()
                                .any(|t| t.name == r.setting && t.pooled.as_ref() == Some(group))
                    })
                    .collect();
                if !rows.is_empty() {
                    out.push(summarize(group, m, &rows));
                }
            }
        }
        out
    }

    /// Mean error for one setting (or pooled group) and method.
    pub fn mean_error(&self, setting: &str, method: &str) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| s.setting == setting && s.method == method)
            .map(|s| s.mean_error)
    }

    /// Columns `suite,setting,method,trial,error,seconds`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["suite", "setting", "method", "trial", "error", "seconds"])
            .expect("write to memory");
        for r in &self.rows {
            w.write_record([
                self.plan.suite.name(),
                &r.setting,
                &r.method,
                &r.trial.to_string(),
                &r.error.to_string(),
                &r.seconds.to_string(),
            ])
            .expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8")
    }

    pub fn to_table(&self) -> String {
        let p = &self.plan;
        let mut s = String::new();
        let _ = writeln!(s, "suite {}, {} trials, seed {}, n = {}", p.suite, p.trials, p.seed, p.n);
        let seeds: Vec<String> = self.trial_seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "trial data seeds: {}", seeds.join(" "));
        if p.overrides != Overrides::default() {
            let _ = writeln!(
                s,
                "restarts {}, max outer iterations {}",
                p.overrides.restarts.map_or("default".into(), |r| r.to_string()),
                p.overrides.max_outer_iters.map_or("default".into(), |r| r.to_string())
            );
        }
        let _ = writeln!(
            s,
            "{:<22} {:<26} {:>6} {:>10} {:>10} {:>11}",
            "setting", "method", "trials", "error", "std", "seconds"
        );
        for r in self.summary() {
            let _ = writeln!(
                s,
                "{:<22} {:<26} {:>6} {:>10.4} {:>10.4} {:>11.3}",
                r.setting, r.method, r.trials, r.mean_error, r.std_error, r.mean_seconds
            );
        }
        s
    }
}
