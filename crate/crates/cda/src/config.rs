//! Run configuration.
//!
//! Every option can come from a command-line flag or from a TOML file; flags
//! win over the file, the file wins over built-in defaults. Unknown keys in
//! the file are rejected. The default seed is read from `CDA_SEED` when set,
//! else 0.
//!
//! ```toml
//! verbose = true
//!
//! [solver]
//! method = "rcda"
//! divergence = "mallows"
//! restarts = 3
//! r_pairs = 2            # or "auto"
//! regularization = 0.1   # or "cv"
//!
//! [gen]
//! relation = "nonlinear"
//! n = 500
//!
//! [fit]
//! x = "x.csv"
//! y = "y.csv"
//! out = "basis.json"
//!
//! [bench]
//! suite = "table1"
//! trials = 3
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cda_core::dataset::{RelationKind, SyntheticSpec};
use cda_core::divergence::{DivergenceKind, DivergenceSpec, Regularization};
use cda_core::scaling::BetaMode;
use cda_core::solver::{Formulation, PairCount, SolverConfig};
use serde::Deserialize;

use crate::bench::{MethodSpec, Suite};
use crate::error::{CliError, Result};
use crate::format::parse_divergence;

pub const SEED_ENV: &str = "CDA_SEED";

/// Seed used when neither a flag nor the config file sets one.
pub fn default_seed() -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

/// `auto` or a pair count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairs {
    Count(usize),
    Auto,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumberOrName<T> {
    Number(T),
    Name(String),
}

impl<'de> Deserialize<'de> for Pairs {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match NumberOrName::<usize>::deserialize(d)? {
            NumberOrName::Number(n) => Ok(Self::Count(n)),
            NumberOrName::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl FromStr for Pairs {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        s.parse().map(Self::Count).map_err(|_| format!("expected \"auto\" or a count, got {s:?}"))
    }
}

/// Ridge parameter: a number, or `cv` for cross-validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    Fixed(f64),
    CrossValidated,
}

impl<'de> Deserialize<'de> for Ridge {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match NumberOrName::<f64>::deserialize(d)? {
            NumberOrName::Number(v) => Ok(Self::Fixed(v)),
            NumberOrName::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl FromStr for Ridge {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "cv" {
            return Ok(Self::CrossValidated);
        }
        s.parse().map(Self::Fixed).map_err(|_| format!("expected \"cv\" or a number, got {s:?}"))
    }
}

/// What `fit` and `cluster-dist` run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Cca,
    Cda(Formulation),
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "cca" {
            return Ok(Self::Cca);
        }
        Formulation::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .map(Self::Cda)
            .ok_or_else(|| format!("unknown method {s:?} (expected cda, mcda, rcda, mrcda or cca)"))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Cca => f.write_str("cca"),
            Self::Cda(x) => f.write_str(x.name()),
        }
    }
}

/// Merges two option structs field by field, `self` first.
macro_rules! merge_fields {
    ($a:expr, $b:expr, $ty:ident { $($f:ident),* $(,)? }) => {
        $ty { $($f: $a.$f.clone().or_else(|| $b.$f.clone()),)* }
    };
}

/// Solver options. Unset fields take the solver defaults.
#[derive(Debug, Clone, Default, PartialEq, clap::Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    /// cda, mcda, rcda, mrcda or cca [default: rcda]
    #[arg(long)]
    pub method: Option<Method>,
    /// mallows, quadratic, pearson or pearson_multi [default: mallows; pearson_multi for mcda and mrcda]
    #[arg(long, value_parser = parse_divergence)]
    #[serde(default, deserialize_with = "divergence_name")]
    pub divergence: Option<DivergenceKind>,
    /// Random restarts per pair [default: 5]
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Outer iteration cap [default: 300]
    #[arg(long)]
    pub max_outer_iters: Option<usize>,
    /// Gradient-norm stopping threshold [default: 1e-6]
    #[arg(long)]
    pub grad_tolerance: Option<f64>,
    /// Weight of the X reconstruction cost [default: 0.5]
    #[arg(long)]
    pub lambda_recon: Option<f64>,
    /// Weight of the Y reconstruction cost [default: 0.5]
    #[arg(long)]
    pub delta_recon: Option<f64>,
    /// Number of canonical pairs, or auto for min(m, l) [default: auto]
    #[arg(long)]
    pub r_pairs: Option<Pairs>,
    /// Whiten inputs (true/false) [default: only for rcda and mrcda]
    #[arg(long)]
    pub whiten: Option<bool>,
    /// rule or optimized [default: rule]
    #[arg(long, value_parser = parse_beta_mode)]
    pub beta_mode: Option<BetaModeName>,
    /// Magnitude at or below which an entry counts as zero for β [default: 1e-8]
    #[arg(long)]
    pub zero_threshold: Option<f64>,
    /// Mallows order t [default: 2]
    #[arg(long)]
    pub mallows_order: Option<u32>,
    /// Ratio-model kernel centers [default: min(200, n)]
    #[arg(long)]
    pub center_count: Option<usize>,
    /// Ratio-model ridge: a number or cv [default: cv]
    #[arg(long)]
    pub regularization: Option<Ridge>,
    /// Cross-validation folds [default: 5]
    #[arg(long)]
    pub cv_folds: Option<usize>,
    /// Use the asymmetric cross term in the ratio-model matrix [default: false]
    #[arg(long)]
    pub printed_cross_term: Option<bool>,
    /// L-BFGS memory [default: 10]
    #[arg(long)]
    pub lbfgs_history: Option<usize>,
    /// Step-size search budget [default: 30]
    #[arg(long)]
    pub step_evals: Option<usize>,
    /// Seed [default: $CDA_SEED or 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Newtype so the β mode deserializes from `"rule"` / `"optimized"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaModeName {
    Rule,
    Optimized,
}

fn parse_beta_mode(s: &str) -> std::result::Result<BetaModeName, String> {
    match s {
        "rule" => Ok(BetaModeName::Rule),
        "optimized" => Ok(BetaModeName::Optimized),
        _ => Err(format!("expected rule or optimized, got {s:?}")),
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Deserializes a divergence name.
fn divergence_name<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<DivergenceKind>, D::Error> {
    parse_divergence(&String::deserialize(d)?)
        .map(Some)
        .map_err(serde::de::Error::custom)
}

impl SolverOptions {
    pub fn merged(&self, file: &Self) -> Self {
        merge_fields!(self, file, Self {
            method, divergence, restarts, max_outer_iters, grad_tolerance, lambda_recon,
            delta_recon, r_pairs, whiten, beta_mode, zero_threshold, mallows_order,
            center_count, regularization, cv_folds, printed_cross_term, lbfgs_history,
            step_evals, seed,
        })
    }

    pub fn method(&self) -> Method {
        self.method.unwrap_or(Method::Cda(Formulation::Rcda))
    }

    /// Full solver configuration; `fallback` is the formulation used when the
    /// method is CCA.
    pub fn solver_config(&self, fallback: Formulation) -> Result<SolverConfig> {
        let formulation = match self.method() {
            Method::Cda(f) => f,
            Method::Cca => fallback,
        };
        let kind = self.divergence.unwrap_or(if formulation.is_joint() {
            DivergenceKind::PearsonMulti
        } else {
            DivergenceKind::Mallows
        });
        let mut div = DivergenceSpec::new(kind);
        if let Some(t) = self.mallows_order {
            div.mallows_order = t;
        }
        if self.center_count.is_some() {
            div.center_count = self.center_count;
        }
        match self.regularization {
            Some(Ridge::Fixed(l)) => div.regularization = Regularization::Fixed(l),
            Some(Ridge::CrossValidated) => div.regularization = Regularization::CrossValidated,
            None => {}
        }
        if let Some(k) = self.cv_folds {
            div.cv_folds = k;
        }
        if let Some(p) = self.printed_cross_term {
            div.printed_cross_term = p;
        }
        let mut cfg = SolverConfig::new(formulation, div);
        if let Some(BetaModeName::Optimized) = self.beta_mode {
            cfg.scaling.mode = BetaMode::Optimized;
        }
        if let Some(z) = self.zero_threshold {
            cfg.scaling.zero_threshold = z;
        }
        macro_rules! set {
            ($($f:ident => $g:ident),*) => { $(if let Some(v) = self.$f { cfg.$g = v; })* };
        }
        set!(restarts => restarts, max_outer_iters => max_outer_iters, grad_tolerance => grad_tolerance,
             lambda_recon => lambda_recon, delta_recon => delta_recon, lbfgs_history => lbfgs_history,
             step_evals => step_evals);
        cfg.r_pairs = match self.r_pairs {
            None | Some(Pairs::Auto) => PairCount::Auto,
            Some(Pairs::Count(r)) => PairCount::Fixed(r),
        };
        cfg.whiten_inputs = self.whiten;
        cfg.seed = match self.seed {
            Some(s) => s,
            None => default_seed()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Synthetic data options for `gen`.
#[derive(Debug, Clone, Default, PartialEq, clap::Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenOptions {
    /// linear, mixed or nonlinear [default: linear]
    #[arg(long, value_parser = parse_relation)]
    #[serde(default, deserialize_with = "relation_name")]
    pub relation: Option<RelationKind>,
    /// Rows of X [default: 1000]
    #[arg(long)]
    pub n: Option<usize>,
    /// Rows of Y before dropping [default: n]
    #[arg(long)]
    pub k: Option<usize>,
    /// Attributes of X [default: 7, or 5 + noise-attrs]
    #[arg(long)]
    pub m: Option<usize>,
    /// Attributes of Y [default: 5, or 3 + noise-attrs]
    #[arg(long)]
    pub l: Option<usize>,
    /// Noisy attributes c of the noisy-attribute shape [default: 0]
    #[arg(long)]
    pub noise_attrs: Option<usize>,
    /// Fraction of Y rows dropped [default: 0]
    #[arg(long)]
    pub drop: Option<f64>,
    /// Permute the rows of both datasets (true/false) [default: false]
    #[arg(long)]
    pub shuffle: Option<bool>,
    /// Seed [default: $CDA_SEED or 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV for X
    #[arg(long)]
    pub out_x: Option<PathBuf>,
    /// Output CSV for Y
    #[arg(long)]
    pub out_y: Option<PathBuf>,
    /// Output JSON for the ground-truth directions
    #[arg(long)]
    pub out_gt: Option<PathBuf>,
}

fn parse_relation(s: &str) -> std::result::Result<RelationKind, String> {
    RelationKind::ALL
        .into_iter()
        .find(|r| r.name() == s)
        .ok_or_else(|| format!("unknown relation {s:?} (expected linear, mixed or nonlinear)"))
}

fn relation_name<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<RelationKind>, D::Error> {
    parse_relation(&String::deserialize(d)?)
        .map(Some)
        .map_err(serde::de::Error::custom)
}

impl GenOptions {
    pub fn merged(&self, file: &Self) -> Self {
        merge_fields!(self, file, Self {
            relation, n, k, m, l, noise_attrs, drop, shuffle, seed, out_x, out_y, out_gt,
        })
    }

    pub fn spec(&self) -> Result<SyntheticSpec> {
        let relation = self.relation.unwrap_or(RelationKind::Linear);
        let n = self.n.unwrap_or(1000);
        let c = self.noise_attrs.unwrap_or(0);
        let (m, l) = if c > 0 { (5 + c, 3 + c) } else { (7, 5) };
        let seed = match self.seed {
            Some(s) => s,
            None => default_seed()?,
        };
        let spec = SyntheticSpec {
            relation,
            n,
            k: self.k.unwrap_or(n),
            m: self.m.unwrap_or(m),
            l: self.l.unwrap_or(l),
            extra_noise_y: c,
            drop_fraction: self.drop.unwrap_or(0.0),
            shuffle_rows: self.shuffle.unwrap_or(false),
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Input and output paths of `fit`.
#[derive(Debug, Clone, Default, PartialEq, clap::Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitPaths {
    /// CSV for X
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// CSV for Y
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Output basis JSON, `-` for standard output [default: -]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl FitPaths {
    pub fn merged(&self, file: &Self) -> Self {
        merge_fields!(self, file, Self { x, y, out })
    }
}

/// Options of `bench`.
#[derive(Debug, Clone, Default, PartialEq, clap::Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchOptions {
    /// Experiment suite [default: table1]
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    /// Trials per setting [default: 10]
    #[arg(long)]
    pub trials: Option<usize>,
    /// Seed [default: $CDA_SEED or 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rows per dataset [default: 1000]
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated methods such as rcda+mallows,cca [default: per suite]
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<MethodSpec>>,
    /// Restarts per fit [default: 5]
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Outer iteration cap per fit [default: 300]
    #[arg(long)]
    pub max_outer_iters: Option<usize>,
    /// Worker threads [default: 1]
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Per-trial CSV report, `-` for standard output
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl BenchOptions {
    pub fn merged(&self, file: &Self) -> Self {
        merge_fields!(self, file, Self {
            suite, trials, seed, n, methods, restarts, max_outer_iters, jobs, out,
        })
    }
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Print fit diagnostics to standard error [default: false]
    #[serde(default)]
    pub verbose: Option<bool>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub gen: GenOptions,
    #[serde(default)]
    pub fit: FitPaths,
    #[serde(default)]
    pub bench: BenchOptions,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Empty config when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::parse(&text).map_err(|e| match e {
                    CliError::Config(m) => CliError::format(p, m),
                    other => other,
                })
            }
        }
    }
}
