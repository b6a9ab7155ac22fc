//! `cda` subcommands.
//!
//! Exit codes: 0 on success, 1 on a runtime or domain error, 2 on a usage
//! error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use cda_core::baselines::fit_linear_cca;
use cda_core::dataset::generate_synthetic;
use cda_core::evaluation::{cluster_distance, potential_from, ClusterRecord};
use cda_core::solver::{fit, Formulation, Side};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::bench::{default_methods, run_benchmark, BenchPlan, Overrides, Suite};
use crate::config::{default_seed, BenchOptions, FitPaths, GenOptions, Method, RunConfig, SolverOptions};
use crate::error::{CliError, Result};
use crate::format::{BasisDocument, GroundTruthDocument};
use crate::io::{format_csv, read_csv, write_csv, write_text};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cda", version, about = "Canonical divergence analysis between two datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic pair of datasets with known canonical directions
    Gen(GenArgs),
    /// Fit a canonical basis between two CSV datasets
    Fit(FitArgs),
    /// Map data into the latent space of a fitted basis
    Project(ProjectArgs),
    /// Run a benchmark suite on synthetic data
    Bench(BenchArgs),
    /// CDA distance between two subspace clusters
    ClusterDist(ClusterArgs),
}

#[derive(Debug, clap::Args)]
struct GenArgs {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    opts: GenOptions,
}

#[derive(Debug, clap::Args)]
struct FitArgs {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print per-pair diagnostics to standard error
    #[arg(long)]
    verbose: bool,
    /// Record wall-clock seconds in the diagnostics (output then differs between runs)
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    paths: FitPaths,
    #[command(flatten)]
    solver: SolverOptions,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SideArg {
    X,
    Y,
}

#[derive(Debug, clap::Args)]
struct ProjectArgs {
    /// Basis JSON written by `fit`
    #[arg(long)]
    basis: PathBuf,
    /// CSV to project
    #[arg(long)]
    data: PathBuf,
    /// Which side of the basis the data belongs to
    #[arg(long, value_enum)]
    side: SideArg,
    /// Output CSV, `-` for standard output
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct BenchArgs {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    opts: BenchOptions,
}

#[derive(Debug, clap::Args)]
struct ClusterArgs {
    /// CSV with the objects of cluster C on its attributes
    c: PathBuf,
    /// CSV for cluster C′
    c2: PathBuf,
    /// JSON list of already selected clusters; prints the potential of C
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Object ids covered by C, comma separated [default: row indices]
    #[arg(long, value_delimiter = ',')]
    cover: Option<Vec<u64>>,
    /// Cost of C [default: 1]
    #[arg(long)]
    cost: Option<f64>,
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOptions,
}

/// One selected cluster in a `cluster-dist` manifest. Relative data paths
/// are resolved against the manifest's directory.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    data: PathBuf,
    cover: Vec<u64>,
    cost: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    selected: Vec<ManifestEntry>,
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => EXIT_USAGE,
                _ => EXIT_FAILURE,
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen(a) => cmd_gen(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Project(a) => cmd_project(a),
        Command::Bench(a) => cmd_bench(a),
        Command::ClusterDist(a) => cmd_cluster_dist(a),
    }
}

fn required(path: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    path.ok_or_else(|| CliError::Usage(format!("missing {flag} (flag or config file)")))
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let file = RunConfig::load(a.config.as_deref())?;
    let opts = a.opts.merged(&file.gen);
    let out_x = required(opts.out_x.clone(), "--out-x")?;
    let out_y = required(opts.out_y.clone(), "--out-y")?;
    let out_gt = required(opts.out_gt.clone(), "--out-gt")?;
    let spec = opts.spec()?;
    let (x, y, gt) = generate_synthetic(&spec)?;
    write_csv(&out_x, x.names(), x.values())?;
    write_csv(&out_y, y.names(), y.values())?;
    write_text(&out_gt, &GroundTruthDocument::new(&gt, spec.relation.name(), spec.seed).to_json())?;
    println!("seed {}", spec.seed);
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let file = RunConfig::load(a.config.as_deref())?;
    let paths = a.paths.merged(&file.fit);
    let solver = a.solver.merged(&file.solver);
    let verbose = a.verbose || file.verbose.unwrap_or(false);
    let x_path = required(paths.x, "--x")?;
    let y_path = required(paths.y, "--y")?;
    let out = paths.out.unwrap_or_else(|| PathBuf::from("-"));
    let doc = match solver.method() {
        Method::Cca => {
            let x = read_csv(&x_path)?;
            let y = read_csv(&y_path)?;
            BasisDocument::from_cca(&fit_linear_cca(&x, &y)?, &x, &y)
        }
        Method::Cda(_) => {
            let cfg = solver.solver_config(Formulation::Cda)?;
            let x = read_csv(&x_path)?;
            let y = read_csv(&y_path)?;
            let basis = fit(&x, &y, &cfg)?;
            if verbose {
                for (i, d) in basis.diagnostics.iter().enumerate() {
                    eprintln!(
                        "pair {i}: objective {:.6e}, {} iterations, gradient norm {:.3e}, converged {}, restart {}",
                        basis.objectives[i], d.iterations, d.grad_norm, d.converged, d.restart
                    );
                }
            }
            let mut doc = BasisDocument::from_basis(&basis);
            if !a.timings {
                for d in &mut doc.diagnostics {
                    d.seconds = None;
                }
            }
            doc
        }
    };
    write_text(&out, &doc.to_json())?;
    if out != Path::new("-") {
        println!("wrote {} pairs to {}", doc.r(), out.display());
    }
    Ok(())
}

fn cmd_project(a: ProjectArgs) -> Result<()> {
    let doc = BasisDocument::load(&a.basis)?;
    let data = read_csv(&a.data)?;
    let side = match a.side {
        SideArg::X => Side::X,
        SideArg::Y => Side::Y,
    };
    let z = doc
        .project(&data, side)
        .map_err(|m| CliError::format(&a.data, m))?;
    let names: Vec<String> = (1..=z.ncols()).map(|j| format!("z{j}")).collect();
    write_text(&a.out, &format_csv(&names, &z))
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let file = RunConfig::load(a.config.as_deref())?;
    let opts = a.opts.merged(&file.bench);
    let suite = opts.suite.unwrap_or(Suite::Table1);
    let seed = match opts.seed {
        Some(s) => s,
        None => default_seed()?,
    };
    let plan = BenchPlan {
        n: opts.n.unwrap_or(1000),
        methods: opts.methods.clone().unwrap_or_else(|| default_methods(suite)),
        overrides: Overrides {
            restarts: opts.restarts,
            max_outer_iters: opts.max_outer_iters,
        },
        jobs: opts.jobs.unwrap_or(1),
        ..BenchPlan::new(suite, opts.trials.unwrap_or(10), seed)
    };
    let report = run_benchmark(&plan)?;
    print!("{}", report.to_table());
    if let Some(out) = &opts.out {
        write_text(out, &report.to_csv())?;
    }
    Ok(())
}

fn row_cover(n: usize) -> BTreeSet<u64> {
    (0..n as u64).collect()
}

fn cmd_cluster_dist(a: ClusterArgs) -> Result<()> {
    let file = RunConfig::load(a.config.as_deref())?;
    let mut solver = a.solver.merged(&file.solver);
    if solver.method.is_none() {
        solver.method = Some(Method::Cda(Formulation::Cda));
    }
    if solver.method == Some(Method::Cca) {
        return Err(CliError::Usage("cluster-dist needs a CDA method, not cca".into()));
    }
    let cfg = solver.solver_config(Formulation::Cda)?;
    let c_data = read_csv(&a.c)?;
    let cover = match &a.cover {
        Some(ids) => ids.iter().copied().collect(),
        None => row_cover(c_data.n_rows()),
    };
    let c = ClusterRecord::new(c_data, cover, a.cost.unwrap_or(1.0))?;
    let c2_data = read_csv(&a.c2)?;
    let c2 = ClusterRecord::new(c2_data.clone(), row_cover(c2_data.n_rows()), 1.0)?;
    let d = cluster_distance(&c, &c2, &cfg)?;
    println!("distance {}", d.distance);
    println!("w {}", d.w);

    if let Some(path) = &a.manifest {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CliError::format(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut selected = Vec::with_capacity(manifest.selected.len());
        for entry in manifest.selected {
            let data = read_csv(&base.join(&entry.data))?;
            selected.push(ClusterRecord::new(data, entry.cover.into_iter().collect(), entry.cost)?);
        }
        let distances = selected
            .iter()
            .map(|s| cluster_distance(&c, s, &cfg).map(|d| d.distance))
            .collect::<cda_core::Result<Vec<f64>>>()?;
        println!("potential {}", potential_from(&c, &selected, &distances));
    }
    Ok(())
}
