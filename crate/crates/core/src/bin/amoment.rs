use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use amoment::estimator::{debiased_estimate, ideal_debiased_estimate, naive_estimate, MomentEstimate};
use amoment::experiments::{emit_plot_data, run_study, StudyConfig, StudyFile};
use amoment::functions::{FunctionSpec, QuadraticSpec, TargetFunction};
use amoment::measure::{Domain, Measure, SamplingMode};
use amoment::rng::{derive_seed, Purpose};
use amoment::spectral::{eigendecompose, subspace_recovery_report};
use amoment::verify::{run_checks, separated_interior_centers};
use amoment::{measure::sample_neighbors, Error};

#[derive(Parser)]
#[command(name = "amoment", version, about = "Derivative-free estimation of gradient second-moment matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Naive,
    Debiased,
    IdealDebiased,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study and write rows plus a plot description.
    Study {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plot_spec: PathBuf,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate the second-moment matrix of one function.
    Estimate {
        #[arg(long)]
        function: PathBuf,
        #[arg(long)]
        n_centers: usize,
        #[arg(long)]
        n_min: usize,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        matrix_out: PathBuf,
        /// Neighbor budget; defaults to 2·N·N_min.
        #[arg(long)]
        n_total: Option<usize>,
        #[arg(long, value_enum, default_value = "debiased")]
        estimator: Kind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the statistical checks and print their results as JSON.
    Verify {
        /// Comma-separated check names.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Estimate, then report the leading-r eigenspace (and its angle to the
    /// true ridge subspace when the function is a ridge).
    Subspace {
        #[arg(long)]
        function: PathBuf,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value_t = 500)]
        n_centers: usize,
        #[arg(long, default_value_t = 20)]
        n_min: usize,
        #[arg(long, default_value_t = 1e-4)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a seeded random quadratic instance `{A, b}`.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_)
            | Error::Json(_)
            | Error::Csv { .. }
            | Error::DimensionMismatch { .. }
            | Error::RadiusTooLarge { .. }
            | Error::NotSymmetric(_)
            | Error::NotOrthonormal(_) => Failure::Config(e.to_string()),
            other => Failure::Check(other.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Check(format!("{}: {e}", path.display())))
}

fn load_function(path: &Path) -> Result<TargetFunction, Failure> {
    Ok(FunctionSpec::from_json(&read(path)?)?.build()?)
}

fn estimate(
    f: &TargetFunction,
    n_centers: usize,
    n_min: usize,
    n_total: usize,
    epsilon: f64,
    kind: Kind,
    seed: u64,
) -> Result<MomentEstimate, Failure> {
    let measure = Measure::uniform(Domain::hypercube(f.dim())?);
    let x = separated_interior_centers(&measure, n_centers, epsilon, derive_seed(seed, Purpose::Centers, 0))?;
    let design = sample_neighbors(&x, epsilon, n_total, &measure, SamplingMode::Exact, derive_seed(seed, Purpose::Neighbors, 0))?
        .with_min_count(n_min)?;
    Ok(match kind {
        Kind::Naive => naive_estimate(f, &design)?,
        Kind::Debiased => debiased_estimate(f, &design)?,
        Kind::IdealDebiased => ideal_debiased_estimate(f, &design)?,
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Study { config, out, plot_spec, preset, seed } => {
            let mut file = match (config, preset) {
                (Some(path), _) => StudyFile::from_json(&read(&path)?)?,
                (None, Some(p)) => {
                    let config = match p {
                        Preset::Desk => StudyConfig::desk(0),
                        Preset::Paper => StudyConfig::paper(0),
                    };
                    StudyFile { config, function: None }
                }
                (None, None) => return Err(Failure::Config("either --config or --preset is required".into())),
            };
            if let Some(s) = seed {
                file.config.seed = s;
            }
            file.config.validate()?;
            let f = file.target()?;
            let rows = run_study(&file.config, &f)?;
            let (csv, spec) = emit_plot_data(&rows)?;
            write(&out, &csv)?;
            write(&plot_spec, &serde_json::to_string_pretty(&spec).map_err(Error::from)?)?;
            println!("{}", json!({"rows": rows.len(), "slope": spec.slope, "intercept": spec.intercept}));
        }
        Command::Estimate { function, n_centers, n_min, epsilon, matrix_out, n_total, estimator, seed } => {
            let f = load_function(&function)?;
            let total = n_total.unwrap_or(2 * n_centers * n_min);
            let est = estimate(&f, n_centers, n_min, total, epsilon, estimator, seed)?;
            write(&matrix_out, &est.to_json()?)?;
            let rel = f.second_moment().map(|s| est.relative_error(s));
            println!("{}", json!({"kind": est.kind, "N_total": total, "included_centers": est.included_centers, "rel_error": rel}));
        }
        Command::Verify { only, seed } => {
            let results = run_checks(&only, seed)?;
            println!("{}", serde_json::to_string_pretty(&results).map_err(Error::from)?);
            if let Some(bad) = results.iter().find(|r| !r.as_expected()) {
                return Err(Failure::Check(format!("check failed: {}", bad.name)));
            }
        }
        Command::Subspace { function, r, n_centers, n_min, epsilon, seed } => {
            let f = load_function(&function)?;
            if r == 0 || r >= f.dim() {
                return Err(Failure::Config(format!("r must lie in 1..{}", f.dim())));
            }
            let est = estimate(&f, n_centers, n_min, 2 * n_centers * n_min, epsilon, Kind::Debiased, seed)?;
            let report = if f.ridge_basis().is_some() {
                serde_json::to_value(subspace_recovery_report(&f, &est, r)?).map_err(Error::from)?
            } else {
                let s = eigendecompose(&est)?.with_rank(r)?;
                json!({"eigenvalues": s.eigenvalues.as_slice(), "r": r, "eigen_gap": s.eigen_gap()})
            };
            println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
        }
        Command::Generate { n, seed, out } => {
            if n == 0 {
                return Err(Failure::Config("n must be positive".into()));
            }
            let spec = QuadraticSpec::random(n, seed);
            write(&out, &serde_json::to_string(&spec).map_err(Error::from)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
