//! `lsdc`: instance generation, solving, bounds, RIP, protocol simulation and
//! recovery sweeps.
//!
//! Exit codes: 0 success, 1 infeasible or inexact decode, 2 usage / domain /
//! I/O error, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use lsdc_core::bounds::{bound_report, gamma_threshold_bisect, r_param, SubGaussianParams};
use lsdc_core::experiment::{
    generate_instance, run_sweep, sweep_csv, Demand, InstanceConfig, SweepConfig,
};
use lsdc_core::matrix::Ensemble;
use lsdc_core::protocol::{Dataset, RoundInput, RoundOptions, SubfunctionSpec};
use lsdc_core::rip::{rip_constant, scale_for_rip};
use lsdc_core::solvers::{gamma_of, solve, Method, SolverConfig};
use lsdc_core::{Error, Mat, RngSeed};

#[derive(Parser)]
#[command(
    name = "lsdc",
    version,
    about = "Sparse encoding schemes for multi-user distributed computing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate D and F (and the planted E0) as JSON matrices.
    Gen(GenArgs),
    /// Find an encoding matrix E with D E = F.
    Solve(SolveArgs),
    /// Evaluate r, c, the cost threshold and the success probability.
    Bound(BoundArgs),
    /// Exhaustive restricted isometry constant of a matrix.
    Rip(RipArgs),
    /// Run one protocol round and check exact decoding.
    Simulate(SimulateArgs),
    /// Monte Carlo basis-pursuit recovery sweep over the sparsity level.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum EnsembleArg {
    Gaussian,
    Rademacher,
}

impl From<EnsembleArg> for Ensemble {
    fn from(e: EnsembleArg) -> Self {
        match e {
            EnsembleArg::Gaussian => Ensemble::Gaussian,
            EnsembleArg::Rademacher => Ensemble::Rademacher,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Zf,
    L0,
    Bp,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Zf => Method::Zf,
            MethodArg::L0 => Method::L0,
            MethodArg::Bp => Method::Bp,
        }
    }
}

#[derive(Args)]
struct Shape {
    #[arg(short = 'k', long)]
    k: usize,
    #[arg(short = 'n', long)]
    n: usize,
    #[arg(short = 'l', long)]
    l: usize,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    shape: Shape,
    #[arg(long, value_enum, default_value = "gaussian")]
    ensemble: EnsembleArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Plant an s-sparse E0 per column and set F = D E0.
    #[arg(long)]
    planted: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct Tolerances {
    #[arg(long, default_value_t = SolverConfig::default().eps_zero)]
    eps_zero: f64,
    #[arg(long, default_value_t = SolverConfig::default().feas_tol)]
    feas_tol: f64,
}

impl Tolerances {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            eps_zero: self.eps_zero,
            feas_tol: self.feas_tol,
            ..SolverConfig::default()
        }
    }
}

#[derive(Args)]
struct SubGaussianArgs {
    #[arg(long, default_value_t = SubGaussianParams::STANDARD_NORMAL.beta)]
    beta: f64,
    #[arg(long, default_value_t = SubGaussianParams::STANDARD_NORMAL.kappa)]
    kappa: f64,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long = "d")]
    d_file: PathBuf,
    #[arg(long = "f")]
    f_file: PathBuf,
    #[arg(long, value_enum, default_value = "bp")]
    method: MethodArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    tol: Tolerances,
    /// Also report the cost threshold for the given sub-Gaussian parameters.
    #[arg(long)]
    bounds: bool,
    #[command(flatten)]
    sg: SubGaussianArgs,
    /// Write the outcome JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    shape: Shape,
    #[command(flatten)]
    sg: SubGaussianArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RipArgs {
    #[arg(long = "d")]
    d_file: PathBuf,
    #[arg(short = 's', long)]
    s: usize,
    /// Divide by sqrt(rows) first.
    #[arg(long)]
    scale: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Combined round file {F, D, E, datasets, subfunctions}.
    #[arg(long, conflicts_with_all = ["d_file", "f_file", "e_file", "datasets", "subfunctions"])]
    input: Option<PathBuf>,
    #[arg(long = "d", requires_all = ["f_file", "e_file", "datasets", "subfunctions"])]
    d_file: Option<PathBuf>,
    #[arg(long = "f")]
    f_file: Option<PathBuf>,
    /// A matrix, or a solver outcome containing "E".
    #[arg(long = "e")]
    e_file: Option<PathBuf>,
    #[arg(long)]
    datasets: Option<PathBuf>,
    #[arg(long)]
    subfunctions: Option<PathBuf>,
    #[arg(long, default_value_t = RoundOptions::default().decode_tol)]
    decode_tol: f64,
    #[arg(long, default_value_t = RoundOptions::default().eps_zero)]
    eps_zero: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    shape: Shape,
    #[arg(long, value_enum, default_value = "gaussian")]
    ensemble: EnsembleArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    s_min: usize,
    #[arg(long)]
    s_max: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[command(flatten)]
    tol: Tolerances,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Lib(Error),
    Usage(String),
    Inexact(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Inexact(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Lib(e) => match e {
                Error::Infeasible { .. } | Error::FeasibilityViolated { .. } => 1,
                Error::SingularMatrix { .. }
                | Error::ResampleExhausted { .. }
                | Error::NoConvergence { .. }
                | Error::RankDeficient => 3,
                _ => 2,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Lib(e) => e.to_string(),
            Failure::Usage(m) | Failure::Inexact(m) => m.clone(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, contents: &str) -> CliResult<()> {
    match out {
        Some(p) => write_file(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn gen(args: &GenArgs) -> CliResult<()> {
    let config = InstanceConfig {
        k: args.shape.k,
        n: args.shape.n,
        l: args.shape.l,
        ensemble: args.ensemble.into(),
        seed: RngSeed(args.seed),
        demand: match args.planted {
            Some(s) => Demand::PlantedSparse(s),
            None => Demand::RandomDense,
        },
    };
    let inst = generate_instance(&config)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| Failure::Usage(format!("{}: {e}", args.out.display())))?;
    write_file(&args.out.join("D.json"), &to_json(&inst.d))?;
    write_file(&args.out.join("F.json"), &to_json(&inst.f))?;
    if let Some(e0) = &inst.e0 {
        write_file(&args.out.join("E0.json"), &to_json(e0))?;
    }
    Ok(())
}

fn solve_cmd(args: &SolveArgs) -> CliResult<()> {
    let d: Mat = read_json(&args.d_file)?;
    let f: Mat = read_json(&args.f_file)?;
    let config = args.tol.config();
    let outcome = solve(args.method.into(), &d, &f, RngSeed(args.seed), &config)?;
    debug_assert_eq!(outcome.gamma, gamma_of(&outcome.e, config.eps_zero));
    let kn = d.rows() as f64 / d.cols() as f64;
    let mut summary = format!("gamma={} K/N={}", outcome.gamma, kn);
    if args.bounds {
        let params = SubGaussianParams::new(args.sg.beta, args.sg.kappa)?;
        let star = gamma_threshold_bisect(kn, r_param(&params))?;
        summary.push_str(&format!(" gamma_star={star}"));
    }
    eprintln!("{summary}");
    emit(args.out.as_deref(), &to_json(&outcome))
}

fn bound(args: &BoundArgs) -> CliResult<()> {
    let params = SubGaussianParams::new(args.sg.beta, args.sg.kappa)?;
    let report = bound_report(args.shape.k, args.shape.n, args.shape.l, &params, &[2, 256])?;
    emit(args.out.as_deref(), &to_json(&report))
}

fn rip(args: &RipArgs) -> CliResult<()> {
    let mut a: Mat = read_json(&args.d_file)?;
    if args.scale {
        a = scale_for_rip(&a);
    }
    let report = rip_constant(&a, args.s)?;
    emit(args.out.as_deref(), &to_json(&report))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EncodingFile {
    Matrix(Mat),
    Outcome {
        #[serde(rename = "E")]
        e: Mat,
    },
}

fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let input: RoundInput = match &args.input {
        Some(p) => read_json(p)?,
        None => {
            let need = |p: &Option<PathBuf>, flag: &str| {
                p.clone()
                    .ok_or_else(|| Failure::Usage(format!("missing --{flag} (or use --input)")))
            };
            let e = match read_json::<EncodingFile>(&need(&args.e_file, "e")?)? {
                EncodingFile::Matrix(m) | EncodingFile::Outcome { e: m } => m,
            };
            RoundInput {
                f: read_json(&need(&args.f_file, "f")?)?,
                d: read_json(&need(&args.d_file, "d")?)?,
                e,
                datasets: read_json::<Vec<Dataset>>(&need(&args.datasets, "datasets")?)?,
                subfunctions: read_json::<Vec<SubfunctionSpec>>(&need(
                    &args.subfunctions,
                    "subfunctions",
                )?)?,
            }
        }
    };
    let opts = RoundOptions {
        decode_tol: args.decode_tol,
        eps_zero: args.eps_zero,
    };
    let transcript = input.run(&opts)?;
    emit(args.out.as_deref(), &to_json(&transcript))?;
    if transcript.exact {
        Ok(())
    } else {
        Err(Failure::Inexact(format!(
            "decoding is not exact: max_abs_error = {:e}",
            transcript.max_abs_error
        )))
    }
}

fn sweep(args: &SweepArgs) -> CliResult<()> {
    let config = SweepConfig {
        k: args.shape.k,
        n: args.shape.n,
        l: args.shape.l,
        ensemble: args.ensemble.into(),
        seed: RngSeed(args.seed),
        s_min: args.s_min,
        s_max: args.s_max,
        trials: args.trials,
        solver: args.tol.config(),
    };
    let result = run_sweep(&config)?;
    emit(args.out.as_deref(), &sweep_csv(&result))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Bound(a) => bound(a),
        Command::Rip(a) => rip(a),
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
