// SPDX-License-Identifier: MIT OR Apache-2.0

//! `concave-lrt`: concave regression fits, likelihood-ratio tests and
//! confidence intervals, limit tables and simulation studies.
//!
//! Exit codes: 0 success, 2 bad input, 3 numerical failure, 4 missing table.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use concave_lrt::limit_sim::{critical_table, DEFAULT_B, DEFAULT_C, DEFAULT_H};
use concave_lrt::lrt::{decide, GridSpec, LrContext};
use concave_lrt::mc_harness::{
    ecdf_study, level_study, write_ecdf_csv, write_level_csv, DesignKind, RegressionFunction, Scenario,
};
use concave_lrt::{
    check_alse, confidence_interval, fit_alse, CriticalTable, Design, Error, Execution, PiecewiseLinearConcave,
};
use serde_json::{json, Value};

const TABLE_ENV: &str = "CONCAVE_LRT_TABLE";
const CERTIFY_TOL: f64 = 1e-8;

#[derive(Parser, Debug)]
#[command(name = "concave-lrt", version, about = "Likelihood-ratio inference for concave regression")]
struct Cli {
    /// Run replications on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Least-squares concave fit.
    Fit(FitArgs),
    /// Test H0: r(x0) = y0.
    Test(TestArgs),
    /// Pointwise confidence interval for r(x0).
    Ci(CiArgs),
    /// Simulate a critical-value table for the limit statistic.
    LimitTable(LimitTableArgs),
    /// Null rejection rates for one simulation scenario.
    LevelStudy(LevelStudyArgs),
    /// Empirical distribution of the null statistic across scenarios.
    EcdfStudy(EcdfStudyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct Output {
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// CSV with columns x,y (header optional).
    #[arg(long)]
    input: PathBuf,
    /// Convex regression: negate the responses, fit, negate back.
    #[arg(long)]
    convex: bool,
}

#[derive(Args, Debug)]
struct TableArg {
    /// Critical-value table CSV (its `.meta.json` sidecar must exist).
    #[arg(long, env = TABLE_ENV)]
    table: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Attach the characterization report.
    #[arg(long)]
    certify: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, allow_hyphen_values = true)]
    x0: f64,
    #[arg(long, allow_hyphen_values = true)]
    y0: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Known error variance (default: residual mean square of the fit).
    #[arg(long)]
    sigma2: Option<f64>,
    #[command(flatten)]
    table: TableArg,
    /// Attach characterization reports for both fits.
    #[arg(long)]
    certify: bool,
    /// A saved `fit` output to verify against the data.
    #[arg(long)]
    alse: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct CiArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, allow_hyphen_values = true)]
    x0: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    sigma2: Option<f64>,
    #[command(flatten)]
    table: TableArg,
    /// Number of grid points in the scan.
    #[arg(long, default_value_t = 201)]
    points: usize,
    /// Also write the scanned grid as CSV (y,statistic,accepted).
    #[arg(long)]
    grid_out: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct LimitTableArgs {
    /// Number of draws.
    #[arg(long = "M", default_value_t = 20_000)]
    m: usize,
    #[arg(long, default_value_t = DEFAULT_C)]
    c: f64,
    #[arg(long, default_value_t = DEFAULT_H)]
    h: f64,
    #[arg(long, default_value_t = DEFAULT_B)]
    b: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Table CSV path; metadata goes to `<out>.meta.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LevelStudyArgs {
    #[arg(long)]
    scenario: RegressionFunction,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "fixed")]
    design: DesignKind,
    /// Replications.
    #[arg(long = "M", default_value_t = 5000)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.10])]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[command(flatten)]
    table: TableArg,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct EcdfStudyArgs {
    /// Scenarios to include (default: all).
    #[arg(long, value_delimiter = ',')]
    scenario: Vec<RegressionFunction>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value = "fixed")]
    design: DesignKind,
    #[arg(long = "M", default_value_t = 1000)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    table: TableArg,
    /// Grid points for the chisq1 reference rows.
    #[arg(long, default_value_t = 200)]
    chisq_points: usize,
    #[command(flatten)]
    output: Output,
}

/// An error and the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, error: error.into() }
    }

    fn missing_table(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 4, error: error.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Numerical(_) | Error::EmptyAcceptance { .. } => 3,
            _ => 2,
        };
        Self { code, error: e.into() }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Test(a) => cmd_test(a),
        Command::Ci(a) => cmd_ci(a, exec),
        Command::LimitTable(a) => cmd_limit_table(a, exec),
        Command::LevelStudy(a) => cmd_level_study(a, exec),
        Command::EcdfStudy(a) => cmd_ecdf_study(a, exec),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_design(data: &DataArgs) -> CliResult<Design> {
    let design = Design::from_csv_path(&data.input)
        .with_context(|| format!("reading {}", data.input.display()))
        .map_err(Failure::input)?;
    Ok(if data.convex { design.negated() } else { design })
}

fn load_table(arg: &TableArg) -> CliResult<CriticalTable> {
    match &arg.table {
        Some(path) => {
            if !path.exists() {
                return Err(Failure::missing_table(anyhow::anyhow!("table {} not found", path.display())));
            }
            CriticalTable::load(path)
                .with_context(|| format!("loading table {}", path.display()))
                .map_err(Failure::missing_table)
        }
        None => Ok(CriticalTable::embedded()?),
    }
}

fn writer(out: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display())).map_err(Failure::input)?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit_json(out: &Option<PathBuf>, value: &Value) -> CliResult<()> {
    let mut w = writer(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(Failure::input)?;
    writeln!(w).and_then(|_| w.flush()).map_err(Failure::input)
}

fn require_json(output: &Output, what: &str) -> CliResult<()> {
    match output.format {
        Format::Json => Ok(()),
        Format::Csv => Err(Failure::input(anyhow::anyhow!("{what} output is JSON only"))),
    }
}

fn sign(convex: bool) -> f64 {
    if convex {
        -1.0
    } else {
        1.0
    }
}

fn fit_json(fit: &PiecewiseLinearConcave, convex: bool) -> Value {
    let s = sign(convex);
    json!({
        "knots": fit.knots(),
        "values": fit.values().iter().map(|v| s * v).collect::<Vec<_>>(),
    })
}

fn cmd_fit(args: FitArgs) -> CliResult<()> {
    require_json(&args.output, "fit")?;
    let design = load_design(&args.data)?;
    let fit = fit_alse(&design)?;
    let s = sign(args.data.convex);
    let mut out = json!({
        "n": design.len(),
        "convex": args.data.convex,
        "knots": fit.fit.knots(),
        "values": fit.fit.values().iter().map(|v| s * v).collect::<Vec<_>>(),
        "kinks": fit.kinks,
        "objective": fit.objective,
        "sigma2_hat": fit.sigma2_hat,
        "iterations": fit.iterations,
        "near_degenerate": fit.near_degenerate,
    });
    if args.certify {
        let report = check_alse(&design, &fit.fit, CERTIFY_TOL)?;
        out["certification"] = serde_json::to_value(report).map_err(Failure::input)?;
    }
    emit_json(&args.output.out, &out)
}

/// Checks a saved fit against the data; returns the report.
fn verify_saved_fit(path: &Path, design: &Design, convex: bool) -> CliResult<Value> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::input)?;
    let saved: Value = serde_json::from_str(&text).map_err(Failure::input)?;
    let column = |key: &str| -> CliResult<Vec<f64>> {
        saved[key]
            .as_array()
            .and_then(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
            .ok_or_else(|| Failure::input(anyhow::anyhow!("{} has no numeric {key:?} array", path.display())))
    };
    let knots = column("knots")?;
    let s = sign(convex);
    let values = column("values")?.into_iter().map(|v| s * v).collect();
    let fit = match PiecewiseLinearConcave::with_tolerance(knots, values, 1e-7) {
        Ok(fit) => fit,
        Err(e @ Error::NotConcave { .. }) => return Ok(json!({ "pass": false, "reason": e.to_string() })),
        Err(e) => return Err(e.into()),
    };
    let report = check_alse(design, &fit, CERTIFY_TOL)?;
    Ok(json!({ "pass": report.pass, "worst_ratio": report.worst_ratio(), "report": report }))
}

fn cmd_test(args: TestArgs) -> CliResult<()> {
    require_json(&args.output, "test")?;
    let design = load_design(&args.data)?;
    let table = load_table(&args.table)?;
    let y0 = sign(args.data.convex) * args.y0;
    let ctx = LrContext::new(&design, args.sigma2)?;
    let lr = ctx.statistic(args.x0, y0)?;
    let outcome = decide(lr.two_log_lambda, lr.sigma2_used, args.alpha, &table)?;
    let mut warnings = lr.warnings.clone();
    let mut out = json!({
        "x0": args.x0,
        "y0": args.y0,
        "statistic": outcome.statistic,
        "threshold": outcome.threshold,
        "p_value": outcome.p_value,
        "sigma2": outcome.sigma2,
        "sigma2_known": lr.sigma2_known,
        "alpha": outcome.alpha,
        "decision": outcome.decision,
        "identity_gap": lr.identity_gap,
        "alse": fit_json(&lr.alse.fit, args.data.convex),
        "nlse": fit_json(&lr.nlse.fit, args.data.convex),
        "table": { "M": table.meta().m, "seed": table.meta().seed },
    });
    if args.certify {
        let aug = concave_lrt::augment(&design, args.x0, y0)?;
        out["certification"] = json!({
            "alse": check_alse(&design, &lr.alse.fit, CERTIFY_TOL)?,
            "nlse": concave_lrt::check_nlse(&aug, &lr.nlse.fit, CERTIFY_TOL)?,
        });
    }
    if let Some(path) = &args.alse {
        let verification = verify_saved_fit(path, &design, args.data.convex)?;
        if verification["pass"] != Value::Bool(true) {
            warnings.push(format!("saved fit {} fails the characterization check", path.display()));
        }
        out["alse_verification"] = verification;
    }
    out["warnings"] = json!(warnings);
    emit_json(&args.output.out, &out)
}

fn write_grid_csv(w: impl Write, grid: &[f64], stats: &[f64], accepted: &[bool]) -> CliResult<()> {
    let mut w = BufWriter::new(w);
    let mut write = || -> io::Result<()> {
        writeln!(w, "y,statistic,accepted")?;
        for ((y, s), a) in grid.iter().zip(stats).zip(accepted) {
            writeln!(w, "{y},{s},{a}")?;
        }
        w.flush()
    };
    write().map_err(Failure::input)
}

fn cmd_ci(args: CiArgs, exec: Execution) -> CliResult<()> {
    let design = load_design(&args.data)?;
    let table = load_table(&args.table)?;
    let spec = GridSpec { points: args.points, ..GridSpec::default() };
    let mut ci = confidence_interval(&design, args.x0, args.alpha, &table, &spec, args.sigma2, exec)?;
    if args.data.convex {
        ci = ci.negated();
    }
    if let Some(path) = &args.grid_out {
        let f = File::create(path).with_context(|| format!("creating {}", path.display())).map_err(Failure::input)?;
        write_grid_csv(f, &ci.grid, &ci.statistics, &ci.acceptance_flags)?;
    }
    match args.output.format {
        Format::Csv => write_grid_csv(writer(&args.output.out)?, &ci.grid, &ci.statistics, &ci.acceptance_flags),
        Format::Json => emit_json(
            &args.output.out,
            &json!({
                "x0": ci.x0,
                "interval": [ci.lower, ci.upper],
                "alpha": ci.alpha,
                "threshold": ci.threshold,
                "sigma2": ci.sigma2,
                "nonconvex_warning": ci.nonconvex_warning,
                "grid_points": ci.grid.len(),
                "warnings": ci.warnings,
            }),
        ),
    }
}

fn cmd_limit_table(args: LimitTableArgs, exec: Execution) -> CliResult<()> {
    if args.m == 0 {
        return Err(Failure::input(anyhow::anyhow!("--M must be positive")));
    }
    let table = critical_table(args.m, args.c, args.h, args.b, args.seed, exec)?;
    table.save(&args.out)?;
    eprintln!(
        "wrote {} draws to {} (q95 = {:.4})",
        table.len(),
        args.out.display(),
        table.quantile(0.95)
    );
    Ok(())
}

fn cmd_level_study(args: LevelStudyArgs, exec: Execution) -> CliResult<()> {
    let table = load_table(&args.table)?;
    let mut scenario = Scenario::new(args.scenario, args.n, args.design, args.m);
    scenario.sigma = args.sigma;
    let rows = level_study(&scenario, &args.alpha, &table, args.seed, exec)?;
    match args.output.format {
        Format::Csv => write_level_csv(writer(&args.output.out)?, &rows).map_err(Failure::from),
        Format::Json => emit_json(&args.output.out, &serde_json::to_value(&rows).map_err(Failure::input)?),
    }
}

fn cmd_ecdf_study(args: EcdfStudyArgs, exec: Execution) -> CliResult<()> {
    let table = load_table(&args.table)?;
    let functions = if args.scenario.is_empty() { RegressionFunction::ALL.to_vec() } else { args.scenario };
    let scenarios: Vec<Scenario> = functions.iter().map(|f| Scenario::new(*f, args.n, args.design, args.m)).collect();
    let study = ecdf_study(&scenarios, &table, args.seed, exec)?;
    match args.output.format {
        Format::Csv => write_ecdf_csv(writer(&args.output.out)?, &study, args.chisq_points).map_err(Failure::from),
        Format::Json => emit_json(
            &args.output.out,
            &json!({
                "max_pairwise_distance": study.max_pairwise_distance(),
                "min_chisq1_distance": study.min_chisq_distance(),
                "curves": study.scenarios.iter().chain([&study.limit]).map(|c| json!({
                    "label": c.label,
                    "values": c.values,
                })).collect::<Vec<_>>(),
            }),
        ),
    }
}
