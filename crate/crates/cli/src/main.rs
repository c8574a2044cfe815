use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use hdridge::datagen::Recipe;
use hdridge::dataio::{
    self, bytes_digest, export_plot_data, load_csv_matrix, load_from_manifest, load_manifest, save_manifest,
    write_dataset_csv, write_solution_csv, Centering, GroupBy, LoadOptions, LoadedData, Provenance, ResponseSource,
    RunRecord,
};
use hdridge::experiment::{
    load_bench_records, plot_file_name, run_bench, solve_with_scheme, write_bench_outputs, DatasetSpec,
    ExperimentConfig, SolveParams,
};
use hdridge::sampling::Scheme;
use hdridge::solvers::{ridge_exact, ProblemInstance};
use hdridge::suite::{run_suite, CheckName, Scale, SuiteConfig};
use hdridge::verify::{estimation_error, prediction_error};
use hdridge::Error;
use serde::Serialize;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "hdridge", version, about = "Sketched ridge regression for p >> n")]
struct Cli {
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for bench.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Load only the first N rows of a CSV dataset.
    #[arg(long, global = true)]
    row_limit: Option<usize>,
    /// Centering applied when loading CSV data: a, y, both or none.
    #[arg(long, global = true)]
    center: Option<Centering>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a simulated dataset and its manifest.
    Gen(GenArgs),
    /// Run one solver and write the coefficients and a run record.
    Solve(SolveArgs),
    /// Sweep a benchmark grid.
    Bench,
    /// Run statistical checks; exits with 3 if any fails.
    Verify(VerifyArgs),
    /// Summarize run records into plot data.
    ExportPlots(ExportArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// example1 or example2 (ignored with --config).
    #[arg(long, default_value = "example1")]
    generator: String,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 2000)]
    p: usize,
    #[arg(long, default_value_t = 1e-4)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// CSV file, or a manifest (.json) written by gen.
    #[arg(long)]
    dataset: PathBuf,
    /// exact, uni, col, lev, rlev, opl, nopl or rsis.
    #[arg(long)]
    method: String,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    r0: Option<usize>,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 0.0)]
    mixing_floor: f64,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Check to run; repeat for several. Defaults to the whole suite.
    #[arg(long = "check")]
    checks: Vec<String>,
    /// Repetitions for every Monte Carlo check.
    #[arg(long)]
    reps: Option<usize>,
    /// desk or quick.
    #[arg(long)]
    scale: Option<String>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// A bench output directory or a records file.
    #[arg(long)]
    records: PathBuf,
    /// r, lambda, m or r0.
    #[arg(long, default_value = "r")]
    group_by: String,
}

/// Failure with its exit status.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Gen(args) => cmd_gen(&cli, args),
        Command::Solve(args) => cmd_solve(&cli, args),
        Command::Bench => cmd_bench(&cli),
        Command::Verify(args) => cmd_verify(&cli, args),
        Command::ExportPlots(args) => cmd_export(&cli, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_CHECK)
        }
    }
}

fn out_dir(cli: &Cli) -> CliResult<PathBuf> {
    cli.out
        .clone()
        .ok_or_else(|| Failure::Usage("--out DIR is required".into()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn cmd_gen(cli: &Cli, args: &GenArgs) -> CliResult {
    let recipe = match &cli.config {
        Some(path) => read_json::<Recipe>(path)?,
        None => match args.generator.as_str() {
            "example1" => Recipe::Example1 {
                n: args.n,
                p: args.p,
                seed: 0,
            },
            "example2" => Recipe::Example2 {
                n: args.n,
                p: args.p,
                alpha: args.alpha,
                gamma: args.gamma,
                seed: 0,
            },
            other => return Err(Failure::Usage(format!("unknown generator '{other}'"))),
        },
    };
    let recipe = match cli.seed {
        Some(seed) => recipe.with_seed(seed),
        None => recipe,
    };
    let data = recipe.generate(1.0)?;
    let dir = out_dir(cli)?;
    fs::create_dir_all(&dir)?;
    let csv = dir.join("dataset.csv");
    write_dataset_csv(&csv, data.instance.a(), data.instance.y())?;
    fs::write(dir.join("recipe.json"), serde_json::to_string_pretty(&recipe)? + "\n")?;
    let beta_path = dir.join("beta_true.csv");
    let beta_csv: String = std::iter::once("index,beta".to_string())
        .chain(data.beta_true.iter().enumerate().map(|(i, b)| format!("{i},{b}")))
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(&beta_path, beta_csv + "\n")?;
    // relative to the manifest, so the directory can move
    let loaded = load_csv_matrix(&csv, &LoadOptions::default())?;
    let mut manifest = loaded.manifest;
    manifest.source = PathBuf::from("dataset.csv");
    save_manifest(&manifest, &dir.join("dataset.manifest.json"))?;
    println!("{}", manifest.sha256);
    Ok(())
}

/// Loads a CSV or manifest, resolving manifest paths against its directory.
fn load_dataset(cli: &Cli, path: &Path) -> CliResult<LoadedData> {
    let is_manifest = path.extension().is_some_and(|e| e == "json");
    let mut loaded = if is_manifest {
        let mut manifest = load_manifest(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if manifest.source.is_relative() {
            manifest.source = base.join(&manifest.source);
        }
        if let ResponseSource::File(rp) = &mut manifest.options.response {
            if rp.is_relative() {
                *rp = base.join(&*rp);
            }
        }
        if cli.row_limit.is_some() || cli.center.is_some() {
            // verify the file, then reload with the requested preprocessing
            load_from_manifest(&manifest)?;
            let mut opts = manifest.options.clone();
            opts.row_limit = cli.row_limit.or(opts.row_limit);
            opts.centering = cli.center.unwrap_or(opts.centering);
            load_csv_matrix(&manifest.source, &opts)?
        } else {
            load_from_manifest(&manifest)?
        }
    } else {
        let opts = LoadOptions {
            row_limit: cli.row_limit,
            centering: cli.center.unwrap_or_default(),
            ..Default::default()
        };
        load_csv_matrix(path, &opts)?
    };
    loaded.manifest.source = path.to_path_buf();
    Ok(loaded)
}

#[derive(Serialize)]
struct SolveProvenance<'a> {
    dataset_sha256: &'a str,
    method: &'a str,
    lambda: f64,
    params: &'a SolveParams,
}

fn cmd_solve(cli: &Cli, args: &SolveArgs) -> CliResult {
    let method = args.method.to_ascii_lowercase();
    let scheme = if method == "exact" {
        None
    } else {
        let s: Scheme = method.parse()?;
        if s == Scheme::Custom {
            return Err(Failure::Usage("custom probabilities are not available from the command line".into()));
        }
        Some(s)
    };
    if scheme == Some(Scheme::Nopl) && args.r0.is_none() {
        return Err(Failure::Usage("method nopl requires --r0".into()));
    }
    let r = match (scheme, args.r) {
        (Some(_), None) => return Err(Failure::Usage(format!("method {method} requires --r"))),
        (_, r) => r.unwrap_or(0),
    };
    let loaded = load_dataset(cli, &args.dataset)?;
    let digest = loaded.manifest.sha256.clone();
    let inst = loaded.into_instance(args.lambda)?;
    let params = SolveParams {
        r,
        r0: args.r0,
        m: args.m,
        seed: cli.seed.unwrap_or(0),
        mixing_floor: args.mixing_floor,
    };
    let provenance = Provenance {
        config_digest: bytes_digest(&serde_json::to_vec(&SolveProvenance {
            dataset_sha256: &digest,
            method: &method,
            lambda: args.lambda,
            params: &params,
        })?),
        master_seed: params.seed,
    };

    let exact = ridge_exact(&inst)?;
    let started = Instant::now();
    let solution = match scheme {
        None => exact.clone(),
        Some(s) => solve_with_scheme(&inst, s, &params)?,
    };
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;

    let record = RunRecord {
        method: scheme.map_or_else(|| "exact".to_string(), |s| s.to_string()),
        seed: params.seed,
        rep: 0,
        n: inst.n(),
        p: inst.p(),
        r: scheme.map(|_| r),
        r0: if scheme == Some(Scheme::Nopl) { args.r0 } else { None },
        m: scheme.map(|_| args.m),
        lambda: args.lambda,
        estimation_error: Some(relative_or_zero(estimation_error(&solution.beta, &exact.beta))),
        prediction_error: Some(relative_or_zero(prediction_error(inst.a(), &solution.beta, &exact.beta))),
        wall_ms: Some(wall_ms),
        setup_ms: None,
        skipped: None,
        config_digest: provenance.config_digest.clone(),
        master_seed: params.seed,
    };
    let dir = out_dir(cli)?;
    fs::create_dir_all(&dir)?;
    write_solution_csv(&solution, &dir.join("solution.csv"), &provenance)?;
    fs::write(dir.join("record.json"), serde_json::to_string(&record)? + "\n")?;
    print_solution_summary(&inst, &record);
    Ok(())
}

/// Errors are undefined against a zero exact solution; report zero there.
fn relative_or_zero(e: hdridge::Result<f64>) -> f64 {
    e.unwrap_or(0.0)
}

fn print_solution_summary(inst: &ProblemInstance, rec: &RunRecord) {
    println!(
        "{} n={} p={} lambda={} estimation_error={:e} prediction_error={:e}",
        rec.method,
        inst.n(),
        inst.p(),
        rec.lambda,
        rec.estimation_error.unwrap_or(f64::NAN),
        rec.prediction_error.unwrap_or(f64::NAN)
    );
}

fn cmd_bench(cli: &Cli) -> CliResult {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("bench requires --config PATH".into()))?;
    let mut cfg: ExperimentConfig = read_json(path)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    if let DatasetSpec::Csv { options, .. } = &mut cfg.dataset {
        if cli.row_limit.is_some() {
            options.row_limit = cli.row_limit;
        }
        if let Some(c) = cli.center {
            options.centering = c;
        }
    }
    // relative dataset paths are relative to the config file
    let base = path.parent().unwrap_or(Path::new("."));
    match &mut cfg.dataset {
        DatasetSpec::Csv { path, .. } | DatasetSpec::Manifest(path) if path.is_relative() => {
            *path = base.join(&*path);
        }
        _ => {}
    }
    cfg.validate()?;
    let dir = cli.out.clone().or_else(|| cfg.out.clone()).ok_or_else(|| Failure::Usage("--out DIR is required".into()))?;
    let out = run_bench(&cfg)?;
    write_bench_outputs(&dir, &cfg, &out)?;
    let skipped = out.records.iter().filter(|r| r.is_skipped()).count();
    println!(
        "{} records ({} skipped) written to {}; config digest {}",
        out.records.len(),
        skipped,
        dir.display(),
        out.provenance.config_digest
    );
    Ok(())
}

fn cmd_verify(cli: &Cli, args: &VerifyArgs) -> CliResult {
    let mut cfg = match &cli.config {
        Some(path) => read_json::<SuiteConfig>(path)?,
        None => SuiteConfig::default(),
    };
    if !args.checks.is_empty() {
        cfg.checks = args.checks.iter().map(|c| c.parse::<CheckName>()).collect::<hdridge::Result<_>>()?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if args.reps.is_some() {
        cfg.reps = args.reps;
    }
    if let Some(scale) = &args.scale {
        cfg.scale = match scale.as_str() {
            "desk" => Scale::Desk,
            "quick" => Scale::Quick,
            other => return Err(Failure::Usage(format!("unknown scale '{other}' (desk, quick)"))),
        };
    }
    let reports = run_suite(&cfg)?;
    let mut lines = String::new();
    for r in &reports {
        lines.push_str(&serde_json::to_string(r)?);
        lines.push('\n');
    }
    print!("{lines}");
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("checks.jsonl"), &lines)?;
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("failed checks: {}", failed.join(", "))))
    }
}

fn cmd_export(cli: &Cli, args: &ExportArgs) -> CliResult {
    let group_by: GroupBy = args.group_by.parse()?;
    let records = if args.records.is_dir() {
        load_bench_records(&args.records)?
    } else {
        dataio::load_run_records(&args.records)?
    };
    let provenance = match records.first() {
        Some(r) => Provenance {
            config_digest: r.config_digest.clone(),
            master_seed: r.master_seed,
        },
        None => return Err(Failure::Data(format!("{}: no records", args.records.display()))),
    };
    if records
        .iter()
        .any(|r| r.config_digest != provenance.config_digest || r.master_seed != provenance.master_seed)
    {
        return Err(Failure::Data("records come from different configurations".into()));
    }
    let dir = out_dir(cli)?;
    fs::create_dir_all(&dir)?;
    let path = dir.join(plot_file_name(group_by));
    let rows = export_plot_data(&records, group_by, &path, &provenance)?;
    println!("{rows} rows written to {}", path.display());
    Ok(())
}
