//! Benchmark grids: every method refines for `m` iterations at each
//! (r, lambda, m, r0) point, `reps` times with independently derived seeds.
//!
//! Fixed-probability methods (UNI, COL, LEV, RLEV) reuse one distribution per
//! lambda. OPL and RSIS refresh their probabilities each iteration from the
//! exact inverse; NOPL runs the full two-step algorithm including its pilot.
//! The thin SVD is computed once per bench and the exact inverse once per
//! lambda; their cost is reported in `setup_ms` and kept out of `wall_ms`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use web_time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{
    self, bytes_digest, export_plot_data, load_csv_matrix, load_from_manifest, load_manifest, save_run_records,
    save_timings, split_timings, GroupBy, LoadOptions, Provenance, RunRecord,
};
use crate::datagen::Recipe;
use crate::error::{Error, Result};
use crate::linalg::{thin_svd, Matrix, SvdFactors, Vector};
use crate::rng::derive_seed;
use crate::sampling::{probs_column, probs_leverage, probs_ridge_leverage, ProbabilityVector, Scheme};
use crate::solvers::{refine, two_step_with, ExactDual, IterativeConfig, ProbabilityRule, ProblemInstance, RefineOptions, RidgeSolution, SolveMethod};
use crate::verify::{estimation_error, prediction_error};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSpec {
    Generated(Recipe),
    Csv {
        path: PathBuf,
        #[serde(default)]
        options: LoadOptions,
    },
    /// A manifest written by `gen`; the file digest is checked on load.
    Manifest(PathBuf),
}

impl DatasetSpec {
    /// Design matrix and response.
    pub fn load(&self) -> Result<(Matrix, Vector)> {
        match self {
            DatasetSpec::Generated(recipe) => {
                // lambda only enters the instance, not the draws
                let data = recipe.generate(1.0)?;
                Ok((data.instance.a().clone(), data.instance.y().clone()))
            }
            DatasetSpec::Csv { path, options } => {
                let d = load_csv_matrix(path, options)?;
                Ok((d.a, d.y))
            }
            DatasetSpec::Manifest(path) => {
                let d = load_from_manifest(&load_manifest(path)?)?;
                Ok((d.a, d.y))
            }
        }
    }
}

fn default_one() -> Vec<usize> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub methods: Vec<Scheme>,
    pub r: Vec<usize>,
    pub lambda: Vec<f64>,
    #[serde(default = "default_one")]
    pub m: Vec<usize>,
    /// Pilot sizes; required when NOPL is among the methods.
    #[serde(default)]
    pub r0: Vec<usize>,
    pub reps: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub mixing_floor: f64,
    /// Axis of the exported plot data.
    #[serde(default = "default_group_by")]
    pub group_by: GroupBy,
    /// Worker threads; does not affect results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_group_by() -> GroupBy {
    GroupBy::R
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.methods.is_empty() {
            return bad("method list is empty".into());
        }
        if self.methods.contains(&Scheme::Custom) {
            return bad("CUSTOM is not a benchmark method".into());
        }
        if self.r.is_empty() || self.lambda.is_empty() || self.m.is_empty() {
            return bad("grids over r, lambda and m must be non-empty".into());
        }
        if self.r.contains(&0) || self.m.contains(&0) || self.r0.contains(&0) {
            return bad("r, m and r0 grid values must be at least 1".into());
        }
        if let Some(l) = self.lambda.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return bad(format!("lambda must be positive, got {l}"));
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.methods.contains(&Scheme::Nopl) && self.r0.is_empty() {
            return bad("NOPL requires an r0 grid".into());
        }
        if !(0.0..1.0).contains(&self.mixing_floor) {
            return bad(format!("mixing floor must lie in [0, 1), got {}", self.mixing_floor));
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring `jobs` and `out`
    /// since neither changes the results.
    pub fn digest(&self) -> String {
        let canonical = Self {
            jobs: None,
            out: None,
            ..self.clone()
        };
        bytes_digest(&serde_json::to_vec(&canonical).expect("config serializes"))
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_digest: self.digest(),
            master_seed: self.master_seed,
        }
    }
}

/// Shared precomputation cost, reported once per bench.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupTiming {
    /// Thin SVD (zero when no method needs it).
    pub svd_ms: f64,
    /// Exact factorization and inverse for each lambda, in grid order.
    pub exact_ms: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct BenchOutput {
    /// Canonical order: lambda, method, r, m, r0, rep.
    pub records: Vec<RunRecord>,
    pub setup: SetupTiming,
    pub provenance: Provenance,
}

/// One grid point of one method.
#[derive(Debug, Clone, Copy)]
struct Task {
    lambda_idx: usize,
    method: Scheme,
    r: usize,
    m: usize,
    r0: Option<usize>,
    rep: usize,
}

/// Seed of one run: a hash of the master seed, method, grid point and rep,
/// so adding methods or grid values leaves other runs' draws unchanged.
pub fn rep_seed(master: u64, method: Scheme, r: usize, lambda: f64, m: usize, r0: Option<usize>, rep: usize) -> u64 {
    let r0 = r0.map_or_else(|| "-".to_string(), |v| v.to_string());
    derive_seed(master, &format!("bench/{method}/r={r}/lambda={lambda}/m={m}/r0={r0}/rep={rep}"))
}

struct LambdaContext {
    lambda: f64,
    inst: ProblemInstance,
    exact: RidgeSolution,
    inverse: Arc<Matrix>,
    exact_ms: f64,
    /// Fixed distributions with the time spent computing them.
    fixed: Vec<(Scheme, ProbabilityVector, f64)>,
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let started = Instant::now();
    let out = f()?;
    Ok((out, started.elapsed().as_secs_f64() * 1e3))
}

fn fixed_probabilities(scheme: Scheme, a: &Matrix, svd: Option<&SvdFactors>, lambda: f64) -> Result<ProbabilityVector> {
    let need_svd = || svd.ok_or_else(|| Error::InvalidArgument("leverage schemes need the thin SVD".into()));
    match scheme {
        Scheme::Uni => ProbabilityVector::uniform(a.ncols()),
        Scheme::Col => probs_column(a),
        Scheme::Lev => probs_leverage(need_svd()?),
        Scheme::Rlev => probs_ridge_leverage(need_svd()?, lambda),
        other => Err(Error::InvalidArgument(format!("{other} has no fixed distribution"))),
    }
}

/// Runs the benchmark grid on an already loaded dataset.
pub fn run_bench_on(cfg: &ExperimentConfig, a: Matrix, y: Vector) -> Result<BenchOutput> {
    cfg.validate()?;
    let a = Arc::new(a);
    let (n, p) = a.shape();
    let provenance = cfg.provenance();

    let needs_svd = cfg.methods.iter().any(|s| matches!(s, Scheme::Lev | Scheme::Rlev));
    let (svd, svd_ms) = if needs_svd {
        let (s, ms) = timed(|| thin_svd(&a))?;
        (Some(s), ms)
    } else {
        (None, 0.0)
    };

    let mut contexts = Vec::with_capacity(cfg.lambda.len());
    for &lambda in &cfg.lambda {
        let inst = ProblemInstance::new(Arc::clone(&a), y.clone(), lambda)?;
        let ((dual, inverse), exact_ms) = timed(|| {
            let dual = ExactDual::new(&a, lambda)?;
            let inverse = dual.inverse();
            Ok((dual, inverse))
        })?;
        let z = dual.dual(&y)?;
        let exact = RidgeSolution {
            beta: a.tr_mul(&z) / lambda,
            z,
            lambda,
            method: SolveMethod::Exact,
            plan_seed: None,
        };
        let mut fixed = Vec::new();
        for &scheme in &cfg.methods {
            if matches!(scheme, Scheme::Uni | Scheme::Col | Scheme::Lev | Scheme::Rlev) {
                let (pv, ms) = timed(|| fixed_probabilities(scheme, &a, svd.as_ref(), lambda))?;
                let pv = pv.with_uniform_floor(cfg.mixing_floor)?;
                fixed.push((scheme, pv, ms));
            }
        }
        contexts.push(LambdaContext {
            lambda,
            inst,
            exact,
            inverse: Arc::new(inverse),
            exact_ms,
            fixed,
        });
    }

    let mut tasks = Vec::new();
    for lambda_idx in 0..cfg.lambda.len() {
        for &method in &cfg.methods {
            for &r in &cfg.r {
                for &m in &cfg.m {
                    let r0s: Vec<Option<usize>> = if method == Scheme::Nopl {
                        cfg.r0.iter().map(|&v| Some(v)).collect()
                    } else {
                        vec![None]
                    };
                    for r0 in r0s {
                        for rep in 0..cfg.reps {
                            tasks.push(Task {
                                lambda_idx,
                                method,
                                r,
                                m,
                                r0,
                                rep,
                            });
                        }
                    }
                }
            }
        }
    }

    let run = |task: &Task| -> Result<RunRecord> {
        let ctx = &contexts[task.lambda_idx];
        let seed = rep_seed(cfg.master_seed, task.method, task.r, ctx.lambda, task.m, task.r0, task.rep);
        let mut record = RunRecord {
            method: task.method.to_string(),
            seed,
            rep: task.rep,
            n,
            p,
            r: Some(task.r),
            r0: task.r0,
            m: Some(task.m),
            lambda: ctx.lambda,
            estimation_error: None,
            prediction_error: None,
            wall_ms: None,
            setup_ms: None,
            skipped: None,
            config_digest: provenance.config_digest.clone(),
            master_seed: cfg.master_seed,
        };
        if task.r > p {
            record.skipped = Some(format!("r={} exceeds p={p}", task.r));
            return Ok(record);
        }
        if let Some(r0) = task.r0.filter(|&r0| r0 > p) {
            record.skipped = Some(format!("r0={r0} exceeds p={p}"));
            return Ok(record);
        }
        let opts = RefineOptions {
            reference: None,
            initial_z: None,
            mixing_floor: cfg.mixing_floor,
        };
        let (solution, setup_ms, wall_ms) = match task.method {
            Scheme::Nopl => {
                let run_cfg = IterativeConfig {
                    r: task.r,
                    r0: task.r0.expect("NOPL tasks carry r0"),
                    m: task.m,
                    seed,
                    mixing_floor: cfg.mixing_floor,
                };
                let ((sol, _), ms) = timed(|| two_step_with(&ctx.inst, &run_cfg, None, None))?;
                (sol, 0.0, ms)
            }
            Scheme::Opl | Scheme::Rsis => {
                let rule = ProbabilityRule::Refreshed {
                    c: Arc::clone(&ctx.inverse),
                    scheme: task.method,
                };
                let ((sol, _), ms) = timed(|| refine(&ctx.inst, &rule, task.r, task.m, seed, &opts))?;
                (sol, ctx.exact_ms, ms)
            }
            scheme => {
                let (_, pv, prob_ms) = ctx
                    .fixed
                    .iter()
                    .find(|(s, _, _)| *s == scheme)
                    .expect("fixed distribution prepared for every fixed scheme");
                let setup = if matches!(scheme, Scheme::Lev | Scheme::Rlev) {
                    svd_ms + prob_ms
                } else {
                    *prob_ms
                };
                let rule = ProbabilityRule::Fixed(pv.clone());
                let ((sol, _), ms) = timed(|| refine(&ctx.inst, &rule, task.r, task.m, seed, &opts))?;
                (sol, setup, ms)
            }
        };
        record.estimation_error = Some(estimation_error(&solution.beta, &ctx.exact.beta)?);
        record.prediction_error = Some(prediction_error(&a, &solution.beta, &ctx.exact.beta)?);
        record.wall_ms = Some(wall_ms);
        record.setup_ms = Some(setup_ms);
        Ok(record)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let records = pool.install(|| tasks.par_iter().map(run).collect::<Result<Vec<_>>>())?;

    Ok(BenchOutput {
        records,
        setup: SetupTiming {
            svd_ms,
            exact_ms: contexts.iter().map(|c| (c.lambda, c.exact_ms)).collect(),
        },
        provenance,
    })
}

/// Parameters of a single solve outside a benchmark grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    pub r: usize,
    /// Pilot size; NOPL only.
    pub r0: Option<usize>,
    pub m: usize,
    pub seed: u64,
    #[serde(default)]
    pub mixing_floor: f64,
}

/// One run of `scheme` with its own setup (SVD or exact inverse as needed),
/// following the benchmark protocol.
pub fn solve_with_scheme(inst: &ProblemInstance, scheme: Scheme, params: &SolveParams) -> Result<RidgeSolution> {
    let opts = RefineOptions {
        reference: None,
        initial_z: None,
        mixing_floor: params.mixing_floor,
    };
    match scheme {
        Scheme::Nopl => {
            let r0 = params
                .r0
                .ok_or_else(|| Error::InvalidArgument("NOPL requires a pilot size r0".into()))?;
            let cfg = IterativeConfig {
                r: params.r,
                r0,
                m: params.m,
                seed: params.seed,
                mixing_floor: params.mixing_floor,
            };
            Ok(two_step_with(inst, &cfg, None, None)?.0)
        }
        Scheme::Opl | Scheme::Rsis => {
            let rule = ProbabilityRule::Refreshed {
                c: Arc::new(ExactDual::new(inst.a(), inst.lambda())?.inverse()),
                scheme,
            };
            Ok(refine(inst, &rule, params.r, params.m, params.seed, &opts)?.0)
        }
        Scheme::Custom => Err(Error::InvalidArgument("CUSTOM needs explicit probabilities".into())),
        fixed => {
            let svd = if matches!(fixed, Scheme::Lev | Scheme::Rlev) {
                Some(thin_svd(inst.a())?)
            } else {
                None
            };
            let pv = fixed_probabilities(fixed, inst.a(), svd.as_ref(), inst.lambda())?
                .with_uniform_floor(params.mixing_floor)?;
            Ok(refine(inst, &ProbabilityRule::Fixed(pv), params.r, params.m, params.seed, &opts)?.0)
        }
    }
}

pub fn run_bench(cfg: &ExperimentConfig) -> Result<BenchOutput> {
    let (a, y) = cfg.dataset.load()?;
    run_bench_on(cfg, a, y)
}

/// File names written by [`write_bench_outputs`].
pub const RECORDS_FILE: &str = "records.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const SETUP_FILE: &str = "setup.json";

pub fn plot_file_name(group_by: GroupBy) -> String {
    format!("plot_by_{}.csv", group_by.as_str())
}

/// Writes the timing-free records, the aligned timings, the shared setup
/// costs and the plot data into `dir`.
pub fn write_bench_outputs(dir: &Path, cfg: &ExperimentConfig, out: &BenchOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (records, timings) = split_timings(&out.records);
    save_run_records(&records, &dir.join(RECORDS_FILE))?;
    save_timings(&timings, &dir.join(TIMINGS_FILE))?;
    #[derive(Serialize)]
    struct Setup<'a> {
        config_digest: &'a str,
        master_seed: u64,
        #[serde(flatten)]
        setup: &'a SetupTiming,
    }
    let setup = Setup {
        config_digest: &out.provenance.config_digest,
        master_seed: out.provenance.master_seed,
        setup: &out.setup,
    };
    fs::write(dir.join(SETUP_FILE), serde_json::to_string_pretty(&setup)? + "\n")?;
    export_plot_data(&out.records, cfg.group_by, &dir.join(plot_file_name(cfg.group_by)), &out.provenance)?;
    Ok(())
}

/// Reloads records and, when present, their timings from a bench directory.
pub fn load_bench_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut records = dataio::load_run_records(&dir.join(RECORDS_FILE))?;
    let tpath = dir.join(TIMINGS_FILE);
    if tpath.exists() {
        dataio::merge_timings(&mut records, &dataio::load_timings(&tpath)?)?;
    }
    Ok(records)
}
