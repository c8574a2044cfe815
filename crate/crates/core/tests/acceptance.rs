//! Acceptance gate. Each test prints one `criterion N: PASS|FAIL` line with
//! the measured values, then asserts. Heavy criteria take a shared lock so
//! that timings are not distorted by concurrent tests.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use hdridge::datagen::Recipe;
use hdridge::dataio::{
    export_plot_data, load_csv_matrix, load_from_manifest, load_manifest, load_plot_data, load_run_records,
    save_run_records, summarize_records, write_dataset_csv, Centering, GroupBy, LoadOptions, Provenance, RunRecord,
};
use hdridge::experiment::{run_bench, write_bench_outputs, BenchOutput, DatasetSpec, ExperimentConfig, RECORDS_FILE};
use hdridge::rng::derive_seed;
use hdridge::sampling::Scheme;
use hdridge::suite::{CheckName, Scale, Suite, SuiteConfig};
use hdridge::verify::{median, CheckReport};
use tempfile::TempDir;

/// Master seed of every criterion; fixed before the suite was first run.
const ACCEPTANCE_SEED: u64 = 20261015;

const EXACTNESS_TOLERANCE: f64 = 1e-8;
const TRACE_GAP_TOLERANCE: f64 = 1e-12;
const VARIANCE_TOLERANCE: f64 = 0.15;
const DECAY_RATIO: f64 = 0.9;
const NOPL_OVER_OPL: f64 = 2.0;
const RISK_FRACTION: f64 = 0.9;
const CENTERING_TOLERANCE: f64 = 1e-10;
/// Two timings within this factor of each other count as equal.
const SAME_COST_FACTOR: f64 = 2.0;

fn heavy() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Written straight to stderr: the test harness captures `println!` of
/// passing tests, and every criterion line must show.
fn report_line(criterion: u32, ok: bool, summary: &str) {
    let line = format!("criterion {criterion}: {} {summary}\n", verdict(ok));
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn suite() -> Suite {
    Suite::new(&SuiteConfig {
        checks: CheckName::ALL.to_vec(),
        seed: ACCEPTANCE_SEED,
        scale: Scale::Desk,
        reps: None,
    })
}

fn error_bound_report() -> &'static CheckReport {
    static REPORT: OnceLock<CheckReport> = OnceLock::new();
    REPORT.get_or_init(|| suite().run(CheckName::ErrorBound).expect("error-bound check runs"))
}

#[test]
fn criterion_01_exactness() {
    let started = Instant::now();
    let report = suite().run(CheckName::Exactness).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let ok = report.statistic <= EXACTNESS_TOLERANCE && report.sample_sizes["instances"] == 100 && secs < 5.0;
    report_line(1, ok, &format!("max |dual - primal| = {:.2e} over 100 instances in {secs:.2}s", report.statistic));
    assert!(ok);
}

#[test]
fn criterion_02_trace_minimality() {
    let started = Instant::now();
    let report = suite().run(CheckName::TraceMinimality).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let gap = report.details["worst_bound_gap"];
    let ok = report.statistic == 0.0 && gap <= TRACE_GAP_TOLERANCE && secs < 30.0;
    report_line(
        2,
        ok,
        &format!("{} violations in 50x1000 trials, worst gap to closed form {gap:.2e}, {secs:.1}s", report.statistic),
    );
    assert!(ok);
}

#[test]
fn criterion_03_asymptotic_covariance() {
    let _guard = heavy();
    let started = Instant::now();
    let report = suite().run(CheckName::McVariance).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let d = |r: usize| report.details[&format!("distance_r{r}")];
    let monotone = d(300) <= d(100) && d(900) <= d(300);
    let ok = report.statistic <= VARIANCE_TOLERANCE && monotone && secs < 120.0;
    report_line(
        3,
        ok,
        &format!(
            "distance at r=300 {:.4} (tolerance {VARIANCE_TOLERANCE}); r=100/300/900: {:.4}/{:.4}/{:.4} monotone={monotone}; \
             uncentered form distance {:.4}; {secs:.1}s",
            report.statistic,
            d(100),
            d(300),
            d(900),
            report.details["distance_asymptotic"]
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_04_error_bound() {
    let _guard = heavy();
    let started = Instant::now();
    let report = error_bound_report();
    let secs = started.elapsed().as_secs_f64();
    let ok = report.passed && report.sample_sizes["reps"] == 200 && secs < 120.0;
    report_line(
        4,
        ok,
        &format!(
            "violation fraction {:.3} <= {:.3}; rank {}, recommended r {}, used r {}; median error {:.2e}",
            report.statistic,
            report.threshold,
            report.details["rank"],
            report.details["recommended_r"],
            report.sample_sizes["r"],
            report.details["median_error"]
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_05_geometric_decay() {
    let _guard = heavy();
    let report = suite().run(CheckName::GeometricDecay).unwrap();
    let medians: Vec<f64> = (1..=8).map(|m| report.details[&format!("median_error_m{m}")]).collect();
    let needed = report.details["iterations_needed_0.5_1e-3"];
    let ok = report.passed && report.threshold == DECAY_RATIO && needed == 10.0;
    report_line(
        5,
        ok,
        &format!(
            "medians {:?}; worst ratio over first 4 steps {:.3e}; iterations_needed(0.5, 1e-3) = {needed}",
            medians.iter().map(|m| format!("{m:.2e}")).collect::<Vec<_>>(),
            report.statistic
        ),
    );
    assert!(ok);
}

fn figure_bench() -> &'static BenchOutput {
    static OUT: OnceLock<BenchOutput> = OnceLock::new();
    OUT.get_or_init(|| {
        let cfg = ExperimentConfig {
            dataset: DatasetSpec::Generated(Recipe::Example1 {
                n: 100,
                p: 2000,
                seed: derive_seed(ACCEPTANCE_SEED, "figures/data"),
            }),
            methods: vec![Scheme::Uni, Scheme::Col, Scheme::Lev, Scheme::Rlev, Scheme::Opl, Scheme::Nopl],
            r: vec![200, 400, 800],
            lambda: vec![10.0],
            m: vec![3],
            r0: vec![100],
            reps: 50,
            master_seed: ACCEPTANCE_SEED,
            mixing_floor: 0.0,
            group_by: GroupBy::R,
            jobs: Some(1),
            out: None,
        };
        run_bench(&cfg).expect("figure bench runs")
    })
}

fn medians_by(records: &[RunRecord], f: impl Fn(&RunRecord) -> Option<f64>) -> BTreeMap<(usize, String), f64> {
    let mut groups: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        if let (Some(v), Some(x)) = (f(r), r.r) {
            groups.entry((x, r.method.clone())).or_default().push(v);
        }
    }
    groups.into_iter().map(|(k, v)| (k, median(&v))).collect()
}

#[test]
fn criterion_06_method_ordering() {
    let _guard = heavy();
    let started = Instant::now();
    let out = figure_bench();
    let secs = started.elapsed().as_secs_f64();
    assert_eq!(out.records.len(), 6 * 3 * 50);
    let mut ok = secs < 300.0;
    for (metric, f) in [
        ("estimation", (|r: &RunRecord| r.estimation_error) as fn(&RunRecord) -> Option<f64>),
        ("prediction", |r: &RunRecord| r.prediction_error),
    ] {
        let med = medians_by(&out.records, f);
        for r in [200, 400, 800] {
            let get = |m: &str| med[&(r, m.to_string())];
            let (opl, nopl) = (get("OPL"), get("NOPL"));
            let others = ["LEV", "RLEV", "COL", "UNI"].map(get);
            let best_other = others.iter().cloned().fold(f64::INFINITY, f64::min);
            let point = opl <= nopl && nopl < best_other && nopl <= NOPL_OVER_OPL * opl;
            ok &= point;
            println!(
                "  {metric} r={r}: OPL {opl:.3e} NOPL {nopl:.3e} LEV {:.3e} RLEV {:.3e} COL {:.3e} UNI {:.3e} -> {}",
                others[0],
                others[1],
                others[2],
                others[3],
                verdict(point)
            );
        }
    }
    report_line(6, ok, &format!("OPL <= NOPL < min(LEV, RLEV, COL, UNI) and NOPL <= 2 OPL at every r ({secs:.0}s incl. bench)"));
    assert!(ok);
}

#[test]
fn criterion_07_cost_ordering() {
    let _guard = heavy();
    let out = figure_bench();
    let ok_records: Vec<&RunRecord> = out.records.iter().filter(|r| !r.is_skipped()).collect();
    let med = |method: &str, f: fn(&RunRecord) -> f64| {
        median(&ok_records.iter().filter(|r| r.method == method).map(|r| f(r)).collect::<Vec<_>>())
    };
    let wall = |m: &str| med(m, |r| r.wall_ms.unwrap());
    let setup = |m: &str| med(m, |r| r.setup_ms.unwrap());
    let (uni, col, nopl) = (wall("UNI"), wall("COL"), wall("NOPL"));
    let opl_total = wall("OPL") + setup("OPL");
    let same = uni / col <= SAME_COST_FACTOR && col / uni <= SAME_COST_FACTOR;
    let cheap_first = uni.max(col) < nopl && nopl < opl_total;
    let lev_dominated = ["LEV", "RLEV"].iter().all(|m| setup(m) > wall(m));
    let ok = same && cheap_first && lev_dominated;
    report_line(
        7,
        ok,
        &format!(
            "median ms: UNI {uni:.2} COL {col:.2} NOPL {nopl:.2} OPL+setup {opl_total:.2}; \
             LEV setup/run {:.2}/{:.2}, RLEV setup/run {:.2}/{:.2}",
            setup("LEV"),
            wall("LEV"),
            setup("RLEV"),
            wall("RLEV")
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_08_risk_bound() {
    let _guard = heavy();
    let eps = error_bound_report().details["q90_error"];
    let mut s = suite();
    s.set_empirical_eps(eps);
    let report = s.run(CheckName::RiskBound).unwrap();
    let ok = report.statistic >= RISK_FRACTION && report.sample_sizes["instances"] == 21;
    report_line(
        8,
        ok,
        &format!(
            "{:.3} of 21 instances within the bound (need {RISK_FRACTION}); eps = {eps:.3e}; worst relative excess {:.3e}; \
             not gated: {:.3} within at the design eps 0.5",
            report.statistic,
            report.details["worst_relative_excess"],
            report.details["fraction_within_at_design_eps"]
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_09_determinism() {
    let _guard = heavy();
    let cfg = ExperimentConfig {
        dataset: DatasetSpec::Generated(Recipe::Example2 {
            n: 20,
            p: 300,
            alpha: 1e-4,
            gamma: 0.5,
            seed: derive_seed(ACCEPTANCE_SEED, "determinism/data"),
        }),
        methods: Scheme::ALL.to_vec(),
        r: vec![50, 100, 400],
        lambda: vec![1.0, 10.0],
        m: vec![1, 3],
        r0: vec![20],
        reps: 5,
        master_seed: ACCEPTANCE_SEED,
        mixing_floor: 0.0,
        group_by: GroupBy::R,
        jobs: None,
        out: None,
    };
    let dirs = [TempDir::new().unwrap(), TempDir::new().unwrap()];
    for dir in &dirs {
        let out = run_bench(&cfg).unwrap();
        write_bench_outputs(dir.path(), &cfg, &out).unwrap();
    }
    let read = |d: &TempDir| fs::read(d.path().join(RECORDS_FILE)).unwrap();
    let (a, b) = (read(&dirs[0]), read(&dirs[1]));
    let lines = a.iter().filter(|&&c| c == b'\n').count();
    let ok = a == b && lines == 7 * 3 * 2 * 2 * 5;
    report_line(9, ok, &format!("two bench runs wrote identical {RECORDS_FILE} ({lines} lines, {} bytes)", a.len()));
    assert!(ok);
}

#[test]
fn criterion_10_data_pipeline() {
    let data_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let csv = data_dir.join("standin.csv");
    let opts = LoadOptions {
        centering: Centering::Both,
        ..Default::default()
    };
    let loaded = load_csv_matrix(&csv, &opts).unwrap();
    let worst_mean = loaded
        .a
        .column_iter()
        .map(|c| c.mean().abs() / c.norm().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let centered = worst_mean <= CENTERING_TOLERANCE && loaded.y.mean().abs() <= CENTERING_TOLERANCE;

    let mut manifest = load_manifest(&data_dir.join("standin.manifest.json")).unwrap();
    manifest.source = csv.clone();
    let via_manifest = load_from_manifest(&manifest).unwrap();
    let manifest_ok = via_manifest.a == loaded.a && via_manifest.y == loaded.y;

    let tmp = TempDir::new().unwrap();
    let out_csv = tmp.path().join("saved.csv");
    write_dataset_csv(&out_csv, &loaded.a, &loaded.y).unwrap();
    let reloaded = load_csv_matrix(&out_csv, &LoadOptions::default()).unwrap();
    let csv_exact = reloaded.a == loaded.a && reloaded.y == loaded.y;

    let records: Vec<RunRecord> = (0..12)
        .map(|k| RunRecord {
            method: ["OPL", "COL", "UNI"][k % 3].to_string(),
            seed: derive_seed(ACCEPTANCE_SEED, &format!("pipeline/{k}")),
            rep: k / 3,
            n: loaded.a.nrows(),
            p: loaded.a.ncols(),
            r: Some(4 + 2 * (k % 2)),
            r0: None,
            m: Some(1),
            lambda: 1.0,
            estimation_error: Some(1.0 / (k as f64 + 3.0)),
            prediction_error: Some(0.1 * k as f64 + 1e-17),
            wall_ms: None,
            setup_ms: None,
            skipped: None,
            config_digest: manifest.sha256.clone(),
            master_seed: ACCEPTANCE_SEED,
        })
        .collect();
    let jsonl = tmp.path().join("records.jsonl");
    save_run_records(&records, &jsonl).unwrap();
    let records_exact = load_run_records(&jsonl).unwrap() == records;
    let plot = tmp.path().join("plot.csv");
    let prov = Provenance {
        config_digest: manifest.sha256.clone(),
        master_seed: ACCEPTANCE_SEED,
    };
    export_plot_data(&records, GroupBy::R, &plot, &prov).unwrap();
    let plot_exact = load_plot_data(&plot).unwrap() == summarize_records(&records, GroupBy::R);

    let ok = centered && manifest_ok && csv_exact && records_exact && plot_exact;
    report_line(
        10,
        ok,
        &format!(
            "{}x{} stand-in: worst |column mean|/norm {worst_mean:.1e}; manifest {manifest_ok}, csv {csv_exact}, \
             records {records_exact}, plot {plot_exact}",
            loaded.a.nrows(),
            loaded.a.ncols()
        ),
    );
    assert!(ok);
}
