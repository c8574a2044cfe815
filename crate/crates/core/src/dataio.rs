//! Dataset ingestion and result persistence.
//!
//! Design matrices come in as delimited text with one sample per row. Run
//! records go out as JSON lines, plot data and solutions as CSV. Plot,
//! solution and probability files start with a `#` provenance line; run
//! records carry the same fields on every line. Dataset CSVs carry none so
//! that any CSV reader can load them.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::sampling::ProbabilityVector;
use crate::solvers::{ProblemInstance, RidgeSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Centering {
    #[default]
    None,
    A,
    Y,
    Both,
}

impl Centering {
    pub fn centers_a(self) -> bool {
        matches!(self, Centering::A | Centering::Both)
    }

    pub fn centers_y(self) -> bool {
        matches!(self, Centering::Y | Centering::Both)
    }
}

impl FromStr for Centering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Centering::None),
            "a" => Ok(Centering::A),
            "y" => Ok(Centering::Y),
            "both" => Ok(Centering::Both),
            other => Err(Error::InvalidArgument(format!("unknown centering '{other}' (a, y, both, none)"))),
        }
    }
}

/// Field separator. `Whitespace` splits on runs of blanks and ignores
/// leading and trailing blanks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    #[default]
    Comma,
    Tab,
    Semicolon,
    Whitespace,
}

impl Delimiter {
    fn byte(self) -> Option<u8> {
        match self {
            Delimiter::Comma => Some(b','),
            Delimiter::Tab => Some(b'\t'),
            Delimiter::Semicolon => Some(b';'),
            Delimiter::Whitespace => None,
        }
    }
}

/// Where the response vector lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseSource {
    /// 0-based column of the main file.
    Column(usize),
    /// First column of a separate file, row-aligned with the design.
    File(PathBuf),
}

impl Default for ResponseSource {
    fn default() -> Self {
        ResponseSource::Column(0)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    pub response: ResponseSource,
    /// `None` detects a header: the first row is a header iff some cell in
    /// it does not parse as a number.
    pub has_header: Option<bool>,
    pub row_limit: Option<usize>,
    pub centering: Centering,
    pub delimiter: Delimiter,
    /// 0-based columns of the main file to ignore.
    pub drop_columns: Vec<usize>,
}

/// Provenance of a loaded dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source: PathBuf,
    pub n_rows: usize,
    pub n_cols: usize,
    pub options: LoadOptions,
    /// Hex SHA-256 of the source file.
    pub sha256: String,
    /// Hex SHA-256 of the response file, when separate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_sha256: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub a: Matrix,
    pub y: Vector,
    pub feature_names: Option<Vec<String>>,
    pub manifest: DatasetManifest,
}

impl LoadedData {
    pub fn into_instance(self, lambda: f64) -> Result<ProblemInstance> {
        ProblemInstance::new(self.a, self.y, lambda)
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let k = file.read(&mut buf)?;
        if k == 0 {
            break;
        }
        hasher.update(&buf[..k]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Hex SHA-256 of a byte string.
pub fn bytes_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Raw rows with their 1-based line numbers.
fn read_rows(path: &Path, delimiter: Delimiter) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rows = Vec::new();
    match delimiter.byte() {
        Some(d) => {
            let mut reader = csv::ReaderBuilder::new()
                .delimiter(d)
                .has_headers(false)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_path(path)?;
            for rec in reader.records() {
                let rec = rec?;
                let line = rec.position().map_or(rows.len() + 1, |p| p.line() as usize);
                if rec.len() == 1 && rec[0].is_empty() {
                    continue;
                }
                rows.push((line, rec.iter().map(str::to_string).collect()));
            }
        }
        None => {
            let reader = BufReader::new(File::open(path)?);
            for (k, line) in reader.lines().enumerate() {
                let line = line?;
                let fields: Vec<String> = line.split_whitespace().map(str::to_string).collect();
                if !fields.is_empty() {
                    rows.push((k + 1, fields));
                }
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Data {
            path: path.to_path_buf(),
            msg: "file contains no rows".into(),
        });
    }
    Ok(rows)
}

fn looks_like_header(row: &[String]) -> bool {
    row.iter().any(|c| c.parse::<f64>().is_err())
}

fn parse_cell(path: &Path, row: usize, col: usize, cell: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(Error::Parse {
            path: path.to_path_buf(),
            row,
            col,
            msg: format!("non-finite value '{cell}'"),
        }),
        Err(_) => Err(Error::Parse {
            path: path.to_path_buf(),
            row,
            col,
            msg: format!("not a number: '{cell}'"),
        }),
    }
}

/// Numeric body of a delimited file after header handling and row limit.
struct Table {
    header: Option<Vec<String>>,
    /// (line, values)
    rows: Vec<(usize, Vec<f64>)>,
    width: usize,
}

fn read_table(path: &Path, delimiter: Delimiter, has_header: Option<bool>, row_limit: Option<usize>) -> Result<Table> {
    let mut raw = read_rows(path, delimiter).map_err(|e| match e {
        Error::Io(io) => Error::Data {
            path: path.to_path_buf(),
            msg: io.to_string(),
        },
        Error::Csv(c) if c.is_io_error() => Error::Data {
            path: path.to_path_buf(),
            msg: c.to_string(),
        },
        other => other,
    })?;
    let header = match has_header {
        Some(true) => Some(raw.remove(0).1),
        Some(false) => None,
        None if looks_like_header(&raw[0].1) => Some(raw.remove(0).1),
        None => None,
    };
    if let Some(limit) = row_limit {
        raw.truncate(limit);
    }
    if raw.is_empty() {
        return Err(Error::Data {
            path: path.to_path_buf(),
            msg: "file contains a header but no data rows".into(),
        });
    }
    let width = header.as_ref().map_or(raw[0].1.len(), Vec::len);
    let mut rows = Vec::with_capacity(raw.len());
    for (line, fields) in raw {
        if fields.len() != width {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: line,
                col: fields.len().min(width) + 1,
                msg: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        let values = fields
            .iter()
            .enumerate()
            .map(|(j, c)| parse_cell(path, line, j + 1, c))
            .collect::<Result<Vec<_>>>()?;
        rows.push((line, values));
    }
    Ok(Table { header, rows, width })
}

fn center_columns(a: &mut Matrix) {
    for mut col in a.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
}

/// Loads a design matrix and response from delimited text.
pub fn load_csv_matrix(path: &Path, opts: &LoadOptions) -> Result<LoadedData> {
    let table = read_table(path, opts.delimiter, opts.has_header, opts.row_limit)?;
    let response_col = match &opts.response {
        ResponseSource::Column(c) => {
            if *c >= table.width {
                return Err(Error::InvalidArgument(format!(
                    "response column {c} out of range for {} columns",
                    table.width
                )));
            }
            Some(*c)
        }
        ResponseSource::File(_) => None,
    };
    for &c in &opts.drop_columns {
        if c >= table.width {
            return Err(Error::InvalidArgument(format!("dropped column {c} out of range for {} columns", table.width)));
        }
    }
    let features: Vec<usize> = (0..table.width)
        .filter(|c| Some(*c) != response_col && !opts.drop_columns.contains(c))
        .collect();
    if features.is_empty() {
        return Err(Error::Data {
            path: path.to_path_buf(),
            msg: "no feature columns remain".into(),
        });
    }
    let n = table.rows.len();
    let p = features.len();
    let mut a = Matrix::zeros(n, p);
    for (i, (_, values)) in table.rows.iter().enumerate() {
        for (k, &c) in features.iter().enumerate() {
            a[(i, k)] = values[c];
        }
    }

    let (mut y, response_sha256) = match (&opts.response, response_col) {
        (_, Some(c)) => (Vector::from_iterator(n, table.rows.iter().map(|(_, v)| v[c])), None),
        (ResponseSource::File(rpath), None) => {
            let rt = read_table(rpath, opts.delimiter, None, Some(n))?;
            if rt.rows.len() < n {
                return Err(Error::Data {
                    path: rpath.clone(),
                    msg: format!("response file has {} rows, design has {n}", rt.rows.len()),
                });
            }
            (
                Vector::from_iterator(n, rt.rows.iter().map(|(_, v)| v[0])),
                Some(file_digest(rpath)?),
            )
        }
        (ResponseSource::Column(_), None) => unreachable!("column response always resolves"),
    };

    if opts.centering.centers_a() {
        center_columns(&mut a);
    }
    if opts.centering.centers_y() {
        let mean = y.mean();
        y.add_scalar_mut(-mean);
    }

    let feature_names = table.header.map(|h| features.iter().map(|&c| h[c].clone()).collect());
    Ok(LoadedData {
        a,
        y,
        feature_names,
        manifest: DatasetManifest {
            source: path.to_path_buf(),
            n_rows: n,
            n_cols: p,
            options: opts.clone(),
            sha256: file_digest(path)?,
            response_sha256,
        },
    })
}

/// Reloads the dataset a manifest describes, refusing files whose digest
/// no longer matches.
pub fn load_from_manifest(manifest: &DatasetManifest) -> Result<LoadedData> {
    let check = |path: &Path, expected: &str| -> Result<()> {
        let actual = file_digest(path)?;
        if actual != expected {
            return Err(Error::DigestMismatch {
                path: path.to_path_buf(),
                expected: expected.to_string(),
                actual,
            });
        }
        Ok(())
    };
    check(&manifest.source, &manifest.sha256)?;
    if let (ResponseSource::File(rpath), Some(expected)) = (&manifest.options.response, &manifest.response_sha256) {
        check(rpath, expected)?;
    }
    let loaded = load_csv_matrix(&manifest.source, &manifest.options)?;
    if loaded.a.shape() != (manifest.n_rows, manifest.n_cols) {
        return Err(Error::Data {
            path: manifest.source.clone(),
            msg: format!(
                "manifest records {}x{}, file loads as {}x{}",
                manifest.n_rows,
                manifest.n_cols,
                loaded.a.nrows(),
                loaded.a.ncols()
            ),
        });
    }
    Ok(loaded)
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, manifest)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Writes `y,a1,...,ap` with a header; values use the shortest decimal form
/// that round-trips to the same `f64`.
pub fn write_dataset_csv(path: &Path, a: &Matrix, y: &Vector) -> Result<()> {
    if a.nrows() != y.len() {
        return Err(Error::Dimension(format!("{} rows but {} responses", a.nrows(), y.len())));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["y".to_string()];
    header.extend((1..=a.ncols()).map(|j| format!("a{j}")));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(a.ncols() + 1);
    for i in 0..a.nrows() {
        row.clear();
        row.push(y[i].to_string());
        row.extend(a.row(i).iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One solver run. Timing fields are left out of the canonical records file
/// so reruns are byte-identical; they travel in a separate timings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub seed: u64,
    pub rep: usize,
    pub n: usize,
    pub p: usize,
    pub r: Option<usize>,
    pub r0: Option<usize>,
    pub m: Option<usize>,
    pub lambda: f64,
    pub estimation_error: Option<f64>,
    pub prediction_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
    /// Shared precomputation charged to this method (thin SVD, exact
    /// inverse); zero for methods that need none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setup_ms: Option<f64>,
    /// Reason the grid point was not run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    pub config_digest: String,
    pub master_seed: u64,
}

impl RunRecord {
    pub fn is_skipped(&self) -> bool {
        self.skipped.is_some()
    }

    pub fn without_timing(&self) -> Self {
        Self {
            wall_ms: None,
            setup_ms: None,
            ..self.clone()
        }
    }
}

/// Timing for the record on the same line of the records file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub method: String,
    pub seed: u64,
    pub wall_ms: Option<f64>,
    pub setup_ms: Option<f64>,
}

fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: k + 1,
            col: e.column(),
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

/// JSON lines, one record per line, in the order given.
pub fn save_run_records(records: &[RunRecord], path: &Path) -> Result<()> {
    write_jsonl(records, path)
}

pub fn load_run_records(path: &Path) -> Result<Vec<RunRecord>> {
    read_jsonl(path)
}

pub fn save_timings(timings: &[TimingRecord], path: &Path) -> Result<()> {
    write_jsonl(timings, path)
}

pub fn load_timings(path: &Path) -> Result<Vec<TimingRecord>> {
    read_jsonl(path)
}

/// Splits records into the canonical (timing-free) form and the aligned
/// timing lines.
pub fn split_timings(records: &[RunRecord]) -> (Vec<RunRecord>, Vec<TimingRecord>) {
    records
        .iter()
        .map(|r| {
            (
                r.without_timing(),
                TimingRecord {
                    method: r.method.clone(),
                    seed: r.seed,
                    wall_ms: r.wall_ms,
                    setup_ms: r.setup_ms,
                },
            )
        })
        .unzip()
}

/// Inverse of [`split_timings`]; lines must correspond one to one.
pub fn merge_timings(records: &mut [RunRecord], timings: &[TimingRecord]) -> Result<()> {
    if records.len() != timings.len() {
        return Err(Error::InvalidArgument(format!(
            "{} records but {} timing lines",
            records.len(),
            timings.len()
        )));
    }
    for (k, (r, t)) in records.iter_mut().zip(timings).enumerate() {
        if r.method != t.method || r.seed != t.seed {
            return Err(Error::InvalidArgument(format!("timing line {} does not match its record", k + 1)));
        }
        r.wall_ms = t.wall_ms;
        r.setup_ms = t.setup_ms;
    }
    Ok(())
}

/// Grid axis used as the x value of plot data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    R,
    Lambda,
    M,
    R0,
}

impl GroupBy {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupBy::R => "r",
            GroupBy::Lambda => "lambda",
            GroupBy::M => "m",
            GroupBy::R0 => "r0",
        }
    }

    fn key(self, rec: &RunRecord) -> Option<f64> {
        match self {
            GroupBy::R => rec.r.map(|v| v as f64),
            GroupBy::Lambda => Some(rec.lambda),
            GroupBy::M => rec.m.map(|v| v as f64),
            GroupBy::R0 => rec.r0.map(|v| v as f64),
        }
    }
}

impl FromStr for GroupBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "r" => Ok(GroupBy::R),
            "lambda" => Ok(GroupBy::Lambda),
            "m" => Ok(GroupBy::M),
            "r0" => Ok(GroupBy::R0),
            other => Err(Error::InvalidArgument(format!("cannot group by '{other}' (r, lambda, m, r0)"))),
        }
    }
}

/// Linearly interpolated quantile of sorted data (the "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn summarize(mut values: Vec<f64>) -> (f64, f64, f64) {
    values.sort_by(f64::total_cmp);
    (
        quantile_sorted(&values, 0.5),
        quantile_sorted(&values, 0.25),
        quantile_sorted(&values, 0.75),
    )
}

/// One row of plot data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub x: f64,
    pub method: String,
    pub metric: String,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub median_wall_ms: Option<f64>,
    pub median_setup_ms: Option<f64>,
}

/// Median and quartiles of each error metric per (x, method), in ascending
/// x then method order. Groups with no completed runs are skipped with a
/// warning.
pub fn summarize_records(records: &[RunRecord], group_by: GroupBy) -> Vec<PlotRow> {
    let mut groups: BTreeMap<(u64, String), Vec<&RunRecord>> = BTreeMap::new();
    for rec in records {
        let Some(x) = group_by.key(rec) else {
            warn!("record for {} has no {} value; ignored", rec.method, group_by.as_str());
            continue;
        };
        // f64 keys order correctly through their bit pattern when non-negative
        groups.entry((x.to_bits(), rec.method.clone())).or_default().push(rec);
    }
    let mut keys: Vec<_> = groups.keys().cloned().collect();
    keys.sort_by(|a, b| f64::from_bits(a.0).total_cmp(&f64::from_bits(b.0)).then_with(|| a.1.cmp(&b.1)));

    let mut rows = Vec::new();
    for key in keys {
        let group = &groups[&key];
        let done: Vec<&&RunRecord> = group.iter().filter(|r| !r.is_skipped()).collect();
        let x = f64::from_bits(key.0);
        if done.is_empty() {
            warn!("no completed runs for {} at {}={x}; group skipped", key.1, group_by.as_str());
            continue;
        }
        let timing = |f: fn(&RunRecord) -> Option<f64>| -> Option<f64> {
            let v: Option<Vec<f64>> = done.iter().map(|r| f(r)).collect();
            v.map(|v| summarize(v).0)
        };
        let wall = timing(|r| r.wall_ms);
        let setup = timing(|r| r.setup_ms);
        for (metric, f) in [
            ("estimation_error", (|r: &RunRecord| r.estimation_error) as fn(&RunRecord) -> Option<f64>),
            ("prediction_error", |r: &RunRecord| r.prediction_error),
        ] {
            let values: Vec<f64> = done.iter().filter_map(|r| f(r)).collect();
            if values.is_empty() {
                continue;
            }
            let (median, q25, q75) = summarize(values);
            rows.push(PlotRow {
                x,
                method: key.1.clone(),
                metric: metric.to_string(),
                median,
                q25,
                q75,
                median_wall_ms: wall,
                median_setup_ms: setup,
            });
        }
    }
    rows
}

/// Provenance written as the first line of CSV outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_digest: String,
    pub master_seed: u64,
}

impl Provenance {
    fn line(&self) -> String {
        format!("# config_digest={} master_seed={}\n", self.config_digest, self.master_seed)
    }
}

fn csv_writer(path: &Path, provenance: &Provenance) -> Result<csv::Writer<File>> {
    let mut file = File::create(path)?;
    file.write_all(provenance.line().as_bytes())?;
    Ok(csv::Writer::from_writer(file))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes `x,method,metric,median,q25,q75,median_wall_ms,median_setup_ms`.
/// Errors are raw, not log-scaled.
pub fn export_plot_data(records: &[RunRecord], group_by: GroupBy, path: &Path, provenance: &Provenance) -> Result<usize> {
    let rows = summarize_records(records, group_by);
    let mut w = csv_writer(path, provenance)?;
    w.write_record(["x", "method", "metric", "median", "q25", "q75", "median_wall_ms", "median_setup_ms"])?;
    for row in &rows {
        w.write_record([
            row.x.to_string(),
            row.method.clone(),
            row.metric.clone(),
            row.median.to_string(),
            row.q25.to_string(),
            row.q75.to_string(),
            opt(row.median_wall_ms),
            opt(row.median_setup_ms),
        ])?;
    }
    w.flush()?;
    Ok(rows.len())
}

/// Reads plot data written by [`export_plot_data`], skipping the
/// provenance line.
pub fn load_plot_data(path: &Path) -> Result<Vec<PlotRow>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |j: usize| -> Result<f64> { parse_cell(path, line, j + 1, &rec[j]) };
        let opt_num = |j: usize| -> Result<Option<f64>> {
            if rec[j].is_empty() {
                Ok(None)
            } else {
                num(j).map(Some)
            }
        };
        rows.push(PlotRow {
            x: num(0)?,
            method: rec[1].to_string(),
            metric: rec[2].to_string(),
            median: num(3)?,
            q25: num(4)?,
            q75: num(5)?,
            median_wall_ms: opt_num(6)?,
            median_setup_ms: opt_num(7)?,
        });
    }
    Ok(rows)
}

/// Writes `index,beta` (0-based index).
pub fn write_solution_csv(solution: &RidgeSolution, path: &Path, provenance: &Provenance) -> Result<()> {
    let mut w = csv_writer(path, provenance)?;
    w.write_record(["index", "beta"])?;
    for (i, b) in solution.beta.iter().enumerate() {
        w.write_record([i.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the coefficient column of a solution file.
pub fn read_solution_csv(path: &Path) -> Result<Vector> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut beta = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        beta.push(parse_cell(path, line, 2, &rec[1])?);
    }
    Ok(Vector::from_vec(beta))
}

/// Writes `index,pi` (0-based index).
pub fn write_probabilities_csv(probs: &ProbabilityVector, path: &Path, provenance: &Provenance) -> Result<()> {
    let mut w = csv_writer(path, provenance)?;
    w.write_record(["index", "pi"])?;
    for (i, p) in probs.as_slice().iter().enumerate() {
        w.write_record([i.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
