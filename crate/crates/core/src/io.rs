//! Text file formats: traces, bases, tomography records, configuration and reports.
//!
//! Trace CSV
//! ```text
//! bin_width_ns,window_ns
//! 2,2500
//! t_ns,counts
//! 0,0.0012
//! 2,0.0013
//! ```
//! A bare `t_ns,counts` table (raw time-tagger histogram) is accepted on input.
//! Basis CSV has columns `bin,l_0up,l_0down,l_1up,l_1down` and a sibling
//! `<stem>.meta.json` with the bin width, window, calibration sweeps and field.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Constraint;
use crate::photodynamics::RateModelConfig;
use crate::spin::SpinSystemParams;
use crate::studies::{FidelityCurve, FieldRow, FieldStudyConfig, FitParams, SweepStudyConfig};
use crate::tomography::TomographyRecords;
use crate::types::{BasisSet, PhotonTimeTrace, PopulationVector};

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn fmt_err(p: &Path, message: impl ToString) -> Error {
    Error::Format {
        path: path_str(p),
        message: message.to_string(),
    }
}

fn read_text(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(|source| Error::Io {
        path: path_str(p),
        source,
    })
}

fn write_text(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).map_err(|source| Error::Io {
        path: path_str(p),
        source,
    })
}

fn is_json(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| fmt_err(path, e))?;
    s.push('\n');
    write_text(path, &s)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| fmt_err(path, e))
}

fn csv_writer() -> csv::WriterBuilder {
    let mut b = csv::WriterBuilder::new();
    b.flexible(true);
    b
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn finish_csv(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| fmt_err(path, e))?;
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path_str(path),
        source,
    })
}

fn parse_f64(path: &Path, field: Option<&str>, what: &str) -> Result<f64> {
    let s = field.ok_or_else(|| fmt_err(path, format!("missing {what}")))?;
    s.parse::<f64>()
        .map_err(|_| fmt_err(path, format!("cannot parse {what} `{s}`")))
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceJson {
    bin_width_ns: f64,
    window_ns: f64,
    counts: Vec<f64>,
}

pub fn write_trace_csv(path: &Path, trace: &PhotonTimeTrace) -> Result<()> {
    let mut w = csv_writer().from_writer(Vec::new());
    let io = |e: csv::Error| fmt_err(path, e);
    w.write_record(["bin_width_ns", "window_ns"]).map_err(io)?;
    w.write_record([trace.bin_width_ns.to_string(), trace.window_ns().to_string()])
        .map_err(io)?;
    w.write_record(["t_ns", "counts"]).map_err(io)?;
    for (t, c) in trace.bin_starts().zip(&trace.counts) {
        w.write_record([t.to_string(), c.to_string()]).map_err(io)?;
    }
    finish_csv(path, w)
}

pub fn write_trace_json(path: &Path, trace: &PhotonTimeTrace) -> Result<()> {
    write_json(
        path,
        &TraceJson {
            bin_width_ns: trace.bin_width_ns,
            window_ns: trace.window_ns(),
            counts: trace.counts.clone(),
        },
    )
}

/// Writes CSV or JSON depending on the extension.
pub fn write_trace(path: &Path, trace: &PhotonTimeTrace) -> Result<()> {
    if is_json(path) {
        write_trace_json(path, trace)
    } else {
        write_trace_csv(path, trace)
    }
}

/// Reads a trace CSV, a raw `t_ns,counts` histogram, or the JSON mirror.
pub fn read_trace(path: &Path) -> Result<PhotonTimeTrace> {
    let text = read_text(path)?;
    if is_json(path) {
        let t: TraceJson = serde_json::from_str(&text).map_err(|e| fmt_err(path, e))?;
        check_window(path, t.bin_width_ns, t.window_ns, t.counts.len())?;
        return Ok(PhotonTimeTrace::new(t.bin_width_ns, t.counts)?);
    }
    let mut rows = csv_reader(&text).into_records();
    let mut next = || -> Result<Option<csv::StringRecord>> {
        match rows.next() {
            None => Ok(None),
            Some(r) => r.map(Some).map_err(|e| fmt_err(path, e)),
        }
    };
    let first = next()?.ok_or_else(|| fmt_err(path, "empty file"))?;
    let mut declared = None;
    let header = first.get(0).unwrap_or("");
    if header == "bin_width_ns" {
        let meta = next()?.ok_or_else(|| fmt_err(path, "missing bin_width_ns,window_ns values"))?;
        let bw = parse_f64(path, meta.get(0), "bin_width_ns")?;
        let win = parse_f64(path, meta.get(1), "window_ns")?;
        declared = Some((bw, win));
        let h = next()?.ok_or_else(|| fmt_err(path, "missing t_ns,counts header"))?;
        if h.get(0) != Some("t_ns") {
            return Err(fmt_err(path, "expected t_ns,counts header"));
        }
    }
    let mut times = Vec::new();
    let mut counts = Vec::new();
    if header != "bin_width_ns" && header != "t_ns" {
        // Headerless raw dump: the first row is data.
        times.push(parse_f64(path, first.get(0), "t_ns")?);
        counts.push(parse_f64(path, first.get(1), "counts")?);
    }
    while let Some(r) = next()? {
        times.push(parse_f64(path, r.get(0), "t_ns")?);
        counts.push(parse_f64(path, r.get(1), "counts")?);
    }
    let bw = match declared {
        Some((bw, win)) => {
            check_window(path, bw, win, counts.len())?;
            bw
        }
        None => infer_bin_width(path, &times)?,
    };
    Ok(PhotonTimeTrace::new(bw, counts)?)
}

fn check_window(path: &Path, bw: f64, win: f64, n: usize) -> Result<()> {
    if (bw * n as f64 - win).abs() > 1e-9 * win.abs().max(1.0) {
        return Err(fmt_err(path, format!("window {win} ns does not match {n} bins of {bw} ns")));
    }
    Ok(())
}

fn infer_bin_width(path: &Path, times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(fmt_err(path, "raw histogram needs at least two rows to infer the bin width"));
    }
    let bw = times[1] - times[0];
    let uniform = times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - bw).abs() <= 1e-9 * bw.abs().max(1.0));
    if !(bw > 0.0) || !uniform {
        return Err(fmt_err(path, "raw histogram time column is not uniformly spaced"));
    }
    Ok(bw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisMeta {
    pub bin_width_ns: f64,
    pub window_ns: f64,
    pub sweeps_calibration: f64,
    pub field_g: Option<f64>,
}

/// `<dir>/<stem>.meta.json` next to a basis CSV.
pub fn basis_meta_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("basis");
    csv_path.with_file_name(format!("{stem}.meta.json"))
}

const BASIS_HEADER: [&str; 5] = ["bin", "l_0up", "l_0down", "l_1up", "l_1down"];

/// Writes the basis CSV and its metadata file; returns both paths.
pub fn write_basis(path: &Path, basis: &BasisSet) -> Result<[PathBuf; 2]> {
    let mut w = csv_writer().from_writer(Vec::new());
    let io = |e: csv::Error| fmt_err(path, e);
    w.write_record(BASIS_HEADER).map_err(io)?;
    for (i, row) in basis.matrix().row_iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    finish_csv(path, w)?;
    let meta_path = basis_meta_path(path);
    write_json(
        &meta_path,
        &BasisMeta {
            bin_width_ns: basis.bin_width_ns,
            window_ns: basis.window_ns(),
            sweeps_calibration: basis.sweeps_calibration,
            field_g: basis.field_g,
        },
    )?;
    Ok([path.to_path_buf(), meta_path])
}

pub fn read_basis(path: &Path) -> Result<BasisSet> {
    let meta: BasisMeta = read_json(&basis_meta_path(path))?;
    let text = read_text(path)?;
    let mut rows = csv_reader(&text).into_records();
    let header = rows
        .next()
        .ok_or_else(|| fmt_err(path, "empty basis file"))?
        .map_err(|e| fmt_err(path, e))?;
    if header.iter().collect::<Vec<_>>() != BASIS_HEADER {
        return Err(fmt_err(path, format!("expected header {}", BASIS_HEADER.join(","))));
    }
    let mut data = Vec::new();
    for (i, r) in rows.enumerate() {
        let r = r.map_err(|e| fmt_err(path, e))?;
        if r.len() != 5 {
            return Err(fmt_err(path, format!("row {i} has {} fields, expected 5", r.len())));
        }
        for k in 1..5 {
            data.push(parse_f64(path, r.get(k), BASIS_HEADER[k])?);
        }
    }
    let n = data.len() / 4;
    check_window(path, meta.bin_width_ns, meta.window_ns, n)?;
    let m = DMatrix::from_row_slice(n, 4, &data);
    let mut basis = BasisSet::new(m, meta.bin_width_ns, meta.sweeps_calibration)?;
    basis.field_g = meta.field_g;
    Ok(basis)
}

/// Combined configuration file: spin and rate parameters at top level,
/// `[study]` and `[field_scan]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ModelConfig {
    #[serde(flatten)]
    pub spin: SpinSystemParams,
    #[serde(flatten)]
    pub rates: RateModelConfig,
    pub study: SweepStudyConfig,
    pub field_scan: FieldStudyConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        self.study.validate()?;
        Ok(())
    }

    /// Canonical JSON used for hashing and echoing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Loads TOML, or JSON when the extension is `.json`.
pub fn load_config(path: &Path) -> Result<ModelConfig> {
    let text = read_text(path)?;
    let cfg: ModelConfig = if is_json(path) {
        serde_json::from_str(&text).map_err(|e| fmt_err(path, e))?
    } else {
        toml::from_str(&text).map_err(|e| fmt_err(path, e))?
    };
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub c: PopulationVector,
    pub residual: f64,
    pub constraint_mode: Constraint,
    pub kappa: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub expected: Option<PopulationVector>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fidelity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementReport {
    pub element_label: String,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyReport {
    pub re: [[f64; 4]; 4],
    pub im: [[f64; 4]; 4],
    pub psd_projected: bool,
    pub raw_re: [[f64; 4]; 4],
    pub raw_im: [[f64; 4]; 4],
    pub elements: Vec<ElementReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fidelity: Option<f64>,
}

impl TomographyReport {
    pub fn from_reconstruction(rec: &crate::tomography::Reconstruction, fidelity: Option<f64>) -> Self {
        let split = |m: &crate::tomography::CMatrix4| {
            let re = std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)].re));
            let im = std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)].im));
            (re, im)
        };
        let (re, im) = split(&rec.best().0);
        let (raw_re, raw_im) = split(&rec.raw.0);
        Self {
            re,
            im,
            psd_projected: rec.projected.is_some(),
            raw_re,
            raw_im,
            elements: rec
                .elements
                .iter()
                .map(|&(e, a, b)| ElementReport {
                    element_label: e.label(),
                    a,
                    b,
                })
                .collect(),
            fidelity,
        }
    }
}

pub fn write_records(path: &Path, records: &TomographyRecords) -> Result<()> {
    write_json(path, records)
}

pub fn read_records(path: &Path) -> Result<TomographyRecords> {
    read_json(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub target: f64,
    pub direct_ns: Option<f64>,
    pub traditional_ns: Option<f64>,
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: SweepStudyConfig,
    pub curves: Vec<FidelityCurve>,
    pub fits: Vec<Option<FitParams>>,
    pub speedup: Vec<SpeedupRow>,
}

const CURVE_HEADER: [&str; 6] = ["method", "sweeps", "time_ns", "mean", "std", "trials"];

pub fn write_curves_csv(path: &Path, curves: &[FidelityCurve]) -> Result<()> {
    let mut w = csv_writer().from_writer(Vec::new());
    let io = |e: csv::Error| fmt_err(path, e);
    w.write_record(CURVE_HEADER).map_err(io)?;
    for c in curves {
        let method = serde_json::to_value(c.method).expect("method serializes");
        for p in &c.points {
            w.write_record([
                method.as_str().unwrap_or_default().to_string(),
                p.sweeps.to_string(),
                p.time_ns.to_string(),
                p.mean.to_string(),
                p.std.to_string(),
                p.trials.to_string(),
            ])
            .map_err(io)?;
        }
    }
    finish_csv(path, w)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_field_table_csv(path: &Path, rows: &[FieldRow]) -> Result<()> {
    let mut w = csv_writer().from_writer(Vec::new());
    let io = |e: csv::Error| fmt_err(path, e);
    w.write_record([
        "field_g",
        "mixing",
        "eslac_rate",
        "kappa",
        "a",
        "b",
        "c",
        "sweeps_to_target",
        "sweeps_to_target_interp",
    ])
    .map_err(io)?;
    for r in rows {
        w.write_record([
            r.field_g.to_string(),
            r.mixing.to_string(),
            r.eslac_rate.to_string(),
            r.kappa.to_string(),
            opt(r.fit.map(|f| f.a)),
            opt(r.fit.map(|f| f.b)),
            opt(r.fit.map(|f| f.c)),
            opt(r.sweeps_to_target),
            opt(r.sweeps_to_target_interp),
        ])
        .map_err(io)?;
    }
    finish_csv(path, w)
}

/// Reads `x,F` pairs (header optional) for fitting.
pub fn read_xy_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, r) in csv_reader(&text).into_records().enumerate() {
        let r = r.map_err(|e| fmt_err(path, e))?;
        let (x, y) = (r.get(0).unwrap_or(""), r.get(1).unwrap_or(""));
        match (x.parse::<f64>(), y.parse::<f64>()) {
            (Ok(x), Ok(y)) => out.push((x, y)),
            _ if i == 0 => continue,
            _ => return Err(fmt_err(path, format!("row {i}: cannot parse `{x},{y}`"))),
        }
    }
    Ok(out)
}

/// Parses a comma-separated list of numbers, e.g. `400,450,500`.
pub fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("cannot parse `{p}` as a number")))
        .collect()
}
