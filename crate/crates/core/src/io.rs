//! CSV and JSON files exchanged between pipeline stages.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Label, Millis};
use crate::schemes::{shrestha, truong};

/// Per-pair similarity score; `score` is empty when `gated` names a reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub pair_id: String,
    pub interval_start_ms: Millis,
    pub t: u32,
    pub score: Option<f64>,
    pub gated: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintRow {
    pub device_id: String,
    pub interval_start_ms: Millis,
    pub t: u32,
    pub hex_bits: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surprisal_bits: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: String,
    pub scenario: String,
    pub subscenario: String,
    pub t: u32,
    pub eer: f64,
    pub starred: bool,
    pub threshold: f64,
    pub availability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub far_target: f64,
    pub frr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model_id: String,
    pub auc: f64,
    pub eer: f64,
    pub accuracy: f64,
}

/// Robustness outcome of carrying one scenario's rule to another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub scheme: String,
    pub source: String,
    pub target: String,
    pub t: u32,
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
    pub own_eer: f64,
    pub delta_far: f64,
    pub delta_frr: f64,
}

pub fn pair_id(a: &str, b: &str) -> String {
    crate::model::pair_id(a, b)
}

pub fn split_pair_id(id: &str) -> Result<(&str, &str)> {
    id.split_once('|')
        .ok_or_else(|| Error::InvalidConfig(format!("pair id {id:?} is not of the form a|b")))
}

fn parse_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse { path: path.to_owned(), line, message: e.to_string() }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.to_owned()),
        _ => Error::Io(e),
    })
}

pub fn read_csv<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    rdr.deserialize().map(|r| r.map_err(|e| parse_error(path, e))).collect()
}

/// Writes rows with a header; an empty slice still gets `header`.
pub fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const SCORE_HEADER: [&str; 5] = ["pair_id", "interval_start_ms", "t", "score", "gated"];
pub const RESULT_HEADER: [&str; 8] =
    ["scheme", "scenario", "subscenario", "t", "eer", "starred", "threshold", "availability"];
pub const CURVE_HEADER: [&str; 2] = ["far_target", "frr"];
pub const METRICS_HEADER: [&str; 4] = ["model_id", "auc", "eer", "accuracy"];
pub const ROBUSTNESS_HEADER: [&str; 10] =
    ["scheme", "source", "target", "t", "threshold", "far", "frr", "own_eer", "delta_far", "delta_frr"];

/// The surprisal column appears only when some row carries a value.
pub fn write_fingerprints(path: &Path, rows: &[FingerprintRow]) -> Result<()> {
    let with_surprisal = rows.iter().any(|r| r.surprisal_bits.is_some());
    let mut header = vec!["device_id", "interval_start_ms", "t", "hex_bits"];
    if with_surprisal {
        header.push("surprisal_bits");
        let rows: Vec<_> = rows
            .iter()
            .map(|r| (&r.device_id, r.interval_start_ms, r.t, &r.hex_bits, r.surprisal_bits))
            .collect();
        return write_csv(path, &header, &rows);
    }
    let rows: Vec<_> = rows.iter().map(|r| (&r.device_id, r.interval_start_ms, r.t, &r.hex_bits)).collect();
    write_csv(path, &header, &rows)
}

/// Feature rows of either ML scheme, identified by their header.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub scheme: &'static str,
    pub pair_ids: Vec<String>,
    /// Interval start, or sample instant for per-sample features.
    pub times_ms: Vec<Millis>,
    /// Interval length; zero for per-sample features.
    pub t: Vec<u32>,
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
    pub labels: Vec<Label>,
    pub weights: Vec<f64>,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn bool_labels(&self) -> Vec<bool> {
        self.labels.iter().map(|l| l.is_colocated()).collect()
    }

    /// One table per interval length, in ascending order.
    pub fn split_by_t(&self) -> Vec<(u32, FeatureTable)> {
        let mut ts = self.t.clone();
        ts.sort_unstable();
        ts.dedup();
        ts.into_iter()
            .map(|t| {
                let idx: Vec<usize> = (0..self.len()).filter(|&i| self.t[i] == t).collect();
                let sub = FeatureTable {
                    scheme: self.scheme,
                    pair_ids: idx.iter().map(|&i| self.pair_ids[i].clone()).collect(),
                    times_ms: pick(&idx, &self.times_ms),
                    t: pick(&idx, &self.t),
                    feature_names: self.feature_names.clone(),
                    rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
                    labels: pick(&idx, &self.labels),
                    weights: pick(&idx, &self.weights),
                };
                (t, sub)
            })
            .collect()
    }

    pub fn to_ml(&self) -> Result<crate::ml::MlDataset> {
        crate::ml::MlDataset::new(self.rows.clone(), self.bool_labels(), Some(self.weights.clone()), self.feature_names.clone())
    }
}

fn pick<V: Copy>(idx: &[usize], v: &[V]) -> Vec<V> {
    idx.iter().map(|&i| v[i]).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_truong_features(path: &Path, rows: &[truong::TruongFeatureVector]) -> Result<()> {
    let mut header = vec!["pair_id", "interval_start_ms", "t"];
    header.extend(truong::FEATURE_NAMES);
    header.push("label");
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![pair_id(&r.device_a, &r.device_b), r.interval_start_ms.to_string(), r.t_s.to_string()];
            v.extend(r.row().into_iter().map(fmt_opt));
            v.push(r.label.as_str().into());
            v
        })
        .collect();
    write_csv(path, &header, &rows)
}

pub fn write_shrestha_features(path: &Path, rows: &[shrestha::ShresthaFeatureVector]) -> Result<()> {
    let mut header = vec!["pair_id", "timestamp_ms"];
    header.extend(shrestha::FEATURE_NAMES);
    header.extend(["label", "weight"]);
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![pair_id(&r.device_a, &r.device_b), r.timestamp_ms.to_string()];
            v.extend(r.row().into_iter().map(fmt_opt));
            v.push(r.label.as_str().into());
            v.push(r.weight.to_string());
            v
        })
        .collect();
    write_csv(path, &header, &rows)
}

pub fn read_feature_table(path: &Path) -> Result<FeatureTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(false).from_reader(open(path)?);
    let mut records = rdr.records();
    let Some(header) = records.next() else {
        return Err(Error::InvariantViolation("no records".into()));
    };
    let header: Vec<String> = header.map_err(|e| parse_error(path, e))?.iter().map(str::to_owned).collect();
    let (scheme, names, n_lead): (&'static str, Vec<&str>, usize) = if header.first().map(String::as_str) == Some("pair_id")
        && header.get(1).map(String::as_str) == Some("timestamp_ms")
    {
        (shrestha::SCHEME, shrestha::FEATURE_NAMES.to_vec(), 2)
    } else {
        (truong::SCHEME, truong::FEATURE_NAMES.to_vec(), 3)
    };
    let mut expected: Vec<&str> = if n_lead == 2 { vec!["pair_id", "timestamp_ms"] } else { vec!["pair_id", "interval_start_ms", "t"] };
    expected.extend(&names);
    expected.push("label");
    if n_lead == 2 {
        expected.push("weight");
    }
    if header != expected {
        return Err(Error::Parse { path: path.to_owned(), line: 1, message: format!("expected header {}", expected.join(",")) });
    }
    let mut t = FeatureTable {
        scheme,
        pair_ids: Vec::new(),
        times_ms: Vec::new(),
        t: Vec::new(),
        feature_names: names.iter().map(|s| s.to_string()).collect(),
        rows: Vec::new(),
        labels: Vec::new(),
        weights: Vec::new(),
    };
    for rec in records {
        let rec = rec.map_err(|e| parse_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |m: String| Error::Parse { path: path.to_owned(), line, message: m };
        let num = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>().map(Some).map_err(|_| bad(format!("invalid number {s:?}")))
        };
        split_pair_id(&rec[0]).map_err(|e| bad(e.to_string()))?;
        t.pair_ids.push(rec[0].to_owned());
        t.times_ms.push(rec[1].parse().map_err(|_| bad(format!("invalid time {:?}", &rec[1])))?);
        t.t.push(if n_lead == 3 { rec[2].parse().map_err(|_| bad(format!("invalid t {:?}", &rec[2])))? } else { 0 });
        t.rows.push(names.iter().enumerate().map(|(i, _)| num(&rec[n_lead + i])).collect::<Result<_>>()?);
        let li = n_lead + names.len();
        t.labels.push(Label::parse(&rec[li]).ok_or_else(|| bad(format!("invalid label {:?}", &rec[li])))?);
        t.weights.push(if n_lead == 2 { num(&rec[li + 1])?.ok_or_else(|| bad("missing weight".into()))? } else { 1.0 });
    }
    Ok(t)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    Ok(serde_json::from_reader(std::io::BufReader::new(open(path)?))?)
}
