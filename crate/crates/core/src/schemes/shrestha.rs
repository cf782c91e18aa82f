//! Absolute differences of temperature, humidity and barometric altitude
//! between two devices, with duplicate-row compression.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Label, Millis, SensorKind};

pub const SCHEME: &str = "shrestha";

/// Barometric altitude in meters for a station pressure in hPa.
pub fn pressure_to_altitude(p_hpa: f64) -> Result<f64> {
    if !(p_hpa > 0.0 && p_hpa.is_finite()) {
        return Err(Error::InvalidPressure(p_hpa));
    }
    Ok((1.0 - (p_hpa / 1013.25).powf(0.190284)) * 145366.45 * 0.3048)
}

/// Time-matched readings of one device; `None` for a modality without a
/// reading close enough.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SensorSample {
    pub temperature: Option<f64>,
    pub humidity: Option<f64>,
    pub pressure: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShresthaFeatureVector {
    pub device_a: String,
    pub device_b: String,
    pub timestamp_ms: Millis,
    pub d_temperature: Option<f64>,
    pub d_humidity: Option<f64>,
    pub d_altitude: Option<f64>,
    pub label: Label,
    pub weight: u64,
}

pub const FEATURE_NAMES: [&str; 3] = ["d_temp", "d_hum", "d_alt"];

impl ShresthaFeatureVector {
    pub fn row(&self) -> Vec<Option<f64>> {
        vec![self.d_temperature, self.d_humidity, self.d_altitude]
    }
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some((a? - b?).abs())
}

/// `(d_temperature, d_humidity, d_altitude)`.
pub fn difference_features(a: &SensorSample, b: &SensorSample) -> Result<[Option<f64>; 3]> {
    let alt = |s: &SensorSample| s.pressure.map(pressure_to_altitude).transpose();
    Ok([
        diff(a.temperature, b.temperature),
        diff(a.humidity, b.humidity),
        diff(alt(a)?, alt(b)?),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShresthaConfig {
    /// Spacing of the sampling grid.
    pub step_ms: Millis,
    /// Largest gap between the grid point and a matched reading.
    pub tolerance_ms: Millis,
}

impl Default for ShresthaConfig {
    fn default() -> Self {
        Self { step_ms: 1000, tolerance_ms: 1000 }
    }
}

fn sample_at(dataset: &Dataset, device: &str, t: Millis, tol: Millis) -> SensorSample {
    let get = |k| dataset.sensor(device, k).and_then(|s| s.nearest(t, tol));
    SensorSample {
        temperature: get(SensorKind::Temperature),
        humidity: get(SensorKind::Humidity),
        pressure: get(SensorKind::Pressure),
    }
}

/// One row per device pair and grid point over the dataset's common span.
/// Rows with every modality missing or a changing label are skipped.
pub fn build_dataset(dataset: &Dataset, cfg: &ShresthaConfig) -> Result<Vec<ShresthaFeatureVector>> {
    let Some((epoch, end)) = dataset.span() else {
        return Ok(Vec::new());
    };
    let devices = dataset.devices();
    let mut out = Vec::new();
    let mut t = epoch;
    while t < end {
        let samples: Vec<SensorSample> = devices.iter().map(|d| sample_at(dataset, d, t, cfg.tolerance_ms)).collect();
        for i in 0..devices.len() {
            for j in i + 1..devices.len() {
                let Some(label) = dataset.truth.label_over(&devices[i], &devices[j], t, t + 1) else {
                    continue;
                };
                let [dt, dh, da] = difference_features(&samples[i], &samples[j])?;
                if dt.is_none() && dh.is_none() && da.is_none() {
                    continue;
                }
                out.push(ShresthaFeatureVector {
                    device_a: devices[i].clone(),
                    device_b: devices[j].clone(),
                    timestamp_ms: t,
                    d_temperature: dt,
                    d_humidity: dh,
                    d_altitude: da,
                    label,
                    weight: 1,
                });
            }
        }
        t += cfg.step_ms;
    }
    Ok(out)
}

type Key = [Option<i64>; 3];

fn key(row: &ShresthaFeatureVector) -> Key {
    let q = |v: Option<f64>| v.map(|x| (x * 1e4).round() as i64);
    [q(row.d_temperature), q(row.d_humidity), q(row.d_altitude)]
}

/// Merges rows whose features agree to four decimals and whose labels
/// match, summing weights. The first occurrence of each group is kept in
/// input order.
pub fn compress_instances(rows: &[ShresthaFeatureVector]) -> Vec<ShresthaFeatureVector> {
    let mut index: HashMap<(Key, Label), usize> = HashMap::new();
    let mut out: Vec<ShresthaFeatureVector> = Vec::new();
    for r in rows {
        match index.get(&(key(r), r.label)) {
            Some(&i) => out[i].weight += r.weight,
            None => {
                index.insert((key(r), r.label), out.len());
                out.push(r.clone());
            }
        }
    }
    out
}

/// Weighted fraction of rows whose feature values occur under both labels.
pub fn ambiguity_fraction(rows: &[ShresthaFeatureVector]) -> f64 {
    let total: u64 = rows.iter().map(|r| r.weight).sum();
    if total == 0 {
        return 0.0;
    }
    let mut per_key: HashMap<Key, [u64; 2]> = HashMap::new();
    for r in rows {
        per_key.entry(key(r)).or_default()[r.label.is_colocated() as usize] += r.weight;
    }
    let ambiguous: u64 = per_key.values().filter(|c| c[0] > 0 && c[1] > 0).map(|c| c[0] + c[1]).sum();
    ambiguous as f64 / total as f64
}
