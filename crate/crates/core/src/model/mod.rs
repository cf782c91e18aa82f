//! Domain types shared by every scheme: recordings, ground truth and the
//! interval grid that pairs devices for comparison.

mod dataset;
mod truth;
mod window;

pub use dataset::{
    load_dataset, read_beacons_jsonl, read_sensor_csv, read_wav, write_beacons_jsonl,
    write_sensor_csv, write_wav, AudioEntry, BeaconEntry, Dataset, Manifest, SensorEntry,
};
pub use truth::{GroundTruth, Group, Label, Subscenario, TimeRange};
pub(crate) use window::pair_id;
pub use window::{filter_subscenario, interval_index, window_pairs, EvaluationRecord, IntervalPair};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Epoch milliseconds.
pub type Millis = i64;

/// Mono 16-bit PCM recording from one device.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSnippet {
    pub samples: Vec<i16>,
    pub rate_hz: u32,
    pub start_ms: Millis,
    pub device_id: String,
}

impl AudioSnippet {
    pub fn new(
        samples: Vec<i16>,
        rate_hz: u32,
        start_ms: Millis,
        device_id: impl Into<String>,
    ) -> Result<Self> {
        if rate_hz == 0 {
            return Err(Error::InvariantViolation("audio sampling rate must be positive".into()));
        }
        Ok(Self {
            samples,
            rate_hz,
            start_ms,
            device_id: device_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Exclusive end timestamp.
    pub fn end_ms(&self) -> Millis {
        self.start_ms + (self.samples.len() as i64 * 1000) / self.rate_hz as i64
    }

    /// Index of the first sample at or after `t`.
    pub fn sample_index(&self, t: Millis) -> i64 {
        let offset = t - self.start_ms;
        (offset * self.rate_hz as i64).div_euclid(1000)
    }

    /// Sub-snippet covering `[start, start + len_ms)`, or `None` when the
    /// recording does not cover the whole range.
    pub fn slice(&self, start: Millis, len_ms: i64) -> Option<AudioSnippet> {
        let from = self.sample_index(start);
        let n = (len_ms * self.rate_hz as i64) / 1000;
        if from < 0 || n <= 0 || from + n > self.samples.len() as i64 {
            return None;
        }
        let from = from as usize;
        Some(AudioSnippet {
            samples: self.samples[from..from + n as usize].to_vec(),
            rate_hz: self.rate_hz,
            start_ms: start,
            device_id: self.device_id.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Temperature,
    Humidity,
    Pressure,
    Luminosity,
    /// Mean absolute audio amplitude per measurement window.
    NoiseLevel,
}

impl SensorKind {
    pub fn name(self) -> &'static str {
        match self {
            SensorKind::Temperature => "temperature",
            SensorKind::Humidity => "humidity",
            SensorKind::Pressure => "pressure",
            SensorKind::Luminosity => "luminosity",
            SensorKind::NoiseLevel => "noise_level",
        }
    }

    fn check(self, value: f64) -> Result<()> {
        let ok = value.is_finite()
            && match self {
                SensorKind::Temperature => true,
                SensorKind::Humidity => (0.0..=100.0).contains(&value),
                SensorKind::Pressure => value > 0.0,
                SensorKind::Luminosity | SensorKind::NoiseLevel => value >= 0.0,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::InvariantViolation(format!(
                "{} reading {value} out of range",
                self.name()
            )))
        }
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Timestamped scalar readings of one modality from one device.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSeries {
    pub kind: SensorKind,
    pub readings: Vec<(Millis, f64)>,
    pub device_id: String,
}

impl SensorSeries {
    pub fn new(
        kind: SensorKind,
        readings: Vec<(Millis, f64)>,
        device_id: impl Into<String>,
    ) -> Result<Self> {
        for w in readings.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvariantViolation(format!(
                    "{kind} timestamps not strictly increasing at {}",
                    w[1].0
                )));
            }
        }
        for &(_, v) in &readings {
            kind.check(v)?;
        }
        Ok(Self {
            kind,
            readings,
            device_id: device_id.into(),
        })
    }

    pub fn first_ms(&self) -> Option<Millis> {
        self.readings.first().map(|r| r.0)
    }

    pub fn last_ms(&self) -> Option<Millis> {
        self.readings.last().map(|r| r.0)
    }

    /// Readings with timestamps in `[start, end)`.
    pub fn range(&self, start: Millis, end: Millis) -> &[(Millis, f64)] {
        let lo = self.readings.partition_point(|r| r.0 < start);
        let hi = self.readings.partition_point(|r| r.0 < end);
        &self.readings[lo..hi]
    }

    /// Reading closest in time to `t`, if one lies within `tolerance_ms`.
    pub fn nearest(&self, t: Millis, tolerance_ms: i64) -> Option<f64> {
        let idx = self.readings.partition_point(|r| r.0 < t);
        let mut best: Option<(i64, f64)> = None;
        for i in [idx.wrapping_sub(1), idx] {
            if let Some(&(ts, v)) = self.readings.get(i) {
                let d = (ts - t).abs();
                if d <= tolerance_ms && best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, v));
                }
            }
        }
        best.map(|(_, v)| v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeaconKind {
    Wifi,
    Ble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub id: String,
    pub rssi: f64,
}

/// One WiFi or BLE scan.
#[derive(Debug, Clone, PartialEq)]
pub struct BeaconScan {
    pub kind: BeaconKind,
    pub time_ms: Millis,
    pub observations: Vec<Observation>,
    pub device_id: String,
}

impl BeaconScan {
    pub fn new(
        kind: BeaconKind,
        time_ms: Millis,
        observations: Vec<Observation>,
        device_id: impl Into<String>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for o in &observations {
            if !o.rssi.is_finite() {
                return Err(Error::InvariantViolation(format!("non-finite rssi for {}", o.id)));
            }
            if !seen.insert(o.id.as_str()) {
                return Err(Error::InvariantViolation(format!(
                    "identifier {} repeated within one scan",
                    o.id
                )));
            }
        }
        Ok(Self {
            kind,
            time_ms,
            observations,
            device_id: device_id.into(),
        })
    }
}
