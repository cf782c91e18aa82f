//! Context fingerprints from snapshot averages of noise level or luminosity,
//! and the surprisal filter over per-hour bit statistics.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::model::{AudioSnippet, Millis, SensorKind, SensorSeries};

pub const SCHEME: &str = "miettinen";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiettinenConfig {
    /// Snapshot length `w`, which is also the period `f`.
    pub snapshot_s: u32,
    pub measurement_window_s: f64,
    pub delta_rel: f64,
    pub delta_abs: f64,
    /// Fingerprint length `b`.
    pub bits: usize,
}

impl Default for MiettinenConfig {
    fn default() -> Self {
        Self {
            snapshot_s: 5,
            measurement_window_s: 1.0,
            delta_rel: 0.1,
            delta_abs: 10.0,
            bits: 64,
        }
    }
}

impl MiettinenConfig {
    pub fn period_ms(&self) -> Millis {
        self.snapshot_s as Millis * 1000
    }

    /// Time covered by one fingerprint, including the predecessor snapshot.
    pub fn span_ms(&self) -> Millis {
        (self.bits as Millis + 1) * self.period_ms()
    }
}

/// Mean absolute amplitude over consecutive windows of `window_s`; a
/// trailing partial window is dropped. Timestamps mark window starts.
pub fn noise_levels(x: &AudioSnippet, window_s: f64) -> Result<SensorSeries> {
    let w = (window_s * x.rate_hz as f64).round() as usize;
    if w == 0 || x.len() < w {
        return Err(Error::InsufficientSamples { needed: w.max(1), got: x.len() });
    }
    let readings = x
        .samples
        .chunks_exact(w)
        .enumerate()
        .map(|(k, c)| {
            let sum: f64 = c.iter().map(|&s| (s as f64).abs()).sum();
            let t = x.start_ms + (k as f64 * window_s * 1000.0).round() as Millis;
            (t, sum / w as f64)
        })
        .collect();
    SensorSeries::new(SensorKind::NoiseLevel, readings, x.device_id.clone())
}

/// Mean reading in each of `count` consecutive snapshots starting at
/// `start`; `None` for a snapshot without readings.
pub fn snapshot_averages(series: &SensorSeries, start: Millis, period_ms: Millis, count: usize) -> Vec<Option<f64>> {
    (0..count as Millis)
        .map(|k| {
            let r = series.range(start + k * period_ms, start + (k + 1) * period_ms);
            (!r.is_empty()).then(|| r.iter().map(|p| p.1).sum::<f64>() / r.len() as f64)
        })
        .collect()
}

/// Bit for a snapshot average `cur` following `prev`. A zero predecessor
/// counts as an unbounded relative change.
pub fn context_bit(prev: f64, cur: f64, delta_rel: f64, delta_abs: f64) -> bool {
    let abs = (cur - prev).abs();
    let rel = if prev == 0.0 {
        if cur == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        (cur / prev - 1.0).abs()
    };
    rel > delta_rel && abs > delta_abs
}

/// Bits of consecutive snapshot averages, one per snapshot after the first.
pub fn bits_from_averages(avg: &[f64], cfg: &MiettinenConfig) -> Vec<bool> {
    avg.windows(2)
        .map(|w| context_bit(w[0], w[1], cfg.delta_rel, cfg.delta_abs))
        .collect()
}

/// Fingerprint over the `bits + 1` snapshots starting at `start`, the first
/// of which only serves as predecessor.
pub fn context_fingerprint(series: &SensorSeries, start: Millis, cfg: &MiettinenConfig) -> Result<Fingerprint> {
    let avg = snapshot_averages(series, start, cfg.period_ms(), cfg.bits + 1);
    let present: Vec<f64> = avg.iter().map_while(|a| *a).collect();
    if present.len() < avg.len() {
        return Err(Error::InsufficientSamples { needed: avg.len(), got: present.len() });
    }
    let bits = bits_from_averages(&present, cfg);
    Ok(Fingerprint::new(bits, SCHEME, series.device_id.clone(), start))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayPartition {
    Weekday,
    Weekend,
}

/// Partition and UTC hour of a timestamp.
pub fn time_slot(t: Millis) -> (DayPartition, u8) {
    let dt = DateTime::from_timestamp_millis(t).expect("timestamp within chrono range");
    let part = match dt.weekday() {
        Weekday::Sat | Weekday::Sun => DayPartition::Weekend,
        _ => DayPartition::Weekday,
    };
    (part, dt.hour() as u8)
}

/// Smallest probability used in self-information, so one bit contributes
/// at most 52 bits of surprisal.
const P_FLOOR: f64 = 1.0 / (1u64 << 52) as f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotModel {
    pub partition: DayPartition,
    pub hour: u8,
    /// `P(B=1)` per bit position.
    pub p_one: Vec<f64>,
}

/// Per-slot bit probabilities learned from fingerprints.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SurprisalModel {
    pub slots: Vec<SlotModel>,
}

impl SurprisalModel {
    /// Add-one smoothed estimates from the fingerprints falling into each
    /// slot, keyed by the fingerprint's interval start.
    pub fn fit(fingerprints: &[Fingerprint]) -> Result<Self> {
        let Some(first) = fingerprints.first() else {
            return Ok(Self::default());
        };
        let len = first.len();
        let mut counts: BTreeMap<(DayPartition, u8), (Vec<u64>, u64)> = BTreeMap::new();
        for f in fingerprints {
            if f.len() != len {
                return Err(Error::IncompatibleFingerprints(len, f.len()));
            }
            let e = counts.entry(time_slot(f.interval_start_ms)).or_insert_with(|| (vec![0; len], 0));
            for (c, &b) in e.0.iter_mut().zip(&f.bits) {
                *c += b as u64;
            }
            e.1 += 1;
        }
        let slots = counts
            .into_iter()
            .map(|((partition, hour), (ones, n))| SlotModel {
                partition,
                hour,
                p_one: ones.iter().map(|&o| (o as f64 + 1.0) / (n as f64 + 2.0)).collect(),
            })
            .collect();
        Ok(Self { slots })
    }

    /// Same probabilities for every slot.
    pub fn uniform(p_one: Vec<f64>) -> Self {
        let slots = [DayPartition::Weekday, DayPartition::Weekend]
            .into_iter()
            .flat_map(|partition| {
                let p = p_one.clone();
                (0..24).map(move |hour| SlotModel { partition, hour, p_one: p.clone() })
            })
            .collect();
        Self { slots }
    }

    pub fn slot(&self, partition: DayPartition, hour: u8) -> Option<&SlotModel> {
        self.slots.iter().find(|s| s.partition == partition && s.hour == hour)
    }

    /// Self-information of `f` in bits.
    pub fn surprisal(&self, f: &Fingerprint) -> Result<f64> {
        let (partition, hour) = time_slot(f.interval_start_ms);
        let slot = self.slot(partition, hour).ok_or(Error::ModelGap {
            partition: format!("{partition:?}").to_lowercase(),
            hour: hour as u32,
        })?;
        if slot.p_one.len() != f.len() {
            return Err(Error::IncompatibleFingerprints(slot.p_one.len(), f.len()));
        }
        Ok(f.bits
            .iter()
            .zip(&slot.p_one)
            .map(|(&b, &p1)| {
                let p = if b { p1 } else { 1.0 - p1 };
                -p.clamp(P_FLOOR, 1.0).log2()
            })
            .sum())
    }

    /// Whether `f` exceeds the threshold `t_err + margin`.
    pub fn gate(&self, f: &Fingerprint, t_err: u32, margin: f64) -> Result<bool> {
        Ok(self.surprisal(f)? > t_err as f64 + margin)
    }
}
