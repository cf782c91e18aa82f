use serde::{Deserialize, Serialize};

use super::{Dataset, GroundTruth, Label, Millis};
use crate::error::Result;

/// Two devices compared over one interval of the evaluation grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalPair {
    pub device_a: String,
    pub device_b: String,
    pub interval_start_ms: Millis,
    pub interval_len_s: u32,
    pub label: Label,
    /// False when at least one device recorded nothing in the interval.
    pub has_data: bool,
}

impl IntervalPair {
    pub fn pair_id(&self) -> String {
        pair_id(&self.device_a, &self.device_b)
    }

    pub fn interval_end_ms(&self) -> Millis {
        self.interval_start_ms + self.interval_len_s as i64 * 1000
    }
}

pub(crate) fn pair_id(a: &str, b: &str) -> String {
    format!("{a}|{b}")
}

/// Index of the grid interval containing `t`.
pub fn interval_index(epoch: Millis, t_s: u32, t: Millis) -> i64 {
    (t - epoch).div_euclid(t_s as i64 * 1000)
}

/// Enumerates every unordered device pair over every full interval of length
/// `t_s` seconds, anchored at the dataset's earliest common timestamp. Pairs
/// whose group membership changes inside an interval are left out.
pub fn window_pairs(dataset: &Dataset, t_s: u32) -> Vec<IntervalPair> {
    assert!(t_s > 0, "interval length must be positive");
    let Some((epoch, end)) = dataset.span() else {
        return Vec::new();
    };
    let step = t_s as i64 * 1000;
    let n_intervals = (end - epoch).max(0) / step;
    let devices = dataset.devices();
    let mut out = Vec::new();
    for k in 0..n_intervals {
        let start = epoch + k * step;
        for (i, a) in devices.iter().enumerate() {
            for b in &devices[i + 1..] {
                let Some(label) = dataset.truth.label_over(a, b, start, start + step) else {
                    continue;
                };
                out.push(IntervalPair {
                    device_a: a.clone(),
                    device_b: b.clone(),
                    interval_start_ms: start,
                    interval_len_s: t_s,
                    label,
                    has_data: dataset.has_data(a, start, start + step)
                        && dataset.has_data(b, start, start + step),
                });
            }
        }
    }
    out
}

/// A scheme's output for one pair and interval. `score` is `None` when the
/// scheme declined to produce a value (power gate, missing data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: crate::Real")]
pub struct EvaluationRecord<T> {
    pub device_a: String,
    pub device_b: String,
    pub interval_start_ms: Millis,
    pub t_s: u32,
    pub score: Option<T>,
    pub label: Label,
}

impl<T> EvaluationRecord<T> {
    pub fn pair_id(&self) -> String {
        pair_id(&self.device_a, &self.device_b)
    }

    pub fn interval_end_ms(&self) -> Millis {
        self.interval_start_ms + self.t_s as i64 * 1000
    }
}

/// Records whose interval lies fully inside one of the subscenario's ranges.
pub fn filter_subscenario<T: Clone>(
    records: &[EvaluationRecord<T>],
    truth: &GroundTruth,
    name: &str,
) -> Result<Vec<EvaluationRecord<T>>> {
    let ranges = truth.subscenario_ranges(name)?;
    Ok(records
        .iter()
        .filter(|r| {
            let (s, e) = (r.interval_start_ms, r.interval_end_ms());
            ranges.iter().any(|range| range.covers(s, e))
        })
        .cloned()
        .collect())
}
