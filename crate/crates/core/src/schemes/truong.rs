//! Beacon set distances and audio correlation features for a trained
//! colocation classifier.

use std::collections::{BTreeMap, HashMap};

use realfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, fft_mag_hamming, Correlator};
use crate::error::{Error, Result};
use crate::model::{BeaconKind, BeaconScan, Dataset, IntervalPair, Label, Millis};
use crate::num::{pcm_to_real, Real};

pub const SCHEME: &str = "truong";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruongConfig {
    pub interval_s: u32,
    /// Signal strength substituted for beacons seen by one side only.
    pub theta: f64,
    /// Stand-in for every distance when neither side saw a beacon.
    pub undefined_distance: f64,
}

impl Default for TruongConfig {
    fn default() -> Self {
        Self { interval_s: 10, theta: -100.0, undefined_distance: 10_000.0 }
    }
}

/// Mean RSSI per identifier over the scans of one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct BeaconAggregate {
    pub kind: BeaconKind,
    pub means: BTreeMap<String, f64>,
}

impl BeaconAggregate {
    pub fn new(kind: BeaconKind, means: impl IntoIterator<Item = (String, f64)>) -> Self {
        Self { kind, means: means.into_iter().collect() }
    }

    pub fn from_scans<'a>(kind: BeaconKind, scans: impl IntoIterator<Item = &'a BeaconScan>) -> Result<Self> {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for s in scans {
            if s.kind != kind {
                return Err(Error::IncompatibleScans(format!("{:?} scan in {:?} aggregate", s.kind, kind)));
            }
            for o in &s.observations {
                let e = acc.entry(o.id.clone()).or_insert((0.0, 0));
                e.0 += o.rssi;
                e.1 += 1;
            }
        }
        Ok(Self::new(kind, acc.into_iter().map(|(id, (sum, n))| (id, sum / n as f64))))
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeaconFeatures {
    pub jaccard: f64,
    pub mean_hamming: f64,
    pub euclidean: f64,
    pub mean_exp: f64,
    pub sum_sq_ranks: f64,
}

impl BeaconFeatures {
    fn constant(v: f64) -> Self {
        Self { jaccard: v, mean_hamming: v, euclidean: v, mean_exp: v, sum_sq_ranks: v }
    }
}

const EXP_CLAMP: f64 = 100.0;

/// 1-based ascending ranks of `values`, ties broken by the parallel ids.
fn ranks(entries: &[(&str, f64)]) -> BTreeMap<String, usize> {
    let mut v = entries.to_vec();
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    v.iter().enumerate().map(|(i, (id, _))| (id.to_string(), i + 1)).collect()
}

pub fn beacon_features(a: &BeaconAggregate, b: &BeaconAggregate, theta: f64, undefined: f64) -> Result<BeaconFeatures> {
    if a.kind != b.kind {
        return Err(Error::IncompatibleScans(format!("{:?} vs {:?}", a.kind, b.kind)));
    }
    if a.is_empty() && b.is_empty() {
        return Ok(BeaconFeatures::constant(undefined));
    }
    // union in identifier order, theta filling the missing side
    let mut union: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for (id, &s) in &a.means {
        union.insert(id, (s, b.means.get(id).copied().unwrap_or(theta)));
    }
    for (id, &s) in &b.means {
        union.entry(id).or_insert((theta, s));
    }
    let common: Vec<&str> = a.means.keys().filter(|id| b.means.contains_key(*id)).map(|s| s.as_str()).collect();

    let n = union.len() as f64;
    let diffs: Vec<f64> = union.values().map(|(x, y)| (x - y).abs()).collect();
    let la: Vec<(&str, f64)> = common.iter().map(|&id| (id, a.means[id])).collect();
    let lb: Vec<(&str, f64)> = common.iter().map(|&id| (id, b.means[id])).collect();
    let (ra, rb) = (ranks(&la), ranks(&lb));
    let sum_sq_ranks = common
        .iter()
        .map(|&id| {
            let d = ra[id] as f64 - rb[id] as f64;
            d * d
        })
        .sum();
    Ok(BeaconFeatures {
        jaccard: 1.0 - common.len() as f64 / n,
        mean_hamming: diffs.iter().sum::<f64>() / n,
        euclidean: diffs.iter().map(|d| d * d).sum::<f64>().sqrt(),
        mean_exp: diffs.iter().map(|d| d.min(EXP_CLAMP).exp()).sum::<f64>() / n,
        sum_sq_ranks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AudioFeatures<T> {
    pub max_xcorr: T,
    pub d_time: T,
    pub d_freq: T,
    pub d_tf: T,
}

/// One snippet's normalized spectrum and half-spectrum, reusable across
/// pairings.
#[derive(Debug, Clone)]
pub struct PreparedAudio<T> {
    spectrum: Vec<Complex<T>>,
    half_spectrum: Vec<T>,
}

/// Audio features for snippets of one fixed length over the full lag range.
#[derive(Debug, Clone)]
pub struct AudioFeaturizer<T: Real> {
    correlator: Correlator<T>,
    len: usize,
}

fn unit<T: Real>(x: &[T]) -> Result<Vec<T>> {
    let norm = dsp::energy(x).sqrt();
    if !(norm > T::zero() && norm.is_finite()) {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(x.iter().map(|&v| v / norm).collect())
}

impl<T: Real> AudioFeaturizer<T> {
    pub fn new(len: usize) -> Self {
        assert!(len >= 2, "audio features need at least two samples");
        Self { correlator: Correlator::new(len, len - 1), len }
    }

    pub fn prepare(&self, x: &[T]) -> Result<PreparedAudio<T>> {
        if x.len() != self.len {
            return Err(Error::InsufficientSamples { needed: self.len, got: x.len() });
        }
        let xn = unit(x)?;
        Ok(PreparedAudio {
            spectrum: self.correlator.spectrum(&xn),
            half_spectrum: unit(&fft_mag_hamming(&xn))?,
        })
    }

    pub fn features(&self, a: &PreparedAudio<T>, b: &PreparedAudio<T>) -> AudioFeatures<T> {
        let c = self.correlator.correlate_spectra(&a.spectrum, &b.spectrum);
        let max_xcorr = dsp::peak_abs(&c, 0, T::one()).value;
        let d_freq = a
            .half_spectrum
            .iter()
            .zip(&b.half_spectrum)
            .map(|(&p, &q)| (p - q) * (p - q))
            .sum::<T>()
            .sqrt();
        let d_time = T::one() - max_xcorr;
        AudioFeatures { max_xcorr, d_time, d_freq, d_tf: (d_time * d_time + d_freq * d_freq).sqrt() }
    }
}

/// Features of two aligned, equal-length snippets.
pub fn audio_features<T: Real>(x: &[T], y: &[T]) -> Result<AudioFeatures<T>> {
    if x.len() != y.len() {
        return Err(Error::InsufficientSamples { needed: x.len(), got: y.len() });
    }
    let f = AudioFeaturizer::new(x.len());
    Ok(f.features(&f.prepare(x)?, &f.prepare(y)?))
}

pub const FEATURE_NAMES: [&str; 9] = [
    "wifi_jaccard",
    "wifi_mean_hamming",
    "wifi_euclidean",
    "wifi_mean_exp",
    "wifi_sum_sq_ranks",
    "ble_jaccard",
    "ble_euclidean",
    "audio_max_xcorr",
    "audio_tf_distance",
];

/// One pair-interval; `None` marks a modality without data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruongFeatureVector {
    pub device_a: String,
    pub device_b: String,
    pub interval_start_ms: Millis,
    pub t_s: u32,
    pub wifi: Option<BeaconFeatures>,
    pub ble: Option<BeaconFeatures>,
    pub audio: Option<AudioFeatures<f64>>,
    pub label: Label,
}

impl TruongFeatureVector {
    /// Values in `FEATURE_NAMES` order.
    pub fn row(&self) -> Vec<Option<f64>> {
        let w = self.wifi;
        vec![
            w.map(|f| f.jaccard),
            w.map(|f| f.mean_hamming),
            w.map(|f| f.euclidean),
            w.map(|f| f.mean_exp),
            w.map(|f| f.sum_sq_ranks),
            self.ble.map(|f| f.jaccard),
            self.ble.map(|f| f.euclidean),
            self.audio.map(|a| a.max_xcorr),
            self.audio.map(|a| a.d_tf),
        ]
    }
}

fn aggregate(dataset: &Dataset, device: &str, kind: BeaconKind, start: Millis, end: Millis) -> Option<BeaconAggregate> {
    let scans = dataset.scans(device, Some(kind), start, end);
    if scans.is_empty() {
        return None;
    }
    BeaconAggregate::from_scans(kind, scans).ok()
}

/// One feature vector per pair in `pairs`, in order. Audio is cut by
/// timestamp, so recordings are expected to be aligned already.
pub fn build_dataset(pairs: &[IntervalPair], dataset: &Dataset, cfg: &TruongConfig) -> Result<Vec<TruongFeatureVector>> {
    let mut featurizers: HashMap<usize, AudioFeaturizer<f64>> = HashMap::new();
    let mut audio_cache: HashMap<(String, Millis), Option<(usize, PreparedAudio<f64>)>> = HashMap::new();
    let mut out = Vec::with_capacity(pairs.len());
    for p in pairs {
        let (start, end) = (p.interval_start_ms, p.interval_end_ms());
        let beacon = |kind| -> Result<Option<BeaconFeatures>> {
            match (aggregate(dataset, &p.device_a, kind, start, end), aggregate(dataset, &p.device_b, kind, start, end)) {
                (Some(a), Some(b)) => Ok(Some(beacon_features(&a, &b, cfg.theta, cfg.undefined_distance)?)),
                _ => Ok(None),
            }
        };
        let wifi = beacon(BeaconKind::Wifi)?;
        let ble = beacon(BeaconKind::Ble)?;

        for dev in [&p.device_a, &p.device_b] {
            let key = (dev.clone(), start);
            if audio_cache.contains_key(&key) {
                continue;
            }
            let prepared = dataset.audio.get(dev).and_then(|a| a.slice(start, end - start)).and_then(|s| {
                let f = featurizers.entry(s.len()).or_insert_with(|| AudioFeaturizer::new(s.len()));
                Some((s.len(), f.prepare(&pcm_to_real::<f64>(&s.samples)).ok()?))
            });
            audio_cache.insert(key, prepared);
        }
        let audio = match (&audio_cache[&(p.device_a.clone(), start)], &audio_cache[&(p.device_b.clone(), start)]) {
            (Some((la, a)), Some((lb, b))) if la == lb => Some(featurizers[la].features(a, b)),
            _ => None,
        };
        out.push(TruongFeatureVector {
            device_a: p.device_a.clone(),
            device_b: p.device_b.clone(),
            interval_start_ms: start,
            t_s: p.interval_len_s,
            wifi,
            ble,
            audio,
            label: p.label,
        });
        // earlier intervals are done with
        audio_cache.retain(|k, _| k.1 >= start);
    }
    Ok(out)
}
