//! Synthetic scenarios: groups of devices sharing an acoustic, climatic and
//! radio environment, with a tunable amount of cross-group leakage.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::model::{
    write_beacons_jsonl, write_sensor_csv, write_wav, AudioEntry, AudioSnippet, BeaconEntry, BeaconKind,
    BeaconScan, Dataset, GroundTruth, Group, Manifest, Millis, Observation, SensorEntry, SensorKind,
    SensorSeries, Subscenario, TimeRange,
};

/// Group-level random walk for one sensor modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Walk {
    pub base: f64,
    /// Standard deviation of one step per sensor period.
    pub volatility: f64,
    /// Standard deviation of the constant per-device offset.
    pub offset_sd: f64,
    /// Standard deviation of per-reading noise.
    pub jitter_sd: f64,
}

impl Walk {
    pub fn new(base: f64, volatility: f64, offset_sd: f64, jitter_sd: f64) -> Self {
        Self { base, volatility, offset_sd, jitter_sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbientProfile {
    /// Continuous broadband background shared by the group, dB.
    pub background_db: Option<f64>,
    pub event_rate_per_min: f64,
    pub event_band_hz: (f64, f64),
    pub event_duration_s: (f64, f64),
    pub event_db: f64,
    /// Independent per-device microphone noise, dB.
    pub noise_floor_db: Option<f64>,
    /// Per-device gain is drawn from `1 ± gain_spread`.
    pub gain_spread: f64,
    pub temperature: Walk,
    pub humidity: Walk,
    pub pressure: Walk,
    pub luminosity: Walk,
    pub wifi_population: usize,
    pub ble_population: usize,
    pub beacon_dropout: f64,
    pub rssi_sd: f64,
}

impl AmbientProfile {
    /// Loud, busy environment.
    pub fn vehicle() -> Self {
        Self {
            background_db: Some(55.0),
            event_rate_per_min: 30.0,
            event_band_hz: (60.0, 6000.0),
            event_duration_s: (0.3, 1.5),
            event_db: 65.0,
            noise_floor_db: Some(40.0),
            gain_spread: 0.3,
            temperature: Walk::new(21.0, 0.02, 0.5, 0.05),
            humidity: Walk::new(40.0, 0.05, 1.5, 0.2),
            pressure: Walk::new(1005.0, 0.01, 0.3, 0.02),
            luminosity: Walk::new(800.0, 8.0, 20.0, 2.0),
            wifi_population: 8,
            ble_population: 5,
            beacon_dropout: 0.2,
            rssi_sd: 3.0,
        }
    }

    /// Quieter indoor environment.
    pub fn office() -> Self {
        Self {
            background_db: Some(48.0),
            event_rate_per_min: 20.0,
            event_band_hz: (100.0, 4000.0),
            event_duration_s: (0.5, 2.0),
            event_db: 60.0,
            noise_floor_db: Some(35.0),
            gain_spread: 0.3,
            temperature: Walk::new(23.5, 0.01, 0.5, 0.05),
            humidity: Walk::new(35.0, 0.03, 1.5, 0.2),
            pressure: Walk::new(1012.0, 0.01, 0.3, 0.02),
            luminosity: Walk::new(400.0, 4.0, 15.0, 1.0),
            wifi_population: 12,
            ble_population: 6,
            beacon_dropout: 0.2,
            rssi_sd: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    pub size: usize,
    pub profile: AmbientProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubscenarioConfig {
    pub name: String,
    pub start_s: u32,
    pub end_s: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration_s: u32,
    pub start_ms: Millis,
    pub audio_rate_hz: u32,
    pub sensor_period_ms: Millis,
    pub scan_period_ms: Millis,
    /// Fraction of every other group's sound and beacons that reaches a
    /// device, in [0, 1).
    pub leakage: f64,
    pub groups: Vec<GroupConfig>,
    #[serde(default)]
    pub subscenarios: Vec<SubscenarioConfig>,
}

/// 2021-03-01 08:00 UTC, a Monday morning.
pub const DEFAULT_START_MS: Millis = 1_614_585_600_000;

impl ScenarioConfig {
    /// A vehicle group and an office group of `size` devices each, split
    /// into two halves as subscenarios.
    pub fn two_groups(seed: u64, duration_s: u32, size: usize, leakage: f64) -> Self {
        let half = duration_s / 2;
        Self {
            seed,
            duration_s,
            start_ms: DEFAULT_START_MS,
            audio_rate_hz: 16000,
            sensor_period_ms: 1000,
            scan_period_ms: 2000,
            leakage,
            groups: vec![
                GroupConfig { size, profile: AmbientProfile::vehicle() },
                GroupConfig { size, profile: AmbientProfile::office() },
            ],
            subscenarios: vec![
                SubscenarioConfig { name: "first_half".into(), start_s: 0, end_s: half },
                SubscenarioConfig { name: "second_half".into(), start_s: half, end_s: duration_s },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..1.0).contains(&self.leakage) {
            return bad(format!("leakage {} outside [0, 1)", self.leakage));
        }
        if self.groups.is_empty() || self.groups.iter().any(|g| g.size == 0) {
            return bad("every group needs at least one device".into());
        }
        if self.duration_s == 0 || self.audio_rate_hz == 0 || self.sensor_period_ms <= 0 || self.scan_period_ms <= 0 {
            return bad("duration, rate and periods must be positive".into());
        }
        for g in &self.groups {
            let p = &g.profile;
            let (lo, hi) = p.event_band_hz;
            if !(lo > 0.0 && lo < hi && hi < self.audio_rate_hz as f64 / 2.0) {
                return bad(format!("event band [{lo}, {hi}] Hz outside (0, nyquist)"));
            }
            let (dmin, dmax) = p.event_duration_s;
            if !(dmin > 0.0 && dmin <= dmax) || p.event_rate_per_min < 0.0 {
                return bad("event durations and rate must be positive".into());
            }
            if !(0.0..=1.0).contains(&p.beacon_dropout) || !(0.0..1.0).contains(&p.gain_spread) {
                return bad("beacon dropout and gain spread must lie in [0, 1)".into());
            }
        }
        for s in &self.subscenarios {
            if s.start_s >= s.end_s || s.end_s > self.duration_s {
                return bad(format!("subscenario {} outside the scenario", s.name));
            }
        }
        Ok(())
    }

    pub fn end_ms(&self) -> Millis {
        self.start_ms + self.duration_s as Millis * 1000
    }

    pub fn device_count(&self) -> usize {
        self.groups.iter().map(|g| g.size).sum()
    }

    /// `(group id, device ids)` in generation order.
    pub fn layout(&self) -> Vec<(String, Vec<String>)> {
        let mut next = 0;
        self.groups
            .iter()
            .enumerate()
            .map(|(gi, g)| {
                let members = (next..next + g.size).map(|d| format!("dev{d:02}")).collect();
                next += g.size;
                (format!("group{gi}"), members)
            })
            .collect()
    }
}

// Stream ids keep every random component independent of the others, so a
// config change in one place leaves the rest of the scenario untouched.
const STREAM_GROUP_AUDIO: u64 = 1 << 16;
const STREAM_GROUP_SENSORS: u64 = 2 << 16;
const STREAM_GROUP_BEACONS: u64 = 3 << 16;
const STREAM_DEVICE: u64 = 4 << 16;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

fn gaussian(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd.max(0.0)).expect("finite standard deviation")
}

/// Shared sound of one group: optional broadband background plus
/// band-limited noise bursts with a Hann envelope.
fn group_audio(cfg: &ScenarioConfig, p: &AmbientProfile, r: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let rate = cfg.audio_rate_hz as f64;
    let n = cfg.duration_s as usize * cfg.audio_rate_hz as usize;
    let mut out = vec![0.0; n];
    if let Some(db) = p.background_db {
        let g = gaussian(db_to_amplitude(db));
        out.iter_mut().for_each(|v| *v = g.sample(r));
    }
    let expected = p.event_rate_per_min * cfg.duration_s as f64 / 60.0;
    let mut t = 0.0;
    if expected > 0.0 {
        let gap = rand_distr::Exp::new(expected / cfg.duration_s as f64).expect("positive rate");
        loop {
            t += gap.sample(r);
            if t >= cfg.duration_s as f64 {
                break;
            }
            let dur = r.gen_range(p.event_duration_s.0..=p.event_duration_s.1);
            let (lo, hi) = p.event_band_hz;
            // at least an octave wide, log-uniform placement
            let f_lo = lo * (hi / lo / 2.0).max(1.0).powf(r.gen::<f64>());
            let f_hi = (f_lo * r.gen_range(2.0..4.0)).min(hi);
            let len = ((dur * rate) as usize).max(2);
            let white: Vec<f64> = (0..len).map(|_| r.sample(rand_distr::StandardNormal)).collect();
            let burst = dsp::bandpass(&white, rate, f_lo, f_hi, 4)?;
            let rms = (burst.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
            if rms == 0.0 {
                continue;
            }
            let scale = db_to_amplitude(p.event_db) / rms;
            let at = (t * rate) as usize;
            for (i, v) in burst.iter().enumerate() {
                let Some(o) = out.get_mut(at + i) else { break };
                let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos();
                *o += scale * w * v;
            }
        }
    }
    Ok(out)
}

const SENSOR_KINDS: [SensorKind; 4] =
    [SensorKind::Temperature, SensorKind::Humidity, SensorKind::Pressure, SensorKind::Luminosity];

fn walk_of(p: &AmbientProfile, kind: SensorKind) -> &Walk {
    match kind {
        SensorKind::Temperature => &p.temperature,
        SensorKind::Humidity => &p.humidity,
        SensorKind::Pressure => &p.pressure,
        _ => &p.luminosity,
    }
}

fn clamp_reading(kind: SensorKind, v: f64) -> f64 {
    match kind {
        SensorKind::Humidity => v.clamp(0.0, 100.0),
        SensorKind::Pressure => v.max(1.0),
        SensorKind::Luminosity => v.max(0.0),
        _ => v,
    }
}

fn group_walks(cfg: &ScenarioConfig, p: &AmbientProfile, r: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = (cfg.duration_s as Millis * 1000 / cfg.sensor_period_ms) as usize;
    SENSOR_KINDS
        .iter()
        .map(|&k| {
            let w = walk_of(p, k);
            let g = gaussian(w.volatility);
            let mut v = w.base;
            (0..n)
                .map(|_| {
                    let cur = v;
                    v += g.sample(r);
                    cur
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Beacon {
    id: String,
    kind: BeaconKind,
    rssi: f64,
}

fn group_beacons(gi: usize, p: &AmbientProfile, r: &mut ChaCha8Rng) -> Vec<Beacon> {
    let mut out = Vec::new();
    for (kind, n, tag) in [(BeaconKind::Wifi, p.wifi_population, "ap"), (BeaconKind::Ble, p.ble_population, "ble")] {
        for k in 0..n {
            out.push(Beacon { id: format!("g{gi}-{tag}{k:02}"), kind, rssi: r.gen_range(-90.0..-40.0) });
        }
    }
    out
}

struct DeviceData {
    audio: AudioSnippet,
    sensors: Vec<SensorSeries>,
    scans: Vec<BeaconScan>,
}

struct GroupState {
    profile: AmbientProfile,
    audio: Vec<f64>,
    walks: Vec<Vec<f64>>,
    beacons: Vec<Beacon>,
}

fn device_data(cfg: &ScenarioConfig, id: &str, di: usize, gi: usize, groups: &[GroupState]) -> Result<DeviceData> {
    let mut r = rng(cfg.seed, STREAM_DEVICE + di as u64);
    let own = &groups[gi];
    let p = &own.profile;

    let gain = 1.0 + p.gain_spread * r.gen_range(-1.0..=1.0);
    let noise = gaussian(p.noise_floor_db.map_or(0.0, db_to_amplitude));
    let samples: Vec<i16> = (0..own.audio.len())
        .map(|i| {
            let mut v = own.audio[i];
            for (h, other) in groups.iter().enumerate() {
                if h != gi {
                    v += cfg.leakage * other.audio[i];
                }
            }
            let n = if p.noise_floor_db.is_some() { noise.sample(&mut r) } else { 0.0 };
            (gain * v + n).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
        })
        .collect();
    let audio = AudioSnippet::new(samples, cfg.audio_rate_hz, cfg.start_ms, id)?;

    let mut sensors = Vec::new();
    for (ki, &kind) in SENSOR_KINDS.iter().enumerate() {
        let w = walk_of(p, kind);
        let offset = gaussian(w.offset_sd).sample(&mut r);
        let jitter = gaussian(w.jitter_sd);
        let readings = own.walks[ki]
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let t = cfg.start_ms + k as Millis * cfg.sensor_period_ms;
                (t, clamp_reading(kind, v + offset + jitter.sample(&mut r)))
            })
            .collect();
        sensors.push(SensorSeries::new(kind, readings, id)?);
    }

    let rssi_noise = gaussian(p.rssi_sd);
    let mut scans = Vec::new();
    let jitter_ms = (cfg.scan_period_ms / 4).max(1);
    let mut k = 0;
    loop {
        // the first scan sits on the scenario start so every device spans it
        let t = cfg.start_ms + k * cfg.scan_period_ms + if k > 0 { r.gen_range(0..jitter_ms) } else { 0 };
        if t >= cfg.end_ms() {
            break;
        }
        for (kind, shift) in [(BeaconKind::Wifi, 0), (BeaconKind::Ble, cfg.scan_period_ms / 2)] {
            let mut obs = Vec::new();
            for (h, g) in groups.iter().enumerate() {
                for b in g.beacons.iter().filter(|b| b.kind == kind) {
                    // draws happen whatever the leakage, so runs that differ
                    // only in leakage share every other random choice
                    let (u, n) = (r.gen::<f64>(), rssi_noise.sample(&mut r));
                    let keep = 1.0 - p.beacon_dropout;
                    let (seen, attenuation) = if h == gi {
                        (u < keep, 0.0)
                    } else {
                        (u < keep * cfg.leakage, 20.0 * cfg.leakage.log10())
                    };
                    if seen {
                        obs.push(Observation { id: b.id.clone(), rssi: b.rssi + attenuation + n });
                    }
                }
            }
            if t + shift < cfg.end_ms() {
                scans.push(BeaconScan::new(kind, t + shift, obs, id)?);
            }
        }
        k += 1;
    }
    Ok(DeviceData { audio, sensors, scans })
}

/// Builds the scenario in memory.
pub fn generate(cfg: &ScenarioConfig) -> Result<Dataset> {
    cfg.validate()?;
    let groups: Vec<GroupState> = cfg
        .groups
        .par_iter()
        .enumerate()
        .map(|(gi, g)| {
            let s = gi as u64;
            Ok(GroupState {
                profile: g.profile.clone(),
                audio: group_audio(cfg, &g.profile, &mut rng(cfg.seed, STREAM_GROUP_AUDIO + s))?,
                walks: group_walks(cfg, &g.profile, &mut rng(cfg.seed, STREAM_GROUP_SENSORS + s)),
                beacons: group_beacons(gi, &g.profile, &mut rng(cfg.seed, STREAM_GROUP_BEACONS + s)),
            })
        })
        .collect::<Result<_>>()?;

    let layout = cfg.layout();
    let devices: Vec<(String, usize)> = layout
        .iter()
        .enumerate()
        .flat_map(|(gi, (_, members))| members.iter().map(move |m| (m.clone(), gi)))
        .collect();
    let data: Vec<DeviceData> = devices
        .par_iter()
        .enumerate()
        .map(|(di, (id, gi))| device_data(cfg, id, di, *gi, &groups))
        .collect::<Result<_>>()?;

    let mut ds = Dataset::default();
    for ((id, _), d) in devices.iter().zip(data) {
        ds.audio.insert(id.clone(), d.audio);
        for s in d.sensors {
            ds.insert_sensor(s);
        }
        ds.insert_scans(id, d.scans);
    }
    let whole = TimeRange(cfg.start_ms, cfg.end_ms());
    ds.truth = GroundTruth {
        groups: layout
            .into_iter()
            .map(|(id, members)| Group { id, members, ranges: vec![whole] })
            .collect(),
        subscenarios: cfg
            .subscenarios
            .iter()
            .map(|s| Subscenario {
                name: s.name.clone(),
                ranges: vec![TimeRange(
                    cfg.start_ms + s.start_s as Millis * 1000,
                    cfg.start_ms + s.end_s as Millis * 1000,
                )],
            })
            .collect(),
    };
    ds.truth.validate()?;
    Ok(ds)
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const TRUTH_FILE: &str = "ground_truth.json";

/// Writes a dataset in the on-disk layout and returns its manifest.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<Manifest> {
    for sub in ["audio", "sensors", "beacons"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let mut m = Manifest { ground_truth: Some(PathBuf::from(TRUTH_FILE)), ..Manifest::default() };
    for (dev, audio) in &ds.audio {
        let path = PathBuf::from(format!("audio/{dev}.wav"));
        write_wav(&dir.join(&path), audio)?;
        m.audio.push(AudioEntry { device: dev.clone(), path, start_ms: audio.start_ms });
    }
    for (dev, kinds) in &ds.sensors {
        for (kind, series) in kinds {
            let path = PathBuf::from(format!("sensors/{dev}_{}.csv", kind.name()));
            write_sensor_csv(&dir.join(&path), series)?;
            m.sensors.push(SensorEntry { device: dev.clone(), kind: *kind, path });
        }
    }
    for (dev, scans) in &ds.beacons {
        let path = PathBuf::from(format!("beacons/{dev}.jsonl"));
        write_beacons_jsonl(&dir.join(&path), scans)?;
        m.beacons.push(BeaconEntry { device: dev.clone(), path });
    }
    write_json(&dir.join(TRUTH_FILE), &ds.truth)?;
    write_json(&dir.join(MANIFEST_FILE), &m)?;
    Ok(m)
}

pub(crate) fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Generates the scenario into `dir` along with a copy of its config.
pub fn generate_to(dir: &Path, cfg: &ScenarioConfig) -> Result<Manifest> {
    let ds = generate(cfg)?;
    let m = write_dataset(dir, &ds)?;
    write_json(&dir.join(SCENARIO_FILE), cfg)?;
    Ok(m)
}

/// Counts of what a config produces, for logging.
pub fn summary(ds: &Dataset) -> BTreeMap<&'static str, usize> {
    BTreeMap::from([
        ("devices", ds.devices().len()),
        ("groups", ds.truth.groups.len()),
        ("scans", ds.beacons.values().map(Vec::len).sum()),
        ("audio_samples", ds.audio.values().map(AudioSnippet::len).sum()),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{load_dataset, Label};
    use crate::schemes::karapanos::{KarapanosAnalyzer, KarapanosConfig};

    fn small(seed: u64, leakage: f64) -> ScenarioConfig {
        let mut c = ScenarioConfig::two_groups(seed, 20, 2, leakage);
        c.subscenarios.clear();
        c
    }

    #[test]
    fn round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(3, 0.1);
        let m = generate_to(dir.path(), &cfg).unwrap();
        let ds = load_dataset(dir.path(), &m).unwrap();
        assert_eq!(ds.devices().len(), cfg.device_count());
        let mem = generate(&cfg).unwrap();
        assert_eq!(ds.audio, mem.audio);
        assert_eq!(ds.sensors, mem.sensors);
        assert_eq!(ds.truth, mem.truth);
        let back: ScenarioConfig =
            serde_json::from_str(&fs::read_to_string(dir.path().join(SCENARIO_FILE)).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    fn read_all(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
        let mut out = BTreeMap::new();
        for sub in ["", "audio", "sensors", "beacons"] {
            for e in fs::read_dir(dir.join(sub)).unwrap() {
                let p = e.unwrap().path();
                if p.is_file() {
                    out.insert(p.strip_prefix(dir).unwrap().to_owned(), fs::read(&p).unwrap());
                }
            }
        }
        out
    }

    #[test]
    fn fixed_seed_is_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate_to(a.path(), &small(9, 0.2)).unwrap();
        generate_to(b.path(), &small(9, 0.2)).unwrap();
        let (fa, fb) = (read_all(a.path()), read_all(b.path()));
        assert!(fa.len() > 10);
        assert_eq!(fa, fb);
        let c = tempfile::tempdir().unwrap();
        generate_to(c.path(), &small(10, 0.2)).unwrap();
        assert_ne!(read_all(c.path()), fa);
    }

    #[test]
    fn noiseless_colocated_sensors_are_identical() {
        let mut cfg = small(4, 0.0);
        for g in &mut cfg.groups {
            for w in [&mut g.profile.temperature, &mut g.profile.humidity, &mut g.profile.pressure, &mut g.profile.luminosity] {
                w.offset_sd = 0.0;
                w.jitter_sd = 0.0;
            }
        }
        let dir = tempfile::tempdir().unwrap();
        generate_to(dir.path(), &cfg).unwrap();
        for kind in SENSOR_KINDS {
            let a = fs::read(dir.path().join(format!("sensors/dev00_{}.csv", kind.name()))).unwrap();
            let b = fs::read(dir.path().join(format!("sensors/dev01_{}.csv", kind.name()))).unwrap();
            assert_eq!(a, b, "{kind}");
        }
    }

    #[test]
    fn disjoint_beacons_without_leakage() {
        let ds = generate(&small(5, 0.0)).unwrap();
        let ids = |dev: &str| -> std::collections::BTreeSet<String> {
            ds.beacons[dev].iter().flat_map(|s| s.observations.iter().map(|o| o.id.clone())).collect()
        };
        assert!(ids("dev00").is_disjoint(&ids("dev02")));
        assert!(!ids("dev00").is_disjoint(&ids("dev01")));
    }

    /// Mean colocated minus mean non-colocated Karapanos similarity.
    fn karapanos_gap(ds: &Dataset) -> f64 {
        let cfg = KarapanosConfig::<f64>::default().with_interval(5);
        let rate = ds.audio["dev00"].rate_hz;
        let analyzer = KarapanosAnalyzer::new(&cfg, rate, 5 * rate as usize).unwrap();
        let (mut sums, mut counts) = ([0.0; 2], [0.0; 2]);
        for p in crate::model::window_pairs(ds, 5) {
            let cut = |d: &str| {
                let s = ds.audio[d].slice(p.interval_start_ms, 5000).unwrap();
                analyzer.prepare(&crate::num::pcm_to_real::<f64>(&s.samples)).unwrap()
            };
            let s = analyzer.score(&cut(&p.device_a), &cut(&p.device_b), 40.0, 40.0);
            let c = (p.label == Label::Colocated) as usize;
            sums[c] += s.value.unwrap();
            counts[c] += 1.0;
        }
        sums[1] / counts[1] - sums[0] / counts[0]
    }

    #[test]
    fn leakage_narrows_the_score_gap() {
        let mut last = f64::NEG_INFINITY;
        for leak in [0.9, 0.5, 0.1, 0.0] {
            let mut cfg = small(6, leak);
            cfg.duration_s = 10;
            let gap = karapanos_gap(&generate(&cfg).unwrap());
            assert!(gap >= last, "leakage {leak}: gap {gap} < {last}");
            last = gap;
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = small(1, 1.0);
        assert!(generate(&c).is_err());
        c.leakage = 0.5;
        c.groups[0].size = 0;
        assert!(c.validate().is_err());
    }
}
