use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    AudioSnippet, BeaconKind, BeaconScan, GroundTruth, Millis, Observation, SensorKind,
    SensorSeries,
};
use crate::error::{Error, Result};

/// In-memory collection of every recording in a scenario.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub audio: BTreeMap<String, AudioSnippet>,
    pub sensors: BTreeMap<String, BTreeMap<SensorKind, SensorSeries>>,
    /// Scans per device, ordered by time.
    pub beacons: BTreeMap<String, Vec<BeaconScan>>,
    pub truth: GroundTruth,
}

impl Dataset {
    /// Every device that has data or appears in the ground truth, sorted.
    pub fn devices(&self) -> Vec<String> {
        let mut set: BTreeSet<String> = BTreeSet::new();
        set.extend(self.audio.keys().cloned());
        set.extend(self.sensors.keys().cloned());
        set.extend(self.beacons.keys().cloned());
        set.extend(self.truth.devices().map(str::to_owned));
        set.into_iter().collect()
    }

    /// `[first, last)` timestamps over all of a device's modalities.
    pub fn device_span(&self, device: &str) -> Option<(Millis, Millis)> {
        let mut lo = Millis::MAX;
        let mut hi = Millis::MIN;
        if let Some(a) = self.audio.get(device) {
            lo = lo.min(a.start_ms);
            hi = hi.max(a.end_ms());
        }
        for s in self.sensors.get(device).into_iter().flat_map(|m| m.values()) {
            if let (Some(f), Some(l)) = (s.first_ms(), s.last_ms()) {
                lo = lo.min(f);
                hi = hi.max(l + 1);
            }
        }
        if let Some(scans) = self.beacons.get(device) {
            if let (Some(f), Some(l)) = (scans.first(), scans.last()) {
                lo = lo.min(f.time_ms);
                hi = hi.max(l.time_ms + 1);
            }
        }
        (lo < hi).then_some((lo, hi))
    }

    /// Range during which every device with data is recording.
    pub fn span(&self) -> Option<(Millis, Millis)> {
        let spans: Vec<_> = self.devices().iter().filter_map(|d| self.device_span(d)).collect();
        let start = spans.iter().map(|s| s.0).max()?;
        let end = spans.iter().map(|s| s.1).min()?;
        (start < end).then_some((start, end))
    }

    pub fn has_data(&self, device: &str, start: Millis, end: Millis) -> bool {
        if let Some(a) = self.audio.get(device) {
            if a.start_ms < end && start < a.end_ms() {
                return true;
            }
        }
        if let Some(m) = self.sensors.get(device) {
            if m.values().any(|s| !s.range(start, end).is_empty()) {
                return true;
            }
        }
        !self.scans(device, None, start, end).is_empty()
    }

    pub fn sensor(&self, device: &str, kind: SensorKind) -> Option<&SensorSeries> {
        self.sensors.get(device).and_then(|m| m.get(&kind))
    }

    /// Scans of the device in `[start, end)`, optionally of one kind.
    pub fn scans(
        &self,
        device: &str,
        kind: Option<BeaconKind>,
        start: Millis,
        end: Millis,
    ) -> Vec<&BeaconScan> {
        let Some(scans) = self.beacons.get(device) else {
            return Vec::new();
        };
        let lo = scans.partition_point(|s| s.time_ms < start);
        let hi = scans.partition_point(|s| s.time_ms < end);
        scans[lo..hi]
            .iter()
            .filter(|s| kind.map_or(true, |k| s.kind == k))
            .collect()
    }

    pub fn insert_sensor(&mut self, series: SensorSeries) {
        self.sensors
            .entry(series.device_id.clone())
            .or_default()
            .insert(series.kind, series);
    }

    pub fn insert_scans(&mut self, device: &str, mut scans: Vec<BeaconScan>) {
        let entry = self.beacons.entry(device.to_owned()).or_default();
        entry.append(&mut scans);
        entry.sort_by_key(|s| s.time_ms);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioEntry {
    pub device: String,
    pub path: PathBuf,
    /// Epoch milliseconds of the first sample; WAV headers carry no clock.
    pub start_ms: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorEntry {
    pub device: String,
    pub kind: SensorKind,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeaconEntry {
    pub device: String,
    pub path: PathBuf,
}

/// File layout of a scenario. Paths are relative to the dataset root.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub audio: Vec<AudioEntry>,
    #[serde(default)]
    pub sensors: Vec<SensorEntry>,
    #[serde(default)]
    pub beacons: Vec<BeaconEntry>,
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
}

impl Manifest {
    pub fn from_file(path: &Path) -> Result<Self> {
        let file = open(path)?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.to_owned()),
        _ => Error::Io(e),
    })
}

/// Loads and validates every file listed in the manifest.
pub fn load_dataset(root: &Path, manifest: &Manifest) -> Result<Dataset> {
    let mut ds = Dataset::default();
    for entry in &manifest.audio {
        let audio = read_wav(&root.join(&entry.path), &entry.device, entry.start_ms)?;
        ds.audio.insert(entry.device.clone(), audio);
    }
    for entry in &manifest.sensors {
        ds.insert_sensor(read_sensor_csv(&root.join(&entry.path), &entry.device, entry.kind)?);
    }
    for entry in &manifest.beacons {
        let scans = read_beacons_jsonl(&root.join(&entry.path), &entry.device)?;
        ds.insert_scans(&entry.device, scans);
    }
    if let Some(path) = &manifest.ground_truth {
        let path = root.join(path);
        let truth: GroundTruth = serde_json::from_reader(BufReader::new(open(&path)?))?;
        truth.validate()?;
        ds.truth = truth;
    }
    Ok(ds)
}

pub fn read_wav(path: &Path, device: &str, start_ms: Millis) -> Result<AudioSnippet> {
    let reader = hound::WavReader::new(BufReader::new(open(path)?))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Parse {
            path: path.to_owned(),
            line: 0,
            message: format!(
                "expected mono 16-bit PCM, got {} channel(s) of {}-bit {:?}",
                spec.channels, spec.bits_per_sample, spec.sample_format
            ),
        });
    }
    let samples = reader.into_samples::<i16>().collect::<Result<Vec<_>, _>>()?;
    AudioSnippet::new(samples, spec.sample_rate, start_ms, device)
}

pub fn write_wav(path: &Path, audio: &AudioSnippet) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::new(BufWriter::new(File::create(path)?), spec)?;
    let mut w16 = writer.get_i16_writer(audio.samples.len() as u32);
    for &s in &audio.samples {
        w16.write_sample(s);
    }
    w16.flush()?;
    writer.finalize()?;
    Ok(())
}

#[derive(Deserialize)]
struct SensorRow {
    timestamp_ms: Millis,
    value: f64,
}

pub fn read_sensor_csv(path: &Path, device: &str, kind: SensorKind) -> Result<SensorSeries> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["timestamp_ms", "value"] {
        return Err(Error::Parse {
            path: path.to_owned(),
            line: 1,
            message: "expected header `timestamp_ms,value`".into(),
        });
    }
    let mut readings = Vec::new();
    for row in reader.deserialize::<SensorRow>() {
        let row = row.map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        readings.push((row.timestamp_ms, row.value));
    }
    SensorSeries::new(kind, readings, device).map_err(|e| match e {
        Error::InvariantViolation(m) => Error::InvariantViolation(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_sensor_csv(path: &Path, series: &SensorSeries) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "timestamp_ms,value")?;
    for (t, v) in &series.readings {
        writeln!(w, "{t},{v}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ScanLine {
    t: Millis,
    kind: BeaconKind,
    obs: Vec<Observation>,
}

pub fn read_beacons_jsonl(path: &Path, device: &str) -> Result<Vec<BeaconScan>> {
    let reader = BufReader::new(open(path)?);
    let mut scans = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ScanLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        scans.push(BeaconScan::new(parsed.kind, parsed.t, parsed.obs, device)?);
    }
    for w in scans.windows(2) {
        if w[1].time_ms < w[0].time_ms {
            return Err(Error::InvariantViolation(format!(
                "{}: scan timestamps decrease at {}",
                path.display(),
                w[1].time_ms
            )));
        }
    }
    Ok(scans)
}

pub fn write_beacons_jsonl(path: &Path, scans: &[BeaconScan]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in scans {
        let line = ScanLine {
            t: s.time_ms,
            kind: s.kind,
            obs: s.observations.clone(),
        };
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_manifest_gives_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let ds = load_dataset(dir.path(), &Manifest::default()).unwrap();
        assert!(ds.devices().is_empty());
        assert!(ds.span().is_none());
    }

    #[test]
    fn decreasing_sensor_timestamps_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("t.csv"), "timestamp_ms,value\n1000,20.5\n900,20.6\n").unwrap();
        let manifest = Manifest {
            sensors: vec![SensorEntry {
                device: "d".into(),
                kind: SensorKind::Temperature,
                path: "t.csv".into(),
            }],
            ..Default::default()
        };
        assert!(matches!(
            load_dataset(dir.path(), &manifest),
            Err(Error::InvariantViolation(_))
        ));
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("t.csv"), "timestamp_ms,value\n1000,20.5\n2000,abc\n").unwrap();
        let err = read_sensor_csv(&dir.path().join("t.csv"), "d", SensorKind::Temperature).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = Manifest {
            beacons: vec![BeaconEntry { device: "d".into(), path: "nope.jsonl".into() }],
            ..Default::default()
        };
        assert!(matches!(load_dataset(dir.path(), &manifest), Err(Error::MissingInput(_))));
    }

    #[test]
    fn beacon_lines_parse() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.jsonl");
        std::fs::write(
            &p,
            "{\"t\":1000,\"kind\":\"wifi\",\"obs\":[{\"id\":\"aa\",\"rssi\":-57.0}]}\n\
             {\"t\":2000,\"kind\":\"ble\",\"obs\":[]}\n",
        )
        .unwrap();
        let scans = read_beacons_jsonl(&p, "d").unwrap();
        assert_eq!(scans.len(), 2);
        assert_eq!(scans[0].observations[0].rssi, -57.0);
        assert_eq!(scans[1].kind, BeaconKind::Ble);
        std::fs::write(&p, "{\"t\":1000,\"kind\":\"zigbee\",\"obs\":[]}\n").unwrap();
        assert!(matches!(read_beacons_jsonl(&p, "d"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let a = AudioSnippet::new(vec![0, 1, -1, i16::MAX, i16::MIN], 16000, 42, "d").unwrap();
        write_wav(&p, &a).unwrap();
        assert_eq!(read_wav(&p, "d", 42).unwrap(), a);
    }
}
