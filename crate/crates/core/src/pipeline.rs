//! Runs the schemes over a dataset and evaluates what they produce.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{self, frr_at_far, Polarity, ScoredSet, ThresholdRule};
use crate::fingerprint::Fingerprint;
use crate::io::{split_pair_id, CurveRow, FeatureTable, FingerprintRow, MetricsRow, ResultRow, RobustnessRow, ScoreRow};
use crate::ml::{self, Hyperparams, TrainedModel, TrainingReport};
use crate::model::{
    filter_subscenario, window_pairs, Dataset, EvaluationRecord, GroundTruth, IntervalPair, Label, Millis, SensorKind,
};
use crate::num::pcm_to_real;
use crate::schemes::karapanos::{GateReason, KarapanosAnalyzer, KarapanosConfig, PreparedSnippet, SimilarityScore};
use crate::schemes::miettinen::{self, MiettinenConfig, SurprisalModel};
use crate::schemes::schurmann::{SchurmannConfig, SchurmannFingerprinter};

/// Name of the whole-scenario row in result files.
pub const FULL: &str = "full";

/// Sampling rate shared by every recording, `None` without audio.
pub fn common_rate(ds: &Dataset) -> Result<Option<u32>> {
    let mut rates = ds.audio.values().map(|a| a.rate_hz);
    let Some(first) = rates.next() else { return Ok(None) };
    match rates.find(|&r| r != first) {
        Some(r) => Err(Error::InvalidConfig(format!("recordings mix {first} Hz and {r} Hz"))),
        None => Ok(Some(first)),
    }
}

pub fn gate_name(g: Option<GateReason>) -> &'static str {
    match g {
        None => "",
        Some(GateReason::LowPower { .. }) => "low_power",
        Some(GateReason::UndefinedCorrelation) => "undefined_correlation",
        Some(GateReason::MissingAudio) => "missing_audio",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KarapanosScore {
    pub pair: IntervalPair,
    pub score: SimilarityScore<f64>,
}

impl KarapanosScore {
    pub fn row(&self) -> ScoreRow {
        ScoreRow {
            pair_id: self.pair.pair_id(),
            interval_start_ms: self.pair.interval_start_ms,
            t: self.pair.interval_len_s,
            score: self.score.value,
            gated: gate_name(self.score.gate).into(),
        }
    }

    pub fn record(&self) -> EvaluationRecord<f64> {
        EvaluationRecord {
            device_a: self.pair.device_a.clone(),
            device_b: self.pair.device_b.clone(),
            interval_start_ms: self.pair.interval_start_ms,
            t_s: self.pair.interval_len_s,
            score: self.score.value,
            label: self.pair.label,
        }
    }
}

/// Similarity of every device pair on the interval grid. Snippets are
/// prepared once per interval and device.
pub fn karapanos_scores(ds: &Dataset, cfg: &KarapanosConfig<f64>) -> Result<Vec<KarapanosScore>> {
    let pairs = window_pairs(ds, cfg.interval_s);
    let missing = |p: &IntervalPair| KarapanosScore { pair: p.clone(), score: SimilarityScore::gated(GateReason::MissingAudio) };
    let Some(rate) = common_rate(ds)? else {
        return Ok(pairs.iter().map(missing).collect());
    };
    let len_ms = cfg.interval_s as Millis * 1000;
    let len = (len_ms * rate as Millis / 1000) as usize;
    let analyzer = KarapanosAnalyzer::new(cfg, rate, len)?;
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunk_by(|a, b| a.interval_start_ms == b.interval_start_ms) {
        let start = chunk[0].interval_start_ms;
        let mut devices: Vec<&str> = chunk.iter().flat_map(|p| [p.device_a.as_str(), p.device_b.as_str()]).collect();
        devices.sort_unstable();
        devices.dedup();
        let prepared: HashMap<&str, Option<PreparedSnippet<f64>>> = devices
            .par_iter()
            .map(|&d| {
                let snip = ds.audio.get(d).and_then(|a| a.slice(start, len_ms)).filter(|s| s.len() == len);
                let p = snip.map(|s| analyzer.prepare(&pcm_to_real::<f64>(&s.samples))).transpose()?;
                Ok((d, p))
            })
            .collect::<Result<_>>()?;
        let scored: Vec<KarapanosScore> = chunk
            .par_iter()
            .map(|p| match (&prepared[p.device_a.as_str()], &prepared[p.device_b.as_str()]) {
                (Some(a), Some(b)) => KarapanosScore {
                    pair: p.clone(),
                    score: analyzer.score(a, b, cfg.threshold_for(&p.device_a), cfg.threshold_for(&p.device_b)),
                },
                _ => missing(p),
            })
            .collect();
        out.extend(scored);
    }
    Ok(out)
}

fn interval_grid(ds: &Dataset, step_ms: Millis, span_ms: Millis) -> Vec<Millis> {
    let Some((epoch, end)) = ds.span() else { return Vec::new() };
    (0..).map(|k| epoch + k * step_ms).take_while(|s| s + span_ms <= end).collect()
}

/// One fingerprint per device and grid interval with complete audio.
pub fn schurmann_fingerprints(ds: &Dataset, cfg: &SchurmannConfig) -> Result<Vec<Fingerprint>> {
    let Some(rate) = common_rate(ds)? else { return Ok(Vec::new()) };
    let fp = SchurmannFingerprinter::<f64>::new(cfg, rate)?;
    let step = cfg.interval_s as Millis * 1000;
    let starts = interval_grid(ds, step, step);
    let jobs: Vec<(&str, Millis)> = ds.audio.keys().flat_map(|d| starts.iter().map(move |&s| (d.as_str(), s))).collect();
    let fps: Vec<Option<Fingerprint>> = jobs
        .par_iter()
        .map(|&(d, s)| ds.audio[d].slice(s, step).map(|snip| fp.fingerprint(&snip)).transpose())
        .collect::<Result<_>>()?;
    Ok(fps.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MiettinenSource {
    /// Windowed noise levels from the audio recording.
    Audio,
    Luminosity,
}

/// Interval length in seconds attached to Miettinen fingerprints: the grid
/// step between consecutive fingerprints.
pub fn miettinen_interval_s(cfg: &MiettinenConfig) -> u32 {
    cfg.bits as u32 * cfg.snapshot_s
}

/// Fingerprints every `bits` snapshots; intervals lacking readings in some
/// snapshot are skipped.
pub fn miettinen_fingerprints(ds: &Dataset, cfg: &MiettinenConfig, source: MiettinenSource) -> Result<Vec<Fingerprint>> {
    let starts = interval_grid(ds, miettinen_interval_s(cfg) as Millis * 1000, cfg.span_ms());
    let per_device: Vec<Vec<Fingerprint>> = ds
        .devices()
        .par_iter()
        .map(|d| {
            let series = match source {
                MiettinenSource::Audio => match ds.audio.get(d) {
                    Some(a) => miettinen::noise_levels(a, cfg.measurement_window_s)?,
                    None => return Ok(Vec::new()),
                },
                MiettinenSource::Luminosity => match ds.sensor(d, SensorKind::Luminosity) {
                    Some(s) => s.clone(),
                    None => return Ok(Vec::new()),
                },
            };
            let mut out = Vec::new();
            for &s in &starts {
                match miettinen::context_fingerprint(&series, s, cfg) {
                    Ok(f) => out.push(f),
                    Err(Error::InsufficientSamples { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_device.into_iter().flatten().collect())
}

pub fn fingerprint_rows(fps: &[Fingerprint], t: u32, model: Option<&SurprisalModel>) -> Result<Vec<FingerprintRow>> {
    fps.iter()
        .map(|f| {
            Ok(FingerprintRow {
                device_id: f.device_id.clone(),
                interval_start_ms: f.interval_start_ms,
                t,
                hex_bits: f.to_hex(),
                surprisal_bits: model.map(|m| m.surprisal(f)).transpose()?,
            })
        })
        .collect()
}

fn label_of(truth: &GroundTruth, a: &str, b: &str, start: Millis, t: u32) -> Option<Label> {
    truth.label_over(a, b, start, start + t as Millis * 1000)
}

/// Labels score rows against the ground truth; pairs without a label
/// (membership changing inside the interval) are left out.
pub fn score_records(rows: &[ScoreRow], truth: &GroundTruth) -> Result<Vec<EvaluationRecord<f64>>> {
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        let (a, b) = split_pair_id(&r.pair_id)?;
        if let Some(label) = label_of(truth, a, b, r.interval_start_ms, r.t) {
            out.push(EvaluationRecord {
                device_a: a.into(),
                device_b: b.into(),
                interval_start_ms: r.interval_start_ms,
                t_s: r.t,
                score: r.score,
                label,
            });
        }
    }
    Ok(out)
}

/// Pairs fingerprints of the same interval into similarity records. With
/// `min_surprisal`, a pair is gated unless both fingerprints exceed it.
pub fn fingerprint_records(
    rows: &[FingerprintRow],
    bits: usize,
    truth: &GroundTruth,
    min_surprisal: Option<f64>,
) -> Result<Vec<EvaluationRecord<f64>>> {
    let mut by_interval: BTreeMap<(Millis, u32), Vec<(&FingerprintRow, Fingerprint)>> = BTreeMap::new();
    for r in rows {
        let f = Fingerprint::from_bits(Fingerprint::bits_from_hex(&r.hex_bits, bits)?);
        by_interval.entry((r.interval_start_ms, r.t)).or_default().push((r, f));
    }
    let mut out = Vec::new();
    for ((start, t), mut group) in by_interval {
        group.sort_by(|x, y| x.0.device_id.cmp(&y.0.device_id));
        for (i, (ra, fa)) in group.iter().enumerate() {
            for (rb, fb) in &group[i + 1..] {
                let Some(label) = label_of(truth, &ra.device_id, &rb.device_id, start, t) else { continue };
                let pass = match min_surprisal {
                    None => true,
                    Some(thr) => {
                        let (Some(sa), Some(sb)) = (ra.surprisal_bits, rb.surprisal_bits) else {
                            return Err(Error::InvalidConfig("surprisal gating needs a surprisal_bits column".into()));
                        };
                        sa > thr && sb > thr
                    }
                };
                out.push(EvaluationRecord {
                    device_a: ra.device_id.clone(),
                    device_b: rb.device_id.clone(),
                    interval_start_ms: start,
                    t_s: t,
                    score: if pass { Some(fa.similarity(fb)?) } else { None },
                    label,
                });
            }
        }
    }
    Ok(out)
}

/// Result rows and FRR-at-FAR curves of one scheme, keyed by subscenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeEvaluation {
    pub results: Vec<ResultRow>,
    pub curves: Vec<(String, Vec<CurveRow>)>,
}

fn result_row(scheme: &str, scenario: &str, sub: &str, t: u32, e: &eval::Evaluation) -> ResultRow {
    ResultRow {
        scheme: scheme.into(),
        scenario: scenario.into(),
        subscenario: sub.into(),
        t,
        eer: e.rates.eer,
        starred: e.rates.starred,
        threshold: e.rates.threshold,
        availability: e.availability,
    }
}

fn curve(scores: &[f64], labels: &[bool], targets: &[f64]) -> Result<Vec<CurveRow>> {
    Ok(frr_at_far(scores, labels, Polarity::AcceptIfGeq, targets)?
        .into_iter()
        .map(|(far_target, frr)| CurveRow { far_target, frr })
        .collect())
}

/// EER of the records over the whole scenario and each subscenario of the
/// ground truth. Subscenarios without both classes are skipped.
pub fn evaluate_scored(
    scheme: &str,
    scenario: &str,
    records: &[EvaluationRecord<f64>],
    truth: &GroundTruth,
    far_targets: &[f64],
) -> Result<SchemeEvaluation> {
    let mut ev = SchemeEvaluation { results: Vec::new(), curves: Vec::new() };
    let mut ts: Vec<u32> = records.iter().map(|r| r.t_s).collect();
    ts.sort_unstable();
    ts.dedup();
    if ts.is_empty() {
        return Err(Error::InvariantViolation("no records".into()));
    }
    let mut names = vec![FULL.to_string()];
    names.extend(truth.subscenarios.iter().map(|s| s.name.clone()));
    names.dedup();
    for t in ts {
        let at_t: Vec<_> = records.iter().filter(|r| r.t_s == t).cloned().collect();
        for name in &names {
            let subset = if name == FULL { at_t.clone() } else { filter_subscenario(&at_t, truth, name)? };
            let result = ScoredSet::from_records(&subset).and_then(|set| {
                let e = eval::evaluate_records(&subset, Polarity::AcceptIfGeq)?;
                Ok((e, curve(&set.scores, &set.labels, far_targets)?))
            });
            match result {
                Ok((e, c)) => {
                    ev.results.push(result_row(scheme, scenario, name, t, &e));
                    ev.curves.push((format!("{name}_t{t}"), c));
                }
                Err(err) if name == FULL => return Err(err),
                Err(_) => {}
            }
        }
    }
    Ok(ev)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlEvaluation {
    pub report: TrainingReport,
    pub evaluation: SchemeEvaluation,
    pub metrics: Vec<MetricsRow>,
}

/// Trains on a feature table and evaluates the out-of-fold probabilities
/// like any other score. Subscenarios apply to interval features only.
pub fn evaluate_features(
    table: &FeatureTable,
    scenario: &str,
    truth: Option<&GroundTruth>,
    grid: &[Hyperparams],
    seed: u64,
    folds: usize,
    far_targets: &[f64],
) -> Result<MlEvaluation> {
    if table.is_empty() {
        return Err(Error::InvariantViolation("no records".into()));
    }
    let data = table.to_ml()?;
    let report = ml::train(&data, grid, seed, ml::DEFAULT_EARLY_STOP_ROUNDS, folds)?;
    let labels: Vec<bool> = report.train_rows.iter().map(|&i| data.labels[i]).collect();
    let weights: Vec<f64> = report.train_rows.iter().map(|&i| data.weights[i]).collect();
    let probs = &report.cv_predictions;
    let rates = eval::equal_error_rate_weighted(probs, &labels, Some(&weights), Polarity::AcceptIfGeq)?;
    let t = table.t[report.train_rows[0]];
    let mut evaluation = SchemeEvaluation {
        results: vec![result_row(
            table.scheme,
            scenario,
            FULL,
            t,
            &eval::Evaluation { rates, availability: 1.0 },
        )],
        curves: vec![(format!("{FULL}_t{t}"), curve(probs, &labels, far_targets)?)],
    };
    if let (Some(truth), true) = (truth, table.weights.iter().all(|&w| w == 1.0)) {
        let records: Vec<EvaluationRecord<f64>> = report
            .train_rows
            .iter()
            .zip(probs)
            .map(|(&i, &p)| {
                let (a, b) = split_pair_id(&table.pair_ids[i])?;
                Ok(EvaluationRecord {
                    device_a: a.into(),
                    device_b: b.into(),
                    interval_start_ms: table.times_ms[i],
                    t_s: table.t[i],
                    score: Some(p),
                    label: table.labels[i],
                })
            })
            .collect::<Result<_>>()?;
        let mut rest = evaluate_scored(table.scheme, scenario, &records, truth, far_targets)?;
        // the full row already exists from the weighted computation
        rest.results.retain(|r| r.subscenario != FULL);
        rest.curves.retain(|(n, _)| !n.starts_with(&format!("{FULL}_t")));
        evaluation.results.extend(rest.results);
        evaluation.curves.extend(rest.curves);
    }
    let metrics = report
        .grid
        .iter()
        .map(|g| MetricsRow { model_id: g.params.id(), auc: g.cv_auc, eer: g.cv_eer, accuracy: g.cv_accuracy })
        .collect();
    Ok(MlEvaluation { report, evaluation, metrics })
}

/// Applies the threshold of `source` to the records of another scenario.
pub fn cross_apply_result(source: &ResultRow, target_name: &str, target: &[EvaluationRecord<f64>]) -> Result<RobustnessRow> {
    let set = ScoredSet::from_records(target)?;
    let rule = ThresholdRule { threshold: source.threshold, polarity: Polarity::AcceptIfGeq };
    let c = eval::cross_apply_threshold(rule, &set.scores, &set.labels)?;
    Ok(RobustnessRow {
        scheme: source.scheme.clone(),
        source: source.scenario.clone(),
        target: target_name.into(),
        t: source.t,
        threshold: source.threshold,
        far: c.far,
        frr: c.frr,
        own_eer: c.own.eer,
        delta_far: c.delta_far,
        delta_frr: c.delta_frr,
    })
}

/// Applies a trained model with its decision threshold to another
/// scenario's feature rows.
pub fn cross_apply_trained(
    model: &TrainedModel,
    threshold: f64,
    source_name: &str,
    target_name: &str,
    target: &FeatureTable,
) -> Result<RobustnessRow> {
    if target.is_empty() {
        return Err(Error::InvariantViolation("no records".into()));
    }
    let c = eval::cross_apply_model(model, threshold, &target.rows, &target.bool_labels(), Some(&target.weights))?;
    Ok(RobustnessRow {
        scheme: target.scheme.into(),
        source: source_name.into(),
        target: target_name.into(),
        t: target.t[0],
        threshold,
        far: c.far,
        frr: c.frr,
        own_eer: c.own.eer,
        delta_far: c.delta_far,
        delta_frr: c.delta_frr,
    })
}

/// Shifts every recording onto the clock of `reference`: each device's
/// audio is cut so that its first sample lines up with the reference sample
/// at the new start time.
pub fn align_dataset(
    ds: &Dataset,
    reference: &str,
    probe_s: f64,
    maxlag_s: f64,
) -> Result<(Dataset, Vec<(String, crate::dsp::AlignmentResult)>)> {
    let x = ds.audio.get(reference).ok_or_else(|| Error::NotFound(format!("no audio for device {reference}")))?;
    let others: Vec<&String> = ds.audio.keys().filter(|d| d.as_str() != reference).collect();
    let aligned: Vec<(String, crate::dsp::AlignmentResult, crate::model::AudioSnippet)> = others
        .par_iter()
        .map(|&d| {
            let y = &ds.audio[d];
            let r = crate::dsp::align(x, y, probe_s, maxlag_s)?;
            let mut out = y.clone();
            out.samples.drain(..r.y_offset);
            out.start_ms = x.start_ms + (r.x_offset as i64 * 1000) / x.rate_hz as i64;
            Ok((d.clone(), r, out))
        })
        .collect::<Result<_>>()?;
    let mut out = ds.clone();
    let mut report = Vec::new();
    for (d, r, a) in aligned {
        out.audio.insert(d.clone(), a);
        report.push((d, r));
    }
    Ok((out, report))
}
