//! `zis`: synthetic data, scheme features, evaluation and robustness reports.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use zis_core::datagen::{self, ScenarioConfig};
use zis_core::eval::DEFAULT_FAR_TARGETS;
use zis_core::io::{self, FeatureTable, FingerprintRow, ResultRow, ScoreRow};
use zis_core::ml::{self, Hyperparams, ModelKind, TrainedModel};
use zis_core::model::{load_dataset, window_pairs, Dataset, EvaluationRecord, GroundTruth, Manifest};
use zis_core::pipeline::{self, MiettinenSource};
use zis_core::randomness::{self, RandomnessReport};
use zis_core::schemes::karapanos::KarapanosConfig;
use zis_core::schemes::miettinen::{MiettinenConfig, SurprisalModel};
use zis_core::schemes::schurmann::SchurmannConfig;
use zis_core::schemes::{shrestha, truong};
use zis_core::Fingerprint;

#[derive(Parser)]
#[command(name = "zis", version, about = "Zero-interaction pairing schemes and their evaluation")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// TOML file with defaults for any long flag (`maxlag-s = 0.5`); flags
    /// given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario.
    Datagen(DatagenArgs),
    /// Align every recording of a dataset to a reference device.
    Align(AlignArgs),
    /// Compute per-pair scores, fingerprints or feature vectors.
    Features(FeaturesArgs),
    /// Random-walk and Markov statistics of a fingerprint file.
    FingerprintRandomness(RandomnessArgs),
    /// Error rates of a scheme's output against the ground truth.
    Evaluate(EvaluateArgs),
    /// Apply one scenario's decision rule to another scenario.
    Robustness(RobustnessArgs),
    /// Train or apply a colocation classifier.
    #[command(subcommand)]
    Ml(MlCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Scheme {
    Karapanos,
    Schurmann,
    Miettinen,
    Truong,
    Shrestha,
}

impl Scheme {
    fn name(self) -> &'static str {
        match self {
            Scheme::Karapanos => "karapanos",
            Scheme::Schurmann => "schurmann",
            Scheme::Miettinen => "miettinen",
            Scheme::Truong => "truong",
            Scheme::Shrestha => "shrestha",
        }
    }

    fn is_ml(self) -> bool {
        matches!(self, Scheme::Truong | Scheme::Shrestha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Source {
    Audio,
    Luminosity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Grid {
    Full,
    Quick,
}

/// Values a config file may supply; keys are the long flag names.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct FileConfig {
    scheme: Option<Scheme>,
    t: Option<Vec<u32>>,
    maxlag_s: Option<f64>,
    power_db: Option<f64>,
    theta: Option<f64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    dataset: Option<PathBuf>,
    truth: Option<PathBuf>,
    input: Option<PathBuf>,
    scenario: Option<String>,
    bits: Option<usize>,
    snapshot_s: Option<u32>,
    source: Option<Source>,
    surprisal: Option<bool>,
    min_surprisal: Option<f64>,
    grid: Option<Grid>,
    folds: Option<usize>,
    duration_s: Option<u32>,
    group_size: Option<usize>,
    leakage: Option<f64>,
    reference: Option<String>,
    probe_s: Option<f64>,
    split: Option<usize>,
    subscenario: Option<String>,
    target_name: Option<String>,
    model: Option<PathBuf>,
}

#[derive(Args)]
struct DatagenArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration_s: Option<u32>,
    /// Devices per group (two groups).
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    leakage: Option<f64>,
    /// Full scenario config as JSON; the flags above override its fields.
    #[arg(long)]
    scenario_config: Option<PathBuf>,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Device whose clock the others follow; defaults to the first.
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    maxlag_s: Option<f64>,
    #[arg(long)]
    probe_s: Option<f64>,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long, value_enum)]
    scheme: Option<Scheme>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Interval lengths in seconds, comma separated.
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<u32>>,
    #[arg(long)]
    maxlag_s: Option<f64>,
    /// Karapanos power threshold in dB for every device.
    #[arg(long)]
    power_db: Option<f64>,
    /// Truong RSSI floor in dBm.
    #[arg(long)]
    theta: Option<f64>,
    /// Miettinen fingerprint length.
    #[arg(long)]
    bits: Option<usize>,
    #[arg(long)]
    snapshot_s: Option<u32>,
    #[arg(long, value_enum)]
    source: Option<Source>,
    /// Add the surprisal column from a model fit on the produced corpus.
    #[arg(long)]
    surprisal: bool,
    /// Keep every Shrestha sample instead of merging duplicates.
    #[arg(long)]
    no_compress: bool,
}

#[derive(Args)]
struct RandomnessArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fingerprint length; defaults to four bits per hex digit.
    #[arg(long)]
    bits: Option<usize>,
    /// Also analyse sub-fingerprints of this many bits.
    #[arg(long)]
    split: Option<usize>,
}

#[derive(Args)]
struct TruthArgs {
    /// Ground truth JSON.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Dataset directory whose manifest names the ground truth.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_enum)]
    scheme: Option<Scheme>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    truth: TruthArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// Fingerprint length for fingerprint schemes.
    #[arg(long)]
    bits: Option<usize>,
    /// Gate fingerprint pairs unless both exceed this many surprisal bits.
    #[arg(long)]
    min_surprisal: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    grid: Option<Grid>,
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Args)]
struct RobustnessArgs {
    #[arg(long, value_enum)]
    scheme: Option<Scheme>,
    /// Results CSV of the scenario the threshold comes from.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Scheme output of the target scenario.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    truth: TruthArgs,
    /// Trained model of the source scenario (ML schemes).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    subscenario: Option<String>,
    #[arg(long)]
    target_name: Option<String>,
    #[arg(long)]
    bits: Option<usize>,
    #[arg(long)]
    min_surprisal: Option<f64>,
}

#[derive(Subcommand)]
enum MlCommand {
    /// Grid search with cross-validation; writes models and metrics.
    Train(MlTrainArgs),
    /// Colocation probabilities for a feature file.
    Predict(MlPredictArgs),
}

#[derive(Args)]
struct MlTrainArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    grid: Option<Grid>,
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Args)]
struct MlPredictArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Data(zis_core::Error),
}

impl From<zis_core::Error> for CliError {
    fn from(e: zis_core::Error) -> Self {
        CliError::Data(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("missing required option --{flag}")))
}

fn load(dir: &Path) -> CliResult<Dataset> {
    let m = Manifest::from_file(&dir.join(datagen::MANIFEST_FILE))?;
    Ok(load_dataset(dir, &m)?)
}

fn load_truth(truth: Option<PathBuf>, dataset: Option<PathBuf>) -> CliResult<GroundTruth> {
    if let Some(p) = truth {
        let t: GroundTruth = io::read_json(&p)?;
        t.validate()?;
        return Ok(t);
    }
    let dir = required(dataset, "truth or --dataset")?;
    let m = Manifest::from_file(&dir.join(datagen::MANIFEST_FILE))?;
    let path = m
        .ground_truth
        .ok_or_else(|| CliError::Data(zis_core::Error::NotFound("manifest names no ground truth".into())))?;
    let t: GroundTruth = io::read_json(&dir.join(path))?;
    t.validate()?;
    Ok(t)
}

fn grid_of(g: Grid) -> Vec<Hyperparams> {
    match g {
        Grid::Full => ml::default_grid(&[ModelKind::Forest, ModelKind::Boosting]),
        Grid::Quick => ml::quick_grid(),
    }
}

fn log(msg: impl AsRef<str>) {
    eprintln!("zis: {}", msg.as_ref());
}

fn datagen_cmd(a: DatagenArgs, f: FileConfig) -> CliResult<()> {
    let out = required(a.out.or(f.out), "out")?;
    let mut cfg = match a.scenario_config {
        Some(p) => io::read_json::<ScenarioConfig>(&p)?,
        None => ScenarioConfig::two_groups(ml::DEFAULT_SEED, 600, 3, 0.1),
    };
    if let Some(s) = a.seed.or(f.seed) {
        cfg.seed = s;
    }
    if let Some(l) = a.leakage.or(f.leakage) {
        cfg.leakage = l;
    }
    if let Some(d) = a.duration_s.or(f.duration_s) {
        let old = cfg.duration_s;
        cfg.duration_s = d;
        for s in &mut cfg.subscenarios {
            s.start_s = (s.start_s as u64 * d as u64 / old as u64) as u32;
            s.end_s = (s.end_s as u64 * d as u64 / old as u64) as u32;
        }
    }
    if let Some(n) = a.group_size.or(f.group_size) {
        cfg.groups.iter_mut().for_each(|g| g.size = n);
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let m = datagen::generate_to(&out, &cfg)?;
    log(format!("wrote {} recordings for {} devices to {}", m.audio.len() + m.sensors.len() + m.beacons.len(), cfg.device_count(), out.display()));
    Ok(())
}

fn align_cmd(a: AlignArgs, f: FileConfig) -> CliResult<()> {
    let dir = required(a.dataset.or(f.dataset), "dataset")?;
    let out = required(a.out.or(f.out), "out")?;
    let ds = load(&dir)?;
    let reference = match a.reference.or(f.reference) {
        Some(r) => r,
        None => ds
            .audio
            .keys()
            .next()
            .cloned()
            .ok_or_else(|| CliError::Data(zis_core::Error::NotFound("dataset has no audio".into())))?,
    };
    let (aligned, report) =
        pipeline::align_dataset(&ds, &reference, a.probe_s.or(f.probe_s).unwrap_or(10.0), a.maxlag_s.or(f.maxlag_s).unwrap_or(1.0))?;
    datagen::write_dataset(&out, &aligned)?;
    let rows: Vec<(String, i64, usize)> = report.into_iter().map(|(d, r)| (d, r.lag_samples, r.trimmed_len)).collect();
    io::write_csv(&out.join("alignment.csv"), &["device_id", "lag_samples", "trimmed_len"], &rows)?;
    log(format!("aligned {} recordings to {reference}", rows.len()));
    Ok(())
}

fn features_cmd(a: FeaturesArgs, f: FileConfig) -> CliResult<()> {
    let scheme = required(a.scheme.or(f.scheme), "scheme")?;
    let dir = required(a.dataset.or(f.dataset), "dataset")?;
    let out = required(a.out.or(f.out), "out")?;
    let ts = a.t.or(f.t).unwrap_or_else(|| vec![10]);
    if ts.is_empty() || ts.contains(&0) {
        return Err(CliError::Usage("--t needs positive interval lengths".into()));
    }
    let ds = load(&dir)?;
    match scheme {
        Scheme::Karapanos => {
            let mut rows: Vec<ScoreRow> = Vec::new();
            for &t in &ts {
                let mut cfg = KarapanosConfig::<f64>::default().with_interval(t);
                if let Some(m) = a.maxlag_s.or(f.maxlag_s) {
                    cfg.maxlag_s = m;
                }
                if let Some(p) = a.power_db.or(f.power_db) {
                    cfg.power_threshold_db = p;
                }
                rows.extend(pipeline::karapanos_scores(&ds, &cfg)?.iter().map(|s| s.row()));
            }
            io::write_csv(&out, &io::SCORE_HEADER, &rows)?;
            log(format!("{} scores", rows.len()));
        }
        Scheme::Schurmann => {
            let mut rows: Vec<FingerprintRow> = Vec::new();
            for &t in &ts {
                let cfg = SchurmannConfig::default().with_interval(t);
                let fps = pipeline::schurmann_fingerprints(&ds, &cfg)?;
                rows.extend(pipeline::fingerprint_rows(&fps, t, None)?);
            }
            io::write_fingerprints(&out, &rows)?;
            log(format!("{} fingerprints", rows.len()));
        }
        Scheme::Miettinen => {
            let mut cfg = MiettinenConfig::default();
            if let Some(b) = a.bits.or(f.bits) {
                cfg.bits = b;
            }
            if let Some(w) = a.snapshot_s.or(f.snapshot_s) {
                cfg.snapshot_s = w;
            }
            if cfg.bits == 0 || cfg.snapshot_s == 0 {
                return Err(CliError::Usage("--bits and --snapshot-s must be positive".into()));
            }
            let source = match a.source.or(f.source).unwrap_or(Source::Audio) {
                Source::Audio => MiettinenSource::Audio,
                Source::Luminosity => MiettinenSource::Luminosity,
            };
            let fps = pipeline::miettinen_fingerprints(&ds, &cfg, source)?;
            let model = if a.surprisal || f.surprisal.unwrap_or(false) { Some(SurprisalModel::fit(&fps)?) } else { None };
            let rows = pipeline::fingerprint_rows(&fps, pipeline::miettinen_interval_s(&cfg), model.as_ref())?;
            io::write_fingerprints(&out, &rows)?;
            log(format!("{} fingerprints", rows.len()));
        }
        Scheme::Truong => {
            let mut rows = Vec::new();
            for &t in &ts {
                let mut cfg = truong::TruongConfig { interval_s: t, ..truong::TruongConfig::default() };
                if let Some(th) = a.theta.or(f.theta) {
                    cfg.theta = th;
                }
                rows.extend(truong::build_dataset(&window_pairs(&ds, t), &ds, &cfg)?);
            }
            io::write_truong_features(&out, &rows)?;
            log(format!("{} feature vectors", rows.len()));
        }
        Scheme::Shrestha => {
            let mut rows = shrestha::build_dataset(&ds, &shrestha::ShresthaConfig::default())?;
            if !a.no_compress {
                rows = shrestha::compress_instances(&rows);
            }
            io::write_shrestha_features(&out, &rows)?;
            log(format!("{} weighted instances", rows.len()));
        }
    }
    Ok(())
}

fn read_fingerprint_file(path: &Path, bits: Option<usize>) -> CliResult<(Vec<FingerprintRow>, usize)> {
    let rows: Vec<FingerprintRow> = io::read_csv(path)?;
    let first = rows.first().ok_or_else(|| CliError::Data(zis_core::Error::InvariantViolation("no records".into())))?;
    let bits = bits.unwrap_or(first.hex_bits.len() * 4);
    Ok((rows, bits))
}

#[derive(Serialize)]
struct RandomnessOutput {
    fingerprints: RandomnessReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    subfingerprints: Option<RandomnessReport>,
}

fn randomness_cmd(a: RandomnessArgs, f: FileConfig) -> CliResult<()> {
    let input = required(a.input.or(f.input), "input")?;
    let out = required(a.out.or(f.out), "out")?;
    let (rows, bits) = read_fingerprint_file(&input, a.bits.or(f.bits))?;
    let fps = rows
        .iter()
        .map(|r| {
            let b = Fingerprint::bits_from_hex(&r.hex_bits, bits)?;
            Ok(Fingerprint::new(b, "", r.device_id.clone(), r.interval_start_ms))
        })
        .collect::<zis_core::Result<Vec<_>>>()?;
    let subfingerprints = match a.split.or(f.split) {
        Some(n) => {
            let mut subs = Vec::new();
            for fp in &fps {
                subs.extend(randomness::split_subfingerprints(fp, n)?);
            }
            Some(randomness::randomness_report(&subs)?)
        }
        None => None,
    };
    let report = RandomnessOutput { fingerprints: randomness::randomness_report(&fps)?, subfingerprints };
    log(format!("random-walk TV distance {:.4}", report.fingerprints.random_walk.tv_distance));
    io::write_json(&out, &report)?;
    Ok(())
}

fn default_bits(scheme: Scheme) -> Option<usize> {
    match scheme {
        Scheme::Schurmann => Some(SchurmannConfig::default().fingerprint_bits()),
        Scheme::Miettinen => Some(MiettinenConfig::default().bits),
        _ => None,
    }
}

/// Labeled records of a score or fingerprint file.
fn scored_records(
    scheme: Scheme,
    input: &Path,
    truth: &GroundTruth,
    bits: Option<usize>,
    min_surprisal: Option<f64>,
) -> CliResult<Vec<EvaluationRecord<f64>>> {
    match scheme {
        Scheme::Karapanos => {
            let rows: Vec<ScoreRow> = io::read_csv(input)?;
            Ok(pipeline::score_records(&rows, truth)?)
        }
        Scheme::Schurmann | Scheme::Miettinen => {
            let rows: Vec<FingerprintRow> = io::read_csv(input)?;
            let bits = bits.or(default_bits(scheme)).expect("fingerprint scheme");
            Ok(pipeline::fingerprint_records(&rows, bits, truth, min_surprisal)?)
        }
        Scheme::Truong | Scheme::Shrestha => unreachable!("feature schemes are trained, not scored"),
    }
}

fn write_evaluation(out: &Path, scheme: &str, ev: &pipeline::SchemeEvaluation) -> CliResult<()> {
    io::write_csv(&out.join("results.csv"), &io::RESULT_HEADER, &ev.results)?;
    for (name, c) in &ev.curves {
        io::write_csv(&out.join("curves").join(format!("{scheme}_{name}.csv")), &io::CURVE_HEADER, c)?;
    }
    for r in &ev.results {
        log(format!(
            "{} {} t={} eer{} {:.4} availability {:.3}",
            r.scheme,
            r.subscenario,
            r.t,
            if r.starred { "*" } else { "" },
            r.eer,
            r.availability
        ));
    }
    Ok(())
}

fn check_feature_scheme(scheme: Scheme, table: &FeatureTable) -> CliResult<()> {
    if table.scheme != scheme.name() {
        return Err(CliError::Usage(format!("input holds {} features, not {}", table.scheme, scheme.name())));
    }
    Ok(())
}

struct TrainOutput {
    evaluation: pipeline::SchemeEvaluation,
    metrics: Vec<io::MetricsRow>,
    models: Vec<(u32, TrainedModel)>,
}

fn train_tables(
    table: &FeatureTable,
    scenario: &str,
    truth: Option<&GroundTruth>,
    grid: &[Hyperparams],
    seed: u64,
    folds: usize,
) -> CliResult<TrainOutput> {
    if table.is_empty() {
        return Err(CliError::Data(zis_core::Error::InvariantViolation("no records".into())));
    }
    let mut out = TrainOutput {
        evaluation: pipeline::SchemeEvaluation { results: Vec::new(), curves: Vec::new() },
        metrics: Vec::new(),
        models: Vec::new(),
    };
    for (t, sub) in table.split_by_t() {
        let m = pipeline::evaluate_features(&sub, scenario, truth, grid, seed, folds, &DEFAULT_FAR_TARGETS)?;
        out.evaluation.results.extend(m.evaluation.results);
        out.evaluation.curves.extend(m.evaluation.curves);
        out.metrics.extend(m.metrics.into_iter().map(|mut r| {
            r.model_id = format!("t{t}/{}", r.model_id);
            r
        }));
        log(format!("t={t}: chose {} (cv auc {:.4})", m.report.model.params.id(), m.report.cv_auc));
        out.models.push((t, m.report.model));
    }
    Ok(out)
}

fn write_models(out: &Path, models: &[(u32, TrainedModel)]) -> CliResult<()> {
    for (t, m) in models {
        let path = out.join(format!("model_t{t}.json"));
        std::fs::create_dir_all(out).map_err(zis_core::Error::from)?;
        std::fs::write(&path, m.to_json()? + "\n").map_err(zis_core::Error::from)?;
    }
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs, f: FileConfig) -> CliResult<()> {
    let scheme = required(a.scheme.or(f.scheme), "scheme")?;
    let input = required(a.input.or(f.input), "input")?;
    let out = required(a.out.or(f.out), "out")?;
    let scenario = a.scenario.or(f.scenario).unwrap_or_else(|| "scenario".into());
    let truth_path = a.truth.truth.or(f.truth);
    let dataset = a.truth.dataset.or(f.dataset);
    if scheme.is_ml() {
        let truth = if truth_path.is_some() || dataset.is_some() { Some(load_truth(truth_path, dataset)?) } else { None };
        let table = io::read_feature_table(&input)?;
        check_feature_scheme(scheme, &table)?;
        let grid = grid_of(a.grid.or(f.grid).unwrap_or(Grid::Full));
        let seed = a.seed.or(f.seed).unwrap_or(ml::DEFAULT_SEED);
        let folds = a.folds.or(f.folds).unwrap_or(ml::CV_FOLDS);
        let r = train_tables(&table, &scenario, truth.as_ref(), &grid, seed, folds)?;
        write_evaluation(&out, scheme.name(), &r.evaluation)?;
        io::write_csv(&out.join("metrics.csv"), &io::METRICS_HEADER, &r.metrics)?;
        write_models(&out, &r.models)?;
        return Ok(());
    }
    let truth = load_truth(truth_path, dataset)?;
    let records = scored_records(scheme, &input, &truth, a.bits.or(f.bits), a.min_surprisal.or(f.min_surprisal))?;
    let ev = pipeline::evaluate_scored(scheme.name(), &scenario, &records, &truth, &DEFAULT_FAR_TARGETS)?;
    write_evaluation(&out, scheme.name(), &ev)
}

fn robustness_cmd(a: RobustnessArgs, f: FileConfig) -> CliResult<()> {
    let scheme = required(a.scheme.or(f.scheme), "scheme")?;
    let source = required(a.source, "source")?;
    let input = required(a.input.or(f.input), "input")?;
    let out = required(a.out.or(f.out), "out")?;
    let sub = a.subscenario.or(f.subscenario).unwrap_or_else(|| pipeline::FULL.into());
    let target_name = a.target_name.or(f.target_name).unwrap_or_else(|| "target".into());
    let results: Vec<ResultRow> = io::read_csv(&source)?;
    let rules: Vec<&ResultRow> = results.iter().filter(|r| r.scheme == scheme.name() && r.subscenario == sub).collect();
    if rules.is_empty() {
        return Err(CliError::Data(zis_core::Error::NotFound(format!(
            "no {} result for subscenario {sub} in {}",
            scheme.name(),
            source.display()
        ))));
    }
    let mut rows = Vec::new();
    if scheme.is_ml() {
        let model: TrainedModel = TrainedModel::from_json(
            &std::fs::read_to_string(required(a.model.or(f.model), "model")?).map_err(zis_core::Error::from)?,
        )?;
        let table = io::read_feature_table(&input)?;
        check_feature_scheme(scheme, &table)?;
        for (t, target) in table.split_by_t() {
            if let Some(rule) = rules.iter().find(|r| r.t == t) {
                rows.push(pipeline::cross_apply_trained(&model, rule.threshold, &rule.scenario, &target_name, &target)?);
            }
        }
    } else {
        let truth = load_truth(a.truth.truth.or(f.truth), a.truth.dataset.or(f.dataset))?;
        let records = scored_records(scheme, &input, &truth, a.bits.or(f.bits), a.min_surprisal.or(f.min_surprisal))?;
        for rule in rules {
            let at_t: Vec<_> = records.iter().filter(|r| r.t_s == rule.t).cloned().collect();
            if !at_t.is_empty() {
                rows.push(pipeline::cross_apply_result(rule, &target_name, &at_t)?);
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Data(zis_core::Error::InvariantViolation("no records".into())));
    }
    for r in &rows {
        log(format!("t={}: far {:.4} frr {:.4} (own eer {:.4})", r.t, r.far, r.frr, r.own_eer));
    }
    io::write_csv(&out, &io::ROBUSTNESS_HEADER, &rows)?;
    Ok(())
}

fn ml_train_cmd(a: MlTrainArgs, f: FileConfig) -> CliResult<()> {
    let input = required(a.input.or(f.input), "input")?;
    let out = required(a.out.or(f.out), "out")?;
    let table = io::read_feature_table(&input)?;
    let grid = grid_of(a.grid.or(f.grid).unwrap_or(Grid::Full));
    let seed = a.seed.or(f.seed).unwrap_or(ml::DEFAULT_SEED);
    let folds = a.folds.or(f.folds).unwrap_or(ml::CV_FOLDS);
    let r = train_tables(&table, &f.scenario.unwrap_or_else(|| "scenario".into()), None, &grid, seed, folds)?;
    io::write_csv(&out.join("metrics.csv"), &io::METRICS_HEADER, &r.metrics)?;
    io::write_csv(&out.join("results.csv"), &io::RESULT_HEADER, &r.evaluation.results)?;
    write_models(&out, &r.models)
}

fn ml_predict_cmd(a: MlPredictArgs, f: FileConfig) -> CliResult<()> {
    let model_path = required(a.model.or(f.model), "model")?;
    let input = required(a.input.or(f.input), "input")?;
    let out = required(a.out.or(f.out), "out")?;
    let model = TrainedModel::from_json(&std::fs::read_to_string(&model_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => zis_core::Error::MissingInput(model_path.clone()),
        _ => zis_core::Error::Io(e),
    })?)?;
    let table = io::read_feature_table(&input)?;
    if table.is_empty() {
        return Err(CliError::Data(zis_core::Error::InvariantViolation("no records".into())));
    }
    let probs = model.predict_all(&table.rows)?;
    let rows: Vec<(String, i64, u32, f64, &str)> = (0..table.len())
        .map(|i| (table.pair_ids[i].clone(), table.times_ms[i], table.t[i], probs[i], table.labels[i].as_str()))
        .collect();
    io::write_csv(&out, &["pair_id", "time_ms", "t", "probability", "label"], &rows)?;
    Ok(())
}

fn set_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("ZIS_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("ZIS_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn read_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(p) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", p.display())))
}

fn run(cli: Cli) -> CliResult<()> {
    set_threads()?;
    let f = read_config(cli.config.as_deref())?;
    match cli.command {
        Command::Datagen(a) => datagen_cmd(a, f),
        Command::Align(a) => align_cmd(a, f),
        Command::Features(a) => features_cmd(a, f),
        Command::FingerprintRandomness(a) => randomness_cmd(a, f),
        Command::Evaluate(a) => evaluate_cmd(a, f),
        Command::Robustness(a) => robustness_cmd(a, f),
        Command::Ml(MlCommand::Train(a)) => ml_train_cmd(a, f),
        Command::Ml(MlCommand::Predict(a)) => ml_predict_cmd(a, f),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Usage(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e @ CliError::Data(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn config_keys_mirror_flags() {
        let f: FileConfig = toml::from_str("scheme = \"karapanos\"\nt = [5, 10]\nmaxlag-s = 0.5\npower-db = 38.0\n").unwrap();
        assert_eq!(f.scheme, Some(Scheme::Karapanos));
        assert_eq!(f.t, Some(vec![5, 10]));
        assert_eq!(f.maxlag_s, Some(0.5));
        assert!(toml::from_str::<FileConfig>("bogus = 1").is_err());
    }

}
