//! Tree-ensemble classifiers with missing values and instance weights,
//! stratified cross-validation and AUC-ranked grid search.

mod cv;
pub mod tree;

pub use cv::{auc, CV_FOLDS, HOLDOUT_FRACTION, stratified_folds, train, train_test_split, GridResult, TrainingReport};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use tree::{grow, Columns, Objective, Stats, Tree, TreeParams};

/// Seed of every training run unless overridden.
pub const DEFAULT_SEED: u64 = 1619;
pub const DEFAULT_EARLY_STOP_ROUNDS: usize = 5;

/// Feature rows with optional values, binary labels and positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MlDataset {
    pub rows: Vec<Vec<Option<f64>>>,
    /// True for colocated.
    pub labels: Vec<bool>,
    pub weights: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl MlDataset {
    pub fn new(rows: Vec<Vec<Option<f64>>>, labels: Vec<bool>, weights: Option<Vec<f64>>, feature_names: Vec<String>) -> Result<Self> {
        let weights = weights.unwrap_or_else(|| vec![1.0; rows.len()]);
        if labels.len() != rows.len() || weights.len() != rows.len() {
            return Err(Error::InvariantViolation("rows, labels and weights differ in length".into()));
        }
        let arity = feature_names.len();
        if let Some(r) = rows.iter().find(|r| r.len() != arity) {
            return Err(Error::IncompatibleRow { expected: arity, got: r.len() });
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvariantViolation(format!("instance weight {w} is not positive")));
        }
        if rows.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvariantViolation("feature values must be finite".into()));
        }
        Ok(Self { rows, labels, weights, feature_names })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            weights: idx.iter().map(|&i| self.weights[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    fn prior(&self, mask: &[f64]) -> Result<f64> {
        let (mut pos, mut tot) = (0.0, 0.0);
        for i in 0..self.len() {
            let w = mask[i];
            tot += w;
            if self.labels[i] {
                pos += w;
            }
        }
        if pos == 0.0 || pos == tot {
            return Err(Error::DegenerateLabels);
        }
        Ok(pos / tot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Forest,
    Boosting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub kind: ModelKind,
    pub n_trees: usize,
    pub max_depth: usize,
    /// Boosting only.
    pub learning_rate: f64,
    pub min_rows: f64,
    /// Features tried per split; `None` picks sqrt(p) for forests and all
    /// features for boosting.
    pub mtry: Option<usize>,
    /// Forest only: draw a weighted bootstrap sample per tree.
    pub bootstrap: bool,
}

impl Hyperparams {
    pub fn forest(n_trees: usize, max_depth: usize) -> Self {
        Self { kind: ModelKind::Forest, n_trees, max_depth, learning_rate: 1.0, min_rows: 1.0, mtry: None, bootstrap: true }
    }

    pub fn boosting(n_trees: usize, max_depth: usize, learning_rate: f64) -> Self {
        Self { kind: ModelKind::Boosting, n_trees, max_depth, learning_rate, min_rows: 1.0, mtry: None, bootstrap: false }
    }

    pub fn id(&self) -> String {
        match self.kind {
            ModelKind::Forest => format!("forest_t{}_d{}", self.n_trees, self.max_depth),
            ModelKind::Boosting => format!("boosting_t{}_d{}_lr{}", self.n_trees, self.max_depth, self.learning_rate),
        }
    }
}

/// Trees {50, 100, 200} by depth {4, 8, 16}, and learning rate {0.1, 0.3}
/// for boosting.
pub fn default_grid(kinds: &[ModelKind]) -> Vec<Hyperparams> {
    let mut g = Vec::new();
    for &kind in kinds {
        for n in [50, 100, 200] {
            for d in [4, 8, 16] {
                match kind {
                    ModelKind::Forest => g.push(Hyperparams::forest(n, d)),
                    ModelKind::Boosting => {
                        for lr in [0.1, 0.3] {
                            g.push(Hyperparams::boosting(n, d, lr));
                        }
                    }
                }
            }
        }
    }
    g
}

/// Two small configurations for fast runs.
pub fn quick_grid() -> Vec<Hyperparams> {
    vec![Hyperparams::forest(50, 8), Hyperparams::boosting(50, 4, 0.3)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: Hyperparams,
    pub seed: u64,
    pub feature_names: Vec<String>,
    /// Weighted fraction of colocated training rows.
    pub prior: f64,
    /// Boosting starting log-odds.
    pub base_score: f64,
    pub trees: Vec<Tree>,
    /// Share of total split gain per feature.
    pub feature_importances: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl TrainedModel {
    /// Probability of the colocated class. A row with every value missing
    /// gets the training prior.
    pub fn predict(&self, row: &[Option<f64>]) -> Result<f64> {
        if row.len() != self.feature_names.len() {
            return Err(Error::IncompatibleRow { expected: self.feature_names.len(), got: row.len() });
        }
        if row.iter().all(Option::is_none) {
            return Ok(self.prior);
        }
        Ok(match self.params.kind {
            ModelKind::Forest => self.trees.iter().map(|t| t.leaf_value(row)).sum::<f64>() / self.trees.len() as f64,
            ModelKind::Boosting => sigmoid(self.margin(row, self.trees.len())),
        })
    }

    fn margin(&self, row: &[Option<f64>], n_trees: usize) -> f64 {
        self.base_score + self.trees[..n_trees].iter().map(|t| self.params.learning_rate * t.leaf_value(row)).sum::<f64>()
    }

    pub fn predict_all(&self, rows: &[Vec<Option<f64>>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn normalize(importance: Vec<f64>) -> Vec<f64> {
    let total: f64 = importance.iter().sum();
    if total > 0.0 {
        importance.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / importance.len() as f64; importance.len()]
    }
}

/// Bootstrap counts: `round(Σw)` draws with probability proportional to
/// weight. Integer weights draw integers, so a row of weight k behaves as
/// k consecutive unit rows.
fn bootstrap_counts(weights: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut counts = vec![0.0; weights.len()];
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cum.push(acc);
    }
    if acc <= 0.0 {
        return counts;
    }
    let integral = weights.iter().all(|w| w.fract() == 0.0);
    let draws = acc.round() as u64;
    for _ in 0..draws {
        let u = if integral { rng.gen_range(0..acc as u64) as f64 } else { rng.gen_range(0.0..acc) };
        counts[cum.partition_point(|&c| c <= u)] += 1.0;
    }
    counts
}

fn tree_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Trains one model on the rows of `data` with nonzero `mask` weight
/// (`mask[i]` multiplies `data.weights[i]`). Boosting stops early once the
/// loss on the `valid` rows has not improved for `early_stop` rounds.
pub fn fit(
    data: &MlDataset,
    cols: &Columns,
    mask: &[f64],
    params: &Hyperparams,
    seed: u64,
    valid: Option<&MlDataset>,
    early_stop: usize,
) -> Result<TrainedModel> {
    let w: Vec<f64> = data.weights.iter().zip(mask).map(|(a, b)| a * b).collect();
    let prior = data.prior(&w)?;
    let p = data.n_features();
    let tp = TreeParams {
        max_depth: params.max_depth,
        min_rows: params.min_rows,
        mtry: params.mtry.or(match params.kind {
            ModelKind::Forest => Some(((p as f64).sqrt().floor() as usize).max(1)),
            ModelKind::Boosting => None,
        }),
    };
    let mut model = TrainedModel {
        params: *params,
        seed,
        feature_names: data.feature_names.clone(),
        prior,
        base_score: (prior / (1.0 - prior)).ln(),
        trees: Vec::new(),
        feature_importances: Vec::new(),
    };
    let mut importance = vec![0.0; p];
    match params.kind {
        ModelKind::Forest => {
            let grown: Vec<(Tree, Vec<f64>)> = (0..params.n_trees)
                .into_par_iter()
                .map(|t| {
                    let mut rng = tree_rng(seed, t as u64);
                    let counts = if params.bootstrap { bootstrap_counts(&w, &mut rng) } else { w.clone() };
                    let stats: Vec<Stats> = counts
                        .iter()
                        .zip(&data.labels)
                        .map(|(&c, &y)| Stats::weighted(y as u8 as f64, !y as u8 as f64, c))
                        .collect();
                    grow(cols, &stats, Objective::Gini, &tp, &mut rng)
                })
                .collect();
            for (t, imp) in grown {
                importance.iter_mut().zip(imp).for_each(|(a, b)| *a += b);
                model.trees.push(t);
            }
        }
        ModelKind::Boosting => {
            let obj = Objective::Newton { lambda: 1.0, max_step: 10.0 };
            let mut margin = vec![model.base_score; data.len()];
            let mut valid_margin: Vec<f64> = valid.map_or(Vec::new(), |v| vec![model.base_score; v.len()]);
            let (mut best_loss, mut best_round, mut imp_at_best) = (f64::INFINITY, 0, importance.clone());
            let mut rng = tree_rng(seed, 0);
            for round in 0..params.n_trees {
                let stats: Vec<Stats> = (0..data.len())
                    .map(|i| {
                        if w[i] == 0.0 {
                            return Stats::default();
                        }
                        let pr = sigmoid(margin[i]);
                        let y = data.labels[i] as u8 as f64;
                        Stats::weighted(pr - y, pr * (1.0 - pr), w[i])
                    })
                    .collect();
                let (t, imp) = grow(cols, &stats, obj, &tp, &mut rng);
                importance.iter_mut().zip(imp).for_each(|(a, b)| *a += b);
                for (i, m) in margin.iter_mut().enumerate() {
                    *m += params.learning_rate * t.leaf_value(&data.rows[i]);
                }
                if let Some(v) = valid {
                    for (i, m) in valid_margin.iter_mut().enumerate() {
                        *m += params.learning_rate * t.leaf_value(&v.rows[i]);
                    }
                }
                model.trees.push(t);
                if let Some(v) = valid {
                    let loss = log_loss(&valid_margin, &v.labels, &v.weights);
                    if loss < best_loss {
                        best_loss = loss;
                        best_round = round + 1;
                        imp_at_best = importance.clone();
                    } else if round + 1 - best_round >= early_stop {
                        break;
                    }
                }
            }
            if valid.is_some() {
                model.trees.truncate(best_round.max(1));
                if best_round > 0 {
                    importance = imp_at_best;
                }
            }
        }
    }
    model.feature_importances = normalize(importance);
    Ok(model)
}

fn log_loss(margin: &[f64], labels: &[bool], weights: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut wsum = 0.0;
    for ((&m, &y), &w) in margin.iter().zip(labels).zip(weights) {
        // log(1 + e^-m) for positives, log(1 + e^m) for negatives
        let z = if y { -m } else { m };
        total += w * (z.max(0.0) + (-z.abs()).exp().ln_1p());
        wsum += w;
    }
    total / wsum
}

/// Trains on all rows of `data` with unit mask.
pub fn fit_all(data: &MlDataset, params: &Hyperparams, seed: u64) -> Result<TrainedModel> {
    let cols = Columns::new(&data.rows, data.n_features());
    fit(data, &cols, &vec![1.0; data.len()], params, seed, None, DEFAULT_EARLY_STOP_ROUNDS)
}
