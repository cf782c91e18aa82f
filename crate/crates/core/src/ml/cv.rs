use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::Columns;
use super::{fit, Hyperparams, MlDataset, TrainedModel};
use crate::error::{Error, Result};
use crate::eval::{accuracy, equal_error_rate_weighted, Polarity};

/// Weighted Mann-Whitney AUC; tied scores count half.
pub fn auc(scores: &[f64], labels: &[bool], weights: Option<&[f64]>) -> Result<f64> {
    if scores.len() != labels.len() || weights.is_some_and(|w| w.len() != scores.len()) {
        return Err(Error::InvariantViolation("scores, labels and weights differ in length".into()));
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut neg_below, mut num, mut pos_total) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut p, mut n) = (0.0, 0.0);
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] { p += w(idx[j]) } else { n += w(idx[j]) }
            j += 1;
        }
        num += p * (neg_below + 0.5 * n);
        neg_below += n;
        pos_total += p;
        i = j;
    }
    if pos_total == 0.0 || neg_below == 0.0 {
        return Err(Error::DegenerateLabels);
    }
    Ok(num / (pos_total * neg_below))
}

fn class_indices(labels: &[bool], seed: u64) -> [Vec<usize>; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        out[l as usize].push(i);
    }
    for c in out.iter_mut() {
        c.shuffle(&mut rng);
    }
    out
}

/// Fold index per row. Each class is shuffled and dealt round-robin, the
/// dealing position carrying over from one class to the next.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    let classes = class_indices(labels, seed);
    if let Some(c) = classes.iter().find(|c| c.len() < k) {
        return Err(Error::InfeasibleStratification { count: c.len(), k });
    }
    let mut fold = vec![0; labels.len()];
    let mut pos = 0;
    for c in &classes {
        for &i in c {
            fold[i] = pos % k;
            pos += 1;
        }
    }
    Ok(fold)
}

/// Stratified split into (train, holdout) row indices, each in ascending
/// order; `holdout_fraction` of each class is held out.
pub fn train_test_split(labels: &[bool], holdout_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let (mut train, mut hold) = (Vec::new(), Vec::new());
    for c in class_indices(labels, seed) {
        let h = (c.len() as f64 * holdout_fraction).round() as usize;
        hold.extend_from_slice(&c[..h]);
        train.extend_from_slice(&c[h..]);
    }
    train.sort_unstable();
    hold.sort_unstable();
    (train, hold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub params: Hyperparams,
    pub cv_auc: f64,
    /// EER of the out-of-fold predictions and the accuracy at its threshold.
    pub cv_eer: f64,
    pub cv_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub model: TrainedModel,
    pub grid: Vec<GridResult>,
    /// Rows of the input used for training and cross-validation.
    pub train_rows: Vec<usize>,
    pub valid_rows: Vec<usize>,
    /// Out-of-fold predictions of the chosen configuration, parallel to
    /// `train_rows`.
    pub cv_predictions: Vec<f64>,
    pub cv_auc: f64,
    pub valid_auc: Option<f64>,
}

pub const HOLDOUT_FRACTION: f64 = 0.2;
pub const CV_FOLDS: usize = 10;

/// Grid search ranked by k-fold cross-validated AUC on an 80 % split;
/// the remaining 20 % drives early stopping. The winner is refit on the
/// whole 80 %. Ties in AUC keep the earlier grid entry.
pub fn train(data: &MlDataset, grid: &[Hyperparams], seed: u64, early_stop: usize, folds: usize) -> Result<TrainingReport> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty hyperparameter grid".into()));
    }
    if !(data.labels.iter().any(|&l| l) && data.labels.iter().any(|&l| !l)) {
        return Err(Error::DegenerateLabels);
    }
    let (train_rows, valid_rows) = train_test_split(&data.labels, HOLDOUT_FRACTION, seed);
    let tr = data.subset(&train_rows);
    let va = data.subset(&valid_rows);
    let valid = (va.labels.iter().any(|&l| l) && va.labels.iter().any(|&l| !l)).then_some(&va);
    let fold = stratified_folds(&tr.labels, folds, seed)?;
    let cols = Columns::new(&tr.rows, tr.n_features());

    let mut results = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for (g, params) in grid.iter().enumerate() {
        let per_fold: Vec<Vec<(usize, f64)>> = (0..folds)
            .into_par_iter()
            .map(|k| -> Result<Vec<(usize, f64)>> {
                let mask: Vec<f64> = fold.iter().map(|&f| if f == k { 0.0 } else { 1.0 }).collect();
                let m = fit(&tr, &cols, &mask, params, seed, valid, early_stop)?;
                (0..tr.len())
                    .filter(|&i| fold[i] == k)
                    .map(|i| Ok((i, m.predict(&tr.rows[i])?)))
                    .collect()
            })
            .collect::<Result<_>>()?;
        let mut oof = vec![0.0; tr.len()];
        for (i, p) in per_fold.into_iter().flatten() {
            oof[i] = p;
        }
        let a = auc(&oof, &tr.labels, Some(&tr.weights))?;
        let rates = equal_error_rate_weighted(&oof, &tr.labels, Some(&tr.weights), Polarity::AcceptIfGeq)?;
        let acc = accuracy(&oof, &tr.labels, Some(&tr.weights), rates.threshold, Polarity::AcceptIfGeq)?;
        results.push(GridResult { params: *params, cv_auc: a, cv_eer: rates.eer, cv_accuracy: acc });
        if best.as_ref().map_or(true, |b| a > b.0) {
            best = Some((a, g, oof));
        }
    }
    let (cv_auc, g, cv_predictions) = best.expect("grid is nonempty");
    let model = fit(&tr, &cols, &vec![1.0; tr.len()], &grid[g], seed, valid, early_stop)?;
    let valid_auc = match valid {
        Some(v) => Some(auc(&model.predict_all(&v.rows)?, &v.labels, Some(&v.weights))?),
        None => None,
    };
    Ok(TrainingReport { model, grid: results, train_rows, valid_rows, cv_predictions, cv_auc, valid_auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::{ModelKind, DEFAULT_EARLY_STOP_ROUNDS, DEFAULT_SEED};
    use proptest::prelude::*;
    use rand::Rng;

    fn pairwise_auc(s: &[f64], l: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] && !l[j] {
                    den += 1.0;
                    num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        let l = [false, false, true, true];
        assert_eq!(auc(&[0.1, 0.2, 0.3, 0.4], &l, None).unwrap(), 1.0);
        assert_eq!(auc(&[0.4, 0.3, 0.2, 0.1], &l, None).unwrap(), 0.0);
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &l, None).unwrap(), 0.75);
        assert_eq!(auc(&[0.5; 4], &l, None).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1], &[true], None), Err(Error::DegenerateLabels)));
    }

    #[test]
    fn folds_are_balanced() {
        let l: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let f = stratified_folds(&l, 10, 1).unwrap();
        for k in 0..10 {
            let pos = (0..100).filter(|&i| f[i] == k && l[i]).count();
            let neg = (0..100).filter(|&i| f[i] == k && !l[i]).count();
            assert_eq!((pos, neg), (5, 5));
        }
        let l: Vec<bool> = (0..100).map(|i| i < 10).collect();
        let f = stratified_folds(&l, 10, 1).unwrap();
        for k in 0..10 {
            let pos = (0..100).filter(|&i| f[i] == k && l[i]).count();
            let neg = (0..100).filter(|&i| f[i] == k && !l[i]).count();
            assert_eq!((pos, neg), (1, 9));
        }
        assert_eq!(stratified_folds(&l, 10, 7).unwrap(), stratified_folds(&l, 10, 7).unwrap());
        assert_ne!(stratified_folds(&l, 10, 7).unwrap(), stratified_folds(&l, 10, 8).unwrap());
        assert!(matches!(stratified_folds(&l, 11, 1), Err(Error::InfeasibleStratification { count: 10, k: 11 })));
    }

    #[test]
    fn split_keeps_proportions() {
        let l: Vec<bool> = (0..100).map(|i| i < 30).collect();
        let (tr, ho) = train_test_split(&l, 0.2, 1);
        assert_eq!(ho.len(), 20);
        assert_eq!(ho.iter().filter(|&&i| l[i]).count(), 6);
        assert_eq!(tr.len() + ho.len(), 100);
    }

    fn separable(n: usize, seed: u64) -> MlDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % 2 == 0;
            let off = if c { 1.0 } else { -1.0 };
            rows.push(vec![Some(off + rng.gen_range(-0.5..0.5)), Some(rng.gen_range(-1.0..1.0))]);
            labels.push(c);
        }
        MlDataset::new(rows, labels, None, vec!["x".into(), "y".into()]).unwrap()
    }

    #[test]
    fn separable_data_reaches_auc_one() {
        let d = separable(200, 1);
        let grid = [Hyperparams::forest(20, 4), Hyperparams::boosting(20, 3, 0.3)];
        let r = train(&d, &grid, DEFAULT_SEED, DEFAULT_EARLY_STOP_ROUNDS, CV_FOLDS).unwrap();
        assert_eq!(r.cv_auc, 1.0);
        assert_eq!(r.valid_auc, Some(1.0));
        assert_eq!(r.grid.len(), 2);
        assert_eq!(r.model.params.kind, ModelKind::Forest);
        assert_eq!(r.cv_predictions.len(), r.train_rows.len());
    }

    #[test]
    fn training_is_reproducible() {
        let d = separable(120, 2);
        let grid = [Hyperparams::boosting(10, 3, 0.1)];
        let a = train(&d, &grid, DEFAULT_SEED, 5, 10).unwrap();
        let b = train(&d, &grid, DEFAULT_SEED, 5, 10).unwrap();
        assert_eq!(a.model.to_json().unwrap(), b.model.to_json().unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_and_empty_grid() {
        let mut d = separable(40, 3);
        assert!(train(&d, &[], 1, 5, 10).is_err());
        d.labels.iter_mut().for_each(|l| *l = true);
        assert!(matches!(train(&d, &[Hyperparams::forest(5, 2)], 1, 5, 10), Err(Error::DegenerateLabels)));
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_and_is_rank_invariant(v in prop::collection::vec((0u8..10, any::<bool>()), 2..50)) {
            let s: Vec<f64> = v.iter().map(|x| x.0 as f64).collect();
            let l: Vec<bool> = v.iter().map(|x| x.1).collect();
            prop_assume!(l.iter().any(|&c| c) && l.iter().any(|&c| !c));
            let a = auc(&s, &l, None).unwrap();
            prop_assert!((a - pairwise_auc(&s, &l)).abs() < 1e-12);
            let t: Vec<f64> = s.iter().map(|x| (x * 0.3).exp() + 5.0).collect();
            prop_assert_eq!(a, auc(&t, &l, None).unwrap());
        }

        #[test]
        fn fold_proportions_within_one_row(n_pos in 10usize..60, n_neg in 10usize..60, seed in any::<u64>()) {
            let l: Vec<bool> = (0..n_pos + n_neg).map(|i| i < n_pos).collect();
            let f = stratified_folds(&l, 10, seed).unwrap();
            for k in 0..10 {
                let size = f.iter().filter(|&&x| x == k).count() as f64;
                let pos = (0..l.len()).filter(|&i| f[i] == k && l[i]).count() as f64;
                let want = size * n_pos as f64 / l.len() as f64;
                prop_assert!((pos - want).abs() <= 1.0 + 1e-9);
            }
        }
    }
}
