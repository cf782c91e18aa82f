//! Error rates of a score-and-threshold decision: FAR/FRR, the equal error
//! rate, FRR at target FARs, class overlap and cross-scenario application.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EvaluationRecord;
use crate::num::Real;

/// Which side of the threshold is accepted as colocated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Similarities: accept when `score >= threshold`.
    AcceptIfGeq,
    /// Distances: accept when `score <= threshold`.
    AcceptIfLeq,
}

impl Polarity {
    pub fn accepts(self, score: f64, threshold: f64) -> bool {
        match self {
            Polarity::AcceptIfGeq => score >= threshold,
            Polarity::AcceptIfLeq => score <= threshold,
        }
    }
}

/// Largest FAR/FRR gap still reported as a plain EER; beyond it the two
/// differ in the third decimal and the average is starred.
pub const STAR_TOLERANCE: f64 = 5e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
    pub eer: f64,
    pub starred: bool,
}

impl ErrorRates {
    fn at(threshold: f64, far: f64, frr: f64) -> Self {
        Self {
            threshold,
            far,
            frr,
            eer: (far + frr) / 2.0,
            starred: (far - frr).abs() > STAR_TOLERANCE,
        }
    }
}

fn check(scores: &[f64], labels: &[bool], weights: Option<&[f64]>) -> Result<()> {
    if scores.len() != labels.len() || weights.is_some_and(|w| w.len() != scores.len()) {
        return Err(Error::InvariantViolation("scores, labels and weights differ in length".into()));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::InvariantViolation(format!("score {s} is not a number")));
    }
    let pos = labels.iter().any(|&l| l);
    let neg = labels.iter().any(|&l| !l);
    if !(pos && neg) {
        return Err(Error::DegenerateLabels);
    }
    Ok(())
}

/// `(FAR, FRR)` at one threshold. `labels[i]` is true for colocated.
pub fn far_frr(scores: &[f64], labels: &[bool], threshold: f64, polarity: Polarity) -> Result<(f64, f64)> {
    far_frr_weighted(scores, labels, None, threshold, polarity)
}

pub fn far_frr_weighted(
    scores: &[f64],
    labels: &[bool],
    weights: Option<&[f64]>,
    threshold: f64,
    polarity: Polarity,
) -> Result<(f64, f64)> {
    check(scores, labels, weights)?;
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let (mut fa, mut neg, mut fr, mut pos) = (0.0, 0.0, 0.0, 0.0);
    for (i, (&s, &l)) in scores.iter().zip(labels).enumerate() {
        let acc = polarity.accepts(s, threshold);
        if l {
            pos += w(i);
            if !acc {
                fr += w(i);
            }
        } else {
            neg += w(i);
            if acc {
                fa += w(i);
            }
        }
    }
    Ok((fa / neg, fr / pos))
}

/// Weighted fraction of correct accept/reject decisions at `threshold`.
pub fn accuracy(scores: &[f64], labels: &[bool], weights: Option<&[f64]>, threshold: f64, polarity: Polarity) -> Result<f64> {
    check(scores, labels, weights)?;
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let (mut right, mut total) = (0.0, 0.0);
    for (i, (&s, &l)) in scores.iter().zip(labels).enumerate() {
        total += w(i);
        if polarity.accepts(s, threshold) == l {
            right += w(i);
        }
    }
    Ok(right / total)
}

/// Every operating point `(threshold, far, frr)` of the candidate sweep,
/// in ascending threshold order: negative infinity, the midpoints between
/// consecutive distinct scores, positive infinity.
pub fn operating_points(
    scores: &[f64],
    labels: &[bool],
    weights: Option<&[f64]>,
    polarity: Polarity,
) -> Result<Vec<(f64, f64, f64)>> {
    check(scores, labels, weights)?;
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // per distinct score: (value, positive weight, negative weight)
    let mut groups: Vec<(f64, f64, f64)> = Vec::new();
    for &i in &idx {
        let (p, n) = if labels[i] { (w(i), 0.0) } else { (0.0, w(i)) };
        match groups.last_mut() {
            Some(g) if g.0 == scores[i] => {
                g.1 += p;
                g.2 += n;
            }
            _ => groups.push((scores[i], p, n)),
        }
    }
    let pos: f64 = groups.iter().map(|g| g.1).sum();
    let neg: f64 = groups.iter().map(|g| g.2).sum();

    // below[k] = weights of groups 0..k, summed in order
    let mut below = Vec::with_capacity(groups.len() + 1);
    let (mut bp, mut bn) = (0.0, 0.0);
    below.push((0.0, 0.0));
    for g in &groups {
        bp += g.1;
        bn += g.2;
        below.push((bp, bn));
    }
    let thresholds = std::iter::once(f64::NEG_INFINITY)
        .chain(groups.windows(2).map(|g| g[0].0 + (g[1].0 - g[0].0) / 2.0))
        .chain(std::iter::once(f64::INFINITY));
    Ok(thresholds
        .enumerate()
        .map(|(k, thr)| {
            // groups 0..k lie below the threshold
            let (lp, ln) = below[k];
            let (far, frr) = match polarity {
                Polarity::AcceptIfGeq => ((neg - ln) / neg, lp / pos),
                Polarity::AcceptIfLeq => (ln / neg, (pos - lp) / pos),
            };
            (thr, far, frr)
        })
        .collect())
}

fn pick_eer(points: &[(f64, f64, f64)]) -> ErrorRates {
    let mut best = points[0];
    for &p in &points[1..] {
        let (d, bd) = ((p.1 - p.2).abs(), (best.1 - best.2).abs());
        if d < bd || (d == bd && p.1 < best.1) {
            best = p;
        }
    }
    ErrorRates::at(best.0, best.1, best.2)
}

/// The candidate threshold with the smallest |FAR − FRR|, preferring the
/// lower FAR and then the lower threshold on ties.
pub fn equal_error_rate(scores: &[f64], labels: &[bool], polarity: Polarity) -> Result<ErrorRates> {
    equal_error_rate_weighted(scores, labels, None, polarity)
}

pub fn equal_error_rate_weighted(
    scores: &[f64],
    labels: &[bool],
    weights: Option<&[f64]>,
    polarity: Polarity,
) -> Result<ErrorRates> {
    Ok(pick_eer(&operating_points(scores, labels, weights, polarity)?))
}

/// Smallest FRR over candidate thresholds whose FAR does not exceed each
/// target.
pub fn frr_at_far(scores: &[f64], labels: &[bool], polarity: Polarity, far_targets: &[f64]) -> Result<Vec<(f64, f64)>> {
    let points = operating_points(scores, labels, None, polarity)?;
    Ok(far_targets
        .iter()
        .map(|&target| {
            let frr = points
                .iter()
                .filter(|p| p.1 <= target)
                .map(|p| p.2)
                .fold(f64::INFINITY, f64::min);
            (target, frr)
        })
        .collect())
}

/// FAR targets of the result curves, 0.1 % to 5 %.
pub const DEFAULT_FAR_TARGETS: [f64; 6] = [0.001, 0.005, 0.01, 0.02, 0.03, 0.05];

pub const OVERLAP_BINS: usize = 100;

/// Overlap coefficient of the two class histograms on a shared range:
/// sum over bins of the smaller relative frequency.
pub fn class_overlap(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check(scores, labels, None)?;
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Ok(1.0);
    }
    let mut h = [[0.0f64; OVERLAP_BINS]; 2];
    let mut n = [0.0f64; 2];
    for (&s, &l) in scores.iter().zip(labels) {
        let b = (((s - lo) / (hi - lo)) * OVERLAP_BINS as f64) as usize;
        h[l as usize][b.min(OVERLAP_BINS - 1)] += 1.0;
        n[l as usize] += 1.0;
    }
    Ok((0..OVERLAP_BINS).map(|b| (h[0][b] / n[0]).min(h[1][b] / n[1])).sum())
}

/// Usable scores of a record set and the fraction of records that had one.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub availability: f64,
}

impl ScoredSet {
    pub fn from_records<T: Real>(records: &[EvaluationRecord<T>]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvariantViolation("no records".into()));
        }
        let (mut scores, mut labels) = (Vec::new(), Vec::new());
        for r in records {
            if let Some(s) = r.score {
                scores.push(s.to_f64_lossy());
                labels.push(r.label.is_colocated());
            }
        }
        let availability = scores.len() as f64 / records.len() as f64;
        Ok(Self { scores, labels, availability })
    }
}

/// EER of a record set with gated records left out of the rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub rates: ErrorRates,
    pub availability: f64,
}

pub fn evaluate_records<T: Real>(records: &[EvaluationRecord<T>], polarity: Polarity) -> Result<Evaluation> {
    let set = ScoredSet::from_records(records)?;
    Ok(Evaluation {
        rates: equal_error_rate(&set.scores, &set.labels, polarity)?,
        availability: set.availability,
    })
}

/// A threshold rule carried from one scenario to another.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub threshold: f64,
    pub polarity: Polarity,
}

/// Error rates of a foreign decision rule on a scenario, next to that
/// scenario's own EER point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossApplication {
    pub far: f64,
    pub frr: f64,
    pub own: ErrorRates,
    pub delta_far: f64,
    pub delta_frr: f64,
}

impl CrossApplication {
    fn new(far: f64, frr: f64, own: ErrorRates) -> Self {
        Self { far, frr, own, delta_far: far - own.far, delta_frr: frr - own.frr }
    }
}

pub fn cross_apply_threshold(rule: ThresholdRule, scores: &[f64], labels: &[bool]) -> Result<CrossApplication> {
    let own = equal_error_rate(scores, labels, rule.polarity)?;
    let (far, frr) = far_frr(scores, labels, rule.threshold, rule.polarity)?;
    Ok(CrossApplication::new(far, frr, own))
}

/// Applies a trained model and its threshold to feature rows of another
/// scenario; probabilities at or above the threshold count as colocated.
pub fn cross_apply_model(
    model: &crate::ml::TrainedModel,
    threshold: f64,
    rows: &[Vec<Option<f64>>],
    labels: &[bool],
    weights: Option<&[f64]>,
) -> Result<CrossApplication> {
    let probs = rows.iter().map(|r| model.predict(r)).collect::<Result<Vec<f64>>>()?;
    let own = equal_error_rate_weighted(&probs, labels, weights, Polarity::AcceptIfGeq)?;
    let (far, frr) = far_frr_weighted(&probs, labels, weights, threshold, Polarity::AcceptIfGeq)?;
    Ok(CrossApplication::new(far, frr, own))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    const GEQ: Polarity = Polarity::AcceptIfGeq;

    fn corpus(coloc: &[f64], non: &[f64]) -> (Vec<f64>, Vec<bool>) {
        let mut s = coloc.to_vec();
        s.extend(non);
        let l = coloc.iter().map(|_| true).chain(non.iter().map(|_| false)).collect();
        (s, l)
    }

    /// Exhaustive reference: evaluate `far_frr` at every candidate and pick
    /// by the same rule.
    pub(crate) fn brute_force_eer(s: &[f64], l: &[bool], p: Polarity) -> ErrorRates {
        let mut u = s.to_vec();
        u.sort_by(f64::total_cmp);
        u.dedup();
        let mut cands = vec![f64::NEG_INFINITY];
        cands.extend(u.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
        cands.push(f64::INFINITY);
        let mut best: Option<ErrorRates> = None;
        for t in cands {
            let (far, frr) = far_frr(s, l, t, p).unwrap();
            let e = ErrorRates::at(t, far, frr);
            best = match best {
                None => Some(e),
                Some(b) => {
                    let (d, bd) = ((far - frr).abs(), (b.far - b.frr).abs());
                    if d < bd || (d == bd && far < b.far) { Some(e) } else { Some(b) }
                }
            };
        }
        best.unwrap()
    }

    #[test]
    fn extreme_thresholds() {
        let (s, l) = corpus(&[0.9, 0.8], &[0.1, 0.2]);
        assert_eq!(far_frr(&s, &l, -1.0, GEQ).unwrap(), (1.0, 0.0));
        assert_eq!(far_frr(&s, &l, 2.0, GEQ).unwrap(), (0.0, 1.0));
        assert_eq!(far_frr(&s, &l, 0.5, GEQ).unwrap(), (0.0, 0.0));
        let e = equal_error_rate(&s, &l, GEQ).unwrap();
        assert_eq!((e.eer, e.threshold, e.starred), (0.0, 0.5, false));
    }

    #[test]
    fn worked_example() {
        let (s, l) = corpus(&[0.3, 0.7], &[0.4, 0.6]);
        let e = equal_error_rate(&s, &l, GEQ).unwrap();
        assert_eq!(e.eer, 0.5);
        assert_eq!((e.far, e.frr), (0.5, 0.5));
        assert_eq!(e, brute_force_eer(&s, &l, GEQ));
    }

    #[test]
    fn distance_polarity_mirrors_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (s, l): (Vec<f64>, Vec<bool>) = (0..300)
            .map(|_| {
                let c = rng.gen_bool(0.3);
                (rng.gen::<f64>() + if c { 0.4 } else { 0.0 }, c)
            })
            .unzip();
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let a = equal_error_rate(&s, &l, GEQ).unwrap();
        let b = equal_error_rate(&neg, &l, Polarity::AcceptIfLeq).unwrap();
        assert_eq!((a.far, a.frr), (b.far, b.frr));
        assert_eq!(b, brute_force_eer(&neg, &l, Polarity::AcceptIfLeq));
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(far_frr(&[0.1, 0.2], &[true, true], 0.0, GEQ), Err(Error::DegenerateLabels)));
        assert!(matches!(equal_error_rate(&[0.1], &[false], GEQ), Err(Error::DegenerateLabels)));
    }

    #[test]
    fn random_null_is_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s: Vec<f64> = (0..1000).map(|_| rng.gen()).collect();
        let l: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
        let e = equal_error_rate(&s, &l, GEQ).unwrap();
        assert!((0.45..=0.55).contains(&e.eer), "{}", e.eer);
    }

    #[test]
    fn weights_equal_repetition() {
        let (s, l) = corpus(&[0.3, 0.7, 0.9], &[0.4, 0.6, 0.1]);
        let w = [2.0, 1.0, 3.0, 1.0, 2.0, 1.0];
        let (mut se, mut le) = (Vec::new(), Vec::new());
        for i in 0..s.len() {
            for _ in 0..w[i] as usize {
                se.push(s[i]);
                le.push(l[i]);
            }
        }
        let a = equal_error_rate_weighted(&s, &l, Some(&w), GEQ).unwrap();
        let b = equal_error_rate(&se, &le, GEQ).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn frr_at_far_examples() {
        let (s, l) = corpus(&[0.9, 0.8], &[0.1, 0.2]);
        for (_, frr) in frr_at_far(&s, &l, GEQ, &DEFAULT_FAR_TARGETS).unwrap() {
            assert_eq!(frr, 0.0);
        }
        // target below 1/|non| leaves only thresholds above every negative
        let (s, l) = corpus(&[0.1, 0.5, 0.9, 0.3], &[0.2, 0.6, 0.4]);
        let r = frr_at_far(&s, &l, GEQ, &[0.1]).unwrap();
        assert_eq!(r[0].1, 0.75);
    }

    #[test]
    fn frr_at_far_matches_enumeration() {
        let s = [0.12, 0.5, 0.33, 0.9, 0.41, 0.77, 0.05, 0.6, 0.68, 0.2];
        let l = [false, true, false, true, true, false, false, true, true, false];
        let targets = [0.0, 0.1, 0.2, 0.25, 0.4, 0.5, 1.0];
        let got = frr_at_far(&s, &l, GEQ, &targets).unwrap();
        for (i, &t) in targets.iter().enumerate() {
            // any threshold: only the accepted set matters, try each score
            // and both infinities
            let mut best = f64::INFINITY;
            for thr in s.iter().copied().chain([f64::NEG_INFINITY, f64::INFINITY]) {
                let (far, frr) = far_frr(&s, &l, thr, GEQ).unwrap();
                if far <= t {
                    best = best.min(frr);
                }
            }
            assert_eq!(got[i].1, best, "target {t}");
        }
    }

    #[test]
    fn overlap_examples() {
        let (s, l) = corpus(&[0.0, 0.1, 0.2], &[0.8, 0.9, 1.0]);
        assert_eq!(class_overlap(&s, &l).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..20000).map(|_| rng.gen()).collect();
        let b: Vec<f64> = (0..20000).map(|_| rng.gen()).collect();
        let (s, l) = corpus(&a, &b);
        // Same distribution: the expected shortfall from 1 is the binomial
        // noise, bins * E|h0 - h1| / 2n with h ~ Bin(n, 1/bins).
        let (n, p) = (20000.0, 1.0 / OVERLAP_BINS as f64);
        let mean_abs = (2.0 * n * p * (1.0 - p)).sqrt() * (2.0 / std::f64::consts::PI).sqrt();
        let want = 1.0 - OVERLAP_BINS as f64 * mean_abs / (2.0 * n);
        assert!((class_overlap(&s, &l).unwrap() - want).abs() < 0.01);
        assert_eq!(class_overlap(&[1.0, 1.0], &[true, false]).unwrap(), 1.0);
    }

    #[test]
    fn overlap_of_gaussians_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = 1.5;
        let n01 = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let a: Vec<f64> = (0..50_000).map(|_| rng.sample(n01)).collect();
        let b: Vec<f64> = (0..50_000).map(|_| rng.sample(n01) + d).collect();
        let (s, l) = corpus(&a, &b);
        let want = 2.0 * Normal::new(0.0, 1.0).unwrap().cdf(-d / 2.0);
        let got = class_overlap(&s, &l).unwrap();
        assert!((got - want).abs() < 0.03, "{got} vs {want}");
    }

    #[test]
    fn cross_apply_self_and_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (s, l): (Vec<f64>, Vec<bool>) = (0..200)
            .map(|_| {
                let c = rng.gen_bool(0.5);
                (rng.gen::<f64>() + if c { 0.3 } else { 0.0 }, c)
            })
            .unzip();
        let own = equal_error_rate(&s, &l, GEQ).unwrap();
        let rule = ThresholdRule { threshold: own.threshold, polarity: GEQ };
        let x = cross_apply_threshold(rule, &s, &l).unwrap();
        assert_eq!((x.far, x.frr), (own.far, own.frr));
        assert_eq!((x.delta_far, x.delta_frr), (0.0, 0.0));

        let shifted: Vec<f64> = s.iter().map(|v| v + 0.2).collect();
        let y = cross_apply_threshold(rule, &shifted, &l).unwrap();
        let mut fa = 0;
        let mut fr = 0;
        for (&v, &c) in shifted.iter().zip(&l) {
            if c && v < own.threshold {
                fr += 1;
            }
            if !c && v >= own.threshold {
                fa += 1;
            }
        }
        let n_pos = l.iter().filter(|&&c| c).count() as f64;
        assert_eq!(y.far, fa as f64 / (l.len() as f64 - n_pos));
        assert_eq!(y.frr, fr as f64 / n_pos);
        assert!(y.far >= own.far && y.frr <= own.frr);
    }

    #[test]
    fn gated_records_lower_availability() {
        use crate::model::Label;
        let rec = |score: Option<f64>, c: bool| EvaluationRecord {
            device_a: "a".into(),
            device_b: "b".into(),
            interval_start_ms: 0,
            t_s: 5,
            score,
            label: Label::from_colocated(c),
        };
        let rs = vec![rec(Some(0.9), true), rec(None, true), rec(Some(0.1), false), rec(None, false)];
        let e = evaluate_records(&rs, GEQ).unwrap();
        assert_eq!(e.availability, 0.5);
        assert_eq!(e.rates.eer, 0.0);
        assert!(evaluate_records::<f64>(&[], GEQ).is_err());
    }

    proptest! {
        #[test]
        fn sweep_matches_brute_force(v in prop::collection::vec((0u8..20, any::<bool>()), 2..60)) {
            let s: Vec<f64> = v.iter().map(|x| x.0 as f64 / 7.0).collect();
            let l: Vec<bool> = v.iter().map(|x| x.1).collect();
            prop_assume!(l.iter().any(|&c| c) && l.iter().any(|&c| !c));
            let e = equal_error_rate(&s, &l, GEQ).unwrap();
            prop_assert_eq!(e, brute_force_eer(&s, &l, GEQ));
            prop_assert!(e.far.min(e.frr) <= e.eer && e.eer <= e.far.max(e.frr));
        }

        #[test]
        fn rates_monotone_in_threshold(v in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..40)) {
            let s: Vec<f64> = v.iter().map(|x| x.0).collect();
            let l: Vec<bool> = v.iter().map(|x| x.1).collect();
            prop_assume!(l.iter().any(|&c| c) && l.iter().any(|&c| !c));
            let pts = operating_points(&s, &l, None, GEQ).unwrap();
            for w in pts.windows(2) {
                prop_assert!(w[1].1 <= w[0].1 && w[1].2 >= w[0].2);
            }
            let curve = frr_at_far(&s, &l, GEQ, &[0.0, 0.01, 0.1, 0.3, 0.6, 1.0]).unwrap();
            for w in curve.windows(2) {
                prop_assert!(w[1].1 <= w[0].1);
            }
        }
    }
}
