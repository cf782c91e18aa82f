//! Randomness diagnostics for fingerprint corpora.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, Discrete};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;

/// Endpoint distribution of fingerprints read as ±1 walks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomWalkReport {
    pub length: usize,
    pub count: usize,
    /// Endpoint offset to number of fingerprints ending there.
    pub histogram: BTreeMap<i64, u64>,
    /// Binomial(L, 1/2) mass at each reachable offset.
    pub expected: BTreeMap<i64, f64>,
    pub tv_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    pub length: usize,
    pub count: usize,
    /// P(b = 1) per position.
    pub p_one: Vec<f64>,
    /// Per adjacent pair (k, k+1): [P(b_{k+1}=1 | b_k=0), P(b_{k+1}=1 | b_k=1)].
    /// `None` when the conditioning state never occurs.
    pub transitions: Vec<[Option<f64>; 2]>,
    /// Same estimate pooled over all positions.
    pub pooled: [Option<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomnessReport {
    pub random_walk: RandomWalkReport,
    pub markov: MarkovReport,
}

fn common_length(fps: &[Fingerprint]) -> Result<usize> {
    let first = fps
        .first()
        .ok_or_else(|| Error::InvariantViolation("no fingerprints".into()))?;
    for f in fps {
        if f.len() != first.len() {
            return Err(Error::IncompatibleFingerprints(first.len(), f.len()));
        }
    }
    Ok(first.len())
}

/// `#ones − #zeros`.
pub fn walk_endpoint(f: &Fingerprint) -> i64 {
    2 * f.count_ones() as i64 - f.len() as i64
}

pub fn random_walk(fps: &[Fingerprint]) -> Result<RandomWalkReport> {
    let l = common_length(fps)?;
    let mut histogram = BTreeMap::new();
    for f in fps {
        *histogram.entry(walk_endpoint(f)).or_insert(0u64) += 1;
    }
    let binom = Binomial::new(0.5, l as u64).expect("valid binomial");
    let expected: BTreeMap<i64, f64> = (0..=l as u64)
        .map(|k| (2 * k as i64 - l as i64, binom.pmf(k)))
        .collect();
    let n = fps.len() as f64;
    let tv = 0.5
        * expected
            .iter()
            .map(|(o, &p)| (histogram.get(o).copied().unwrap_or(0) as f64 / n - p).abs())
            .sum::<f64>();
    Ok(RandomWalkReport {
        length: l,
        count: fps.len(),
        histogram,
        expected,
        tv_distance: tv.clamp(0.0, 1.0),
    })
}

pub fn markov_stats(fps: &[Fingerprint]) -> Result<MarkovReport> {
    let l = common_length(fps)?;
    let mut ones = vec![0u64; l];
    // [from][to] counts per adjacent pair
    let mut trans = vec![[[0u64; 2]; 2]; l.saturating_sub(1)];
    for f in fps {
        for (k, &b) in f.bits.iter().enumerate() {
            ones[k] += b as u64;
            if k + 1 < l {
                trans[k][b as usize][f.bits[k + 1] as usize] += 1;
            }
        }
    }
    let ratio = |c: [u64; 2]| (c[0] + c[1] > 0).then(|| c[1] as f64 / (c[0] + c[1]) as f64);
    let mut pooled = [[0u64; 2]; 2];
    for t in &trans {
        for from in 0..2 {
            for to in 0..2 {
                pooled[from][to] += t[from][to];
            }
        }
    }
    let n = fps.len() as f64;
    Ok(MarkovReport {
        length: l,
        count: fps.len(),
        p_one: ones.iter().map(|&c| c as f64 / n).collect(),
        transitions: trans.iter().map(|t| [ratio(t[0]), ratio(t[1])]).collect(),
        pooled: [ratio(pooled[0]), ratio(pooled[1])],
    })
}

pub fn randomness_report(fps: &[Fingerprint]) -> Result<RandomnessReport> {
    Ok(RandomnessReport {
        random_walk: random_walk(fps)?,
        markov: markov_stats(fps)?,
    })
}

/// Contiguous chunks of `sub_len` bits, in order, keeping the metadata.
pub fn split_subfingerprints(f: &Fingerprint, sub_len: usize) -> Result<Vec<Fingerprint>> {
    if sub_len == 0 || f.len() % sub_len != 0 {
        return Err(Error::InvalidSplit { len: f.len(), sub_len });
    }
    Ok(f.bits
        .chunks(sub_len)
        .map(|c| Fingerprint::new(c.to_vec(), f.scheme.clone(), f.device_id.clone(), f.interval_start_ms))
        .collect())
}

/// Whether an observed frequency lies within `z` binomial standard
/// deviations of `p` for `n` trials.
pub fn within_binomial_band(observed: f64, p: f64, n: usize, z: f64) -> bool {
    (observed - p).abs() <= z * (p * (1.0 - p) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fp(s: &str) -> Fingerprint {
        Fingerprint::from_bits(s.chars().map(|c| c == '1').collect())
    }

    fn uniform(n: usize, l: usize, seed: u64) -> Vec<Fingerprint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Fingerprint::from_bits((0..l).map(|_| rng.gen()).collect())).collect()
    }

    #[test]
    fn degenerate_corpora() {
        let ones = vec![fp(&"1".repeat(496)); 100];
        let r = random_walk(&ones).unwrap();
        assert_eq!(r.histogram, BTreeMap::from([(496, 100)]));
        assert!(r.tv_distance > 0.9);
        let alt = vec![fp(&"10".repeat(8)); 5];
        assert_eq!(random_walk(&alt).unwrap().histogram, BTreeMap::from([(0, 5)]));
        let zeros = vec![fp("0000"); 3];
        assert_eq!(markov_stats(&zeros).unwrap().p_one, vec![0.0; 4]);
    }

    #[test]
    fn hand_counted_transitions() {
        // 11001100: from 1 -> {1,0,1,0}, from 0 -> {0,1,0}
        let m = markov_stats(&[fp("11001100")]).unwrap();
        assert_eq!(m.pooled, [Some(1.0 / 3.0), Some(0.5)]);
        assert_eq!(m.transitions[0], [None, Some(1.0)]);
        assert_eq!(m.transitions[1], [None, Some(0.0)]);
        assert_eq!(m.p_one, vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn uniform_corpus_looks_binomial() {
        let fps = uniform(10_000, 496, 7);
        let r = random_walk(&fps).unwrap();
        assert!(r.tv_distance < 0.05, "tv {}", r.tv_distance);
        let m = markov_stats(&fps).unwrap();
        assert!(m.p_one.iter().all(|&p| within_binomial_band(p, 0.5, fps.len(), 3.0)));
        let mass: f64 = r.expected.values().sum();
        assert!((mass - 1.0).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        assert!(matches!(random_walk(&[fp("10"), fp("1")]), Err(Error::IncompatibleFingerprints(2, 1))));
        assert!(random_walk(&[]).is_err());
        assert!(matches!(
            split_subfingerprints(&fp("101"), 2),
            Err(Error::InvalidSplit { len: 3, sub_len: 2 })
        ));
    }

    #[test]
    fn split_examples() {
        let parts = split_subfingerprints(&fp("1001"), 2).unwrap();
        assert_eq!(parts, vec![fp("10"), fp("01")]);
        let f = &uniform(1, 496, 1)[0];
        let parts = split_subfingerprints(f, 31).unwrap();
        assert_eq!(parts.len(), 16);
        assert_eq!(parts.iter().flat_map(|p| p.bits.clone()).collect::<Vec<_>>(), f.bits);
    }

    proptest! {
        #[test]
        fn endpoint_rules(bits in prop::collection::vec(any::<bool>(), 1..300), copies in 1usize..5) {
            let f = Fingerprint::from_bits(bits.clone());
            let e = walk_endpoint(&f);
            prop_assert_eq!(e.rem_euclid(2), (bits.len() as i64).rem_euclid(2));
            let r = random_walk(&vec![f; copies]).unwrap();
            prop_assert_eq!(r.histogram.values().sum::<u64>(), copies as u64);
            prop_assert!((0.0..=1.0).contains(&r.tv_distance));
            prop_assert!(r.histogram.keys().all(|o| r.expected.contains_key(o)));
        }
    }
}
