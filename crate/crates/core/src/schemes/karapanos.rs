//! Sound-similarity score: the mean over one-third octave bands of the
//! normalized maximum cross-correlation, gated on average signal power.

use std::collections::BTreeMap;

use realfft::num_complex::Complex;

use crate::dsp::{self, Correlator, FilterBank, OctaveBand, OCTAVE_BANDS};
use crate::error::{Error, Result};
use crate::model::AudioSnippet;
use crate::num::{pcm_to_real, Real};

/// Power thresholds by recording device class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceClass {
    Default,
    Smartphone,
    Watch,
}

impl DeviceClass {
    pub fn power_threshold_db(self) -> f64 {
        match self {
            DeviceClass::Default => 40.0,
            DeviceClass::Smartphone => 38.0,
            DeviceClass::Watch => 35.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KarapanosConfig<T> {
    pub interval_s: u32,
    pub maxlag_s: f64,
    pub bands: Vec<OctaveBand>,
    pub power_threshold_db: T,
    /// Per-device overrides of `power_threshold_db`.
    pub device_thresholds: BTreeMap<String, T>,
    pub filter_order: usize,
}

impl<T: Real> Default for KarapanosConfig<T> {
    fn default() -> Self {
        Self {
            interval_s: 5,
            maxlag_s: 1.0,
            bands: OCTAVE_BANDS.to_vec(),
            power_threshold_db: T::of(DeviceClass::Default.power_threshold_db()),
            device_thresholds: BTreeMap::new(),
            filter_order: 20,
        }
    }
}

impl<T: Real> KarapanosConfig<T> {
    pub fn with_interval(mut self, interval_s: u32) -> Self {
        self.interval_s = interval_s;
        self
    }

    pub fn set_device_class(&mut self, device: &str, class: DeviceClass) {
        self.device_thresholds
            .insert(device.to_owned(), T::of(class.power_threshold_db()));
    }

    pub fn threshold_for(&self, device: &str) -> T {
        self.device_thresholds
            .get(device)
            .copied()
            .unwrap_or(self.power_threshold_db)
    }

    fn edges(&self) -> Vec<(f64, f64)> {
        self.bands.iter().map(|b| (b.f_low, b.f_high)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateReason {
    /// Average power of the first (`x`) or second (`y`) input at or below
    /// its threshold.
    LowPower { x: bool, y: bool },
    /// A band had zero energy, so the normalization is undefined.
    UndefinedCorrelation,
    /// No audio for the interval.
    MissingAudio,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityScore<T> {
    /// Present iff the score was not gated.
    pub value: Option<T>,
    pub gate: Option<GateReason>,
}

impl<T> SimilarityScore<T> {
    pub fn gated(reason: GateReason) -> Self {
        Self { value: None, gate: Some(reason) }
    }

    pub fn is_gated(&self) -> bool {
        self.gate.is_some()
    }
}

fn power_gate<T: Real>(px: T, py: T, tx: T, ty: T) -> Option<GateReason> {
    let (lx, ly) = (!(px > tx), !(py > ty));
    (lx || ly).then_some(GateReason::LowPower { x: lx, y: ly })
}

/// Similarity of two aligned, equal-length signals using the one-sided lag
/// range `[0, maxlag]`. Amplitudes are on the 16-bit PCM scale.
pub fn similarity<T: Real>(
    x: &[T],
    y: &[T],
    rate_hz: u32,
    threshold_x_db: T,
    threshold_y_db: T,
    cfg: &KarapanosConfig<T>,
) -> Result<SimilarityScore<T>> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::InsufficientSamples { needed: x.len().max(1), got: y.len() });
    }
    if let Some(g) = power_gate(dsp::avg_power_db(x), dsp::avg_power_db(y), threshold_x_db, threshold_y_db) {
        return Ok(SimilarityScore::gated(g));
    }
    let bank = FilterBank::<T>::butterworth(&cfg.edges(), rate_hz as f64, cfg.filter_order)?;
    let maxlag = (cfg.maxlag_s * rate_hz as f64).round() as usize;
    let bx = bank.filter_all(x);
    let by = bank.filter_all(y);
    let mut sum = T::zero();
    for (fx, fy) in bx.iter().zip(&by) {
        match dsp::max_xcorr_norm(fx, fy, maxlag) {
            Ok(p) => sum = sum + p.value,
            Err(Error::UndefinedCorrelation) => {
                return Ok(SimilarityScore::gated(GateReason::UndefinedCorrelation))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SimilarityScore {
        value: Some(sum / T::of_usize(bx.len())),
        gate: None,
    })
}

/// Similarity of two PCM snippets with each device's configured threshold.
pub fn similarity_snippets<T: Real>(
    x: &AudioSnippet,
    y: &AudioSnippet,
    cfg: &KarapanosConfig<T>,
) -> Result<SimilarityScore<T>> {
    if x.rate_hz != y.rate_hz {
        return Err(Error::InvalidConfig("sampling rates differ".into()));
    }
    similarity(
        &pcm_to_real::<T>(&x.samples),
        &pcm_to_real::<T>(&y.samples),
        x.rate_hz,
        cfg.threshold_for(&x.device_id),
        cfg.threshold_for(&y.device_id),
        cfg,
    )
}

/// A snippet decomposed into band spectra, reusable across all of its
/// pairings.
#[derive(Debug, Clone)]
pub struct PreparedSnippet<T> {
    pub power_db: T,
    energies: Vec<T>,
    spectra: Vec<Vec<Complex<T>>>,
}

/// Scores many snippet pairs of one length, filtering each snippet once.
#[derive(Debug, Clone)]
pub struct KarapanosAnalyzer<T: Real> {
    bank: FilterBank<T>,
    correlator: Correlator<T>,
    snippet_len: usize,
    maxlag: usize,
}

impl<T: Real> KarapanosAnalyzer<T> {
    pub fn new(cfg: &KarapanosConfig<T>, rate_hz: u32, snippet_len: usize) -> Result<Self> {
        let maxlag = (cfg.maxlag_s * rate_hz as f64).round() as usize;
        if maxlag >= snippet_len {
            return Err(Error::InvalidConfig(format!(
                "max lag of {maxlag} samples needs snippets longer than {snippet_len}"
            )));
        }
        Ok(Self {
            bank: FilterBank::butterworth(&cfg.edges(), rate_hz as f64, cfg.filter_order)?,
            correlator: Correlator::new(snippet_len, maxlag),
            snippet_len,
            maxlag,
        })
    }

    pub fn prepare(&self, x: &[T]) -> Result<PreparedSnippet<T>> {
        if x.len() != self.snippet_len {
            return Err(Error::InsufficientSamples { needed: self.snippet_len, got: x.len() });
        }
        let bands = self.bank.filter_all(x);
        Ok(PreparedSnippet {
            power_db: dsp::avg_power_db(x),
            energies: bands.iter().map(|b| dsp::energy(b)).collect(),
            spectra: bands.iter().map(|b| self.correlator.spectrum(b)).collect(),
        })
    }

    /// Scores in both argument orders `(S_xy, S_yx)`; `None` when gated.
    pub fn score_both_orders(
        &self,
        a: &PreparedSnippet<T>,
        b: &PreparedSnippet<T>,
        threshold_a: T,
        threshold_b: T,
    ) -> std::result::Result<(T, T), GateReason> {
        if let Some(g) = power_gate(a.power_db, b.power_db, threshold_a, threshold_b) {
            return Err(g);
        }
        let l = self.maxlag;
        let (mut xy, mut yx) = (T::zero(), T::zero());
        for band in 0..a.spectra.len() {
            let norm = dsp::normalizer(a.energies[band], b.energies[band])
                .map_err(|_| GateReason::UndefinedCorrelation)?;
            // c[l + L] = C_xy(l); C_yx(l) = C_xy(-l)
            let c = self.correlator.correlate_spectra(&a.spectra[band], &b.spectra[band]);
            xy = xy + dsp::peak_abs(&c[l..], 0, norm).value;
            yx = yx + dsp::peak_abs(&c[..=l], 0, norm).value;
        }
        let n = T::of_usize(a.spectra.len());
        Ok((xy / n, yx / n))
    }

    /// The larger of the two one-sided scores, which covers lags of either
    /// sign.
    pub fn score(
        &self,
        a: &PreparedSnippet<T>,
        b: &PreparedSnippet<T>,
        threshold_a: T,
        threshold_b: T,
    ) -> SimilarityScore<T> {
        match self.score_both_orders(a, b, threshold_a, threshold_b) {
            Ok((xy, yx)) => SimilarityScore { value: Some(xy.max(yx)), gate: None },
            Err(g) => SimilarityScore::gated(g),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const RATE: u32 = 16000;

    fn noise(seed: u64, n: usize, sd: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sd).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn cfg() -> KarapanosConfig<f64> {
        KarapanosConfig::default()
    }

    #[test]
    fn identical_inputs_score_one() {
        let x = noise(1, RATE as usize * 2, 1000.0);
        let s = similarity(&x, &x, RATE, 40.0, 40.0, &cfg()).unwrap();
        assert!((s.value.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn silence_is_gated() {
        let x = vec![0.0; RATE as usize];
        let s = similarity(&x, &x, RATE, 40.0, 40.0, &cfg()).unwrap();
        assert_eq!(s.gate, Some(GateReason::LowPower { x: true, y: true }));
        assert!(s.value.is_none());
    }

    #[test]
    fn one_quiet_side_is_gated() {
        let x = noise(2, 2 * RATE as usize, 1000.0);
        let y = noise(3, 2 * RATE as usize, 50.0); // ~34 dB
        let s = similarity(&x, &y, RATE, 40.0, 40.0, &cfg()).unwrap();
        assert_eq!(s.gate, Some(GateReason::LowPower { x: false, y: true }));
        // a watch threshold lets it through
        assert!(similarity(&x, &y, RATE, 40.0, 33.0, &cfg()).unwrap().value.is_some());
    }

    #[test]
    fn raising_threshold_never_ungates() {
        let x = noise(4, 2 * RATE as usize, 300.0);
        let y = noise(5, 2 * RATE as usize, 120.0);
        let mut was_gated = false;
        for tau in (30..=60).map(|v| v as f64) {
            let g = similarity(&x, &y, RATE, tau, tau, &cfg()).unwrap().is_gated();
            assert!(!was_gated || g);
            was_gated = g;
        }
        assert!(was_gated);
    }

    #[test]
    fn independent_noise_matches_direct_oracle() {
        let n = RATE as usize * 5;
        let x = noise(6, n, 1000.0);
        let y = noise(7, n, 1000.0);
        let c = cfg();
        let got = similarity(&x, &y, RATE, 40.0, 40.0, &c).unwrap().value.unwrap();
        assert!(got < 1.0);

        // direct-sum oracle on a shortened lag window keeps this affordable;
        // both sides use the same window
        let mut short = c.clone();
        short.maxlag_s = 0.01;
        let fast = similarity(&x, &y, RATE, 40.0, 40.0, &short).unwrap().value.unwrap();
        let maxlag = (0.01 * RATE as f64) as i64;
        let mut total = 0.0;
        for b in &c.bands {
            let bp = crate::dsp::BandPass::<f64>::butterworth(b.f_low, b.f_high, RATE as f64, 20).unwrap();
            let (fx, fy) = (bp.filter(&x), bp.filter(&y));
            let ex: f64 = fx.iter().map(|v| v * v).sum();
            let ey: f64 = fy.iter().map(|v| v * v).sum();
            let mut best: f64 = 0.0;
            for l in 0..=maxlag {
                let mut acc = 0.0;
                for i in l as usize..n {
                    acc += fx[i] * fy[i - l as usize];
                }
                best = best.max(acc.abs() / (ex * ey).sqrt());
            }
            total += best;
        }
        let oracle = total / c.bands.len() as f64;
        assert!((fast - oracle).abs() < 1e-9, "{fast} vs {oracle}");
        assert!(got >= fast);
    }

    #[test]
    fn analyzer_agrees_with_direct_similarity() {
        let n = RATE as usize * 3;
        let x = noise(8, n, 800.0);
        let mut y = noise(9, n, 300.0);
        for (yi, xi) in y.iter_mut().zip(x.iter().skip(700)) {
            *yi += xi;
        }
        let c = cfg();
        let an = KarapanosAnalyzer::new(&c, RATE, n).unwrap();
        let (px, py) = (an.prepare(&x).unwrap(), an.prepare(&y).unwrap());
        let (xy, yx) = an.score_both_orders(&px, &py, 40.0, 40.0).unwrap();
        let sxy = similarity(&x, &y, RATE, 40.0, 40.0, &c).unwrap().value.unwrap();
        let syx = similarity(&y, &x, RATE, 40.0, 40.0, &c).unwrap().value.unwrap();
        assert!((xy - sxy).abs() < 1e-9);
        assert!((yx - syx).abs() < 1e-9);
        // y leads x by 700 samples, which only the swapped order sees
        assert!(sxy > syx);
        assert_eq!(an.score(&px, &py, 40.0, 40.0).value, Some(xy.max(yx)));
    }

    #[test]
    fn device_classes() {
        let mut c = cfg();
        c.set_device_class("watch", DeviceClass::Watch);
        c.set_device_class("phone", DeviceClass::Smartphone);
        assert_eq!(c.threshold_for("watch"), 35.0);
        assert_eq!(c.threshold_for("phone"), 38.0);
        assert_eq!(c.threshold_for("pi"), 40.0);
    }
}
