//! Binary audio fingerprint from energy differences of successive bands in
//! consecutive frames.

use crate::dsp::FilterBank;
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::model::AudioSnippet;
use crate::num::{pcm_to_real, Real};

pub const SCHEME: &str = "schurmann";

#[derive(Debug, Clone, PartialEq)]
pub struct SchurmannConfig {
    pub interval_s: u32,
    pub n_frames: usize,
    pub n_bands: usize,
    pub band_width_hz: f64,
    pub filter_order: usize,
}

impl Default for SchurmannConfig {
    fn default() -> Self {
        Self {
            interval_s: 5,
            n_frames: 17,
            n_bands: 32,
            band_width_hz: 250.0,
            filter_order: 20,
        }
    }
}

impl SchurmannConfig {
    pub fn with_interval(mut self, interval_s: u32) -> Self {
        self.interval_s = interval_s;
        self
    }

    pub fn fingerprint_bits(&self) -> usize {
        (self.n_frames - 1) * (self.n_bands - 1)
    }

    /// Samples per frame; the fractional part is dropped.
    pub fn frame_len(&self, rate_hz: u32) -> usize {
        (rate_hz as u64 * self.interval_s as u64 / self.n_frames as u64) as usize
    }

    /// `[(j-1)·b + 1, j·b]` per band, the last one capped just below Nyquist.
    pub fn band_edges(&self, rate_hz: u32) -> Vec<(f64, f64)> {
        let nyq = rate_hz as f64 / 2.0;
        (0..self.n_bands)
            .map(|j| {
                let lo = j as f64 * self.band_width_hz + 1.0;
                let hi = ((j + 1) as f64 * self.band_width_hz).min(nyq - 1.0);
                (lo, hi)
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n_frames < 2 || self.n_bands < 2 || self.interval_s == 0 {
            return Err(Error::InvalidConfig(
                "need at least two frames, two bands and a positive interval".into(),
            ));
        }
        Ok(())
    }
}

/// Precomputed filter bank for one sampling rate.
#[derive(Debug, Clone)]
pub struct SchurmannFingerprinter<T> {
    cfg: SchurmannConfig,
    rate_hz: u32,
    bank: FilterBank<T>,
}

impl<T: Real> SchurmannFingerprinter<T> {
    pub fn new(cfg: &SchurmannConfig, rate_hz: u32) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            rate_hz,
            bank: FilterBank::butterworth(&cfg.band_edges(rate_hz), rate_hz as f64, cfg.filter_order)?,
        })
    }

    /// `E[i][j]`: energy of band `j` in frame `i`, each frame filtered from
    /// rest.
    pub fn energy_matrix(&self, x: &[T]) -> Result<Vec<Vec<T>>> {
        let d = self.cfg.frame_len(self.rate_hz);
        let needed = d * self.cfg.n_frames;
        if d == 0 || x.len() < needed {
            return Err(Error::InsufficientSamples { needed: needed.max(1), got: x.len() });
        }
        Ok(x[..needed].chunks_exact(d).map(|f| self.bank.energies(f)).collect())
    }

    pub fn bits(&self, x: &[T]) -> Result<Vec<bool>> {
        Ok(bits_from_energies(&self.energy_matrix(x)?))
    }

    pub fn fingerprint(&self, x: &AudioSnippet) -> Result<Fingerprint> {
        if x.rate_hz != self.rate_hz {
            return Err(Error::InvalidConfig(format!(
                "fingerprinter built for {} Hz, snippet is {} Hz",
                self.rate_hz, x.rate_hz
            )));
        }
        let bits = self.bits(&pcm_to_real::<T>(&x.samples))?;
        Ok(Fingerprint::new(bits, SCHEME, x.device_id.clone(), x.start_ms))
    }
}

pub fn bits_from_energies<T: Real>(e: &[Vec<T>]) -> Vec<bool> {
    let mut bits = Vec::new();
    for i in 0..e.len().saturating_sub(1) {
        for j in 0..e[i].len().saturating_sub(1) {
            let d = (e[i + 1][j] - e[i + 1][j + 1]) - (e[i][j] - e[i][j + 1]);
            bits.push(d > T::zero());
        }
    }
    bits
}

pub fn audio_fingerprint<T: Real>(x: &AudioSnippet, cfg: &SchurmannConfig) -> Result<Fingerprint> {
    SchurmannFingerprinter::<T>::new(cfg, x.rate_hz)?.fingerprint(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::BandPass;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const RATE: u32 = 16000;

    fn noise_snippet(seed: u64, secs: u32, amp: i16) -> AudioSnippet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (0..RATE * secs).map(|_| rng.gen_range(-amp..=amp)).collect();
        AudioSnippet::new(s, RATE, 0, "d").unwrap()
    }

    #[test]
    fn parameters() {
        let c = SchurmannConfig::default().with_interval(10);
        assert_eq!(c.fingerprint_bits(), 496);
        assert_eq!(c.frame_len(RATE), 9411);
        let e = c.band_edges(RATE);
        assert_eq!(e[0], (1.0, 250.0));
        assert_eq!(e[1], (251.0, 500.0));
        assert_eq!(e[31], (7751.0, 7999.0));
    }

    #[test]
    fn matches_naive_oracle() {
        let c = SchurmannConfig::default();
        let x = noise_snippet(3, 5, 2000);
        let f = audio_fingerprint::<f64>(&x, &c).unwrap();
        assert_eq!(f.len(), 496);
        assert_eq!(f.scheme, SCHEME);

        let xs: Vec<f64> = x.samples.iter().map(|&v| v as f64).collect();
        let d = xs.len() / 17;
        let filters: Vec<_> = c
            .band_edges(RATE)
            .into_iter()
            .map(|(lo, hi)| BandPass::<f64>::butterworth(lo, hi, RATE as f64, 20).unwrap())
            .collect();
        let mut e = vec![vec![0.0; 32]; 17];
        for i in 0..17 {
            let frame = &xs[i * d..(i + 1) * d];
            for (j, bp) in filters.iter().enumerate() {
                let fb = bp.filter(frame);
                e[i][j] = fb.iter().map(|v| v * v).sum();
            }
        }
        let mut k = 0;
        for i in 0..16 {
            for j in 0..31 {
                let want = (e[i + 1][j] - e[i + 1][j + 1]) - (e[i][j] - e[i][j + 1]) > 0.0;
                assert_eq!(f.bits[k], want, "bit {k}");
                k += 1;
            }
        }
        // not degenerate
        assert!(f.count_ones() > 150 && f.count_ones() < 350);
    }

    #[test]
    fn stationary_sine_gives_zero_bits() {
        // 17 s at 16 kHz gives whole-second frames, each holding the same
        // 1 kHz cycles
        let c = SchurmannConfig::default().with_interval(17);
        let s: Vec<i16> = (0..RATE as usize * 17)
            .map(|i| (3000.0 * (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / RATE as f64).sin()).round() as i16)
            .collect();
        let f = audio_fingerprint::<f64>(&AudioSnippet::new(s, RATE, 0, "d").unwrap(), &c).unwrap();
        assert_eq!(f.count_ones(), 0);
    }

    #[test]
    fn amplitude_scale_invariance() {
        let c = SchurmannConfig::default();
        let x = noise_snippet(4, 5, 3000);
        let base = audio_fingerprint::<f64>(&x, &c).unwrap();
        let xs: Vec<f64> = x.samples.iter().map(|&v| v as f64).collect();
        let fp = SchurmannFingerprinter::<f64>::new(&c, RATE).unwrap();
        for alpha in [0.5, 2.0, 10.0] {
            let y: Vec<f64> = xs.iter().map(|v| v * alpha).collect();
            assert_eq!(fp.bits(&y).unwrap(), base.bits, "alpha {alpha}");
        }
    }

    #[test]
    fn short_snippet_rejected() {
        let c = SchurmannConfig::default();
        let x = noise_snippet(5, 4, 100);
        assert!(matches!(
            audio_fingerprint::<f64>(&x, &c),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn remainder_is_dropped() {
        let c = SchurmannConfig::default();
        let fp = SchurmannFingerprinter::<f64>::new(&c, RATE).unwrap();
        let x = noise_snippet(6, 5, 1000);
        let xs: Vec<f64> = x.samples.iter().map(|&v| v as f64).collect();
        let mut longer = xs.clone();
        longer.extend_from_slice(&[5000.0; 10]);
        assert_eq!(fp.bits(&xs).unwrap(), fp.bits(&longer).unwrap());
    }

    #[test]
    fn f32_matches_length() {
        let x = noise_snippet(7, 5, 1000);
        let f = audio_fingerprint::<f32>(&x, &SchurmannConfig::default()).unwrap();
        assert_eq!(f.len(), 496);
    }
}
