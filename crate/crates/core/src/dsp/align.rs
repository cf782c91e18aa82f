use super::xcorr::{peak_abs, Correlator};
use crate::error::{Error, Result};
use crate::model::AudioSnippet;
use crate::num::pcm_to_real;

/// Outcome of aligning two recordings: coarse offsets from timestamps plus
/// the fine lag found by cross-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignmentResult {
    /// Delay of `y` relative to `x` in samples; positive when `y` lags.
    pub lag_samples: i64,
    /// First sample of `x` in the aligned pair.
    pub x_offset: usize,
    /// First sample of `y` in the aligned pair.
    pub y_offset: usize,
    /// Common length after shifting.
    pub trimmed_len: usize,
}

impl AlignmentResult {
    /// Cuts both recordings to the aligned, equal-length pair. The result
    /// carries `x`'s clock.
    pub fn apply(&self, x: &AudioSnippet, y: &AudioSnippet) -> (AudioSnippet, AudioSnippet) {
        let start_ms = x.start_ms + (self.x_offset as i64 * 1000) / x.rate_hz as i64;
        let cut = |a: &AudioSnippet, off: usize| AudioSnippet {
            samples: a.samples[off..off + self.trimmed_len].to_vec(),
            rate_hz: a.rate_hz,
            start_ms,
            device_id: a.device_id.clone(),
        };
        (cut(x, self.x_offset), cut(y, self.y_offset))
    }
}

/// Two-stage alignment: recordings are first cut to a common start using
/// their timestamps, then the lag within `±maxlag_s` maximizing the
/// cross-correlation of the first `probe_len_s` seconds is applied and both
/// are trimmed to the shorter remaining length.
pub fn align(
    x: &AudioSnippet,
    y: &AudioSnippet,
    probe_len_s: f64,
    maxlag_s: f64,
) -> Result<AlignmentResult> {
    if x.rate_hz != y.rate_hz {
        return Err(Error::InvalidConfig(format!(
            "sampling rates differ: {} vs {}",
            x.rate_hz, y.rate_hz
        )));
    }
    let rate = x.rate_hz as f64;
    let common = x.start_ms.max(y.start_ms);
    let x0 = x.sample_index(common).max(0) as usize;
    let y0 = y.sample_index(common).max(0) as usize;
    if x0 >= x.len() || y0 >= y.len() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let maxlag = (maxlag_s * rate).round() as usize;
    let probe = ((probe_len_s * rate).round() as usize)
        .min(x.len() - x0)
        .min(y.len() - y0);
    if probe < 2 * maxlag || probe == 0 {
        return Err(Error::InsufficientProbe { probe, maxlag });
    }
    let px: Vec<f64> = pcm_to_real(&x.samples[x0..x0 + probe]);
    let py: Vec<f64> = pcm_to_real(&y.samples[y0..y0 + probe]);
    let c = Correlator::<f64>::new(probe, maxlag).correlate(&px, &py);
    // C_xy(l) peaks at l = -delay when y(i) = x(i - delay)
    let peak = peak_abs(&c, -(maxlag as i64), 1.0);
    let lag = -peak.lag;
    let (xo, yo) = if lag >= 0 {
        (x0, y0 + lag as usize)
    } else {
        (x0 + (-lag) as usize, y0)
    };
    let trimmed_len = x.len().saturating_sub(xo).min(y.len().saturating_sub(yo));
    Ok(AlignmentResult {
        lag_samples: lag,
        x_offset: xo,
        y_offset: yo,
        trimmed_len,
    })
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(seed: u64, n: usize) -> Vec<i16> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-3000..3000)).collect()
    }

    #[test]
    fn identical_snippets_have_zero_lag() {
        let s = AudioSnippet::new(noise(1, 16000 * 8), 16000, 0, "a").unwrap();
        let r = align(&s, &s, 6.0, 3.0).unwrap();
        assert_eq!(r.lag_samples, 0);
        assert_eq!(r.trimmed_len, s.len());
    }

    #[test]
    fn recovers_delay() {
        let rate = 16000;
        let base = noise(2, rate * 12);
        let delay = rate * 3 / 2;
        let x = AudioSnippet::new(base[delay..].to_vec(), rate as u32, 0, "x").unwrap();
        // y(i) = x(i - delay): y hears the same audio 1.5 s later
        let mut yv = noise(3, delay);
        yv.extend_from_slice(&base[delay..base.len() - delay]);
        let y = AudioSnippet::new(yv, rate as u32, 0, "y").unwrap();
        let r = align(&x, &y, 8.0, 3.0).unwrap();
        assert_eq!(r.lag_samples, delay as i64);
        let (ax, ay) = r.apply(&x, &y);
        assert_eq!(ax.samples, ay.samples);
    }

    #[test]
    fn coarse_alignment_uses_timestamps() {
        let rate = 16000;
        let base = noise(4, rate * 10);
        let x = AudioSnippet::new(base.clone(), rate as u32, 0, "x").unwrap();
        // y started recording 2 s later
        let y = AudioSnippet::new(base[2 * rate..].to_vec(), rate as u32, 2000, "y").unwrap();
        let r = align(&x, &y, 6.0, 1.0).unwrap();
        assert_eq!(r.lag_samples, 0);
        assert_eq!(r.x_offset, 2 * rate);
        assert_eq!(r.trimmed_len, 8 * rate);
    }

    #[test]
    fn long_maxlag_is_accepted() {
        let s = AudioSnippet::new(noise(5, 16000 * 35), 16000, 0, "a").unwrap();
        assert_eq!(align(&s, &s, 30.0, 15.0).unwrap().lag_samples, 0);
    }

    #[test]
    fn short_probe_is_rejected() {
        let s = AudioSnippet::new(noise(6, 16000 * 4), 16000, 0, "a").unwrap();
        assert!(matches!(align(&s, &s, 4.0, 3.0), Err(Error::InsufficientProbe { .. })));
    }
}
