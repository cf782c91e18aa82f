//! Cross-correlation `C_xy(l) = Σ_i x(i) · y(i − l)` by direct summation and
//! through real FFTs.

use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};
use crate::num::Real;

/// Direct evaluation of `C_xy(l)` for every lag in `lags`.
pub fn cross_correlation_direct<T: Real>(
    x: &[T],
    y: &[T],
    lags: std::ops::RangeInclusive<i64>,
) -> Vec<T> {
    lags.map(|l| {
        let lo = l.max(0) as usize;
        let hi = (y.len() as i64 + l).clamp(0, x.len() as i64) as usize;
        (lo..hi).map(|i| x[i] * y[(i as i64 - l) as usize]).sum()
    })
    .collect()
}

/// Smallest even 5-smooth integer `>= n`.
pub fn fast_len(n: usize) -> usize {
    let mut best = usize::MAX;
    let mut p2 = 2usize;
    while p2 < best {
        let mut p3 = p2;
        while p3 < best {
            let mut p5 = p3;
            while p5 < n {
                p5 *= 5;
            }
            best = best.min(p5);
            p3 *= 3;
        }
        p2 *= 2;
    }
    best.max(2)
}

/// Real-FFT plans sized for correlating signals of up to `signal_len`
/// samples over lags `|l| <= max_lag` without circular wrap-around.
#[derive(Clone)]
pub struct Correlator<T: Real> {
    size: usize,
    max_lag: usize,
    fwd: Arc<dyn RealToComplex<T>>,
    inv: Arc<dyn ComplexToReal<T>>,
}

impl<T: Real> std::fmt::Debug for Correlator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Correlator").field("size", &self.size).field("max_lag", &self.max_lag).finish()
    }
}

impl<T: Real> Correlator<T> {
    pub fn new(signal_len: usize, max_lag: usize) -> Self {
        let size = fast_len(signal_len + max_lag);
        let mut planner = RealFftPlanner::<T>::new();
        Self {
            size,
            max_lag,
            fwd: planner.plan_fft_forward(size),
            inv: planner.plan_fft_inverse(size),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Zero-padded spectrum of `x`.
    pub fn spectrum(&self, x: &[T]) -> Vec<Complex<T>> {
        assert!(x.len() + self.max_lag <= self.size, "signal longer than planned");
        let mut buf = vec![T::zero(); self.size];
        buf[..x.len()].copy_from_slice(x);
        let mut out = self.fwd.make_output_vec();
        self.fwd.process(&mut buf, &mut out).expect("buffer sizes match the plan");
        out
    }

    /// `C_xy(l)` for `l = -max_lag ..= max_lag`, indexed by `l + max_lag`.
    pub fn correlate_spectra(&self, sx: &[Complex<T>], sy: &[Complex<T>]) -> Vec<T> {
        let mut prod: Vec<Complex<T>> = sx.iter().zip(sy).map(|(a, b)| a * b.conj()).collect();
        prod[0].im = T::zero();
        if let Some(last) = prod.last_mut() {
            last.im = T::zero();
        }
        let mut r = self.inv.make_output_vec();
        self.inv.process(&mut prod, &mut r).expect("buffer sizes match the plan");
        let scale = T::one() / T::of_usize(self.size);
        let l = self.max_lag;
        let mut out = Vec::with_capacity(2 * l + 1);
        out.extend(r[self.size - l..].iter().map(|&v| v * scale));
        out.extend(r[..=l].iter().map(|&v| v * scale));
        out
    }

    pub fn correlate(&self, x: &[T], y: &[T]) -> Vec<T> {
        self.correlate_spectra(&self.spectrum(x), &self.spectrum(y))
    }
}

/// Peak of the normalized cross-correlation and the lag where it occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak<T> {
    pub value: T,
    pub lag: i64,
}

pub(crate) fn energy<T: Real>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum()
}

/// `sqrt(C_xx(0) · C_yy(0))`, or `UndefinedCorrelation` when either is zero.
pub(crate) fn normalizer<T: Real>(ex: T, ey: T) -> Result<T> {
    let n = (ex * ey).sqrt();
    if n > T::zero() && n.is_finite() {
        Ok(n)
    } else {
        Err(Error::UndefinedCorrelation)
    }
}

/// Largest `|C|` over a lag window, normalized; first occurrence wins ties.
pub(crate) fn peak_abs<T: Real>(c: &[T], first_lag: i64, norm: T) -> Peak<T> {
    let mut best = Peak { value: T::neg_infinity(), lag: first_lag };
    for (i, &v) in c.iter().enumerate() {
        let a = v.abs() / norm;
        if a > best.value {
            best = Peak { value: a, lag: first_lag + i as i64 };
        }
    }
    best.value = best.value.min(T::one());
    best
}

const DIRECT_WORK_LIMIT: usize = 1 << 18;

/// Normalized maximum cross-correlation over the one-sided lag range
/// `[0, max_lag]`. Uses the direct sum for small inputs and the FFT path
/// otherwise.
pub fn max_xcorr_norm<T: Real>(x: &[T], y: &[T], max_lag: usize) -> Result<Peak<T>> {
    check_lengths(x, y, max_lag)?;
    if x.len().saturating_mul(max_lag + 1) <= DIRECT_WORK_LIMIT {
        max_xcorr_norm_direct(x, y, max_lag)
    } else {
        max_xcorr_norm_fft(x, y, max_lag)
    }
}

fn check_lengths<T>(x: &[T], y: &[T], max_lag: usize) -> Result<()> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::InsufficientSamples { needed: x.len().max(1), got: y.len() });
    }
    if max_lag >= x.len() {
        return Err(Error::InvalidConfig(format!(
            "max lag {max_lag} must be below the signal length {}",
            x.len()
        )));
    }
    Ok(())
}

pub fn max_xcorr_norm_direct<T: Real>(x: &[T], y: &[T], max_lag: usize) -> Result<Peak<T>> {
    check_lengths(x, y, max_lag)?;
    let norm = normalizer(energy(x), energy(y))?;
    let c = cross_correlation_direct(x, y, 0..=max_lag as i64);
    Ok(peak_abs(&c, 0, norm))
}

pub fn max_xcorr_norm_fft<T: Real>(x: &[T], y: &[T], max_lag: usize) -> Result<Peak<T>> {
    check_lengths(x, y, max_lag)?;
    let norm = normalizer(energy(x), energy(y))?;
    let c = Correlator::new(x.len(), max_lag).correlate(x, y);
    Ok(peak_abs(&c[max_lag..], 0, norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1000.0..1000.0)).collect()
    }

    #[test]
    fn fast_len_is_smooth_and_minimal() {
        assert_eq!(fast_len(1), 2);
        assert_eq!(fast_len(176_000), 180_000);
        assert_eq!(fast_len(319_999), 320_000);
        for n in 1..2000 {
            let f = fast_len(n);
            assert!(f >= n && f % 2 == 0);
            let mut m = f;
            for p in [2, 3, 5] {
                while m % p == 0 {
                    m /= p;
                }
            }
            assert_eq!(m, 1);
        }
    }

    #[test]
    fn autocorrelation_is_one_at_zero_lag() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = noise(&mut rng, 4000);
        let p = max_xcorr_norm(&x, &x, 100).unwrap();
        assert!((p.value - 1.0).abs() < 1e-12);
        assert_eq!(p.lag, 0);
    }

    #[test]
    fn negation_keeps_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = noise(&mut rng, 3000);
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((max_xcorr_norm(&x, &y, 50).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_copy_peaks_at_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 3000;
        let k = 37;
        let x = noise(&mut rng, n);
        let mut y = vec![0.0; n];
        y[..n - k].copy_from_slice(&x[k..]);
        let p = max_xcorr_norm(&x, &y, 100).unwrap();
        assert_eq!(p.lag, k as i64);
        // brute force over all lags in the window
        let c = cross_correlation_direct(&x, &y, 0..=100);
        let at_zero = c[0].abs();
        assert!(c[k].abs() >= at_zero);
        let best = c.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert_eq!(best, c[k].abs());
    }

    #[test]
    fn zero_input_is_undefined() {
        let x = vec![0.0f64; 100];
        let y = vec![1.0f64; 100];
        assert!(matches!(max_xcorr_norm(&x, &y, 10), Err(Error::UndefinedCorrelation)));
    }

    #[test]
    fn fft_matches_direct_two_sided() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = noise(&mut rng, 1500);
        let y = noise(&mut rng, 1500);
        let direct = cross_correlation_direct(&x, &y, -200..=200);
        let fft = Correlator::new(1500, 200).correlate(&x, &y);
        let scale = direct.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in direct.iter().zip(&fft) {
            assert!((a - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn one_sided_windows_cover_both_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = noise(&mut rng, 800);
        let y = noise(&mut rng, 800);
        let two = Correlator::new(800, 60).correlate(&x, &y);
        let norm = normalizer(energy(&x), energy(&y)).unwrap();
        let two_max = two.iter().map(|v| v.abs() / norm).fold(0.0, f64::max);
        let xy = max_xcorr_norm_direct(&x, &y, 60).unwrap().value;
        let yx = max_xcorr_norm_direct(&y, &x, 60).unwrap().value;
        assert!((xy.max(yx) - two_max).abs() < 1e-12);
    }

    #[test]
    fn scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = noise(&mut rng, 1000);
        let y = noise(&mut rng, 1000);
        let base = max_xcorr_norm(&x, &y, 30).unwrap().value;
        for alpha in [-3.0, 0.01, 7.5] {
            let ys: Vec<f64> = y.iter().map(|v| v * alpha).collect();
            assert!((max_xcorr_norm(&x, &ys, 30).unwrap().value - base).abs() < 1e-12);
        }
        let xs: Vec<f64> = x.iter().map(|v| v * 2.5).collect();
        assert!((max_xcorr_norm(&x, &xs, 30).unwrap().value - 1.0).abs() < 1e-12);
    }
}
