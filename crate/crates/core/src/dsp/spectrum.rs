use realfft::RealFftPlanner;

use crate::num::Real;

/// Symmetric Hamming window `0.54 − 0.46 cos(2πn / (N − 1))`.
pub fn hamming<T: Real>(n: usize) -> Vec<T> {
    if n == 1 {
        return vec![T::one()];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| T::of(0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / denom).cos()))
        .collect()
}

/// Magnitudes of the first `N / 2` bins of the FFT of the Hamming-weighted
/// signal.
pub fn fft_mag_hamming<T: Real>(x: &[T]) -> Vec<T> {
    let n = x.len();
    assert!(n >= 2, "need at least two samples");
    let mut buf: Vec<T> = x.iter().zip(hamming::<T>(n)).map(|(&v, w)| v * w).collect();
    let fft = RealFftPlanner::<T>::new().plan_fft_forward(n);
    let mut out = fft.make_output_vec();
    fft.process(&mut buf, &mut out).expect("buffer sizes match the plan");
    out.iter().take(n / 2).map(|c| c.norm()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_in_zero_out() {
        assert!(fft_mag_hamming(&[0.0f64; 64]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dc_peaks_at_bin_zero() {
        let m = fft_mag_hamming(&[3.0f64; 128]);
        assert_eq!(m.len(), 64);
        let argmax = m.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 0);
        // leakage decays away from DC
        assert!(m[1] > 0.0 && m[4] < 0.01 * m[0]);
    }

    #[test]
    fn tone_lands_in_its_bin() {
        let n = 16000;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 16000.0).sin())
            .collect();
        let m = fft_mag_hamming(&x);
        assert_eq!(m.len(), 8000);
        let argmax = m.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 1000);
        // direct DFT oracle for that bin
        let w = hamming::<f64>(n);
        let (mut re, mut im) = (0.0, 0.0);
        for i in 0..n {
            let ang = -2.0 * std::f64::consts::PI * 1000.0 * i as f64 / n as f64;
            re += w[i] * x[i] * ang.cos();
            im += w[i] * x[i] * ang.sin();
        }
        let direct = (re * re + im * im).sqrt();
        assert!((m[1000] - direct).abs() < 1e-6 * direct);
    }
}
