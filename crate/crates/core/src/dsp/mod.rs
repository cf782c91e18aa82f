//! Signal-processing primitives shared by the audio schemes.

mod align;
mod butterworth;
mod spectrum;
mod xcorr;

pub use align::{align, AlignmentResult};
pub use butterworth::{BandPass, Biquad, FilterBank};
pub use spectrum::{fft_mag_hamming, hamming};
pub use xcorr::{
    cross_correlation_direct, fast_len, max_xcorr_norm, max_xcorr_norm_direct, max_xcorr_norm_fft,
    Correlator, Peak,
};
pub(crate) use xcorr::{energy, normalizer, peak_abs};

use crate::error::Result;
use crate::num::Real;

/// One-third octave band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OctaveBand {
    pub number: u32,
    pub f_low: f64,
    pub f_center: f64,
    pub f_high: f64,
}

const fn band(number: u32, f_low: f64, f_center: f64, f_high: f64) -> OctaveBand {
    OctaveBand { number, f_low, f_center, f_high }
}

/// Bands 6 to 25 (50 Hz to 4 kHz nominal).
pub const OCTAVE_BANDS: [OctaveBand; 20] = [
    band(6, 44.194, 49.606, 55.681),
    band(7, 55.681, 62.500, 70.154),
    band(8, 70.154, 78.745, 88.388),
    band(9, 88.388, 99.213, 111.362),
    band(10, 111.362, 125.000, 140.308),
    band(11, 140.308, 157.490, 176.777),
    band(12, 176.777, 198.425, 222.725),
    band(13, 222.725, 250.000, 280.616),
    band(14, 280.616, 314.980, 353.553),
    band(15, 353.553, 396.850, 445.449),
    band(16, 445.449, 500.000, 561.231),
    band(17, 561.231, 629.961, 707.107),
    band(18, 707.107, 793.701, 890.899),
    band(19, 890.899, 1000.000, 1122.462),
    band(20, 1122.462, 1259.921, 1414.214),
    band(21, 1414.214, 1587.401, 1781.797),
    band(22, 1781.797, 2000.000, 2244.924),
    band(23, 2244.924, 2519.842, 2828.427),
    band(24, 2828.427, 3174.802, 3563.595),
    band(25, 3563.595, 4000.000, 4489.848),
];

/// Zero-state Butterworth band-pass of `x`.
pub fn bandpass<T: Real>(x: &[T], rate_hz: f64, f_low: f64, f_high: f64, order: usize) -> Result<Vec<T>> {
    Ok(BandPass::butterworth(f_low, f_high, rate_hz, order)?.filter(x))
}

/// Average power `10 log10(mean(x²))` on the raw amplitude scale
/// (amplitude 1 is 0 dB); negative infinity for silence.
pub fn avg_power_db<T: Real>(x: &[T]) -> T {
    assert!(!x.is_empty(), "average power of an empty signal");
    let mean = energy(x) / T::of_usize(x.len());
    if mean == T::zero() {
        T::neg_infinity()
    } else {
        T::of(10.0) * mean.log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn band_table_is_ordered() {
        for (i, b) in OCTAVE_BANDS.iter().enumerate() {
            assert_eq!(b.number, 6 + i as u32);
            assert!(b.f_low < b.f_center && b.f_center < b.f_high);
            if i > 0 {
                assert_eq!(OCTAVE_BANDS[i - 1].f_high, b.f_low);
            }
        }
    }

    #[test]
    fn power_closed_forms() {
        assert!((avg_power_db(&[100.0f64; 50]) - 40.0).abs() < 1e-12);
        assert_eq!(avg_power_db(&[0.0f64; 10]), f64::NEG_INFINITY);
        let square: Vec<f64> = (0..1000).map(|i| if (i * 7) % 3 == 0 { 1000.0 } else { -1000.0 }).collect();
        assert!((avg_power_db(&square) - 60.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn bandpass_is_linear(
            xs in proptest::collection::vec(-1000.0f64..1000.0, 512),
            ys in proptest::collection::vec(-1000.0f64..1000.0, 512),
            a in -4.0f64..4.0,
            b in -4.0f64..4.0,
        ) {
            let f = BandPass::<f64>::butterworth(353.553, 445.449, 16000.0, 20).unwrap();
            let mix: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
            let lhs = f.filter(&mix);
            let fx = f.filter(&xs);
            let fy = f.filter(&ys);
            let scale = lhs.iter().map(|v| v.abs()).fold(1e-9, f64::max);
            for i in 0..lhs.len() {
                let rhs = a * fx[i] + b * fy[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-9 * scale);
            }
        }

        #[test]
        fn band_energy_is_sum_of_squares(xs in proptest::collection::vec(-1000.0f64..1000.0, 256)) {
            let bank = FilterBank::<f64>::butterworth(&[(1.0, 250.0), (251.0, 500.0)], 16000.0, 20).unwrap();
            let e = bank.energies(&xs);
            let filtered = bank.filter_all(&xs);
            for (ei, f) in e.iter().zip(&filtered) {
                prop_assert!(*ei >= 0.0);
                prop_assert_eq!(*ei, f.iter().map(|v| v * v).sum::<f64>());
            }
        }
    }
}
