//! Butterworth band-pass filters realized as cascades of second-order
//! sections.
//!
//! The analog low-pass prototype of order `order / 2` is mapped to a
//! band-pass with pre-warped edges, and every analog pole is carried to the
//! z-plane with the bilinear transform. Each conjugate pole pair becomes one
//! biquad with a zero at DC and one at Nyquist, so a band-pass of total order
//! 20 is a cascade of 10 sections. Every section is scaled to unit gain at the
//! digital center frequency.

use std::f64::consts::PI;

use realfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::num::Real;

/// One direct-form II transposed section with `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad<T> {
    pub b: [T; 3],
    pub a: [T; 2],
}

impl<T: Real> Biquad<T> {
    #[inline(always)]
    fn step(&self, x: T, z: &mut [T; 2]) -> T {
        let y = self.b[0] * x + z[0];
        z[0] = self.b[1] * x - self.a[0] * y + z[1];
        z[1] = self.b[2] * x - self.a[1] * y;
        y
    }

    fn response(&self, omega: f64) -> Complex64 {
        let zi = Complex64::from_polar(1.0, -omega);
        let zi2 = zi * zi;
        let f = |v: T| v.to_f64_lossy();
        let num = f(self.b[0]) + zi * f(self.b[1]) + zi2 * f(self.b[2]);
        let den = 1.0 + zi * f(self.a[0]) + zi2 * f(self.a[1]);
        num / den
    }
}

/// Band-pass filter as a cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPass<T> {
    sections: Vec<Biquad<T>>,
    rate_hz: f64,
    f_low: f64,
    f_high: f64,
}

impl<T: Real> BandPass<T> {
    /// Designs a Butterworth band-pass of total order `order` (even) passing
    /// `[f_low, f_high]` Hz at the given sampling rate.
    pub fn butterworth(f_low: f64, f_high: f64, rate_hz: f64, order: usize) -> Result<Self> {
        if order == 0 || order % 2 != 0 {
            return Err(Error::InvalidOrder(order));
        }
        if !(f_low > 0.0 && f_low < f_high && f_high < rate_hz / 2.0) {
            return Err(Error::InvalidBand { f_low, f_high, rate_hz });
        }
        let proto_order = order / 2;
        let fs2 = 2.0 * rate_hz;
        let w1 = fs2 * (PI * f_low / rate_hz).tan();
        let w2 = fs2 * (PI * f_high / rate_hz).tan();
        let w0 = (w1 * w2).sqrt();
        let bw = w2 - w1;

        let mut upper = Vec::new();
        let mut real = Vec::new();
        for k in 0..proto_order {
            let theta = PI * (2 * k + proto_order + 1) as f64 / (2 * proto_order) as f64;
            let p = Complex64::from_polar(1.0, theta);
            let pb = p * bw;
            let disc = (pb * pb - 4.0 * w0 * w0).sqrt();
            for s in [(pb + disc) / 2.0, (pb - disc) / 2.0] {
                let z = (fs2 + s) / (fs2 - s);
                if z.im > 1e-14 {
                    upper.push(z);
                } else if z.im.abs() <= 1e-14 {
                    real.push(z.re);
                }
            }
        }
        let mut dens: Vec<[f64; 2]> = upper.iter().map(|z| [-2.0 * z.re, z.norm_sqr()]).collect();
        real.sort_by(|a, b| a.total_cmp(b));
        for pair in real.chunks(2) {
            match pair {
                [r1, r2] => dens.push([-(r1 + r2), r1 * r2]),
                _ => return Err(Error::InvalidBand { f_low, f_high, rate_hz }),
            }
        }
        debug_assert_eq!(dens.len(), proto_order);

        let center = 2.0 * (w0 / fs2).atan();
        let sections = dens
            .into_iter()
            .map(|a| {
                let unit = Biquad::<f64> { b: [1.0, 0.0, -1.0], a };
                let g = 1.0 / unit.response(center).norm();
                Biquad {
                    b: [T::of(g), T::zero(), T::of(-g)],
                    a: [T::of(a[0]), T::of(a[1])],
                }
            })
            .collect();
        Ok(Self { sections, rate_hz, f_low, f_high })
    }

    pub fn sections(&self) -> &[Biquad<T>] {
        &self.sections
    }

    pub fn band(&self) -> (f64, f64) {
        (self.f_low, self.f_high)
    }

    /// Zero-state filtering; output has the input's length.
    pub fn filter(&self, x: &[T]) -> Vec<T> {
        let mut state = vec![[T::zero(); 2]; self.sections.len()];
        x.iter()
            .map(|&v| {
                let mut v = v;
                for (s, z) in self.sections.iter().zip(state.iter_mut()) {
                    v = s.step(v, z);
                }
                v
            })
            .collect()
    }

    /// Magnitude of the designed filter's frequency response at `freq_hz`.
    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        let omega = 2.0 * PI * freq_hz / self.rate_hz;
        self.sections
            .iter()
            .map(|s| s.response(omega))
            .fold(Complex64::new(1.0, 0.0), |acc, h| acc * h)
            .norm()
    }
}

/// Several band-pass cascades driven by the same input.
///
/// The per-sample loop steps every band before moving on, which keeps many
/// independent recurrences in flight; results are bit-identical to filtering
/// each band on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank<T> {
    bands: Vec<BandPass<T>>,
}

impl<T: Real> FilterBank<T> {
    pub fn new(bands: Vec<BandPass<T>>) -> Self {
        Self { bands }
    }

    /// Butterworth bank over `(f_low, f_high)` edges.
    pub fn butterworth(edges: &[(f64, f64)], rate_hz: f64, order: usize) -> Result<Self> {
        edges
            .iter()
            .map(|&(lo, hi)| BandPass::butterworth(lo, hi, rate_hz, order))
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    pub fn bands(&self) -> &[BandPass<T>] {
        &self.bands
    }

    fn run(&self, x: &[T], mut sink: impl FnMut(usize, usize, T)) {
        let mut state: Vec<Vec<[T; 2]>> =
            self.bands.iter().map(|b| vec![[T::zero(); 2]; b.sections.len()]).collect();
        for (i, &input) in x.iter().enumerate() {
            for (bi, (band, z)) in self.bands.iter().zip(state.iter_mut()).enumerate() {
                let mut v = input;
                for (s, zs) in band.sections.iter().zip(z.iter_mut()) {
                    v = s.step(v, zs);
                }
                sink(bi, i, v);
            }
        }
    }

    /// Filtered signal per band.
    pub fn filter_all(&self, x: &[T]) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); x.len()]; self.bands.len()];
        self.run(x, |b, i, v| out[b][i] = v);
        out
    }

    /// Energy (sum of squares) of the filtered signal per band.
    pub fn energies(&self, x: &[T]) -> Vec<T> {
        let mut e = vec![T::zero(); self.bands.len()];
        self.run(x, |b, _, v| e[b] = e[b] + v * v);
        e
    }
}
