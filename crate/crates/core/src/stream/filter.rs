//! Causal Butterworth band-pass filtering.
//!
//! The design follows the classic analog route: normalized Butterworth
//! low-pass prototype, low-pass to band-pass transform around the pre-warped
//! band edges, then the bilinear transform. Poles are grouped into
//! conjugate pairs and each pair becomes one second-order section with zeros
//! at z = 1 and z = -1, so DC and Nyquist are rejected exactly.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 4;
pub const DEFAULT_LOW_HZ: f64 = 8.0;
pub const DEFAULT_HIGH_HZ: f64 = 30.0;

/// Second-order section, `a[0]` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + self.b[1] * z_inv + self.b[2] * z2) / (self.a[0] + self.a[1] * z_inv + self.a[2] * z2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bandpass {
    sections: Vec<Biquad>,
    rate: f64,
}

impl Bandpass {
    /// Designs a band-pass from an order-`order` low-pass prototype
    /// (2 x `order` poles in total).
    pub fn design(order: usize, low_hz: f64, high_hz: f64, rate: f64) -> Result<Self> {
        let valid = order > 0
            && rate.is_finite()
            && low_hz.is_finite()
            && high_hz.is_finite()
            && 0.0 < low_hz
            && low_hz < high_hz
            && high_hz < rate / 2.0;
        if !valid {
            return Err(Error::InvalidBand { low_hz, high_hz, rate });
        }
        let fs2 = 2.0 * rate;
        let w1 = fs2 * (PI * low_hz / rate).tan();
        let w2 = fs2 * (PI * high_hz / rate).tan();
        let bw = w2 - w1;
        let w0 = (w1 * w2).sqrt();

        let mut upper = Vec::new();
        let mut real = Vec::new();
        for k in 0..order {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            let p = Complex64::from_polar(1.0, theta);
            let half = p * (bw / 2.0);
            let disc = (half * half - w0 * w0).sqrt();
            for s in [half + disc, half - disc] {
                let z = (fs2 + s) / (fs2 - s);
                if z.im > 1e-12 {
                    upper.push(z);
                } else if z.im.abs() <= 1e-12 {
                    real.push(z.re);
                }
            }
        }
        real.sort_by(|a, b| a.total_cmp(b));

        let mut sections: Vec<Biquad> = upper
            .iter()
            .map(|z| Biquad {
                b: [1.0, 0.0, -1.0],
                a: [1.0, -2.0 * z.re, z.norm_sqr()],
            })
            .collect();
        for pair in real.chunks(2) {
            let (r1, r2) = (pair[0], pair.get(1).copied().unwrap_or(0.0));
            sections.push(Biquad {
                b: [1.0, 0.0, -1.0],
                a: [1.0, -(r1 + r2), r1 * r2],
            });
        }

        let mut bp = Bandpass { sections, rate };
        // Unit gain at the digital image of the analog center frequency.
        let center_hz = (w0 / fs2).atan() * rate / PI;
        let gain = bp.response(center_hz).norm();
        if !(gain.is_finite() && gain > 0.0) {
            return Err(Error::InvalidBand { low_hz, high_hz, rate });
        }
        for c in bp.sections[0].b.iter_mut() {
            *c /= gain;
        }
        Ok(bp)
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / self.rate);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    /// Filters one channel forward in time from a zero initial state.
    pub fn filter_channel(&self, input: &[f64]) -> Vec<f64> {
        let mut data = input.to_vec();
        for s in &self.sections {
            // transposed direct form II
            let (mut d1, mut d2) = (0.0, 0.0);
            for x in data.iter_mut() {
                let y = s.b[0] * *x + d1;
                d1 = s.b[1] * *x - s.a[1] * y + d2;
                d2 = s.b[2] * *x - s.a[2] * y;
                *x = y;
            }
        }
        data
    }

    pub fn filter(&self, signal: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(signal.raw_dim());
        for (src, mut dst) in signal.rows().into_iter().zip(out.rows_mut()) {
            let row: Vec<f64> = src.iter().copied().collect();
            for (d, v) in dst.iter_mut().zip(self.filter_channel(&row)) {
                *d = v;
            }
        }
        out
    }
}

/// Causal order-4 Butterworth band-pass applied to every channel.
pub fn bandpass(signal: &Array2<f64>, low_hz: f64, high_hz: f64, rate: f64) -> Result<Array2<f64>> {
    Ok(Bandpass::design(DEFAULT_ORDER, low_hz, high_hz, rate)?.filter(signal))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent response evaluation: expand the cascade into a single
    /// polynomial pair and evaluate it by Horner's rule.
    fn cascade_polys(sections: &[Biquad]) -> (Vec<f64>, Vec<f64>) {
        let mul = |p: &[f64], q: &[f64]| {
            let mut out = vec![0.0; p.len() + q.len() - 1];
            for (i, a) in p.iter().enumerate() {
                for (j, b) in q.iter().enumerate() {
                    out[i + j] += a * b;
                }
            }
            out
        };
        sections
            .iter()
            .fold((vec![1.0], vec![1.0]), |(b, a), s| (mul(&b, &s.b), mul(&a, &s.a)))
    }

    fn poly_gain(b: &[f64], a: &[f64], freq: f64, rate: f64) -> f64 {
        let w = 2.0 * PI * freq / rate;
        let eval = |p: &[f64]| {
            let (mut re, mut im) = (0.0, 0.0);
            for (k, c) in p.iter().enumerate() {
                re += c * (w * k as f64).cos();
                im -= c * (w * k as f64).sin();
            }
            (re * re + im * im).sqrt()
        };
        eval(b) / eval(a)
    }

    #[test]
    fn fifteen_hz_passes_within_one_db() {
        let bp = Bandpass::design(4, 8.0, 30.0, 250.0).unwrap();
        let (b, a) = cascade_polys(bp.sections());
        let oracle = poly_gain(&b, &a, 15.0, 250.0);
        assert!((20.0 * oracle.log10()).abs() < 1.0, "oracle gain {oracle}");
        assert!((bp.response(15.0).norm() - oracle).abs() < 1e-9);

        // steady-state amplitude of a simulated sinusoid
        let n = 250 * 20;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * 15.0 * i as f64 / 250.0).sin()).collect();
        let y = bp.filter_channel(&x);
        let peak = y[n - 500..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - oracle).abs() < 0.01, "peak {peak} vs {oracle}");
        assert!((20.0 * peak.log10()).abs() < 1.0);
    }

    #[test]
    fn dc_is_rejected() {
        let bp = Bandpass::design(4, 8.0, 30.0, 250.0).unwrap();
        let (b, a) = cascade_polys(bp.sections());
        assert!(poly_gain(&b, &a, 0.0, 250.0) < 1e-2 * 1e-9);
        let y = bp.filter_channel(&vec![5.0; 2500]);
        assert!(y[2000..].iter().all(|v| v.abs() < 5.0 * 1e-2));
        assert!(y[2400..].iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn stopband_is_attenuated() {
        let bp = Bandpass::design(4, 8.0, 30.0, 250.0).unwrap();
        assert!(bp.response(1.0).norm() < 1e-2);
        assert!(bp.response(80.0).norm() < 1e-2);
        assert!((bp.response(8.0).norm() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert!((bp.response(30.0).norm() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn invalid_edges() {
        assert!(matches!(
            Bandpass::design(4, 30.0, 8.0, 250.0),
            Err(Error::InvalidBand { .. })
        ));
        assert!(Bandpass::design(4, 0.0, 8.0, 250.0).is_err());
        assert!(Bandpass::design(4, 8.0, 125.0, 250.0).is_err());
    }

    #[test]
    fn odd_order_designs() {
        for order in 1..=5 {
            let bp = Bandpass::design(order, 8.0, 30.0, 250.0).unwrap();
            assert_eq!(bp.sections().len(), order);
            assert!((bp.response(8.0).norm() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        }
    }
}
