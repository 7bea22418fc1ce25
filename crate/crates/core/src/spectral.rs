//! One-sided discrete Fourier transform, softmax frequency weights and
//! spectral entropy.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Bins `1..=floor(n/2)` of the DFT of a real sequence. The DC bin is dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySpectrum {
    pub bins: Vec<Complex64>,
}

impl FrequencySpectrum {
    pub fn num_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn power(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.norm_sqr()).collect()
    }
}

/// Direct DFT `X_k = sum_i x_i exp(-2 pi i k i / n)` for `k = 1..=n/2`.
///
/// Twiddles are indexed by `(k * i) mod n`, so each angle is evaluated once
/// and every bin reuses exactly reduced phases.
pub fn dft_one_sided(seq: &[f64]) -> Result<FrequencySpectrum> {
    let n = seq.len();
    if n < 2 {
        return Err(invalid!("DFT needs at least 2 points, got {n}"));
    }
    let twiddles: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let angle = 2.0 * PI * j as f64 / n as f64;
            (libm::cos(angle), libm::sin(angle))
        })
        .collect();
    let bins = (1..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            let mut idx = 0usize;
            for &x in seq {
                let (c, s) = twiddles[idx];
                re += x * c;
                im -= x * s;
                idx += k;
                if idx >= n {
                    idx -= n;
                }
            }
            Complex64::new(re, im)
        })
        .collect();
    Ok(FrequencySpectrum { bins })
}

/// Softmax over wavenumbers `1..=n`: `w_k = exp(k) / sum_j exp(j)`.
pub fn freq_weights(num_bins: usize) -> Result<Vec<f64>> {
    if num_bins == 0 {
        return Err(invalid!("need at least one frequency bin"));
    }
    let top = num_bins as f64;
    let raw: Vec<f64> = (1..=num_bins).map(|k| libm::exp(k as f64 - top)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Default segment length of the averaged periodogram behind
/// [`spectral_entropy`].
pub const SE_SEGMENT_LEN: usize = 64;

/// Power spectrum by Bartlett averaging: the most recent `K * m` samples are
/// cut into `K = floor(n / m)` non-overlapping rectangular segments and their
/// one-sided periodograms (DC excluded) are averaged. `m = 0` or `m >= n`
/// falls back to the full-length periodogram.
pub fn averaged_power_spectrum(seq: &[f64], segment_len: usize) -> Result<Vec<f64>> {
    let n = seq.len();
    let m = if segment_len == 0 || segment_len >= n { n } else { segment_len };
    let k = n / m;
    let start = n - k * m;
    let mut acc = alloc::vec![0.0; m / 2];
    for s in 0..k {
        let seg = &seq[start + s * m..start + (s + 1) * m];
        for (a, p) in acc.iter_mut().zip(dft_one_sided(seg)?.power()) {
            *a += p;
        }
    }
    for a in &mut acc {
        *a /= k as f64;
    }
    Ok(acc)
}

/// Normalized Shannon entropy of the DC-free power spectrum, in `[0, 1]`.
///
/// A series with no power outside DC (constant up to rounding) has entropy 0.
pub fn spectral_entropy(seq: &[f64], segment_len: usize) -> Result<f64> {
    if seq.len() < 4 {
        return Err(invalid!("spectral entropy needs at least 4 points, got {}", seq.len()));
    }
    if seq.iter().any(|v| !v.is_finite()) {
        return Err(invalid!("spectral entropy of a non-finite series"));
    }
    let power = averaged_power_spectrum(seq, segment_len)?;
    let total: f64 = power.iter().sum();
    let energy: f64 = seq.iter().map(|v| v * v).sum();
    // Rounding leaves ~(n * eps)^2 * energy of leakage for a constant input.
    if total <= 1e-20 * energy * seq.len() as f64 || total == 0.0 || power.len() < 2 {
        return Ok(0.0);
    }
    let entropy: f64 = power
        .iter()
        .map(|&p| p / total)
        .filter(|&q| q > 0.0)
        .map(|q| -q * libm::log(q))
        .sum();
    Ok((entropy / libm::log(power.len() as f64)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    #[test]
    fn constant_has_no_ac_energy() {
        let spec = dft_one_sided(&[3.5; 12]).unwrap();
        assert_eq!(spec.num_bins(), 6);
        assert!(spec.bins.iter().all(|b| b.norm() < 1e-12));
    }

    #[test]
    fn cosine_concentrates_on_its_bin() {
        let n = 16;
        let k = 3;
        let x: Vec<f64> = (0..n).map(|i| libm::cos(2.0 * PI * (k * i) as f64 / n as f64)).collect();
        let spec = dft_one_sided(&x).unwrap();
        for (j, b) in spec.bins.iter().enumerate() {
            if j + 1 == k {
                assert_relative_eq!(b.re, n as f64 / 2.0, epsilon = 1e-10);
            } else {
                assert!(b.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn short_inputs_rejected() {
        assert!(dft_one_sided(&[1.0]).is_err());
        assert!(freq_weights(0).is_err());
        assert!(spectral_entropy(&[1.0, 2.0, 3.0], 0).is_err());
    }

    #[test]
    fn weight_examples() {
        assert_eq!(freq_weights(1).unwrap(), vec![1.0]);
        let e = core::f64::consts::E;
        let w = freq_weights(2).unwrap();
        assert_relative_eq!(w[0], 1.0 / (1.0 + e), epsilon = 1e-15);
        assert_relative_eq!(w[1], e / (1.0 + e), epsilon = 1e-15);
        assert_relative_eq!(w[0], 0.268941421369995, epsilon = 1e-12);
        let w = freq_weights(500).unwrap();
        assert!(w.iter().all(|v| v.is_finite()));
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(w[499] > 0.6);
        assert!(w.windows(2).all(|p| p[0] < p[1] || p[0] == 0.0));
    }

    #[test]
    fn entropy_of_line_and_constant_is_zero() {
        let x: Vec<f64> = (0..512).map(|i| libm::sin(2.0 * PI * i as f64 / 16.0)).collect();
        assert!(spectral_entropy(&x, SE_SEGMENT_LEN).unwrap() < 1e-9);
        assert!(spectral_entropy(&x, 0).unwrap() < 1e-9);
        assert_eq!(spectral_entropy(&[0.1; 40], SE_SEGMENT_LEN).unwrap(), 0.0);
        assert_eq!(spectral_entropy(&[0.0; 40], SE_SEGMENT_LEN).unwrap(), 0.0);
    }

    #[test]
    fn short_series_falls_back_to_one_segment() {
        let x: Vec<f64> = (0..40).map(|i| libm::sin(2.0 * PI * i as f64 / 8.0)).collect();
        assert_eq!(
            averaged_power_spectrum(&x, SE_SEGMENT_LEN).unwrap(),
            averaged_power_spectrum(&x, 0).unwrap()
        );
    }
}
