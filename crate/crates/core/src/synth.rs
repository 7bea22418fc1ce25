//! Sum-of-sinusoids generator with a single distribution shift.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng as _;

use crate::error::{invalid, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, rng_from_seed, standard_normal};
use crate::series::{ForecastWindow, MultivariateSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ShiftKind {
    Amplitude,
    Frequency,
    Noise,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ShiftSpec {
    pub kind: ShiftKind,
    pub onset_fraction: f64,
    pub magnitude: f64,
}

impl ShiftSpec {
    pub fn none() -> Self {
        Self { kind: ShiftKind::Amplitude, onset_fraction: 1.0, magnitude: 1.0 }
    }
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self::none()
    }
}

/// Synthetic series description. Frequencies are in cycles per sample.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SynthSpec {
    pub num_channels: usize,
    pub length: usize,
    pub base_freqs: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub noise_std: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub shift: ShiftSpec,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_channels == 0 {
            return Err(invalid!("num_channels must be >= 1"));
        }
        if self.length == 0 {
            return Err(invalid!("length must be >= 1"));
        }
        if self.base_freqs.len() != self.amplitudes.len() {
            return Err(invalid!(
                "base_freqs has {} entries but amplitudes has {}",
                self.base_freqs.len(),
                self.amplitudes.len()
            ));
        }
        if self.base_freqs.iter().chain(&self.amplitudes).any(|v| !v.is_finite()) {
            return Err(invalid!("base_freqs and amplitudes must be finite"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(invalid!("noise_std must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.shift.onset_fraction) {
            return Err(invalid!("shift.onset_fraction must lie in [0, 1]"));
        }
        if !(self.shift.magnitude.is_finite() && self.shift.magnitude >= 0.0) {
            return Err(invalid!("shift.magnitude must be finite and >= 0"));
        }
        Ok(())
    }

    /// First row carrying the shifted parameter.
    pub fn onset_index(&self) -> usize {
        libm::floor(self.shift.onset_fraction * self.length as f64) as usize
    }
}

/// Generates `spec.length` rows of `spec.num_channels` channels.
///
/// Each channel draws one phase per component from the seed. After the onset
/// the shifted parameter (amplitude, frequency or noise level) is multiplied by
/// the shift magnitude; frequency shifts keep the phase continuous.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<MultivariateSeries> {
    spec.validate()?;
    let n = spec.length;
    let onset = spec.onset_index();
    let mag = spec.shift.magnitude;
    let mut values = Matrix::zeros(n, spec.num_channels);
    for c in 0..spec.num_channels {
        let mut rng = rng_from_seed(derive_seed(seed, c as u64));
        let phases: Vec<f64> = spec.base_freqs.iter().map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        for i in 0..n {
            let shifted = i >= onset;
            let mut v = 0.0;
            for (j, (&f, &a)) in spec.base_freqs.iter().zip(&spec.amplitudes).enumerate() {
                let (amp, phase) = match (spec.shift.kind, shifted) {
                    (ShiftKind::Amplitude, true) => (a * mag, 2.0 * PI * f * i as f64),
                    (ShiftKind::Frequency, true) => {
                        (a, 2.0 * PI * f * (onset as f64 + mag * (i - onset) as f64))
                    }
                    _ => (a, 2.0 * PI * f * i as f64),
                };
                v += amp * libm::sin(phase + phases[j]);
            }
            let noise_scale = match (spec.shift.kind, shifted) {
                (ShiftKind::Noise, true) => spec.noise_std * mag,
                _ => spec.noise_std,
            };
            if noise_scale > 0.0 {
                v += noise_scale * standard_normal(&mut rng);
            }
            values.set(i, c, v);
        }
    }
    MultivariateSeries::new(values, Matrix::zeros(n, 0), format!("synth-{seed}"))
}

/// Windows drawn from a family of random sinusoid mixtures, used to warm up a
/// policy before finetuning. Each series has 1-3 components with periods
/// between 4 and 64 samples, amplitudes in [0.5, 2], a random offset and light
/// noise.
pub fn pretraining_corpus(
    num_series: usize,
    windows_per_series: usize,
    num_channels: usize,
    context_len: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<ForecastWindow>> {
    if num_series == 0 || windows_per_series == 0 {
        return Err(invalid!("pretraining corpus must contain at least one window"));
    }
    let span = context_len + horizon;
    let length = span + windows_per_series * (horizon.max(1));
    let mut out = Vec::with_capacity(num_series * windows_per_series);
    for s in 0..num_series {
        let mut rng = rng_from_seed(derive_seed(seed, s as u64));
        let components = rng.random_range(1..=3usize);
        let base_freqs = (0..components).map(|_| 1.0 / rng.random_range(4.0..64.0)).collect();
        let amplitudes = (0..components).map(|_| rng.random_range(0.5..2.0)).collect();
        let spec = SynthSpec {
            num_channels,
            length,
            base_freqs,
            amplitudes,
            noise_std: rng.random_range(0.0..0.1),
            shift: ShiftSpec::none(),
        };
        let offset = rng.random_range(-2.0..2.0);
        let mut series = generate_synthetic(&spec, rng.random())?;
        for v in series.values.as_mut_slice() {
            *v += offset;
        }
        for k in 0..windows_per_series {
            out.push(series.window(k * horizon.max(1), context_len, horizon));
        }
    }
    Ok(out)
}

/// Held-out draws from the family of `spec` with the shift removed: fresh
/// phases and noise per series, the same frequencies and amplitudes.
pub fn family_corpus(
    spec: &SynthSpec,
    num_series: usize,
    windows_per_series: usize,
    context_len: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<ForecastWindow>> {
    if num_series == 0 || windows_per_series == 0 {
        return Err(invalid!("pretraining corpus must contain at least one window"));
    }
    let step = horizon.max(1);
    let spec = SynthSpec { length: context_len + horizon + windows_per_series * step, shift: ShiftSpec::none(), ..spec.clone() };
    let mut out = Vec::with_capacity(num_series * windows_per_series);
    for s in 0..num_series {
        let series = generate_synthetic(&spec, derive_seed(seed, s as u64))?;
        out.extend((0..windows_per_series).map(|k| series.window(k * step, context_len, horizon)));
    }
    Ok(out)
}
