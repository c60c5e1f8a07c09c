//! Complex STFT analysis and weighted overlap-add synthesis.
//!
//! Frames start at multiples of `hop_size` in a buffer that carries
//! `window_size - hop_size` leading zeros, so every input sample sits in the
//! fully overlapped region. The frame count is rounded up to a whole number
//! of `num_frames` blocks; a refiner processes each block independently and
//! synthesis overlap-adds across block edges.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{s, Array3, ArrayView2};
use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use super::AudioBuffer;
use crate::{Error, Result};

/// Minimum of the periodic squared-window overlap sum below which a
/// configuration cannot be inverted.
const MIN_OVERLAP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    /// Square root of the periodic Hann window. Analysis times synthesis is a
    /// Hann window, which overlap-adds to a constant at `hop = window / 2`.
    #[default]
    SqrtHann,
    /// Periodic Hann on both sides, normalized by the squared-window sum.
    Hann,
}

impl Window {
    pub fn coefficients(self, size: usize) -> Vec<f64> {
        (0..size)
            .map(|n| {
                let hann = 0.5 - 0.5 * (2.0 * PI * n as f64 / size as f64).cos();
                match self {
                    Window::SqrtHann => hann.sqrt(),
                    Window::Hann => hann,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftConfig {
    pub window_size: usize,
    pub hop_size: usize,
    /// Frames per refinement block.
    pub num_frames: usize,
    pub window: Window,
    /// Coefficients are divided by this after analysis so that typical speech
    /// bins are order one.
    pub scale: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_size: 512,
            hop_size: 256,
            num_frames: 256,
            window: Window::SqrtHann,
            scale: 0.15,
        }
    }
}

impl StftConfig {
    pub fn freq_bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    /// Leading zeros inserted before the first sample.
    pub fn padding(&self) -> usize {
        self.window_size - self.hop_size
    }

    /// Frames needed to cover `len` samples, before block rounding.
    pub fn frames_for(&self, len: usize) -> usize {
        (self.padding() + len).div_ceil(self.hop_size).max(1)
    }

    /// Frames emitted for `len` samples: a whole number of blocks.
    pub fn padded_frames_for(&self, len: usize) -> usize {
        self.frames_for(len).div_ceil(self.num_frames) * self.num_frames
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config("stft", m));
        if self.window_size < 2 {
            return bad(format!("window_size {} < 2", self.window_size));
        }
        if self.hop_size == 0 || self.hop_size > self.window_size {
            return bad(format!(
                "hop_size {} must be in 1..={}",
                self.hop_size, self.window_size
            ));
        }
        if self.num_frames == 0 {
            return bad("num_frames must be positive".into());
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return bad(format!("scale {} must be positive", self.scale));
        }
        let (lo, _) = self.overlap_range();
        if lo < MIN_OVERLAP {
            return bad(format!(
                "{:?} window of {} samples cannot be inverted at hop {}",
                self.window, self.window_size, self.hop_size
            ));
        }
        Ok(())
    }

    /// Min and max over one hop of the steady-state sum of squared windows.
    pub fn overlap_range(&self) -> (f64, f64) {
        let w = self.window.coefficients(self.window_size);
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for n in 0..self.hop_size {
            let sum: f64 = (n..self.window_size)
                .step_by(self.hop_size)
                .map(|i| w[i] * w[i])
                .sum();
            lo = lo.min(sum);
            hi = hi.max(sum);
        }
        (lo, hi)
    }

    /// True when analysis times synthesis window overlap-adds to a constant
    /// without any per-sample normalization.
    pub fn is_cola(&self) -> bool {
        let (lo, hi) = self.overlap_range();
        hi - lo < 1e-10
    }
}

/// Complex spectrogram indexed `[channel, frequency, frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub data: Array3<Complex64>,
    pub stft: StftConfig,
    /// Number of waveform samples the frames were computed from.
    pub length: usize,
    pub sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn frames(&self) -> usize {
        self.data.dim().2
    }

    pub fn blocks(&self) -> usize {
        self.frames() / self.stft.num_frames
    }

    pub fn scale(&self) -> f64 {
        self.stft.scale
    }

    /// Same geometry, new data.
    pub fn with_data(&self, data: Array3<Complex64>) -> Self {
        Self {
            data,
            stft: self.stft,
            length: self.length,
            sample_rate: self.sample_rate,
        }
    }
}

struct Plan {
    window: Vec<f64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
    /// Applied to forward output: `sqrt(sum w^2) * scale`, so white noise of
    /// std `s` has per-bin std `s / scale`.
    norm: f64,
}

impl Plan {
    fn new(cfg: &StftConfig) -> Self {
        let window = cfg.window.coefficients(cfg.window_size);
        let mut planner = RealFftPlanner::<f64>::new();
        let norm = window.iter().map(|w| w * w).sum::<f64>().sqrt() * cfg.scale;
        Self {
            forward: planner.plan_fft_forward(cfg.window_size),
            inverse: planner.plan_fft_inverse(cfg.window_size),
            window,
            norm,
        }
    }

    fn analyze(&self, cfg: &StftConfig, samples: &[f64], out: &mut ndarray::ArrayViewMut2<Complex64>) {
        let (w, hop) = (cfg.window_size, cfg.hop_size);
        let pad = cfg.padding();
        let frames = out.dim().1;
        let mut frame = self.forward.make_input_vec();
        let mut spectrum = self.forward.make_output_vec();
        for m in 0..frames {
            let start = m * hop;
            for (j, slot) in frame.iter_mut().enumerate() {
                let pos = start + j;
                *slot = if pos >= pad && pos - pad < samples.len() {
                    samples[pos - pad] * self.window[j]
                } else {
                    0.0
                };
            }
            // Lengths come from the planner, so this cannot fail.
            self.forward
                .process(&mut frame, &mut spectrum)
                .expect("forward fft length");
            for (k, v) in spectrum.iter().enumerate() {
                out[[k, m]] = v / self.norm;
            }
        }
        debug_assert_eq!(w, frame.len());
    }

    fn synthesize(&self, cfg: &StftConfig, spec: ArrayView2<Complex64>, length: usize) -> Vec<f64> {
        let (w, hop) = (cfg.window_size, cfg.hop_size);
        let pad = cfg.padding();
        let frames = spec.dim().1;
        let total = (frames - 1) * hop + w;
        let mut acc = vec![0.0; total];
        let mut den = vec![0.0; total];
        let mut spectrum = self.inverse.make_input_vec();
        let mut frame = self.inverse.make_output_vec();
        let last = spectrum.len() - 1;
        for m in 0..frames {
            for (k, slot) in spectrum.iter_mut().enumerate() {
                *slot = spec[[k, m]] * self.norm;
            }
            // A real frame has real DC (and Nyquist, for even sizes) bins.
            spectrum[0].im = 0.0;
            if w % 2 == 0 {
                spectrum[last].im = 0.0;
            }
            self.inverse
                .process(&mut spectrum, &mut frame)
                .expect("inverse fft length");
            let start = m * hop;
            for j in 0..w {
                acc[start + j] += frame[j] / w as f64 * self.window[j];
                den[start + j] += self.window[j] * self.window[j];
            }
        }
        (pad..pad + length).map(|i| acc[i] / den[i]).collect()
    }
}

/// Analyzes one buffer. The result has a single channel.
pub fn stft(buffer: &AudioBuffer, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    stft_many(std::slice::from_ref(buffer), cfg)
}

/// Analyzes equally long buffers into one multi-channel spectrogram.
pub fn stft_many(buffers: &[AudioBuffer], cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    let first = buffers
        .first()
        .ok_or_else(|| Error::InvalidInput("no buffers to analyze".into()))?;
    if first.is_empty() {
        return Err(Error::InvalidInput("cannot analyze an empty buffer".into()));
    }
    if let Some((i, b)) = buffers
        .iter()
        .enumerate()
        .find(|(_, b)| b.len() != first.len() || b.sample_rate != first.sample_rate)
    {
        return Err(Error::Shape(format!(
            "buffer {i} ({} samples at {} Hz) differs from buffer 0 ({} samples at {} Hz)",
            b.len(),
            b.sample_rate,
            first.len(),
            first.sample_rate
        )));
    }
    let frames = cfg.padded_frames_for(first.len());
    let plan = Plan::new(cfg);
    let mut data = Array3::zeros((buffers.len(), cfg.freq_bins(), frames));
    for (c, b) in buffers.iter().enumerate() {
        plan.analyze(cfg, &b.samples, &mut data.slice_mut(s![c, .., ..]));
    }
    Ok(ComplexSpectrogram {
        data,
        stft: *cfg,
        length: first.len(),
        sample_rate: first.sample_rate,
    })
}

/// Overlap-add synthesis of every channel, cropped to the analyzed length.
pub fn istft(spec: &ComplexSpectrogram) -> Result<Vec<AudioBuffer>> {
    let cfg = &spec.stft;
    cfg.validate()?;
    let (_, bins, frames) = spec.data.dim();
    if bins != cfg.freq_bins() {
        return Err(Error::Shape(format!(
            "spectrogram has {bins} frequency bins, window {} needs {}",
            cfg.window_size,
            cfg.freq_bins()
        )));
    }
    if frames < cfg.frames_for(spec.length) {
        return Err(Error::Shape(format!(
            "{frames} frames cannot cover {} samples (need {})",
            spec.length,
            cfg.frames_for(spec.length)
        )));
    }
    let plan = Plan::new(cfg);
    spec.data
        .outer_iter()
        .map(|channel| {
            let samples = plan.synthesize(cfg, channel, spec.length);
            AudioBuffer::new(samples, spec.sample_rate)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    fn noise(len: usize, seed: u64) -> AudioBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (0..len)
            .map(|_| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0)
            .collect();
        AudioBuffer::new(s, 8000).unwrap()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    /// Energy of the full two-sided spectrum, reconstructed from the one-sided half.
    fn two_sided_energy(spec: &ComplexSpectrogram) -> f64 {
        let bins = spec.stft.freq_bins();
        let even = spec.stft.window_size.is_multiple_of(2);
        spec.data
            .indexed_iter()
            .map(|((_, k, _), v)| {
                let weight = if k == 0 || (even && k == bins - 1) { 1.0 } else { 2.0 };
                weight * v.norm_sqr()
            })
            .sum()
    }

    #[test]
    fn default_geometry() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.freq_bins(), 257);
        assert!(cfg.is_cola());
        let spec = stft(&noise(8000, 1), &cfg).unwrap();
        assert_eq!(spec.data.dim(), (1, 257, 256));
    }

    #[test]
    fn plain_hann_is_invertible_but_not_cola() {
        let cfg = StftConfig {
            window: Window::Hann,
            ..Default::default()
        };
        cfg.validate().unwrap();
        assert!(!cfg.is_cola());
        let x = noise(3000, 2);
        let back = istft(&stft(&x, &cfg).unwrap()).unwrap();
        assert!(rel_err(&back[0].samples, &x.samples) < 1e-10);
    }

    #[test]
    fn hop_equal_to_window_is_rejected() {
        let cfg = StftConfig {
            hop_size: 512,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zeros_in_zeros_out() {
        let cfg = StftConfig::default();
        let spec = stft(&AudioBuffer::silence(1234, 8000), &cfg).unwrap();
        assert!(spec.data.iter().all(|c| *c == Complex64::new(0.0, 0.0)));
        let back = istft(&spec).unwrap();
        assert!(back[0].samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_buffer_errors() {
        assert!(stft(&AudioBuffer::silence(0, 8000), &StftConfig::default()).is_err());
    }

    #[test]
    fn bin_centered_sinusoid_is_concentrated() {
        let cfg = StftConfig::default();
        let k0 = 40usize;
        let f = k0 as f64 * 8000.0 / cfg.window_size as f64;
        // One full block: truncation at the signal edges leaks a little energy,
        // so short clips sit just under the steady-state figure.
        let len = cfg.hop_size * (cfg.num_frames - 1);
        let x: Vec<f64> = (0..len)
            .map(|n| (2.0 * PI * f * n as f64 / 8000.0 + 0.3).cos())
            .collect();
        let spec = stft(&AudioBuffer::new(x, 8000).unwrap(), &cfg).unwrap();
        let total: f64 = spec.data.iter().map(|c| c.norm_sqr()).sum();
        let near: f64 = spec
            .data
            .slice(s![0, k0 - 1..=k0 + 1, ..])
            .iter()
            .map(|c| c.norm_sqr())
            .sum();
        assert!(near / total >= 0.99, "fraction {}", near / total);
    }

    #[test]
    fn white_noise_keeps_its_std_per_bin() {
        let cfg = StftConfig::default();
        let mut z = vec![Complex64::default(); 40_000];
        crate::rng::NoiseStream::new(4).fill(0, 0, &mut z);
        let std = 0.03;
        let x: Vec<f64> = z.iter().flat_map(|c| [c.re, c.im]).map(|v| std * v).collect();
        let len = x.len();
        let spec = stft(&AudioBuffer::new(x, 8000).unwrap(), &cfg).unwrap();
        // Interior frames, interior bins.
        let first = cfg.padding() / cfg.hop_size + 2;
        let last = (cfg.padding() + len) / cfg.hop_size - 2;
        let inner = spec.data.slice(s![0, 1..cfg.freq_bins() - 1, first..last]);
        let power = inner.iter().map(|c| c.norm_sqr()).sum::<f64>() / inner.len() as f64;
        let want = (std / cfg.scale).powi(2);
        assert!((power / want - 1.0).abs() < 0.02, "{power} vs {want}");
    }

    #[test]
    fn impulse_is_restored_in_place() {
        let cfg = StftConfig::default();
        let mut x = vec![0.0; 5000];
        x[1777] = 1.0;
        let back = istft(&stft(&AudioBuffer::new(x.clone(), 8000).unwrap(), &cfg).unwrap()).unwrap();
        for (i, (a, b)) in back[0].samples.iter().zip(&x).enumerate() {
            assert!((a - b).abs() < 1e-6, "sample {i}: {a} vs {b}");
        }
    }

    #[test]
    fn long_inputs_span_multiple_blocks() {
        let cfg = StftConfig {
            num_frames: 16,
            ..Default::default()
        };
        let x = noise(16 * 256 * 3 + 100, 5);
        let spec = stft(&x, &cfg).unwrap();
        assert_eq!(spec.frames() % 16, 0);
        assert_eq!(spec.blocks(), 4);
        let back = istft(&spec).unwrap();
        assert!(rel_err(&back[0].samples, &x.samples) < 1e-12);
    }

    #[test]
    fn istft_rejects_wrong_bin_count() {
        let cfg = StftConfig::default();
        let mut spec = stft(&noise(1000, 3), &cfg).unwrap();
        spec.data = Array3::zeros((1, 100, spec.frames()));
        assert!(matches!(istft(&spec).unwrap_err(), Error::Shape(_)));
    }

    #[test]
    fn energy_ratio_is_input_independent() {
        let cfg = StftConfig::default();
        let ratios: Vec<f64> = (0..6)
            .map(|seed| {
                let x = noise(1000 + 937 * seed as usize, seed);
                two_sided_energy(&stft(&x, &cfg).unwrap()) / x.energy()
            })
            .collect();
        for r in &ratios {
            assert!((r / ratios[0] - 1.0).abs() < 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn round_trip(len in 1usize..20_000, seed in any::<u64>()) {
            let x = noise(len, seed);
            let back = istft(&stft(&x, &StftConfig::default()).unwrap()).unwrap();
            prop_assert!(rel_err(&back[0].samples, &x.samples) < 1e-6);
        }

        #[test]
        fn linearity(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
            let cfg = StftConfig::default();
            let x = noise(3000, seed);
            let y = noise(3000, seed ^ 0xABCD);
            let z: Vec<f64> = x.samples.iter().zip(&y.samples).map(|(p, q)| a * p + b * q).collect();
            let sx = stft(&x, &cfg).unwrap();
            let sy = stft(&y, &cfg).unwrap();
            let sz = stft(&AudioBuffer::new(z, 8000).unwrap(), &cfg).unwrap();
            let expect = sx.data.mapv(|v| v * a) + sy.data.mapv(|v| v * b);
            let err: f64 = (&sz.data - &expect).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let norm: f64 = expect.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-9 * norm.max(1e-300));
        }
    }
}
