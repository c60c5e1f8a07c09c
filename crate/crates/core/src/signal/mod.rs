//! Waveforms, WAV I/O and the complex STFT domain the refiner works in.

mod stft;
mod wav;

pub use stft::{istft, stft, stft_many, ComplexSpectrogram, StftConfig, Window};
pub use wav::{read_wav, write_wav, SampleFormat, WriteReport};

use crate::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 8000;

/// A mono waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Sample-wise sum of equally long sources, i.e. the noiseless mixture.
pub fn mix(sources: &[AudioBuffer]) -> Result<AudioBuffer> {
    let first = sources
        .first()
        .ok_or_else(|| Error::InvalidInput("mix needs at least one source".into()))?;
    let mut out = first.samples.clone();
    for (i, src) in sources.iter().enumerate().skip(1) {
        if src.len() != first.len() {
            return Err(Error::Shape(format!(
                "source {i} has {} samples, source 0 has {}",
                src.len(),
                first.len()
            )));
        }
        if src.sample_rate != first.sample_rate {
            return Err(Error::Shape(format!(
                "source {i} sampled at {} Hz, source 0 at {} Hz",
                src.sample_rate, first.sample_rate
            )));
        }
        for (o, s) in out.iter_mut().zip(&src.samples) {
            *o += s;
        }
    }
    Ok(AudioBuffer {
        samples: out,
        sample_rate: first.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, n: usize) -> AudioBuffer {
        let s = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / 8000.0).sin())
            .collect();
        AudioBuffer::new(s, 8000).unwrap()
    }

    #[test]
    fn mix_cancels_negated_source() {
        let s = tone(440.0, 1000);
        let neg = AudioBuffer::new(s.samples.iter().map(|v| -v).collect(), 8000).unwrap();
        let m = mix(&[s, neg]).unwrap();
        assert!(m.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mix_of_one_is_identity() {
        let s = tone(300.0, 500);
        assert_eq!(mix(std::slice::from_ref(&s)).unwrap(), s);
    }

    #[test]
    fn mix_rejects_length_mismatch() {
        let err = mix(&[tone(300.0, 500), tone(300.0, 501)]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn mixture_spectrogram_is_sum_of_spectrograms() {
        let a = tone(440.0, 4000);
        let b = tone(1250.0, 4000);
        let cfg = StftConfig::default();
        let sa = stft(&a, &cfg).unwrap();
        let sb = stft(&b, &cfg).unwrap();
        let sm = stft(&mix(&[a, b]).unwrap(), &cfg).unwrap();
        let peak = sm.data.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for ((m, x), y) in sm.data.iter().zip(sa.data.iter()).zip(sb.data.iter()) {
            assert!((m - (x + y)).norm() <= 1e-9 * peak);
        }
    }

    #[test]
    fn rejects_non_finite_and_zero_rate() {
        assert!(AudioBuffer::new(vec![0.0, f64::NAN], 8000).is_err());
        assert!(AudioBuffer::new(vec![0.0], 0).is_err());
    }
}
