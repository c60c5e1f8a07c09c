//! Synthetic scenes: clean sources, corrupted copies standing in for a
//! separator's output, and their mixture.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::config::{from_value, BlendSpec, OutputSpec, RunConfig, SceneInputs, CONFIG_VERSION};
use crate::rng::{derive_seed, NoiseStream};
use crate::signal::{mix, read_wav, write_wav, AudioBuffer, SampleFormat, DEFAULT_SAMPLE_RATE};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub version: u32,
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
    pub duration_secs: f64,
    #[serde(default)]
    pub seed: u64,
    pub sources: Vec<SourceSpec>,
    /// SNR of each estimate against its source; absent means exact copies.
    #[serde(default)]
    pub corruption_snr_db: Option<f64>,
    #[serde(default)]
    pub format: SampleFormat,
}

fn default_rate() -> u32 {
    DEFAULT_SAMPLE_RATE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Sine {
        freq: f64,
        amplitude: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Gaussian noise switched on for `[start, start + duration)` seconds.
    NoiseBurst {
        start: f64,
        duration: f64,
        amplitude: f64,
    },
    /// Cropped or zero-padded to the scene duration.
    Wav { path: PathBuf },
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub truth: Vec<AudioBuffer>,
    pub estimates: Vec<AudioBuffer>,
    pub mixture: AudioBuffer,
}

impl SynthSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let value = serde_json::from_str(&text)
            .map_err(|e| Error::config("$", format!("{}: {e}", path.display())))?;
        let mut spec: SynthSpec = from_value(value, "")?;
        let base = std::path::absolute(path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")))?;
        for s in &mut spec.sources {
            if let SourceSpec::Wav { path } = s {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config("version", format!("unsupported version {}", self.version)));
        }
        if self.sample_rate == 0 {
            return Err(Error::config("sample_rate", "must be positive"));
        }
        if !(self.duration_secs.is_finite() && self.duration_secs > 0.0) {
            return Err(Error::config("duration_secs", "must be positive"));
        }
        if self.sources.is_empty() {
            return Err(Error::config("sources", "at least one source is required"));
        }
        if let Some(snr) = self.corruption_snr_db {
            if !snr.is_finite() {
                return Err(Error::config("corruption_snr_db", "must be finite, or omitted for no corruption"));
            }
        }
        for (i, s) in self.sources.iter().enumerate() {
            let bad = match s {
                SourceSpec::Sine { freq, amplitude, phase } => {
                    !(freq.is_finite() && *freq >= 0.0 && amplitude.is_finite() && phase.is_finite())
                }
                SourceSpec::NoiseBurst { start, duration, amplitude } => {
                    !(*start >= 0.0 && *duration > 0.0 && amplitude.is_finite())
                }
                SourceSpec::Wav { .. } => false,
            };
            if bad {
                return Err(Error::config(format!("sources[{i}]"), "invalid parameters"));
            }
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_secs * self.sample_rate as f64).round() as usize
    }

    pub fn generate(&self) -> Result<SynthScene> {
        self.validate()?;
        let len = self.num_samples();
        let rate = self.sample_rate;
        let truth = self
            .sources
            .iter()
            .enumerate()
            .map(|(i, s)| self.source(i, s, len))
            .collect::<Result<Vec<_>>>()?;
        let estimates = truth
            .iter()
            .enumerate()
            .map(|(i, t)| match self.corruption_snr_db {
                None => Ok(t.clone()),
                Some(snr) => corrupt(t, snr, derive_seed(self.seed, 1000 + i as u64)),
            })
            .collect::<Result<Vec<_>>>()?;
        let mixture = mix(&truth)?;
        debug_assert!(truth.iter().all(|t| t.sample_rate == rate));
        Ok(SynthScene { truth, estimates, mixture })
    }

    fn source(&self, index: usize, spec: &SourceSpec, len: usize) -> Result<AudioBuffer> {
        let rate = self.sample_rate as f64;
        let samples = match spec {
            SourceSpec::Sine { freq, amplitude, phase } => (0..len)
                .map(|n| amplitude * (2.0 * PI * freq * n as f64 / rate + phase).sin())
                .collect(),
            SourceSpec::NoiseBurst { start, duration, amplitude } => {
                let noise = gaussian(len, derive_seed(self.seed, index as u64));
                let (a, b) = ((start * rate) as usize, ((start + duration) * rate) as usize);
                noise
                    .into_iter()
                    .enumerate()
                    .map(|(n, v)| if (a..b).contains(&n) { amplitude * v } else { 0.0 })
                    .collect()
            }
            SourceSpec::Wav { path } => {
                let b = read_wav(path)?;
                if b.sample_rate != self.sample_rate {
                    return Err(Error::config(
                        format!("sources[{index}].path"),
                        format!("{} Hz file in a {} Hz scene", b.sample_rate, self.sample_rate),
                    ));
                }
                let mut s = b.samples;
                s.resize(len, 0.0);
                s
            }
        };
        AudioBuffer::new(samples, self.sample_rate)
    }
}

fn gaussian(len: usize, seed: u64) -> Vec<f64> {
    let mut z = vec![Complex64::default(); len.div_ceil(2)];
    NoiseStream::new(seed).fill(0, 0, &mut z);
    z.iter().flat_map(|c| [c.re, c.im]).take(len).collect()
}

/// Adds Gaussian noise made orthogonal to `truth` and scaled so that the
/// SI-SDR of the result against `truth` is exactly `snr_db`.
pub fn corrupt(truth: &AudioBuffer, snr_db: f64, seed: u64) -> Result<AudioBuffer> {
    let energy = truth.energy();
    if energy == 0.0 {
        return Err(Error::InvalidInput("cannot set an SNR against a silent source".into()));
    }
    let mut noise = gaussian(truth.len(), seed);
    let proj = noise.iter().zip(&truth.samples).map(|(n, t)| n * t).sum::<f64>() / energy;
    noise.iter_mut().zip(&truth.samples).for_each(|(n, t)| *n -= proj * t);
    let noise_energy: f64 = noise.iter().map(|n| n * n).sum();
    let gain = (energy / 10f64.powf(snr_db / 10.0) / noise_energy).sqrt();
    let samples = truth.samples.iter().zip(&noise).map(|(t, n)| t + gain * n).collect();
    AudioBuffer::new(samples, truth.sample_rate)
}

pub fn truth_name(i: usize) -> String {
    format!("truth_{}.wav", i + 1)
}

pub fn estimate_name(i: usize) -> String {
    format!("estimate_{}.wav", i + 1)
}

pub const MIXTURE_NAME: &str = "mixture.wav";
/// Ready-to-run refine config written next to the scene.
pub const REFINE_CONFIG_NAME: &str = "refine.json";

/// Writes the scene into `out` and returns the path of its refine config.
pub fn synth_command(spec_path: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let spec = SynthSpec::load(spec_path)?;
    let out = match out {
        Some(o) => o.to_path_buf(),
        None => spec_path.parent().unwrap_or(Path::new(".")).to_path_buf(),
    };
    write_scene(&spec, &out)
}

pub fn write_scene(spec: &SynthSpec, out: &Path) -> Result<PathBuf> {
    let scene = spec.generate()?;
    std::fs::create_dir_all(out)?;
    let mut clipped = 0;
    for (i, (t, e)) in scene.truth.iter().zip(&scene.estimates).enumerate() {
        clipped += write_wav(t, out.join(truth_name(i)), spec.format)?.clipped;
        clipped += write_wav(e, out.join(estimate_name(i)), spec.format)?.clipped;
    }
    clipped += write_wav(&scene.mixture, out.join(MIXTURE_NAME), spec.format)?.clipped;
    if clipped > 0 {
        log::warn!("synth: clipped {clipped} samples; lower the source amplitudes");
    }
    let n = scene.truth.len();
    let cfg = RunConfig {
        version: CONFIG_VERSION,
        scenes: vec![SceneInputs {
            name: "synth".into(),
            mixture: Some(MIXTURE_NAME.into()),
            estimates: (0..n).map(|i| estimate_name(i).into()).collect(),
            references: Some((0..n).map(|i| truth_name(i).into()).collect()),
        }],
        design: Default::default(),
        stft: Default::default(),
        variance: Default::default(),
        sampler: Default::default(),
        denoiser: Default::default(),
        blend: BlendSpec::default(),
        output: OutputSpec {
            dir: "refined".into(),
            format: SampleFormat::F32,
        },
    };
    let path = out.join(REFINE_CONFIG_NAME);
    let text = serde_json::to_string_pretty(&cfg).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalblend::si_sdr;

    fn two_sines(snr: Option<f64>) -> SynthSpec {
        SynthSpec {
            version: 1,
            sample_rate: 8000,
            duration_secs: 1.0,
            seed: 3,
            sources: vec![
                SourceSpec::Sine { freq: 440.0, amplitude: 0.4, phase: 0.0 },
                SourceSpec::Sine { freq: 1230.0, amplitude: 0.3, phase: 1.0 },
            ],
            corruption_snr_db: snr,
            format: SampleFormat::F32,
        }
    }

    #[test]
    fn corruption_hits_requested_snr() {
        let scene = two_sines(Some(10.0)).generate().unwrap();
        for (e, t) in scene.estimates.iter().zip(&scene.truth) {
            assert!((si_sdr(&e.samples, &t.samples).unwrap() - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn no_corruption_copies_truth_and_mixture_sums() {
        let scene = two_sines(None).generate().unwrap();
        assert_eq!(scene.estimates, scene.truth);
        for n in 0..scene.mixture.len() {
            assert_eq!(scene.mixture.samples[n], scene.truth[0].samples[n] + scene.truth[1].samples[n]);
        }
    }

    #[test]
    fn noise_burst_is_gated_and_seeded() {
        let spec = SynthSpec {
            sources: vec![SourceSpec::NoiseBurst { start: 0.25, duration: 0.25, amplitude: 0.1 }],
            ..two_sines(None)
        };
        let a = spec.generate().unwrap();
        let s = &a.truth[0].samples;
        assert!(s[..2000].iter().all(|&v| v == 0.0));
        assert!(s[2000..4000].iter().any(|&v| v != 0.0));
        assert!(s[4000..].iter().all(|&v| v == 0.0));
        assert_eq!(spec.generate().unwrap().truth, a.truth);
    }

    #[test]
    fn spec_parsing() {
        let v = serde_json::json!({
            "version": 1, "duration_secs": 0.5,
            "sources": [{"type": "sine", "freq": 100, "amplitude": 0.5}, {"type": "noise_burst", "start": 0, "duration": 0.1, "amplitude": 0.2}],
            "corruption_snr_db": 5
        });
        let spec: SynthSpec = from_value(v, "").unwrap();
        assert_eq!(spec.sample_rate, 8000);
        assert_eq!(spec.num_samples(), 4000);
        let bad = serde_json::json!({"version": 1, "duration_secs": 1, "sources": [{"type": "sine", "freq": 1, "amp": 1}]});
        let err = from_value::<SynthSpec>(bad, "").unwrap_err();
        assert!(err.to_string().contains("sources[0]"), "{err}");
    }
}
