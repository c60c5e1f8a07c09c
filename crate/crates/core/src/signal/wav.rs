use std::path::Path;

use hound::{SampleFormat as HoundFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use super::AudioBuffer;
use crate::{Error, Result};

const PCM16_SCALE: f64 = 32768.0;

/// On-disk sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    #[default]
    F32,
    Pcm16,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteReport {
    /// Samples outside [-1, 1] that were saturated.
    pub clipped: usize,
}

/// Reads a mono PCM16 or float32 WAV file into a buffer normalized to [-1, 1].
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let reader = WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Multichannel {
            path: path.to_path_buf(),
            channels: spec.channels,
        });
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (HoundFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(wav_err)?,
        (HoundFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(wav_err)?,
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding {
                path: path.to_path_buf(),
                detail: format!("{fmt:?} {bits}-bit; expected PCM 16-bit or float 32-bit"),
            })
        }
    };
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Writes a mono WAV file. Samples outside [-1, 1] are clipped and counted.
pub fn write_wav(
    buffer: &AudioBuffer,
    path: impl AsRef<Path>,
    format: SampleFormat,
) -> Result<WriteReport> {
    let path = path.as_ref();
    if let Some(i) = buffer.samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "cannot write non-finite sample at index {i}"
        )));
    }
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate,
        bits_per_sample: match format {
            SampleFormat::F32 => 32,
            SampleFormat::Pcm16 => 16,
        },
        sample_format: match format {
            SampleFormat::F32 => HoundFormat::Float,
            SampleFormat::Pcm16 => HoundFormat::Int,
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err)?;
    let mut report = WriteReport::default();
    for &v in &buffer.samples {
        let clipped = v.clamp(-1.0, 1.0);
        if clipped != v {
            report.clipped += 1;
        }
        match format {
            SampleFormat::F32 => writer.write_sample(clipped as f32),
            SampleFormat::Pcm16 => {
                let q = (clipped * PCM16_SCALE).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(q)
            }
        }
        .map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)?;
    if report.clipped > 0 {
        log::warn!(
            "{}: clipped {} samples outside [-1, 1]",
            path.display(),
            report.clipped
        );
    }
    Ok(report)
}
