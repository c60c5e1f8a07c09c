//! Refinement of one scene: preceding estimates in, refined waveforms out.
//!
//! Spectrograms are cut into blocks of `num_frames` frames and each block is
//! sampled independently with its own derived seed. All blocks share one
//! noise schedule so that `sigma_max` covers the noisiest block.

use ndarray::{s, Axis};
use serde::{Deserialize, Serialize};

use crate::degradation::{DegradationModel, Design, MeasurementSet, NoiseStd, Tensor};
use crate::denoiser::{Denoiser, DenoiserBinding};
use crate::rng::derive_seed;
use crate::sampler::{self, SamplerConfig, StepDiagnostics, DEFAULT_ETA, DEFAULT_ETA_B};
use crate::schedule::{default_sigma_max, NoiseSchedule, ScheduleKind, DEFAULT_SIGMA_MIN, DEFAULT_STEPS};
use crate::signal::{istft, stft_many, AudioBuffer, ComplexSpectrogram, StftConfig};
use crate::variance::{VarianceDesign, VarianceReport};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub steps: usize,
    pub sigma_min: f64,
    /// Derived from the measurement noise when absent.
    pub sigma_max: Option<f64>,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Geometric,
            steps: DEFAULT_STEPS,
            sigma_min: DEFAULT_SIGMA_MIN,
            sigma_max: None,
        }
    }
}

impl ScheduleSpec {
    pub fn resolve(&self, max_sigma_bar: f64) -> Result<NoiseSchedule> {
        let hi = self.sigma_max.unwrap_or_else(|| default_sigma_max(max_sigma_bar));
        NoiseSchedule::build(self.kind, self.steps, self.sigma_min, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSpec {
    pub eta: f64,
    pub eta_b: f64,
    pub seed: u64,
    pub schedule: ScheduleSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            eta_b: DEFAULT_ETA_B,
            seed: 0,
            schedule: ScheduleSpec::default(),
            record_every: None,
        }
    }
}

/// Everything that determines a refinement besides the audio itself.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefineSettings {
    pub design: Design,
    pub stft: StftConfig,
    pub variance: VarianceDesign,
    pub sampler: SamplerSpec,
    pub denoiser: DenoiserBinding,
}

#[derive(Debug, Clone)]
pub struct Scene {
    /// Required by the shared design and by sigmoid variances.
    pub mixture: Option<AudioBuffer>,
    /// Outputs of the preceding separator, one per source.
    pub estimates: Vec<AudioBuffer>,
    /// Clean sources, used by the oracle denoiser and for scoring.
    pub references: Option<Vec<AudioBuffer>>,
}

impl Scene {
    pub fn validate(&self, design: Design) -> Result<()> {
        let first = self
            .estimates
            .first()
            .ok_or_else(|| Error::config("estimates", "at least one estimate is required"))?;
        if design == Design::Shared && self.mixture.is_none() {
            return Err(Error::config("mixture", "shared design requires mixture"));
        }
        if design == Design::Custom {
            return Err(Error::config("design", "scenes support isolated or shared designs"));
        }
        let others = self.mixture.iter().chain(self.references.iter().flatten());
        for b in self.estimates.iter().chain(others) {
            if b.len() != first.len() || b.sample_rate != first.sample_rate {
                return Err(Error::Shape(format!(
                    "scene signals differ: {} samples at {} Hz vs {} samples at {} Hz",
                    b.len(),
                    b.sample_rate,
                    first.len(),
                    first.sample_rate
                )));
            }
        }
        if let Some(r) = &self.references {
            if r.len() != self.estimates.len() {
                return Err(Error::config(
                    "references",
                    format!("{} references for {} estimates", r.len(), self.estimates.len()),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagnostics {
    pub block: usize,
    pub seed: u64,
    pub denoiser_calls: usize,
    pub steps: Vec<StepDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct SceneOutcome {
    pub refined: Vec<AudioBuffer>,
    pub schedule: NoiseSchedule,
    pub max_sigma_bar: f64,
    pub variance: VarianceReport,
    pub blocks: Vec<BlockDiagnostics>,
}

/// Spectrograms and measurement noise of a scene, before sampling.
pub struct PreparedScene {
    pub model: DegradationModel,
    /// Measurement stack in `H` row order: mixture first for the shared design.
    pub measurements: ComplexSpectrogram,
    pub noise: NoiseStd,
    pub references: Option<Tensor>,
    pub variance: VarianceReport,
    pub max_sigma_bar: f64,
}

pub fn prepare(scene: &Scene, settings: &RefineSettings) -> Result<PreparedScene> {
    scene.validate(settings.design)?;
    let cfg = &settings.stft;
    let n = scene.estimates.len();
    let estimates = stft_many(&scene.estimates, cfg)?;
    let mixture = scene
        .mixture
        .as_ref()
        .map(|m| stft_many(std::slice::from_ref(m), cfg))
        .transpose()?;
    let (noise, variance) = settings
        .variance
        .measurement_noise(settings.design, mixture.as_ref(), &estimates)?;
    let measurements = match (settings.design, &mixture) {
        (Design::Shared, Some(m)) => {
            let data = ndarray::concatenate(Axis(0), &[m.data.view(), estimates.data.view()])
                .map_err(|e| Error::Shape(e.to_string()))?;
            estimates.with_data(data)
        }
        _ => estimates,
    };
    let references = match &scene.references {
        Some(r) if settings.denoiser.needs_reference() => Some(stft_many(r, cfg)?.data),
        _ => None,
    };
    let model = DegradationModel::for_design(settings.design, n)?;
    let set = MeasurementSet::new(measurements.data.clone(), noise.clone(), settings.design)?;
    let max_sigma_bar = model.to_spectral(&set)?.max_sigma_bar();
    Ok(PreparedScene {
        model,
        measurements,
        noise,
        references,
        variance,
        max_sigma_bar,
    })
}

/// Refines every block of a scene. `scene_seed` seeds block `b` with
/// `derive_seed(scene_seed, b)`.
pub fn refine_scene(scene: &Scene, settings: &RefineSettings, scene_seed: u64) -> Result<SceneOutcome> {
    settings.denoiser.validate()?;
    let prepared = prepare(scene, settings)?;
    if settings.denoiser.needs_reference() && prepared.references.is_none() {
        return Err(Error::config("references", "oracle denoiser requires references"));
    }
    let schedule = settings.sampler.schedule.resolve(prepared.max_sigma_bar)?;
    let spec = &prepared.measurements;
    let width = settings.stft.num_frames;
    let n = scene.estimates.len();
    let (_, bins, frames) = spec.data.dim();

    // External models are attached once and reused by every block.
    let mut shared: Option<Box<dyn Denoiser>> = match settings.denoiser {
        DenoiserBinding::External { .. } => Some(settings.denoiser.attach(None)?),
        _ => None,
    };

    let mut refined = Tensor::zeros((n, bins, frames));
    let mut blocks = Vec::with_capacity(spec.blocks());
    for b in 0..spec.blocks() {
        let range = s![.., .., b * width..(b + 1) * width];
        let noise = match &prepared.noise {
            NoiseStd::PerChannel(v) => NoiseStd::PerChannel(v.clone()),
            NoiseStd::PerBin(a) => NoiseStd::PerBin(a.slice(range).to_owned()),
        };
        let set = MeasurementSet::new(spec.data.slice(range).to_owned(), noise, settings.design)?;
        let seed = derive_seed(scene_seed, b as u64);
        let cfg = SamplerConfig {
            eta: settings.sampler.eta,
            eta_b: settings.sampler.eta_b,
            schedule: schedule.clone(),
            seed,
            record_every: settings.sampler.record_every,
        };
        let result = match shared.as_mut() {
            Some(d) => sampler::run(&set, &prepared.model, d.as_mut(), &cfg)?,
            None => {
                let reference = prepared.references.as_ref().map(|r| r.slice(range).to_owned());
                let mut d = settings.denoiser.attach(reference)?;
                sampler::run(&set, &prepared.model, d.as_mut(), &cfg)?
            }
        };
        log::debug!("block {b}: {} denoiser calls", result.denoiser_calls);
        refined.slice_mut(range).assign(&result.x0);
        blocks.push(BlockDiagnostics {
            block: b,
            seed,
            denoiser_calls: result.denoiser_calls,
            steps: result.steps,
        });
    }

    let refined = istft(&spec.with_data(refined))?;
    Ok(SceneOutcome {
        refined,
        schedule,
        max_sigma_bar: prepared.max_sigma_bar,
        variance: prepared.variance,
        blocks,
    })
}
