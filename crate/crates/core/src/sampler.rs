//! Shared DDRM update: posterior sampling for `y = H x + z` carried out per
//! singular component of `H`.
//!
//! With `H = U Sigma V^T`, measurements are projected to `ybar = Sigma^+ U^T y`
//! and the state to `xbar = V^T x`. Each spectral component `i` then has its
//! own effective measurement noise `sigma_bar_i` (`sigma_y / s_i` for iid
//! noise), and every reverse step draws `xbar_t` from one of three Gaussians:
//!
//! * unobserved (`s_i = 0`): a DDIM-style step that ignores `ybar`;
//! * `sigma_t < sigma_bar_i`: the denoised estimate pulled towards `ybar`;
//! * `sigma_t >= sigma_bar_i`: a convex mix of estimate and measurement.
//!
//! Noise for step `t` comes from stream `t` of a counter-addressed generator,
//! so results do not depend on how elements are split across threads.

use ndarray::Array3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::degradation::{DegradationModel, MeasurementSet, SpectralMeasurements, Tensor};
use crate::denoiser::Denoiser;
use crate::rng::NoiseStream;
use crate::schedule::NoiseSchedule;
use crate::{Error, Result};

pub const DEFAULT_ETA: f64 = 0.85;
pub const DEFAULT_ETA_B: f64 = 1.0;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub eta: f64,
    pub eta_b: f64,
    pub schedule: NoiseSchedule,
    pub seed: u64,
    /// Keep a copy of `xbar_t` every this many steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
}

impl SamplerConfig {
    pub fn new(schedule: NoiseSchedule, seed: u64) -> Self {
        Self {
            eta: DEFAULT_ETA,
            eta_b: DEFAULT_ETA_B,
            schedule,
            seed,
            record_every: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::config("sampler.eta", format!("{} not in [0, 1]", self.eta)));
        }
        if !(0.0..=2.0).contains(&self.eta_b) {
            return Err(Error::config("sampler.eta_b", format!("{} not in [0, 2]", self.eta_b)));
        }
        if self.record_every == Some(0) {
            return Err(Error::config("sampler.record_every", "must be positive"));
        }
        Ok(())
    }
}

/// Branch counts for one reverse step, over all (source, bin) elements.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchCounts {
    pub low_noise: u64,
    pub high_noise: u64,
    pub unobserved: u64,
}

impl BranchCounts {
    pub fn total(&self) -> u64 {
        self.low_noise + self.high_noise + self.unobserved
    }

    fn add(self, o: Self) -> Self {
        Self {
            low_noise: self.low_noise + o.low_noise,
            high_noise: self.high_noise + o.high_noise,
            unobserved: self.unobserved + o.unobserved,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: usize,
    pub sigma: f64,
    pub branches: BranchCounts,
}

#[derive(Debug, Clone)]
pub struct RefinementResult {
    /// Refined sources, `[N, K, L]`.
    pub x0: Tensor,
    /// One entry per reverse step, from `t = T - 1` down to 0.
    pub steps: Vec<StepDiagnostics>,
    /// `(t, xbar_t)` snapshots when recording is enabled.
    pub trajectory: Vec<(usize, Tensor)>,
    pub denoiser_calls: usize,
    pub config: SamplerConfig,
}

/// Draws `xbar_T ~ N(ybar, sigma_T^2 - sigma_bar^2)` for observed components
/// and `N(0, sigma_T^2)` for unobserved ones.
pub fn initialize(
    spectral: &SpectralMeasurements,
    schedule: &NoiseSchedule,
    noise: &NoiseStream,
) -> Result<Tensor> {
    let t_max = schedule.steps();
    let sigma_t = schedule.sigma_max();
    let (n, k, l) = spectral.ybar.dim();
    let plane = k * l;
    let ybar = flat(&spectral.ybar);
    let sbar = spectral.sigma_bar.as_slice().expect("standard layout");

    for (i, observed) in spectral.observed.iter().enumerate() {
        if !observed {
            continue;
        }
        let worst = sbar[i * plane..(i + 1) * plane].iter().copied().fold(0.0, f64::max);
        if sigma_t * sigma_t - worst * worst < 0.0 {
            return Err(Error::ScheduleTooSmall {
                component: i,
                sigma_max: sigma_t,
                sigma_bar: worst,
            });
        }
    }

    let mut out = vec![Complex64::default(); n * plane];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let start = c * CHUNK;
        noise.fill(t_max as u64, start as u64, chunk);
        for (j, slot) in chunk.iter_mut().enumerate() {
            let e = start + j;
            let eps = *slot;
            *slot = if spectral.observed[e / plane] {
                let std = (sigma_t * sigma_t - sbar[e] * sbar[e]).max(0.0).sqrt();
                ybar[e] + eps * std
            } else {
                eps * sigma_t
            };
        }
    });
    Ok(Array3::from_shape_vec((n, k, l), out).expect("shape"))
}

/// One reverse step `xbar_{t+1} -> xbar_t`, given the spectral projection
/// `xbar_theta` of the denoiser output.
pub fn step(
    x_next: &Tensor,
    x_theta: &Tensor,
    spectral: &SpectralMeasurements,
    t: usize,
    cfg: &SamplerConfig,
    noise: &NoiseStream,
) -> Result<(Tensor, BranchCounts)> {
    let schedule = &cfg.schedule;
    if t >= schedule.steps() {
        return Err(Error::InvalidInput(format!(
            "step {t} outside 0..{}",
            schedule.steps()
        )));
    }
    let dim = spectral.ybar.dim();
    if x_next.dim() != dim || x_theta.dim() != dim || spectral.sigma_bar.dim() != dim {
        return Err(Error::Shape(format!(
            "step tensors {:?} / {:?} do not match measurements {dim:?}",
            x_next.dim(),
            x_theta.dim()
        )));
    }
    let (n, k, l) = dim;
    let plane = k * l;
    let sigma_t = schedule.sigma(t);
    let sigma_next = schedule.sigma(t + 1);
    let (eta, eta_b) = (cfg.eta, cfg.eta_b);
    let pull = (1.0 - eta * eta).sqrt() * sigma_t;

    let xn = flat(x_next);
    let xth = flat(x_theta);
    let ybar = flat(&spectral.ybar);
    let sbar = spectral.sigma_bar.as_slice().expect("standard layout");

    let mut out = vec![Complex64::default(); n * plane];
    let counts = out
        .par_chunks_mut(CHUNK)
        .enumerate()
        .map(|(c, chunk)| -> Result<BranchCounts> {
            let start = c * CHUNK;
            noise.fill(t as u64, start as u64, chunk);
            let mut counts = BranchCounts::default();
            for (j, slot) in chunk.iter_mut().enumerate() {
                let e = start + j;
                let eps = *slot;
                let (mean, std) = if !spectral.observed[e / plane] {
                    counts.unobserved += 1;
                    (xth[e] + (xn[e] - xth[e]) * (pull / sigma_next), eta * sigma_t)
                } else if sigma_t < sbar[e] {
                    counts.low_noise += 1;
                    (xth[e] + (ybar[e] - xth[e]) * (pull / sbar[e]), eta * sigma_t)
                } else {
                    counts.high_noise += 1;
                    let var = sigma_t * sigma_t - sbar[e] * sbar[e] * eta_b * eta_b;
                    if var < 0.0 {
                        return Err(Error::Numerical(format!(
                            "negative variance {var} at step {t}, element {e}"
                        )));
                    }
                    (xth[e] * (1.0 - eta_b) + ybar[e] * eta_b, var.sqrt())
                };
                *slot = mean + eps * std;
            }
            Ok(counts)
        })
        .try_reduce(BranchCounts::default, |a, b| Ok(a.add(b)))?;
    Ok((Array3::from_shape_vec(dim, out).expect("shape"), counts))
}

/// Runs the full reverse chain and returns `x_0 = V xbar_0`.
pub fn run(
    measurements: &MeasurementSet,
    model: &DegradationModel,
    denoiser: &mut dyn Denoiser,
    cfg: &SamplerConfig,
) -> Result<RefinementResult> {
    cfg.validate()?;
    let spectral = model.to_spectral(measurements)?;
    let noise = NoiseStream::new(cfg.seed);
    let schedule = &cfg.schedule;

    let mut xbar = initialize(&spectral, schedule, &noise)?;
    let mut steps = Vec::with_capacity(schedule.steps());
    let mut trajectory = Vec::new();
    let mut calls = 0;
    if cfg.record_every.is_some() {
        trajectory.push((schedule.steps(), xbar.clone()));
    }

    for t in (0..schedule.steps()).rev() {
        let x = model.from_spectral(&xbar)?;
        let denoised = denoiser
            .denoise(&x, schedule.sigma(t + 1))
            .map_err(|e| match e {
                Error::Protocol { source, .. } => Error::Protocol { step: t, source },
                other => other,
            })?;
        calls += 1;
        if denoised.dim() != x.dim() {
            return Err(Error::Shape(format!(
                "denoiser returned {:?} for input {:?} at step {t}",
                denoised.dim(),
                x.dim()
            )));
        }
        if denoised.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::Numerical(format!("denoiser output not finite at step {t}")));
        }
        let x_theta = model.to_spectral_state(&denoised)?;
        let (next, branches) = step(&xbar, &x_theta, &spectral, t, cfg, &noise)?;
        xbar = next;
        steps.push(StepDiagnostics {
            t,
            sigma: schedule.sigma(t),
            branches,
        });
        if let Some(every) = cfg.record_every {
            if t % every == 0 {
                trajectory.push((t, xbar.clone()));
            }
        }
    }

    Ok(RefinementResult {
        x0: model.from_spectral(&xbar)?,
        steps,
        trajectory,
        denoiser_calls: calls,
        config: cfg.clone(),
    })
}

fn flat(x: &Tensor) -> &[Complex64] {
    x.as_slice().expect("tensors are kept in standard layout")
}
