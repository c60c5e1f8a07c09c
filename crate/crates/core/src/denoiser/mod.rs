//! Clean-signal estimators `x_0 ~ f(x_t, sigma_t)` used inside the sampler.
//!
//! Denoisers are indexed by the continuous noise level, not by an integer
//! step, so an external model does not have to share this crate's schedule.

pub mod external;
pub mod protocol;

use std::time::Duration;

use ndarray::{Array3, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use external::ExternalDenoiser;

use crate::degradation::Tensor;
use crate::{Error, Result};

pub trait Denoiser: Send {
    /// Estimates the clean source stack from `x` observed at noise level `sigma`.
    fn denoise(&mut self, x: &Tensor, sigma: f64) -> Result<Tensor>;
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn denoise(&mut self, x: &Tensor, sigma: f64) -> Result<Tensor> {
        (**self).denoise(x, sigma)
    }
}

/// Returns its input.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Denoiser for Identity {
    fn denoise(&mut self, x: &Tensor, _sigma: f64) -> Result<Tensor> {
        Ok(x.clone())
    }
}

/// Returns a stored clean reference whatever the input. Not a physical model:
/// it exists to check the sampler's behaviour when `f` is exact.
#[derive(Debug, Clone)]
pub struct Oracle {
    reference: Tensor,
}

impl Oracle {
    pub fn new(reference: Tensor) -> Self {
        Self { reference }
    }
}

impl Denoiser for Oracle {
    fn denoise(&mut self, x: &Tensor, _sigma: f64) -> Result<Tensor> {
        if x.dim() != self.reference.dim() {
            return Err(Error::Shape(format!(
                "oracle reference {:?} does not match input {:?}",
                self.reference.dim(),
                x.dim()
            )));
        }
        Ok(self.reference.clone())
    }
}

/// Scalar or per-element parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum Param<T> {
    Scalar(T),
    Field(Array3<T>),
}

impl<T: Copy> Param<T> {
    fn at(&self, idx: (usize, usize, usize)) -> T {
        match self {
            Param::Scalar(v) => *v,
            Param::Field(a) => a[idx],
        }
    }

    fn check(&self, dim: (usize, usize, usize), what: &str) -> Result<()> {
        match self {
            Param::Field(a) if a.dim() != dim => Err(Error::Shape(format!(
                "{what} field {:?} does not match input {dim:?}",
                a.dim()
            ))),
            _ => Ok(()),
        }
    }
}

/// Exact posterior mean `E[x_0 | x_t]` under an elementwise Gaussian prior
/// `x_0 ~ N(mean, std^2)` on real and imaginary parts.
#[derive(Debug, Clone)]
pub struct GaussianAnalytic {
    pub mean: Param<Complex64>,
    pub std: Param<f64>,
}

impl GaussianAnalytic {
    pub fn new(mean: Param<Complex64>, std: Param<f64>) -> Result<Self> {
        let positive = |v: f64| v > 0.0 && !v.is_nan();
        let ok = match &std {
            Param::Scalar(v) => positive(*v),
            Param::Field(a) => a.iter().all(|&v| positive(v)),
        };
        if !ok {
            return Err(Error::InvalidInput("prior std must be positive".into()));
        }
        Ok(Self { mean, std })
    }

    pub fn scalar(mean: f64, std: f64) -> Result<Self> {
        Self::new(Param::Scalar(Complex64::new(mean, 0.0)), Param::Scalar(std))
    }
}

impl Denoiser for GaussianAnalytic {
    fn denoise(&mut self, x: &Tensor, sigma: f64) -> Result<Tensor> {
        self.mean.check(x.dim(), "prior mean")?;
        self.std.check(x.dim(), "prior std")?;
        let mut out = Array3::zeros(x.dim());
        Zip::indexed(&mut out).and(x).for_each(|idx, o, &v| {
            let mu = self.mean.at(idx);
            let tau = self.std.at(idx);
            // tau^2 / (tau^2 + sigma^2), written to stay finite at the extremes.
            let gain = if sigma == 0.0 || tau.is_infinite() {
                1.0
            } else if sigma.is_infinite() {
                0.0
            } else {
                1.0 / (1.0 + (sigma / tau).powi(2))
            };
            *o = mu + (v - mu) * gain;
        });
        Ok(out)
    }
}

/// Which denoiser a run uses, as it appears in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DenoiserBinding {
    Identity {},
    /// Uses the run's reference signals as the clean estimate.
    Oracle {},
    GaussianAnalytic {
        #[serde(default)]
        mean: f64,
        #[serde(default)]
        mean_im: f64,
        std: f64,
    },
    External {
        /// Program and arguments speaking the protocol on stdin/stdout.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        command: Option<Vec<String>>,
        /// `tcp:HOST:PORT` or `unix:PATH`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        address: Option<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: f64,
    },
}

impl Default for DenoiserBinding {
    fn default() -> Self {
        DenoiserBinding::Identity {}
    }
}

fn default_timeout_secs() -> f64 {
    DEFAULT_TIMEOUT_SECS
}

pub const DEFAULT_TIMEOUT_SECS: f64 = 30.0;

impl DenoiserBinding {
    pub fn validate(&self) -> Result<()> {
        match self {
            DenoiserBinding::GaussianAnalytic { std, .. } if !std.is_finite() || *std <= 0.0 => {
                Err(Error::config("denoiser.std", "must be positive"))
            }
            DenoiserBinding::External {
                command,
                address,
                timeout_secs,
            } => {
                if command.is_some() == address.is_some() {
                    return Err(Error::config(
                        "denoiser",
                        "external denoiser needs exactly one of `command` or `address`",
                    ));
                }
                if !(timeout_secs.is_finite() && *timeout_secs > 0.0) {
                    return Err(Error::config("denoiser.timeout_secs", "must be positive"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn needs_reference(&self) -> bool {
        matches!(self, DenoiserBinding::Oracle {})
    }

    /// Instantiates the denoiser. `reference` is the clean source stack, only
    /// used (and then required) by the oracle.
    pub fn attach(&self, reference: Option<Tensor>) -> Result<Box<dyn Denoiser>> {
        self.validate()?;
        Ok(match self {
            DenoiserBinding::Identity {} => Box::new(Identity),
            DenoiserBinding::Oracle {} => Box::new(Oracle::new(reference.ok_or_else(|| {
                Error::config("inputs.references", "oracle denoiser requires references")
            })?)),
            DenoiserBinding::GaussianAnalytic { mean, mean_im, std } => Box::new(
                GaussianAnalytic::new(Param::Scalar(Complex64::new(*mean, *mean_im)), Param::Scalar(*std))?,
            ),
            DenoiserBinding::External {
                command,
                address,
                timeout_secs,
            } => {
                let timeout = Duration::from_secs_f64(*timeout_secs);
                match (command, address) {
                    (Some(cmd), None) => Box::new(ExternalDenoiser::spawn(cmd, timeout)?),
                    (None, Some(addr)) => Box::new(ExternalDenoiser::connect(addr, timeout)?),
                    _ => unreachable!("validated"),
                }
            }
        })
    }
}
