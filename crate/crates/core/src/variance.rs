//! Measurement-noise std fields: a constant design and a sigmoid of the
//! mixture/estimate discrepancy, which trusts an estimate less where it
//! departs from the mixture (where interference dominates).

use ndarray::{Array3, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::degradation::{Design, NoiseStd};
use crate::signal::ComplexSpectrogram;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceKind {
    #[default]
    Fixed,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VarianceDesign {
    pub kind: VarianceKind,
    pub fixed: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Std of the mixture channel.
    pub mixture: f64,
}

impl Default for VarianceDesign {
    fn default() -> Self {
        Self {
            kind: VarianceKind::Fixed,
            fixed: 0.5,
            alpha: 2.0,
            beta: 2.0,
            gamma: 0.8,
            mixture: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VarianceReport {
    /// Bins where the sigmoid went negative and was clamped to zero.
    pub clamped: usize,
}

impl VarianceDesign {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("fixed", self.fixed),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("mixture", self.mixture),
        ] {
            if !v.is_finite() {
                return Err(Error::config(format!("variance.{name}"), "must be finite"));
            }
        }
        if self.fixed < 0.0 {
            return Err(Error::config("variance.fixed", "must be non-negative"));
        }
        if self.mixture < 0.0 {
            return Err(Error::config("variance.mixture", "must be non-negative"));
        }
        if self.beta < 0.0 {
            return Err(Error::config("variance.beta", "must be non-negative"));
        }
        if self.alpha / 2.0 - self.gamma < 0.0 {
            log::warn!(
                "variance: alpha/2 - gamma = {} < 0, small discrepancies will be clamped to zero std",
                self.alpha / 2.0 - self.gamma
            );
        }
        Ok(())
    }

    /// `alpha / (1 + exp(-beta * diff)) - gamma`, before clamping.
    pub fn sigmoid_std(&self, diff: f64) -> f64 {
        self.alpha / (1.0 + (-self.beta * diff).exp()) - self.gamma
    }

    /// Constant field of shape `[channels, bins, frames]`.
    pub fn fixed_field(&self, shape: (usize, usize, usize)) -> Array3<f64> {
        Array3::from_elem(shape, self.fixed)
    }

    /// Per-bin std for one estimate from the complex magnitude of its
    /// difference to the mixture.
    pub fn sigmoid_field(
        &self,
        mixture: &ComplexSpectrogram,
        estimate: &ComplexSpectrogram,
    ) -> Result<(Array3<f64>, VarianceReport)> {
        if mixture.data.dim() != estimate.data.dim() {
            return Err(Error::Shape(format!(
                "mixture {:?} and estimate {:?} differ",
                mixture.data.dim(),
                estimate.data.dim()
            )));
        }
        let mut clamped = 0;
        let mut out = Array3::zeros(mixture.data.dim());
        Zip::from(&mut out)
            .and(&mixture.data)
            .and(&estimate.data)
            .for_each(|o, m, x| {
                let s = self.sigmoid_std((m - x).norm());
                *o = if s < 0.0 {
                    clamped += 1;
                    0.0
                } else {
                    s
                };
            });
        if clamped > 0 {
            log::warn!("variance: clamped {clamped} negative std values to zero");
        }
        Ok((out, VarianceReport { clamped }))
    }

    /// Full noise description for a measurement stack in `H` row order.
    /// `mixture` is required for shared designs and for the sigmoid kind.
    pub fn measurement_noise(
        &self,
        design: Design,
        mixture: Option<&ComplexSpectrogram>,
        estimates: &ComplexSpectrogram,
    ) -> Result<(NoiseStd, VarianceReport)> {
        self.validate()?;
        let n = estimates.channels();
        let with_mixture = match design {
            Design::Shared => true,
            Design::Isolated => false,
            Design::Custom => {
                return Err(Error::config("design", "noise fields are built for isolated or shared designs"))
            }
        };
        if with_mixture && mixture.is_none() {
            return Err(Error::config("inputs.mixture", "shared design requires mixture"));
        }
        let offset = usize::from(with_mixture);
        match self.kind {
            VarianceKind::Fixed => {
                let mut sig = vec![self.fixed; n + offset];
                if with_mixture {
                    sig[0] = self.mixture;
                }
                Ok((NoiseStd::PerChannel(sig), VarianceReport::default()))
            }
            VarianceKind::Sigmoid => {
                let mixture = mixture.ok_or_else(|| {
                    Error::config("inputs.mixture", "sigmoid variance requires mixture")
                })?;
                let (_, k, l) = estimates.data.dim();
                let mut field = Array3::zeros((n + offset, k, l));
                if with_mixture {
                    field.index_axis_mut(Axis(0), 0).fill(self.mixture);
                }
                let mut report = VarianceReport::default();
                for i in 0..n {
                    let est = estimates.with_data(
                        estimates.data.slice(ndarray::s![i..i + 1, .., ..]).to_owned(),
                    );
                    let (f, r) = self.sigmoid_field(mixture, &est)?;
                    report.clamped += r.clamped;
                    field
                        .index_axis_mut(Axis(0), i + offset)
                        .assign(&f.index_axis(Axis(0), 0));
                }
                Ok((NoiseStd::PerBin(field), report))
            }
        }
    }
}
