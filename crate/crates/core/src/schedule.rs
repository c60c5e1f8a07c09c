//! Diffusion noise levels `sigma_0 < ... < sigma_T` for `x_t = x_0 + sigma_t * eps`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_STEPS: usize = 200;
pub const DEFAULT_SIGMA_MIN: f64 = 0.002;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    #[default]
    Geometric,
    /// Noise levels of a linear-beta DDPM schedule, mapped affinely onto
    /// `[sigma_min, sigma_max]`.
    LinearBeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    sigmas: Vec<f64>,
}

impl NoiseSchedule {
    pub fn build(kind: ScheduleKind, steps: usize, sigma_min: f64, sigma_max: f64) -> Result<Self> {
        if steps < 1 {
            return Err(Error::config("sampler.schedule.steps", "must be at least 1"));
        }
        if !(sigma_min.is_finite() && sigma_max.is_finite() && 0.0 <= sigma_min && sigma_min < sigma_max) {
            return Err(Error::config(
                "sampler.schedule",
                format!("need 0 <= sigma_min < sigma_max, got {sigma_min} and {sigma_max}"),
            ));
        }
        let sigmas = match kind {
            ScheduleKind::Geometric => {
                if sigma_min == 0.0 {
                    return Err(Error::config(
                        "sampler.schedule.sigma_min",
                        "geometric schedule needs sigma_min > 0",
                    ));
                }
                let ratio = sigma_max / sigma_min;
                let mut s: Vec<f64> = (0..=steps)
                    .map(|t| sigma_min * ratio.powf(t as f64 / steps as f64))
                    .collect();
                s[0] = sigma_min;
                s[steps] = sigma_max;
                s
            }
            ScheduleKind::LinearBeta => {
                let raw = linear_beta_sigmas(steps);
                let top = raw[steps];
                let mut s: Vec<f64> = raw
                    .iter()
                    .map(|r| sigma_min + (sigma_max - sigma_min) * r / top)
                    .collect();
                s[steps] = sigma_max;
                s
            }
        };
        if let Some(t) = sigmas.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::config(
                "sampler.schedule",
                format!("noise levels not strictly increasing at step {t}"),
            ));
        }
        Ok(Self { kind, sigmas })
    }

    /// Number of reverse steps `T`.
    pub fn steps(&self) -> usize {
        self.sigmas.len() - 1
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t]
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigmas[self.steps()]
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// `sigma_T^2 - sigma_bar^2 >= 0`: the initial spectral variance is valid.
    pub fn is_feasible(&self, max_sigma_bar: f64) -> bool {
        self.sigma_max().powi(2) - max_sigma_bar.powi(2) >= 0.0
    }
}

/// Default `sigma_max`: twice the largest spectral noise std, at least one.
pub fn default_sigma_max(max_sigma_bar: f64) -> f64 {
    (2.0 * max_sigma_bar).max(1.0)
}

/// `sqrt((1 - abar_t) / abar_t)` for the linear beta schedule rescaled to
/// `steps` steps the way guided-diffusion does (`1000 / steps` times the
/// 1e-4..0.02 range). Index 0 is the clean endpoint.
fn linear_beta_sigmas(steps: usize) -> Vec<f64> {
    let scale = 1000.0 / steps as f64;
    let (start, end) = (scale * 1e-4, (scale * 0.02).min(0.999));
    let mut abar = 1.0;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(0.0);
    for t in 1..=steps {
        let beta = if steps == 1 {
            end
        } else {
            start + (end - start) * (t - 1) as f64 / (steps - 1) as f64
        };
        abar *= 1.0 - beta;
        out.push(((1.0 - abar) / abar).sqrt());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn geometric_closed_form() {
        let s = NoiseSchedule::build(ScheduleKind::Geometric, 2, 0.01, 1.0).unwrap();
        let expect = [0.01, 0.1, 1.0];
        for (a, b) in s.sigmas().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn single_step() {
        for kind in [ScheduleKind::Geometric, ScheduleKind::LinearBeta] {
            let s = NoiseSchedule::build(kind, 1, 0.05, 3.0).unwrap();
            assert_eq!(s.sigmas(), &[0.05, 3.0]);
        }
    }

    #[test]
    fn linear_beta_can_reach_zero() {
        let s = NoiseSchedule::build(ScheduleKind::LinearBeta, 50, 0.0, 2.0).unwrap();
        assert_eq!(s.sigma(0), 0.0);
        assert_eq!(s.sigma_max(), 2.0);
        assert!(NoiseSchedule::build(ScheduleKind::Geometric, 50, 0.0, 2.0).is_err());
    }

    #[test]
    fn invalid_ranges() {
        assert!(NoiseSchedule::build(ScheduleKind::Geometric, 0, 0.1, 1.0).is_err());
        assert!(NoiseSchedule::build(ScheduleKind::Geometric, 10, 1.0, 1.0).is_err());
        assert!(NoiseSchedule::build(ScheduleKind::LinearBeta, 10, -0.1, 1.0).is_err());
    }

    #[test]
    fn feasibility_and_default_max() {
        let s = NoiseSchedule::build(ScheduleKind::Geometric, 10, 0.002, 1.0).unwrap();
        assert!(s.is_feasible(1.0));
        assert!(!s.is_feasible(1.0 + 1e-9));
        assert_eq!(default_sigma_max(0.3), 1.0);
        assert_eq!(default_sigma_max(0.8), 1.6);
    }

    proptest! {
        #[test]
        fn strictly_increasing(
            linear in any::<bool>(),
            steps in 1usize..2000,
            lo in 1e-6f64..0.5,
            span in 0.01f64..50.0,
        ) {
            let kind = if linear { ScheduleKind::LinearBeta } else { ScheduleKind::Geometric };
            let s = NoiseSchedule::build(kind, steps, lo, lo + span).unwrap();
            prop_assert!(s.sigmas().windows(2).all(|w| w[1] > w[0]));
            prop_assert_eq!(s.sigma_max(), lo + span);
            prop_assert_eq!(s.sigma(0), lo);
        }
    }
}
