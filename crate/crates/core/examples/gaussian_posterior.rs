//! With a Gaussian prior the denoiser is exact, so the sampler's output can be
//! compared with the closed-form posterior of the linear model. At these
//! settings the chain's output mean sits measurably off the posterior mean;
//! `tests/sampler_moments.rs` shows it matches the chain's own exact moments.

use nalgebra::{DMatrix, DVector};
use ndarray::Array3;
use num_complex::Complex64;

use ddrm_refine::degradation::{DegradationModel, Design, MeasurementSet, NoiseStd};
use ddrm_refine::denoiser::GaussianAnalytic;
use ddrm_refine::sampler::{run, SamplerConfig};
use ddrm_refine::schedule::{NoiseSchedule, ScheduleKind};

fn main() -> ddrm_refine::Result<()> {
    let (n, sigma, tau, runs) = (2, 0.5, 1.0, 2000);
    let model = DegradationModel::shared(n)?;
    let y = [0.8, 1.1, -0.4];
    let data = Array3::from_shape_fn((n + 1, 1, 1), |(r, _, _)| Complex64::new(y[r], 0.0));
    let set = MeasurementSet::new(data, NoiseStd::uniform(sigma, n + 1), Design::Shared)?;
    let schedule = NoiseSchedule::build(ScheduleKind::Geometric, 50, 0.002, 1.0)?;
    let cfg = SamplerConfig::new(schedule, 0);

    let mut sum = vec![0.0; n];
    for seed in 0..runs {
        let mut d = GaussianAnalytic::scalar(0.0, tau)?;
        let x = run(&set, &model, &mut d, &SamplerConfig { seed, ..cfg.clone() })?.x0;
        for (j, s) in sum.iter_mut().enumerate() {
            *s += x[[j, 0, 0]].re / runs as f64;
        }
    }

    let h = model.matrix();
    let prec = h.transpose() * h / (sigma * sigma) + DMatrix::identity(n, n) / (tau * tau);
    let cov = prec.try_inverse().expect("positive definite");
    let mean = &cov * h.transpose() * DVector::from_column_slice(&y) / (sigma * sigma);
    for j in 0..n {
        println!("source {j}: sampler mean {:+.4}, posterior mean {:+.4}", sum[j], mean[j]);
    }
    Ok(())
}
