//! Refine corrupted estimates of a two-tone scene with the oracle denoiser and
//! score them before and after.

use ddrm_refine::cli::synth::corrupt;
use ddrm_refine::denoiser::DenoiserBinding;
use ddrm_refine::evalblend::eval_permuted;
use ddrm_refine::pipeline::{refine_scene, RefineSettings, Scene};
use ddrm_refine::signal::{mix, AudioBuffer};

fn tone(freq: f64, amplitude: f64, rate: u32, secs: f64) -> AudioBuffer {
    let len = (secs * rate as f64) as usize;
    let samples = (0..len)
        .map(|n| amplitude * (2.0 * std::f64::consts::PI * freq * n as f64 / rate as f64).sin())
        .collect();
    AudioBuffer::new(samples, rate).unwrap()
}

fn main() -> ddrm_refine::Result<()> {
    let rate = 8000;
    let truth = vec![tone(440.0, 0.5, rate, 2.0), tone(1230.0, 0.4, rate, 2.0)];
    let estimates = truth
        .iter()
        .enumerate()
        .map(|(i, t)| corrupt(t, 10.0, i as u64))
        .collect::<ddrm_refine::Result<Vec<_>>>()?;
    let scene = Scene {
        mixture: Some(mix(&truth)?),
        estimates: estimates.clone(),
        references: Some(truth.clone()),
    };
    let mut settings = RefineSettings {
        denoiser: DenoiserBinding::Oracle {},
        ..RefineSettings::default()
    };
    settings.sampler.schedule.steps = 50;

    let outcome = refine_scene(&scene, &settings, 1)?;
    println!(
        "{} block(s), sigma_bar max {:.4}, sigma_T {:.4}",
        outcome.blocks.len(),
        outcome.max_sigma_bar,
        outcome.schedule.sigma_max()
    );
    let before = eval_permuted(&estimates, &truth)?;
    let after = eval_permuted(&outcome.refined, &truth)?;
    println!("preceding SI-SDR {:?} dB", before.per_source);
    println!("refined   SI-SDR {:?} dB", after.per_source);

    let b = &outcome.blocks[0];
    let last = b.steps.last().expect("at least one step");
    println!("final step t={} sigma={:.4}: {:?}", last.t, last.sigma, last.branches);
    Ok(())
}
