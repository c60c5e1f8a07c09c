//! Interpolate a weak separator output with a cleaner one and score each weight.

use ddrm_refine::cli::synth::corrupt;
use ddrm_refine::evalblend::{blend_sweep, xi_grid};
use ddrm_refine::signal::AudioBuffer;

fn main() -> ddrm_refine::Result<()> {
    let rate = 8000;
    let truth: Vec<AudioBuffer> = [300.0, 700.0]
        .iter()
        .map(|f| {
            let s = (0..rate).map(|n| (2.0 * std::f64::consts::PI * f * n as f64 / rate as f64).sin());
            AudioBuffer::new(s.collect(), rate as u32).unwrap()
        })
        .collect();
    let disc = truth.iter().map(|t| corrupt(t, 5.0, 1)).collect::<ddrm_refine::Result<Vec<_>>>()?;
    let gen = truth.iter().map(|t| corrupt(t, 15.0, 2)).collect::<ddrm_refine::Result<Vec<_>>>()?;
    for r in blend_sweep(&disc, &gen, &truth, &xi_grid(10))? {
        println!("xi {:.1}: mean SI-SDR {:6.2} dB", r.xi.unwrap_or(f64::NAN), r.mean);
    }
    Ok(())
}
