//! Analyse a chirp, print the spectrogram shape, and resynthesise it.

use ddrm_refine::signal::{istft, stft, AudioBuffer, StftConfig};

fn main() -> ddrm_refine::Result<()> {
    let rate = 8000;
    let samples: Vec<f64> = (0..3 * rate)
        .map(|n| {
            let t = n as f64 / rate as f64;
            0.5 * (2.0 * std::f64::consts::PI * (200.0 + 300.0 * t) * t).sin()
        })
        .collect();
    let input = AudioBuffer::new(samples, rate as u32)?;
    let cfg = StftConfig::default();
    println!("cola: {}, overlap range: {:?}", cfg.is_cola(), cfg.overlap_range());

    let spec = stft(&input, &cfg)?;
    println!(
        "spectrogram: {} channel(s), {} bins, {} frames in {} block(s)",
        spec.channels(),
        cfg.freq_bins(),
        spec.frames(),
        spec.blocks()
    );

    let output = istft(&spec)?.remove(0);
    let err = input
        .samples
        .iter()
        .zip(&output.samples)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("max reconstruction error: {err:.3e}");
    Ok(())
}
