//! Per-bin measurement noise from the disagreement between an estimate and
//! the mixture.

use ddrm_refine::signal::{stft_many, AudioBuffer, StftConfig};
use ddrm_refine::variance::{VarianceDesign, VarianceKind};

fn main() -> ddrm_refine::Result<()> {
    let design = VarianceDesign {
        kind: VarianceKind::Sigmoid,
        ..VarianceDesign::default()
    };
    for diff in [0.0, 0.1, 0.5, 1.0, 3.0] {
        println!("|m - x| = {diff:>4}: std {:+.4}", design.sigmoid_std(diff));
    }

    let rate = 8000;
    let tone = |f: f64, a: f64| -> Vec<f64> {
        (0..rate).map(|n| a * (2.0 * std::f64::consts::PI * f * n as f64 / rate as f64).sin()).collect()
    };
    let a = tone(440.0, 0.5);
    let b = tone(1000.0, 0.3);
    let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let cfg = StftConfig::default();
    let m = stft_many(&[AudioBuffer::new(mix, rate as u32)?], &cfg)?;
    let x = stft_many(&[AudioBuffer::new(a, rate as u32)?], &cfg)?;
    let (field, report) = design.sigmoid_field(&m, &x)?;
    let mean = field.mean().unwrap_or(0.0);
    let max = field.iter().copied().fold(0.0, f64::max);
    println!("field mean {mean:.4}, max {max:.4}, clamped bins {}", report.clamped);
    Ok(())
}
