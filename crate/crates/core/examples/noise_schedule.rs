//! Build both schedule kinds and check them against a measurement noise level.

use ddrm_refine::schedule::{default_sigma_max, NoiseSchedule, ScheduleKind};

fn main() -> ddrm_refine::Result<()> {
    let sigma_bar = 0.5 / 2f64.sqrt();
    let hi = default_sigma_max(sigma_bar);
    for kind in [ScheduleKind::Geometric, ScheduleKind::LinearBeta] {
        let lo = if kind == ScheduleKind::Geometric { 0.002 } else { 0.0 };
        let s = NoiseSchedule::build(kind, 20, lo, hi)?;
        let shown: Vec<String> = s.sigmas().iter().step_by(4).map(|v| format!("{v:.4}")).collect();
        println!("{kind:?}: sigma_T = {:.4}, every 4th: {}", s.sigma_max(), shown.join(" "));
        println!("  feasible for sigma_bar {sigma_bar:.4}: {}", s.is_feasible(sigma_bar));
    }
    let too_small = NoiseSchedule::build(ScheduleKind::Geometric, 20, 0.002, 0.1)?;
    println!("sigma_max 0.1 feasible: {}", too_small.is_feasible(sigma_bar));
    Ok(())
}
