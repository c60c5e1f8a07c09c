//! Generate a synthetic scene on disk, refine it from the written config, and
//! print the report. Pass a directory to keep the files.

use std::path::PathBuf;

use ddrm_refine::cli::refine::{refine_command, RefineOptions};
use ddrm_refine::cli::synth::{write_scene, SourceSpec, SynthSpec};
use ddrm_refine::signal::SampleFormat;

fn main() -> ddrm_refine::Result<()> {
    let tmp;
    let dir = match std::env::args_os().nth(1) {
        Some(d) => PathBuf::from(d),
        None => {
            tmp = tempfile::tempdir()?;
            tmp.path().to_path_buf()
        }
    };
    let spec = SynthSpec {
        version: 1,
        sample_rate: 8000,
        duration_secs: 1.5,
        seed: 4,
        sources: vec![
            SourceSpec::Sine { freq: 330.0, amplitude: 0.5, phase: 0.0 },
            SourceSpec::NoiseBurst { start: 0.3, duration: 0.6, amplitude: 0.2 },
        ],
        corruption_snr_db: Some(8.0),
        format: SampleFormat::default(),
    };
    let config = write_scene(&spec, &dir)?;
    println!("wrote {}", config.display());

    let options = RefineOptions { seed: None, jobs: 1, output: None };
    let summary = refine_command(&config, &options)?;
    println!("outputs in {}", summary.output_dir.display());
    println!("{}", serde_json::to_string_pretty(&summary.report).expect("report serialises"));
    Ok(())
}
