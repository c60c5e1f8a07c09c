use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Manifest, RunConfig, SceneInputs, SceneManifest, Software, MANIFEST_VERSION};
use crate::evalblend::{blend, blend_sweep, eval_permuted, xi_grid, EvalReport};
use crate::pipeline::{refine_scene, Scene};
use crate::rng::derive_seed;
use crate::signal::{read_wav, write_wav, AudioBuffer};
use crate::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct RefineOptions {
    pub seed: Option<u64>,
    pub jobs: usize,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub name: String,
    /// Scores of the preceding estimates, if references were given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preceding: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refined: Option<EvalReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub blends: Vec<EvalReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenes: Vec<SceneReport>,
}

/// Everything one call to [`refine`] wrote.
#[derive(Debug, Clone)]
pub struct RefineSummary {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub report: RunReport,
}

/// `blended_0.8_1.wav` style names; `xi` is printed in its shortest form.
pub fn blended_name(xi: f64, source: usize) -> String {
    format!("blended_{xi}_{}.wav", source + 1)
}

pub fn refined_name(source: usize) -> String {
    format!("refined_{}.wav", source + 1)
}

pub fn refine_command(config: &Path, options: &RefineOptions) -> Result<RefineSummary> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(seed) = options.seed {
        cfg.sampler.seed = seed;
    }
    if let Some(dir) = &options.output {
        cfg.output.dir = std::path::absolute(dir)?;
    }
    refine(&cfg, options.jobs.max(1))
}

/// Runs every scene of `cfg`, `jobs` scenes at a time.
pub fn refine(cfg: &RunConfig, jobs: usize) -> Result<RefineSummary> {
    cfg.validate()?;
    let out = &cfg.output.dir;
    std::fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let results: Vec<(SceneManifest, SceneReport)> = pool.install(|| {
        cfg.scenes
            .par_iter()
            .enumerate()
            .map(|(i, s)| run_scene(cfg, i, s))
            .collect::<Result<_>>()
    })?;
    let (scenes, reports): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    write_sweep_csv(&out.join("blend_sweep.csv"), &reports)?;
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        software: Software::current(),
        config: cfg.clone(),
        scenes,
    };
    let report = RunReport { scenes: reports };
    write_json(&out.join("manifest.json"), &manifest)?;
    write_json(&out.join("report.json"), &report)?;
    Ok(RefineSummary {
        output_dir: out.clone(),
        manifest,
        report,
    })
}

fn run_scene(cfg: &RunConfig, index: usize, inputs: &SceneInputs) -> Result<(SceneManifest, SceneReport)> {
    let started = std::time::Instant::now();
    let read_all = |paths: &[PathBuf]| paths.iter().map(read_wav).collect::<Result<Vec<_>>>();
    let scene = Scene {
        mixture: inputs.mixture.as_ref().map(read_wav).transpose()?,
        estimates: read_all(&inputs.estimates)?,
        references: inputs.references.as_deref().map(read_all).transpose()?,
    };
    let seed = derive_seed(cfg.sampler.seed, index as u64);
    let outcome = refine_scene(&scene, &cfg.settings(), seed)?;

    let dir = cfg.output.dir.join(&inputs.name);
    std::fs::create_dir_all(&dir)?;
    let format = cfg.output.format;
    let mut clipped = 0;
    for (i, b) in outcome.refined.iter().enumerate() {
        clipped += write_wav(b, dir.join(refined_name(i)), format)?.clipped;
    }
    let mut report = SceneReport {
        name: inputs.name.clone(),
        preceding: None,
        refined: None,
        blends: Vec::new(),
        sweep: Vec::new(),
    };
    for &xi in &cfg.blend.xi {
        let mixed = blend(&scene.estimates, &outcome.refined, xi)?;
        for (i, b) in mixed.iter().enumerate() {
            clipped += write_wav(b, dir.join(blended_name(xi, i)), format)?.clipped;
        }
        if let Some(refs) = &scene.references {
            let mut r = eval_permuted(&mixed, refs)?;
            r.xi = Some(xi);
            report.blends.push(r);
        }
    }
    if let Some(refs) = &scene.references {
        report.preceding = Some(eval_permuted(&scene.estimates, refs)?);
        report.refined = Some(eval_permuted(&outcome.refined, refs)?);
        report.sweep = blend_sweep(&scene.estimates, &outcome.refined, refs, &xi_grid(cfg.blend.sweep_steps))?;
    }
    if clipped > 0 {
        log::warn!("scene {}: clipped {clipped} samples on write", inputs.name);
    }
    write_branch_csv(&dir.join("branches.csv"), &outcome.blocks)?;
    log::info!(
        "scene {}: {} block(s), {} steps, {:.2}s",
        inputs.name,
        outcome.blocks.len(),
        outcome.schedule.steps(),
        started.elapsed().as_secs_f64()
    );

    let manifest = SceneManifest {
        name: inputs.name.clone(),
        seed,
        max_sigma_bar: outcome.max_sigma_bar,
        sigmas: outcome.schedule.sigmas().to_vec(),
        clamped_variance: outcome.variance.clamped,
        clipped_samples: clipped,
        blocks: outcome.blocks,
    };
    Ok((manifest, report))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::InvalidInput(format!("csv: {other:?}")),
    }
}

fn write_sweep_csv(path: &Path, reports: &[SceneReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["scene", "xi", "source", "si_sdr_db"]).map_err(csv_error)?;
    for r in reports {
        for e in &r.sweep {
            let xi = e.xi.unwrap_or(f64::NAN).to_string();
            for (i, v) in e.per_source.iter().enumerate() {
                w.write_record([r.name.as_str(), &xi, &(i + 1).to_string(), &v.to_string()])
                    .map_err(csv_error)?;
            }
            w.write_record([r.name.as_str(), &xi, "mean", &e.mean.to_string()])
                .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_branch_csv(path: &Path, blocks: &[crate::pipeline::BlockDiagnostics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["block", "t", "sigma", "low_noise", "high_noise", "unobserved"])
        .map_err(csv_error)?;
    for b in blocks {
        for s in &b.steps {
            w.write_record([
                b.block.to_string(),
                s.t.to_string(),
                s.sigma.to_string(),
                s.branches.low_noise.to_string(),
                s.branches.high_noise.to_string(),
                s.branches.unobserved.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `refined_<i>.wav` for `n` sources from a scene output directory.
pub fn read_refined(dir: &Path, n: usize) -> Result<Vec<AudioBuffer>> {
    (0..n).map(|i| read_wav(dir.join(refined_name(i)))).collect()
}
