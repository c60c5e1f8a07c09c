//! Run configuration files and the manifests written next to their outputs.
//!
//! A manifest embeds the fully resolved configuration, so `refine` accepts a
//! manifest wherever it accepts a config.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::degradation::Design;
use crate::denoiser::DenoiserBinding;
use crate::pipeline::{BlockDiagnostics, RefineSettings, SamplerSpec};
use crate::signal::{SampleFormat, StftConfig};
use crate::variance::VarianceDesign;
use crate::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub scenes: Vec<SceneInputs>,
    #[serde(default)]
    pub design: Design,
    #[serde(default)]
    pub stft: StftConfig,
    #[serde(default)]
    pub variance: VarianceDesign,
    #[serde(default)]
    pub sampler: SamplerSpec,
    #[serde(default)]
    pub denoiser: DenoiserBinding,
    #[serde(default)]
    pub blend: BlendSpec,
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneInputs {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<PathBuf>,
    pub estimates: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub references: Option<Vec<PathBuf>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlendSpec {
    /// Weights of the preceding estimate for which blended audio is written.
    pub xi: Vec<f64>,
    /// Grid resolution of the scored sweep, run when references are given.
    pub sweep_steps: usize,
}

impl Default for BlendSpec {
    fn default() -> Self {
        Self {
            xi: vec![0.8],
            sweep_steps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    #[serde(default)]
    pub format: SampleFormat,
}

impl RunConfig {
    /// Reads a config or a manifest, resolving relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::config("$", format!("{}: {e}", path.display())))?;
        let (value, prefix) = match value.get("manifest_version") {
            Some(_) => (value.get("config").cloned().unwrap_or_default(), "config."),
            None => (value, ""),
        };
        let mut cfg: RunConfig = from_value(value, prefix)?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let base = std::path::absolute(if base.as_os_str().is_empty() { Path::new(".") } else { &base })?;
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for s in &mut self.scenes {
            s.mixture.iter_mut().for_each(join);
            s.estimates.iter_mut().for_each(join);
            s.references.iter_mut().flatten().for_each(join);
        }
        join(&mut self.output.dir);
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(
                "version",
                format!("unsupported version {}, expected {CONFIG_VERSION}", self.version),
            ));
        }
        if self.scenes.is_empty() {
            return Err(Error::config("scenes", "at least one scene is required"));
        }
        if self.design == Design::Custom {
            return Err(Error::config("design", "expected `isolated` or `shared`"));
        }
        let mut names = HashSet::new();
        for (i, s) in self.scenes.iter().enumerate() {
            let at = |field: &str| format!("scenes[{i}].{field}");
            let safe = !s.name.is_empty()
                && s.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
                && !s.name.starts_with('.');
            if !safe {
                return Err(Error::config(at("name"), "use letters, digits, `-`, `_` or `.`"));
            }
            if !names.insert(&s.name) {
                return Err(Error::config(at("name"), format!("duplicate scene `{}`", s.name)));
            }
            if s.estimates.is_empty() {
                return Err(Error::config(at("estimates"), "at least one estimate is required"));
            }
            if self.design == Design::Shared && s.mixture.is_none() {
                return Err(Error::config(at("mixture"), "shared design requires mixture"));
            }
            match &s.references {
                Some(r) if r.len() != s.estimates.len() => {
                    return Err(Error::config(
                        at("references"),
                        format!("{} references for {} estimates", r.len(), s.estimates.len()),
                    ))
                }
                None if self.denoiser.needs_reference() => {
                    return Err(Error::config(at("references"), "oracle denoiser requires references"))
                }
                _ => {}
            }
        }
        self.stft.validate()?;
        self.variance.validate()?;
        self.denoiser.validate()?;
        for (i, xi) in self.blend.xi.iter().enumerate() {
            if !(0.0..=1.0).contains(xi) {
                return Err(Error::config(format!("blend.xi[{i}]"), format!("{xi} outside [0, 1]")));
            }
        }
        if self.blend.sweep_steps == 0 {
            return Err(Error::config("blend.sweep_steps", "must be positive"));
        }
        let s = &self.sampler;
        if !(0.0..=1.0).contains(&s.eta) {
            return Err(Error::config("sampler.eta", format!("{} not in [0, 1]", s.eta)));
        }
        if !(0.0..=2.0).contains(&s.eta_b) {
            return Err(Error::config("sampler.eta_b", format!("{} not in [0, 2]", s.eta_b)));
        }
        if s.record_every.is_some() {
            return Err(Error::config("sampler.record_every", "trajectories are not written by refine"));
        }
        Ok(())
    }

    pub fn settings(&self) -> RefineSettings {
        RefineSettings {
            design: self.design,
            stft: self.stft,
            variance: self.variance,
            sampler: self.sampler.clone(),
            denoiser: self.denoiser.clone(),
        }
    }
}

/// Deserializes with a config path attached to every error.
pub fn from_value<T: DeserializeOwned>(value: serde_json::Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "$".to_string() } else { format!("{prefix}{path}") };
        Error::config(path, e.into_inner().to_string())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Software {
    pub name: String,
    pub version: String,
}

impl Software {
    pub fn current() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub name: String,
    pub seed: u64,
    pub max_sigma_bar: f64,
    pub sigmas: Vec<f64>,
    pub clamped_variance: usize,
    pub clipped_samples: usize,
    pub blocks: Vec<BlockDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub software: Software,
    pub config: RunConfig,
    pub scenes: Vec<SceneManifest>,
}
