//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seed = 20240611
//! mode = "inverse_crime"        # or "mismatched_psf"
//! psf_sigma = 3.0
//! flux = 625000.0
//! background_level = 100.0
//! n_realizations = 25
//! k_max = 2000
//! epsilon = 1e-3                # optional
//! psf_noise_scale = 1e4         # optional, mismatched_psf only
//! rekl_probe = "independent"    # optional, or "shared"
//!
//! [phantom]
//! kind = "synthetic"
//! width = 64
//! height = 64
//! ```
//!
//! A phantom may instead be loaded from an image file with
//! `kind = "file"` and `path = "..."`; relative paths resolve against the
//! directory of the config file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::em::{ReklProbe, DEFAULT_EPSILON};
use crate::{Error, Result};

/// Poisson intensity multiplier of the irregular data-generation PSF.
pub const DEFAULT_PSF_NOISE_SCALE: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Data generated with the reconstruction operator.
    InverseCrime,
    /// Data generated with a count-noise perturbation of the PSF.
    MismatchedPsf,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::InverseCrime => "inverse_crime",
            Mode::MismatchedPsf => "mismatched_psf",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhantomSource {
    Synthetic { width: usize, height: usize },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub mode: Mode,
    pub phantom: PhantomSource,
    pub psf_sigma: f64,
    /// Total counts of the rescaled object.
    pub flux: f64,
    /// Constant background, counts per pixel.
    pub background_level: f64,
    pub n_realizations: usize,
    pub k_max: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_noise_scale")]
    pub psf_noise_scale: f64,
    #[serde(default = "default_rekl_probe")]
    pub rekl_probe: ReklProbe,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_noise_scale() -> f64 {
    DEFAULT_PSF_NOISE_SCALE
}

fn default_rekl_probe() -> ReklProbe {
    ReklProbe::Independent
}

impl ExperimentConfig {
    /// Parses and validates a config. Relative phantom paths are kept as is.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file, resolving a relative phantom path against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let PhantomSource::File { path: p } = &mut config.phantom {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.flux > 0.0) || !self.flux.is_finite() {
            return bad(format!("flux must be > 0, got {}", self.flux));
        }
        if !(self.background_level >= 0.0) || !self.background_level.is_finite() {
            return bad(format!(
                "background_level must be >= 0, got {}",
                self.background_level
            ));
        }
        if self.n_realizations == 0 {
            return bad("n_realizations must be >= 1".into());
        }
        if self.k_max == 0 {
            return bad("k_max must be >= 1".into());
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(self.psf_sigma > 0.0) || !self.psf_sigma.is_finite() {
            return bad(format!("psf_sigma must be > 0, got {}", self.psf_sigma));
        }
        if !(self.psf_noise_scale > 0.0) || !self.psf_noise_scale.is_finite() {
            return bad(format!(
                "psf_noise_scale must be > 0, got {}",
                self.psf_noise_scale
            ));
        }
        if self.rekl_probe == ReklProbe::Off {
            return bad("rekl_probe must be \"independent\" or \"shared\"".into());
        }
        if let PhantomSource::Synthetic { width, height } = self.phantom {
            if width < 8 || height < 8 {
                return bad(format!("synthetic phantom must be at least 8x8, got {width}x{height}"));
            }
        }
        Ok(())
    }
}
