use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use emstop::harness::Experiment;
use emstop::io::{write_image, write_text_image, ImageFormat};
use sha2::{Digest, Sha256};

use crate::{load_config, OutDir, Result};

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub out: OutDir,
    /// Which noise realization to draw; realization `i` matches trial `i` of a
    /// sweep.
    #[arg(long, default_value_t = 0)]
    pub realization: usize,
}

pub fn config_sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the data, PSFs, truth, true mean and a manifest.
///
/// Counts that fit 16 bits go to `data.pgm`; otherwise `data.txt`.
pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let (raw, config) = load_config(&args.config)?;
    let experiment = Experiment::new(&config)?;
    let data = experiment.sample_data(args.realization)?;
    let dir = args.out.create()?;

    let data_name = if data.is_u16_counts() {
        "data.pgm"
    } else {
        "data.txt"
    };
    write_image(&dir.join(data_name), &data, ImageFormat::from_extension(data_name.as_ref()))?;
    write_text_image(&dir.join("psf.txt"), experiment.reconstruction_psf().image())?;
    let exact = dir.join("psf_exact.txt");
    match experiment.generator_psf() {
        Some(psf) => write_text_image(&exact, psf.image())?,
        None if exact.exists() => fs::remove_file(&exact)?,
        None => {}
    }
    write_text_image(&dir.join("truth.txt"), experiment.x_true())?;
    write_text_image(&dir.join("lambda.txt"), experiment.lambda_true())?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "seed = {}", config.seed);
    let _ = writeln!(manifest, "config_sha256 = {}", config_sha256(&raw));
    let _ = writeln!(manifest, "mode = {}", config.mode);
    let _ = writeln!(manifest, "realization = {}", args.realization);
    let _ = writeln!(manifest, "dims = {}", data.dims());
    let _ = writeln!(manifest, "flux = {}", config.flux);
    let _ = writeln!(manifest, "background_level = {}", config.background_level);
    let _ = writeln!(manifest, "data = {data_name}");
    let _ = writeln!(manifest, "version = {}", env!("CARGO_PKG_VERSION"));
    fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}
