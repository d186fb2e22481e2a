use std::path::PathBuf;

use arena_core::perturb::{color_swap, color_swap_rgba, pose_permutations, swap_background, SceneManifest};
use image::DynamicImage;

use crate::{CliError, Global};

#[derive(Debug, clap::Subcommand)]
pub enum Command {
    /// Blend background pixels toward their BGR counterpart.
    Color {
        #[arg(long)]
        alpha: f64,
        /// 8-bit mask; pixels at 128 or above are recolored.
        #[arg(long)]
        mask: Option<PathBuf>,
        input: PathBuf,
        output: PathBuf,
    },
    /// Write one scene per object-position permutation.
    Poses { scene: PathBuf, outdir: PathBuf },
    /// Replace the scene background.
    Bg {
        #[arg(long)]
        id: String,
        /// Allowed background ids, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "bg-1,bg-2,bg-3,bg-4,bg-5")]
        catalog: Vec<String>,
        scene: PathBuf,
        output: PathBuf,
    },
}

fn load_scene(path: &PathBuf) -> Result<SceneManifest, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    SceneManifest::from_json(&text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: serde::Serialize>(path: &PathBuf, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("scene serializes") + "\n";
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn run(global: &Global, command: Command) -> Result<(), CliError> {
    match command {
        Command::Color { alpha, mask, input, output } => {
            let img = image::open(&input).map_err(|e| CliError::io(&input, e))?;
            let mask = match &mask {
                Some(p) => Some(image::open(p).map_err(|e| CliError::io(p, e))?.into_luma8()),
                None => None,
            };
            let out = if img.color().has_alpha() {
                DynamicImage::ImageRgba8(
                    color_swap_rgba(&img.into_rgba8(), mask.as_ref(), alpha)
                        .map_err(|e| CliError::input(e.to_string()))?,
                )
            } else {
                DynamicImage::ImageRgb8(
                    color_swap(&img.into_rgb8(), mask.as_ref(), alpha).map_err(|e| CliError::input(e.to_string()))?,
                )
            };
            out.save_with_format(&output, image::ImageFormat::Png).map_err(|e| CliError::io(&output, e))
        }
        Command::Poses { scene, outdir } => {
            let manifest = load_scene(&scene)?;
            let variants = pose_permutations(&manifest, global.seed).map_err(|e| CliError::input(e.to_string()))?;
            std::fs::create_dir_all(&outdir).map_err(|e| CliError::io(&outdir, e))?;
            for (k, v) in variants.iter().enumerate() {
                write_json(&outdir.join(format!("{}-pose-{k:03}.json", manifest.scene_id)), v)?;
            }
            Ok(())
        }
        Command::Bg { id, catalog, scene, output } => {
            let manifest = load_scene(&scene)?;
            let swapped = swap_background(&manifest, &id, &catalog).map_err(|e| CliError::input(e.to_string()))?;
            write_json(&output, &swapped)
        }
    }
}
