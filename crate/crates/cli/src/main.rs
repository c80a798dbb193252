use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dsm_scrub::pipeline::{resolve_config, Outcome, Overrides, Pipeline, Stage, MANIFEST_FILE};
use dsm_scrub::retexture::TextureMode;
use dsm_scrub::Error;

#[derive(Parser)]
#[command(name = "dsm-scrub", version, about = "Remove dynamic occluders from textured DSM meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage in order, skipping those already up to date.
    Run(Common),
    /// Render color, height and triangle-id patches.
    Render(Common),
    /// Ingest, dilate and merge occluder masks.
    Masks(Common),
    /// Inpaint the color and height patches.
    Inpaint(Common),
    /// Write inpainted elevations into the mesh and weld vertices.
    Remesh(Common),
    /// Attach the inpainted color to the remeshed mesh.
    Retexture(Common),
    /// Compute entropy, EMD and elevation-difference heatmaps.
    Metrics(Common),
    /// Generate a synthetic scene with ground-truth masks.
    Synth(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input mesh (.gltf or .glb).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Directory of patch_{row}_{col}_mask.png class-id masks.
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground sampling distance in meters per pixel.
    #[arg(long)]
    gsd: Option<f64>,
    /// Square patch side length in pixels
    #[arg(long)]
    patch_px: Option<usize>,
    /// Patch overlap fraction in [0, 1).
    #[arg(long)]
    overlap: Option<f64>,
    /// Comma-separated class names to remove; empty selects none.
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<String>>,
    /// Dilation kernel side length in pixels.
    #[arg(long)]
    kernel: Option<usize>,
    /// harmonic, exemplar or external.
    #[arg(long)]
    backend: Option<String>,
    /// Command template for the external backend, with {image}, {mask} and
    /// {out} placeholders.
    #[arg(long)]
    external_command: Option<String>,
    /// Vertex merge distance in meters.
    #[arg(long)]
    merge_distance: Option<f64>,
    /// blend or resample.
    #[arg(long)]
    texture_mode: Option<String>,
    /// Worker threads for per-patch and per-vertex work
    #[arg(long)]
    workers: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long)]
    verbose: bool,
}

impl Common {
    fn overrides(&self) -> Result<Overrides, Error> {
        let texture_mode = self
            .texture_mode
            .as_deref()
            .map(str::parse::<TextureMode>)
            .transpose()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(Overrides {
            input: self.input.clone(),
            masks: self.masks.clone(),
            out: self.out.clone(),
            gsd: self.gsd,
            patch_px: self.patch_px,
            overlap: self.overlap,
            classes: self
                .classes
                .as_ref()
                .map(|c| c.iter().filter(|s| !s.is_empty()).cloned().collect()),
            kernel_px: self.kernel,
            backend: self.backend.clone(),
            external_command: self.external_command.clone(),
            merge_distance: self.merge_distance,
            texture_mode,
            workers: self.workers,
        })
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stages, common): (Vec<Stage>, &Common) = match &cli.command {
        Command::Run(c) => (Stage::PIPELINE.to_vec(), c),
        Command::Render(c) => (vec![Stage::Render], c),
        Command::Masks(c) => (vec![Stage::Masks], c),
        Command::Inpaint(c) => (vec![Stage::Inpaint], c),
        Command::Remesh(c) => (vec![Stage::Remesh], c),
        Command::Retexture(c) => (vec![Stage::Retexture], c),
        Command::Metrics(c) => (vec![Stage::Metrics], c),
        Command::Synth(c) => (vec![Stage::Synth], c),
    };
    let level = if common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let mut pipeline = match common
        .overrides()
        .and_then(|o| resolve_config(common.config.as_deref(), &o))
        .and_then(Pipeline::open)
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    // A closed stdout (e.g. piped into `head`) must not abort the run.
    let mut out = std::io::stdout().lock();
    for stage in stages {
        match pipeline.run(stage) {
            Ok(Outcome::Executed) => _ = writeln!(out, "{stage}: done"),
            Ok(Outcome::Skipped) => _ = writeln!(out, "{stage}: up to date"),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_STAGE);
            }
        }
    }
    for w in &pipeline.manifest().warnings {
        eprintln!("warning: {w}");
    }
    _ = writeln!(out, "manifest: {}", pipeline.dir().join(MANIFEST_FILE).display());
    ExitCode::SUCCESS
}
