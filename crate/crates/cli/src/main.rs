use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use apc_cli::config::{parse_algorithms, RunConfig};
use apc_cli::run::{cmd_bench, cmd_render, parse_sweep};

#[derive(Parser)]
#[command(
    name = "apc",
    about = "Distributed volume rendering testbed: moment-based compositing over arbitrary partitions, with exact sort-last and cost models for comparison"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene with the requested algorithms and write images and reports
    Render(CommonArgs),
    /// Run the pipelines over a sweep of rank counts and record scaling data
    Bench(BenchArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Config file to start from; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scene: sandwich, concentric, spikes or random
    #[arg(long)]
    scene: Option<String>,
    /// Number of simulated ranks
    #[arg(long)]
    ranks: Option<usize>,
    /// Scene grid resolution in voxels (scene default if omitted)
    #[arg(long)]
    resolution: Option<usize>,
    /// Shell count for the concentric and random scenes
    #[arg(long)]
    shells: Option<usize>,
    /// Seed for the random scene's partition
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    /// Number of cameras on the orbit
    #[arg(long)]
    orbit: Option<usize>,
    /// Ray marching step in world units
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    moment_bias: Option<f64>,
    #[arg(long)]
    overestimation: Option<f64>,
    #[arg(long)]
    absorbance_max: Option<f64>,
    /// Comma-separated: apc, sort_last, single_node_mboit, raymarch
    #[arg(long)]
    algorithms: Option<String>,
    /// Compare rendered pairs and write quality rows and diff images
    #[arg(long)]
    compare: bool,
    /// Exit nonzero if a comparison misses its threshold (implies --compare)
    #[arg(long)]
    check: bool,
    /// Also write PNG copies of every image
    #[arg(long)]
    png: bool,
    /// Composite over: black or white
    #[arg(long)]
    background: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated rank counts, e.g. 1,2,4,8
    #[arg(long)]
    sweep: String,
}

impl CommonArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(scene) = self.scene {
            config.scene = scene.parse()?;
        }
        if let Some(ranks) = self.ranks {
            config.ranks = ranks;
        }
        if let Some(resolution) = self.resolution {
            config.resolution = Some(resolution);
        }
        if let Some(shells) = self.shells {
            config.shells = shells;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(width) = self.width {
            config.width = width;
        }
        if let Some(height) = self.height {
            config.height = height;
        }
        if let Some(orbit) = self.orbit {
            config.orbit = orbit;
        }
        if let Some(step) = self.step {
            config.step = step;
        }
        if let Some(moment_bias) = self.moment_bias {
            config.moment_bias = moment_bias;
        }
        if let Some(overestimation) = self.overestimation {
            config.overestimation = overestimation;
        }
        if let Some(absorbance_max) = self.absorbance_max {
            config.absorbance_max = absorbance_max;
        }
        if let Some(algorithms) = self.algorithms {
            config.algorithms = parse_algorithms(&algorithms)?;
        }
        if self.compare {
            config.compare = true;
        }
        if self.check {
            config.check = true;
        }
        if self.png {
            config.png = true;
        }
        if let Some(background) = self.background {
            config.background = background.parse()?;
        }
        if let Some(out) = self.out {
            config.out = out;
        }
        if config.check {
            config.compare = true;
        }
        Ok(config)
    }
}

fn main() {
    if let Err(error) = run() {
        eprintln!("error: {error:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Render(args) => {
            let config = args.into_config()?;
            let outcome = cmd_render(&config)?;
            print!("{}", outcome.summary);
            println!("wrote {} images to {}", outcome.images.len(), config.out.display());
            if !outcome.failures.is_empty() {
                for failure in &outcome.failures {
                    eprintln!("threshold missed: {failure}");
                }
                if config.check {
                    std::process::exit(1);
                }
            }
        }
        Command::Bench(args) => {
            let sweep = parse_sweep(&args.sweep)?;
            let config = args.common.into_config()?;
            let outcome = cmd_bench(&config, &sweep)?;
            print!("{}", outcome.summary);
            println!("reports written to {}", config.out.display());
        }
    }
    Ok(())
}
