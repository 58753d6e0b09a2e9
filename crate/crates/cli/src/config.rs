//! Run configuration: defaults, the key=value file format, and flag
//! overrides.
//!
//! A config file starts with the version header and lists one field per
//! line. Every field is always written, so a saved file reproduces the run
//! exactly; flags given on the command line override file values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use apc_core::image::Background;
use apc_core::moments::{
    DEFAULT_ABSORBANCE_MAX, DEFAULT_MOMENT_BIAS, DEFAULT_OVERESTIMATION,
};
use apc_core::render::DEFAULT_STEP;
use apc_core::scene::{SceneKind, DEFAULT_ORBIT_RADIUS_SCALE, DEFAULT_SHELLS};

pub const CONFIG_HEADER: &str = "apc-config v1";

/// Rendering algorithms the driver can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    /// Distributed two-reduction pipeline.
    Apc,
    /// Exact segment-gathering baseline.
    SortLast,
    /// Both moment stages on a single node.
    SingleNodeMboit,
    /// Plain front-to-back ray marching of the whole volume.
    Raymarch,
}

impl FromStr for Algorithm {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "apc" => Ok(Algorithm::Apc),
            "sort_last" => Ok(Algorithm::SortLast),
            "single_node_mboit" => Ok(Algorithm::SingleNodeMboit),
            "raymarch" => Ok(Algorithm::Raymarch),
            other => bail!(
                "unknown algorithm '{other}' (expected apc, sort_last, single_node_mboit or raymarch)"
            ),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Apc => "apc",
            Algorithm::SortLast => "sort_last",
            Algorithm::SingleNodeMboit => "single_node_mboit",
            Algorithm::Raymarch => "raymarch",
        })
    }
}

/// Everything one `render` or `bench` invocation needs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scene: SceneKind,
    pub ranks: usize,
    /// Voxel resolution of the scene grid; `None` picks the scene's default.
    pub resolution: Option<usize>,
    pub shells: usize,
    /// Drives the random scene's partition; other scenes ignore it.
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    /// Cameras on the orbit around the scene.
    pub orbit: usize,
    pub orbit_radius: f64,
    pub step: f64,
    pub moment_bias: f64,
    pub overestimation: f64,
    pub absorbance_max: f64,
    pub algorithms: Vec<Algorithm>,
    pub compare: bool,
    pub check: bool,
    pub png: bool,
    pub background: Background,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: SceneKind::Sandwich,
            ranks: 2,
            resolution: None,
            shells: DEFAULT_SHELLS,
            seed: 0,
            width: 512,
            height: 512,
            orbit: 1,
            orbit_radius: DEFAULT_ORBIT_RADIUS_SCALE,
            step: DEFAULT_STEP,
            moment_bias: DEFAULT_MOMENT_BIAS,
            overestimation: DEFAULT_OVERESTIMATION,
            absorbance_max: DEFAULT_ABSORBANCE_MAX,
            algorithms: vec![Algorithm::Apc, Algorithm::SortLast],
            compare: false,
            check: false,
            png: false,
            background: Background::Black,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            bail!("image dimensions must be at least 1x1");
        }
        if self.ranks == 0 {
            bail!("need at least one rank");
        }
        if self.orbit == 0 {
            bail!("need at least one camera on the orbit");
        }
        if self.algorithms.is_empty() {
            bail!("no algorithms requested");
        }
        Ok(())
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CONFIG_HEADER}");
        let _ = writeln!(out, "scene={}", self.scene);
        let _ = writeln!(out, "ranks={}", self.ranks);
        let _ = writeln!(
            out,
            "resolution={}",
            self.resolution.map(|r| r.to_string()).unwrap_or_default()
        );
        let _ = writeln!(out, "shells={}", self.shells);
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "width={}", self.width);
        let _ = writeln!(out, "height={}", self.height);
        let _ = writeln!(out, "orbit={}", self.orbit);
        let _ = writeln!(out, "orbit_radius={}", self.orbit_radius);
        let _ = writeln!(out, "step={}", self.step);
        let _ = writeln!(out, "moment_bias={}", self.moment_bias);
        let _ = writeln!(out, "overestimation={}", self.overestimation);
        let _ = writeln!(out, "absorbance_max={}", self.absorbance_max);
        let algorithms: Vec<String> = self.algorithms.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(out, "algorithms={}", algorithms.join(","));
        let _ = writeln!(out, "compare={}", self.compare);
        let _ = writeln!(out, "check={}", self.check);
        let _ = writeln!(out, "png={}", self.png);
        let _ = writeln!(out, "background={}", self.background);
        let _ = writeln!(out, "out={}", self.out.display());
        out
    }

    pub fn from_config_string(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some(CONFIG_HEADER) => {}
            Some(other) => bail!("unsupported config header '{other}' (expected '{CONFIG_HEADER}')"),
            None => bail!("empty config"),
        }
        let mut config = RunConfig::default();
        for (number, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key=value, got '{line}'", number + 2))?;
            config
                .set(key.trim(), value.trim())
                .with_context(|| format!("line {}", number + 2))?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_config_string(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_config_string())
            .with_context(|| format!("writing config {}", path.display()))
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "scene" => self.scene = value.parse()?,
            "ranks" => self.ranks = value.parse().context("ranks")?,
            "resolution" => {
                self.resolution = if value.is_empty() {
                    None
                } else {
                    Some(value.parse().context("resolution")?)
                }
            }
            "shells" => self.shells = value.parse().context("shells")?,
            "seed" => self.seed = value.parse().context("seed")?,
            "width" => self.width = value.parse().context("width")?,
            "height" => self.height = value.parse().context("height")?,
            "orbit" => self.orbit = value.parse().context("orbit")?,
            "orbit_radius" => self.orbit_radius = value.parse().context("orbit_radius")?,
            "step" => self.step = value.parse().context("step")?,
            "moment_bias" => self.moment_bias = value.parse().context("moment_bias")?,
            "overestimation" => self.overestimation = value.parse().context("overestimation")?,
            "absorbance_max" => self.absorbance_max = value.parse().context("absorbance_max")?,
            "algorithms" => self.algorithms = parse_algorithms(value)?,
            "compare" => self.compare = parse_bool(value)?,
            "check" => self.check = parse_bool(value)?,
            "png" => self.png = parse_bool(value)?,
            "background" => self.background = value.parse()?,
            "out" => self.out = PathBuf::from(value),
            other => bail!("unknown config key '{other}'"),
        }
        Ok(())
    }
}

pub fn parse_algorithms(value: &str) -> Result<Vec<Algorithm>> {
    let mut algorithms = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let algorithm: Algorithm = part.parse()?;
        if !algorithms.contains(&algorithm) {
            algorithms.push(algorithm);
        }
    }
    if algorithms.is_empty() {
        bail!("algorithm list is empty");
    }
    Ok(algorithms)
}

fn parse_bool(value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => bail!("expected true or false, got '{other}'"),
    }
}
