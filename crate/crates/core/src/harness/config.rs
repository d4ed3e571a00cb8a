use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::market::MarketConfig;

/// Per-PU channel counts of the desk-scale presets.
pub const SCALED_CHANNELS: [usize; 3] = [25, 75, 150];
/// Per-PU channel counts at full scale.
pub const FULL_SCALE_CHANNELS: [usize; 3] = [100, 300, 600];

const DEFAULT_SEEDS: u64 = 10;
const DEFAULT_OUT: &str = "results";

/// The three market sizes of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Case1,
    Case2,
    Case3,
}

impl Preset {
    pub fn num_sus(self) -> usize {
        match self {
            Preset::Case1 => 10,
            Preset::Case2 => 20,
            Preset::Case3 => 50,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Case1 => "case1",
            Preset::Case2 => "case2",
            Preset::Case3 => "case3",
        }
    }
}

/// Command line of the experiment runner. Every flag may also be given in
/// the TOML file passed with `--config`, under the same name.
#[derive(Debug, Clone, Default, Parser)]
#[command(name = "qpml", version, about = "Two-seller spectrum market experiments")]
pub struct Args {
    /// TOML file with any of the flags below as keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run one of the preset market sizes over three channel counts.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Number of SUs (M).
    #[arg(long)]
    pub sus: Option<usize>,
    /// Channels per PU (C); replaces the preset's channel grid.
    #[arg(long)]
    pub channels: Option<usize>,
    /// Iterations per run [default: 2000].
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Seeds per grid point; seeds are 1..=N [default: 10].
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Learning rate in (0, 1] [default: 0.1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Boltzmann temperature > 0 [default: 0.5].
    #[arg(long)]
    pub tau: Option<f64>,
    /// Price grid size [default: 11].
    #[arg(long)]
    pub price_levels: Option<usize>,
    /// Bid grid size [default: 21].
    #[arg(long)]
    pub bid_levels: Option<usize>,
    /// SU value of a won channel [default: 1.0].
    #[arg(long)]
    pub marginal_utility: Option<f64>,
    /// Seller cost per sold channel [default: 0].
    #[arg(long)]
    pub seller_cost: Option<f64>,
    /// Output root; each case writes to `<out>/<case>/` [default: results].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Use the full-scale channel grid for presets.
    #[arg(long)]
    pub full_scale: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct FileConfig {
    preset: Option<Preset>,
    sus: Option<usize>,
    channels: Option<usize>,
    iterations: Option<usize>,
    seeds: Option<u64>,
    alpha: Option<f64>,
    tau: Option<f64>,
    price_levels: Option<usize>,
    bid_levels: Option<usize>,
    marginal_utility: Option<f64>,
    seller_cost: Option<f64>,
    out: Option<PathBuf>,
    jobs: Option<usize>,
    full_scale: Option<bool>,
}

impl FileConfig {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|source| Error::ConfigFile {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// A grid of `(M, C)` points, each run over the same seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub case_id: String,
    /// `(num_sus, channels_per_pu)` points.
    pub grid: Vec<(usize, usize)>,
    pub seeds: Vec<u64>,
    /// Hyperparameters shared by every cell; counts and seed are overridden per cell.
    pub base: MarketConfig,
    /// Directory this case writes into.
    pub output_dir: PathBuf,
    pub jobs: Option<usize>,
}

impl ExperimentSpec {
    /// Config of one `(M, C, seed)` cell.
    pub fn cell_config(&self, num_sus: usize, channels_per_pu: usize, seed: u64) -> MarketConfig {
        MarketConfig {
            num_sus,
            channels_per_pu,
            seed,
            ..self.base.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::config("channels", "experiment grid is empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must be at least 1"));
        }
        if self.jobs == Some(0) {
            return Err(Error::config("jobs", "must be at least 1"));
        }
        for &(m, c) in &self.grid {
            self.cell_config(m, c, 0).validate().map_err(flag_names)?;
        }
        Ok(())
    }
}

/// Renames a config error from the struct field to the user-facing flag.
fn flag_names(err: Error) -> Error {
    match err {
        Error::Config { key, message } => {
            let flag = match key.as_str() {
                "num_sus" => "sus",
                "channels_per_pu" => "channels",
                "learning_rate" => "alpha",
                "temperature" => "tau",
                "marginal_utility" => "marginal-utility",
                "seller_cost" => "seller-cost",
                "bid_levels" => "bid-levels",
                "price_levels" => "price-levels",
                "max_iterations" => "iterations",
                _ => key.as_str(),
            };
            Error::Config {
                key: flag.to_string(),
                message,
            }
        }
        other => other,
    }
}

/// Builds the experiment from flags, an optional config file and defaults,
/// in that order of precedence.
pub fn parse_config(args: &Args) -> Result<ExperimentSpec> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let defaults = MarketConfig::default();

    let preset = args.preset.or(file.preset);
    let full_scale = args.full_scale || file.full_scale.unwrap_or(false);
    let sus = args
        .sus
        .or(file.sus)
        .or(preset.map(Preset::num_sus))
        .unwrap_or(defaults.num_sus);
    let channels: Vec<usize> = match (args.channels.or(file.channels), preset) {
        (Some(c), _) => vec![c],
        (None, Some(_)) if full_scale => FULL_SCALE_CHANNELS.to_vec(),
        (None, Some(_)) => SCALED_CHANNELS.to_vec(),
        (None, None) => vec![defaults.channels_per_pu],
    };
    let iterations = args
        .iterations
        .or(file.iterations)
        .unwrap_or(defaults.max_iterations);
    if iterations == 0 {
        return Err(Error::config("iterations", "must be at least 1"));
    }
    let seeds = args.seeds.or(file.seeds).unwrap_or(DEFAULT_SEEDS);
    if seeds == 0 {
        return Err(Error::config("seeds", "must be at least 1"));
    }

    let base = MarketConfig {
        num_sus: sus,
        channels_per_pu: channels[0],
        marginal_utility: args
            .marginal_utility
            .or(file.marginal_utility)
            .unwrap_or(defaults.marginal_utility),
        seller_cost: args.seller_cost.or(file.seller_cost).unwrap_or(defaults.seller_cost),
        bid_levels: args.bid_levels.or(file.bid_levels).unwrap_or(defaults.bid_levels),
        price_levels: args
            .price_levels
            .or(file.price_levels)
            .unwrap_or(defaults.price_levels),
        learning_rate: args.alpha.or(file.alpha).unwrap_or(defaults.learning_rate),
        temperature: args.tau.or(file.tau).unwrap_or(defaults.temperature),
        max_iterations: iterations,
        seed: 1,
    };
    let case_id = preset.map_or("custom", Preset::name).to_string();
    let out = args
        .out
        .clone()
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    let spec = ExperimentSpec {
        output_dir: out.join(&case_id),
        case_id,
        grid: channels.into_iter().map(|c| (sus, c)).collect(),
        seeds: (1..=seeds).collect(),
        base,
        jobs: args.jobs.or(file.jobs),
    };
    spec.validate()?;
    Ok(spec)
}
