//! `--config` file loading and flag merging.
//!
//! Precedence, lowest first: built-in defaults, the JSON config file, then
//! command-line flags.

use std::path::Path;

use clap::Args;
use serde::Deserialize;
use soh_core::synth::SynthConfig;
use soh_core::trainer::TrainConfig;

/// Default rated capacity used to normalize ingested capacities, in Ah.
pub const DEFAULT_RATED_CAPACITY_AH: f64 = 2.2;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetOptions {
    pub rated_capacity_ah: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            rated_capacity_ah: DEFAULT_RATED_CAPACITY_AH,
        }
    }
}

/// Contents of a `--config` file. Every section and field is optional.
///
/// ```json
/// { "train": { "hidden_size": 16, "epochs": 200 },
///   "synth": { "n_cycles": 400 },
///   "dataset": { "rated_capacity_ah": 2.0 } }
/// ```
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub dataset: DatasetOptions,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Training flags shared by `train` and `eval`.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainFlags {
    /// LSTM hidden units
    #[arg(long)]
    pub hidden_size: Option<usize>,
    /// Input window length p, in cycles
    #[arg(long)]
    pub window: Option<usize>,
    /// Forecast horizon k, in cycles
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Windows per mini-batch; 0 trains full-batch
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Seed for initialization and shuffling
    #[arg(long)]
    pub seed: Option<u64>,
}

impl TrainFlags {
    pub fn apply(&self, base: TrainConfig) -> TrainConfig {
        TrainConfig {
            hidden_size: self.hidden_size.unwrap_or(base.hidden_size),
            window: self.window.unwrap_or(base.window),
            horizon: self.horizon.unwrap_or(base.horizon),
            epochs: self.epochs.unwrap_or(base.epochs),
            lr: self.lr.unwrap_or(base.lr),
            beta1: self.beta1.unwrap_or(base.beta1),
            beta2: self.beta2.unwrap_or(base.beta2),
            epsilon: self.epsilon.unwrap_or(base.epsilon),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            seed: self.seed.unwrap_or(base.seed),
            train_fraction: base.train_fraction,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthFlags {
    #[arg(long)]
    pub n_cycles: Option<usize>,
    /// Rated capacity in Ah
    #[arg(long)]
    pub rated_capacity: Option<f64>,
    /// Voltage/temperature fade coefficient per cycle
    #[arg(long)]
    pub k_cal: Option<f64>,
    /// Current fade coefficient per cycle and amp
    #[arg(long)]
    pub k_cyc: Option<f64>,
    /// Exponential temperature factor per 10 degC
    #[arg(long)]
    pub temp_sensitivity: Option<f64>,
    /// Capacity noise standard deviation in Ah
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SynthFlags {
    pub fn apply(&self, base: SynthConfig) -> SynthConfig {
        SynthConfig {
            n_cycles: self.n_cycles.unwrap_or(base.n_cycles),
            rated_capacity_ah: self.rated_capacity.unwrap_or(base.rated_capacity_ah),
            k_cal: self.k_cal.unwrap_or(base.k_cal),
            k_cyc: self.k_cyc.unwrap_or(base.k_cyc),
            temp_sensitivity: self.temp_sensitivity.unwrap_or(base.temp_sensitivity),
            noise_std: self.noise_std.unwrap_or(base.noise_std),
            seed: self.seed.unwrap_or(base.seed),
        }
    }
}
