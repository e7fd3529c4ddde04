//! Synthetic capacity-fade data with a known dependence on the stress factors.
//!
//! Per cycle `n` the generator draws an average current magnitude, an average
//! voltage and a random-walked temperature, then accumulates a fade increment
//!
//! ```text
//! delta_n = k_cal * exp(E * (T_n - 25) / 10) * V_n + k_cyc * |I_n|
//! capacity_n = rated * (1 - sum_{j <= n} delta_j) + noise
//! ```
//!
//! The functional form is a test oracle, not a cell model.

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{CycleRecord, SohSeries};
use crate::error::{Result, SohError};
use crate::seeding::{self, purpose};

pub const CURRENT_RANGE_A: (f64, f64) = (0.5, 4.0);
pub const VOLTAGE_RANGE_V: (f64, f64) = (3.3, 4.1);
pub const TEMP_RANGE_C: (f64, f64) = (20.0, 40.0);
const TEMP_START_C: f64 = 25.0;
const TEMP_STEP_STD_C: f64 = 0.5;
const MAX_FADE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_cycles: usize,
    pub rated_capacity_ah: f64,
    /// Calendar-like coefficient, scaled by voltage and temperature.
    pub k_cal: f64,
    /// Throughput coefficient, scaled by current magnitude.
    pub k_cyc: f64,
    /// Exponential temperature factor per 10 degC above 25 degC.
    pub temp_sensitivity: f64,
    /// Standard deviation of capacity measurement noise, in Ah.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let rated = 2.2;
        SynthConfig {
            n_cycles: 600,
            rated_capacity_ah: rated,
            k_cal: 3e-5,
            k_cyc: 7.5e-5,
            temp_sensitivity: std::f64::consts::LN_2,
            noise_std: 0.005 * rated,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cycles == 0 {
            return Err(SohError::InvalidConfig("n_cycles must be >= 1".into()));
        }
        if !(self.rated_capacity_ah > 0.0 && self.rated_capacity_ah.is_finite()) {
            return Err(SohError::InvalidConfig(format!(
                "rated capacity must be positive, got {}",
                self.rated_capacity_ah
            )));
        }
        for (name, v) in [
            ("k_cal", self.k_cal),
            ("k_cyc", self.k_cyc),
            ("temp_sensitivity", self.temp_sensitivity),
            ("noise_std", self.noise_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SohError::InvalidConfig(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Generated records; `truncated_at` is set when cumulative fade reached 90%
/// before `n_cycles` were produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub records: Vec<CycleRecord>,
    pub truncated_at: Option<usize>,
}

impl Synthesis {
    pub fn into_series(self, rated_capacity_ah: f64) -> Result<SohSeries> {
        SohSeries::from_capacity(self.records, rated_capacity_ah)
    }
}

pub fn generate(config: &SynthConfig) -> Result<Synthesis> {
    config.validate()?;
    let mut rng = seeding::rng_for(config.seed, purpose::SYNTH);
    let temp_step = Normal::new(0.0, TEMP_STEP_STD_C).expect("valid std");
    let noise = Normal::new(0.0, config.noise_std)
        .map_err(|e| SohError::InvalidConfig(format!("noise_std: {e}")))?;

    let rated = config.rated_capacity_ah;
    let mut temp = TEMP_START_C;
    let mut fade = 0.0;
    let mut records = Vec::with_capacity(config.n_cycles);
    let mut truncated_at = None;

    for n in 0..config.n_cycles {
        let current = rng.gen_range(CURRENT_RANGE_A.0..=CURRENT_RANGE_A.1);
        let voltage = rng.gen_range(VOLTAGE_RANGE_V.0..=VOLTAGE_RANGE_V.1);
        temp = (temp + temp_step.sample(&mut rng)).clamp(TEMP_RANGE_C.0, TEMP_RANGE_C.1);
        let scatter = noise.sample(&mut rng);

        let delta = config.k_cal * (config.temp_sensitivity * (temp - 25.0) / 10.0).exp() * voltage
            + config.k_cyc * current;
        if fade + delta >= MAX_FADE {
            warn!("cumulative fade reached 90% at cycle {n}; truncating");
            truncated_at = Some(n);
            break;
        }
        fade += delta;
        let capacity = (rated * (1.0 - fade) + scatter).max(0.1 * rated);
        records.push(CycleRecord {
            n: n as u64 + 1,
            avg_current_a: -current,
            avg_voltage_v: voltage,
            avg_temp_c: temp,
            capacity_ah: capacity,
        });
    }
    Ok(Synthesis {
        records,
        truncated_at,
    })
}
