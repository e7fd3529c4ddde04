//! Raw measurement ingestion, per-cycle aggregation, scaling, sliding-window
//! framing and chronological splitting.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SohError};

/// Header of the raw per-sample CSV.
pub const RAW_HEADER: [&str; 6] = [
    "time_s",
    "current_A",
    "voltage_V",
    "temp_C",
    "segment",
    "cycle_index",
];

/// Header of the per-cycle CSV.
pub const CYCLE_HEADER: [&str; 6] = [
    "n",
    "avg_current_A",
    "avg_voltage_V",
    "avg_temp_C",
    "capacity_Ah",
    "soh",
];

/// Number of stress-factor features per cycle: N, avg I, avg V, avg T.
pub const NUM_FEATURES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    RandomWalk,
    ReferenceDischarge,
    Pulse,
    Charge,
}

impl FromStr for Segment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "random_walk" => Ok(Segment::RandomWalk),
            "reference_discharge" => Ok(Segment::ReferenceDischarge),
            "pulse" => Ok(Segment::Pulse),
            "charge" => Ok(Segment::Charge),
            other => Err(format!(
                "unknown segment `{other}` (expected random_walk, reference_discharge, pulse or charge)"
            )),
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Segment::RandomWalk => "random_walk",
            Segment::ReferenceDischarge => "reference_discharge",
            Segment::Pulse => "pulse",
            Segment::Charge => "charge",
        })
    }
}

/// One logged measurement. Discharge current is negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawSample {
    pub time_s: f64,
    pub current_a: f64,
    pub voltage_v: f64,
    pub temp_c: f64,
    pub segment: Segment,
    pub cycle_index: u64,
}

/// Stress factors and measured capacity of one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub n: u64,
    pub avg_current_a: f64,
    pub avg_voltage_v: f64,
    pub avg_temp_c: f64,
    pub capacity_ah: f64,
}

impl CycleRecord {
    /// Network input features `[N, avg I, avg V, avg T]`.
    pub fn features(&self) -> [f64; NUM_FEATURES] {
        [
            self.n as f64,
            self.avg_current_a,
            self.avg_voltage_v,
            self.avg_temp_c,
        ]
    }
}

fn parse_field<T: FromStr>(rec: &csv::StringRecord, idx: usize, line: u64) -> Result<T>
where
    T::Err: fmt::Display,
{
    let raw = rec.get(idx).ok_or_else(|| SohError::Parse {
        line,
        msg: format!("missing field `{}`", RAW_HEADER[idx]),
    })?;
    raw.trim().parse::<T>().map_err(|e| SohError::Parse {
        line,
        msg: format!("field `{}` = `{raw}`: {e}", RAW_HEADER[idx]),
    })
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let ok =
        found.len() == expected.len() && found.iter().zip(expected).all(|(a, b)| a.trim() == *b);
    if ok {
        Ok(())
    } else {
        Err(SohError::Data(format!(
            "bad header: expected `{}`, found `{}`",
            expected.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )))
    }
}

/// Parses the raw per-sample CSV, validating ordering and voltage range.
pub fn ingest<R: Read>(reader: R) -> Result<Vec<RawSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    check_header(rdr.headers()?, &RAW_HEADER)?;

    let mut samples: Vec<RawSample> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != RAW_HEADER.len() {
            return Err(SohError::Parse {
                line,
                msg: format!("expected {} fields, found {}", RAW_HEADER.len(), rec.len()),
            });
        }
        let sample = RawSample {
            time_s: parse_field(&rec, 0, line)?,
            current_a: parse_field(&rec, 1, line)?,
            voltage_v: parse_field(&rec, 2, line)?,
            temp_c: parse_field(&rec, 3, line)?,
            segment: parse_field(&rec, 4, line)?,
            cycle_index: parse_field(&rec, 5, line)?,
        };
        for (name, v) in [
            ("time_s", sample.time_s),
            ("current_A", sample.current_a),
            ("temp_C", sample.temp_c),
        ] {
            if !v.is_finite() {
                return Err(SohError::Parse {
                    line,
                    msg: format!("{name} is not finite"),
                });
            }
        }
        if !(sample.voltage_v > 0.0 && sample.voltage_v < 6.0) {
            return Err(SohError::Parse {
                line,
                msg: format!("voltage_V = {} outside (0, 6)", sample.voltage_v),
            });
        }
        if let Some(prev) = samples.last() {
            if sample.time_s < prev.time_s {
                return Err(SohError::Parse {
                    line,
                    msg: format!(
                        "time_s decreased from {} to {} (cycle {})",
                        prev.time_s, sample.time_s, sample.cycle_index
                    ),
                });
            }
            if sample.cycle_index < prev.cycle_index {
                return Err(SohError::Parse {
                    line,
                    msg: format!(
                        "cycle_index decreased from {} to {}",
                        prev.cycle_index, sample.cycle_index
                    ),
                });
            }
        }
        samples.push(sample);
    }
    Ok(samples)
}

/// Result of [`aggregate_cycles`]: kept cycles and how many were dropped for
/// lacking a reference discharge.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    pub records: Vec<CycleRecord>,
    pub dropped_cycles: usize,
}

/// Trapezoidal time average of `value` over `samples`; falls back to the
/// arithmetic mean when the samples span zero time.
fn time_weighted_mean(samples: &[RawSample], value: impl Fn(&RawSample) -> f64) -> f64 {
    let span = samples[samples.len() - 1].time_s - samples[0].time_s;
    if span <= 0.0 {
        return samples.iter().map(&value).sum::<f64>() / samples.len() as f64;
    }
    let integral: f64 = samples
        .windows(2)
        .map(|w| 0.5 * (value(&w[0]) + value(&w[1])) * (w[1].time_s - w[0].time_s))
        .sum();
    integral / span
}

/// Coulomb count of `|I|` over consecutive reference-discharge samples, in Ah.
pub fn reference_capacity_ah(samples: &[RawSample]) -> f64 {
    let amp_seconds: f64 = samples
        .windows(2)
        .filter(|w| {
            w[0].segment == Segment::ReferenceDischarge
                && w[1].segment == Segment::ReferenceDischarge
        })
        .map(|w| 0.5 * (w[0].current_a.abs() + w[1].current_a.abs()) * (w[1].time_s - w[0].time_s))
        .sum();
    amp_seconds / 3600.0
}

/// Groups samples by cycle and reduces each cycle to its stress factors and
/// reference-discharge capacity.
pub fn aggregate_cycles(samples: &[RawSample]) -> Result<Aggregation> {
    let mut records = Vec::new();
    let mut dropped = 0;
    for cycle in samples.chunk_by(|a, b| a.cycle_index == b.cycle_index) {
        let n = cycle[0].cycle_index;
        if records.last().is_some_and(|r: &CycleRecord| r.n >= n) {
            return Err(SohError::Data(format!(
                "cycle {n} is out of order; samples must be grouped by non-decreasing cycle_index"
            )));
        }
        let has_reference = cycle
            .iter()
            .any(|s| s.segment == Segment::ReferenceDischarge);
        let capacity_ah = reference_capacity_ah(cycle);
        if !has_reference || capacity_ah <= 0.0 {
            warn!("cycle {n}: no usable reference discharge, dropped");
            dropped += 1;
            continue;
        }
        records.push(CycleRecord {
            n,
            avg_current_a: time_weighted_mean(cycle, |s| s.current_a),
            avg_voltage_v: time_weighted_mean(cycle, |s| s.voltage_v),
            avg_temp_c: time_weighted_mean(cycle, |s| s.temp_c),
            capacity_ah,
        });
    }
    Ok(Aggregation {
        records,
        dropped_cycles: dropped,
    })
}

/// `capacity / rated_capacity` per record.
pub fn soh_from_capacity(records: &[CycleRecord], rated_capacity_ah: f64) -> Result<Vec<f64>> {
    if !(rated_capacity_ah > 0.0 && rated_capacity_ah.is_finite()) {
        return Err(SohError::InvalidConfig(format!(
            "rated capacity must be positive, got {rated_capacity_ah}"
        )));
    }
    Ok(records
        .iter()
        .map(|r| r.capacity_ah / rated_capacity_ah)
        .collect())
}

/// Cycle records paired with their SoH values.
#[derive(Debug, Clone, PartialEq)]
pub struct SohSeries {
    pub records: Vec<CycleRecord>,
    pub soh: Vec<f64>,
}

impl SohSeries {
    pub fn new(records: Vec<CycleRecord>, soh: Vec<f64>) -> Result<Self> {
        if records.len() != soh.len() {
            return Err(SohError::LengthMismatch {
                what: "records vs soh",
                left: records.len(),
                right: soh.len(),
            });
        }
        Ok(SohSeries { records, soh })
    }

    pub fn from_capacity(records: Vec<CycleRecord>, rated_capacity_ah: f64) -> Result<Self> {
        let soh = soh_from_capacity(&records, rated_capacity_ah)?;
        SohSeries::new(records, soh)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.features().to_vec()).collect()
    }
}

/// Writes the per-cycle CSV. Floats use the shortest round-trip form.
pub fn write_cycle_csv<W: Write>(mut w: W, series: &SohSeries) -> std::io::Result<()> {
    writeln!(w, "{}", CYCLE_HEADER.join(","))?;
    for (r, soh) in series.records.iter().zip(&series.soh) {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.n, r.avg_current_a, r.avg_voltage_v, r.avg_temp_c, r.capacity_ah, soh
        )?;
    }
    w.flush()
}

/// Reads a per-cycle CSV written by [`write_cycle_csv`].
pub fn read_cycle_csv<R: Read>(reader: R) -> Result<SohSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    check_header(rdr.headers()?, &CYCLE_HEADER)?;
    let mut records = Vec::new();
    let mut soh = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != CYCLE_HEADER.len() {
            return Err(SohError::Parse {
                line,
                msg: format!(
                    "expected {} fields, found {}",
                    CYCLE_HEADER.len(),
                    rec.len()
                ),
            });
        }
        let num = |idx: usize| -> Result<f64> {
            let raw = rec[idx].trim();
            let v: f64 = raw.parse().map_err(|e| SohError::Parse {
                line,
                msg: format!("field `{}` = `{raw}`: {e}", CYCLE_HEADER[idx]),
            })?;
            if !v.is_finite() {
                return Err(SohError::Parse {
                    line,
                    msg: format!("field `{}` is not finite", CYCLE_HEADER[idx]),
                });
            }
            Ok(v)
        };
        let n: u64 = rec[0].trim().parse().map_err(|e| SohError::Parse {
            line,
            msg: format!("field `n` = `{}`: {e}", &rec[0]),
        })?;
        if records.last().is_some_and(|r: &CycleRecord| r.n >= n) {
            return Err(SohError::Parse {
                line,
                msg: format!("cycle number {n} is not strictly increasing"),
            });
        }
        let record = CycleRecord {
            n,
            avg_current_a: num(1)?,
            avg_voltage_v: num(2)?,
            avg_temp_c: num(3)?,
            capacity_ah: num(4)?,
        };
        if record.capacity_ah <= 0.0 {
            return Err(SohError::Parse {
                line,
                msg: format!("capacity_Ah = {} must be positive", record.capacity_ah),
            });
        }
        records.push(record);
        soh.push(num(5)?);
    }
    SohSeries::new(records, soh)
}

/// Per-column min-max scaling to `[0, 1]`. Constant columns map to `0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| SohError::Data("cannot fit a scaler on zero rows".into()))?;
        let width = first.len();
        let mut min = vec![f64::INFINITY; width];
        let mut max = vec![f64::NEG_INFINITY; width];
        for row in rows {
            if row.len() != width {
                return Err(SohError::LengthMismatch {
                    what: "scaler row width",
                    left: row.len(),
                    right: width,
                });
            }
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        let scaler = Scaler { min, max };
        for j in scaler.constant_features() {
            warn!("feature {j} is constant ({}); scaled to 0", scaler.min[j]);
        }
        Ok(scaler)
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    pub fn constant_features(&self) -> Vec<usize> {
        (0..self.width())
            .filter(|&j| self.max[j] <= self.min[j])
            .collect()
    }

    fn check_width(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.width() {
            return Err(SohError::LengthMismatch {
                what: "feature count vs scaler",
                left: row.len(),
                right: self.width(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_width(row)?;
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let range = self.max[j] - self.min[j];
                if range > 0.0 {
                    (v - self.min[j]) / range
                } else {
                    0.0
                }
            })
            .collect())
    }

    pub fn invert(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_width(row)?;
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let range = self.max[j] - self.min[j];
                if range > 0.0 {
                    v * range + self.min[j]
                } else {
                    self.min[j]
                }
            })
            .collect())
    }

    pub fn apply_all(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

/// Fits a [`Scaler`] on the stress-factor features of `records`.
pub fn fit_scaler(records: &[CycleRecord]) -> Result<Scaler> {
    let rows: Vec<Vec<f64>> = records.iter().map(|r| r.features().to_vec()).collect();
    Scaler::fit(&rows)
}

/// `p` consecutive feature rows and the `k` SoH values that follow them.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// Index of the first input row in the source series.
    pub start: usize,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl WindowSample {
    /// Indices into the source series of the targets.
    pub fn target_indices(&self) -> std::ops::Range<usize> {
        let first = self.start + self.inputs.len();
        first..first + self.targets.len()
    }
}

/// Number of windows [`make_windows`] yields.
pub fn window_count(n: usize, p: usize, k: usize) -> usize {
    (n + 1).saturating_sub(p + k)
}

/// Frames the series as supervised samples: window `j` uses rows
/// `j..j+p` as inputs and `soh[j+p..j+p+k]` as targets.
pub fn make_windows(
    features: &[Vec<f64>],
    soh: &[f64],
    p: usize,
    k: usize,
) -> Result<Vec<WindowSample>> {
    if p == 0 || k == 0 {
        return Err(SohError::InvalidConfig(format!(
            "window p={p} and horizon k={k} must both be >= 1"
        )));
    }
    if features.len() != soh.len() {
        return Err(SohError::LengthMismatch {
            what: "features vs soh",
            left: features.len(),
            right: soh.len(),
        });
    }
    Ok((0..window_count(features.len(), p, k))
        .map(|j| WindowSample {
            start: j,
            inputs: features[j..j + p].to_vec(),
            targets: soh[j + p..j + p + k].to_vec(),
        })
        .collect())
}

/// Number of leading items that go to training for `train_fraction`.
pub fn train_len(n: usize, train_fraction: f64) -> Result<usize> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SohError::InvalidConfig(format!(
            "train fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    // Nudge so that e.g. 0.7 * 10 lands on 7 despite binary rounding.
    Ok(((train_fraction * n as f64) + 1e-9).floor() as usize)
}

/// Chronological split: the first `floor(fraction * n)` items train.
pub fn split_chrono<T: Clone>(items: &[T], train_fraction: f64) -> Result<(Vec<T>, Vec<T>)> {
    let cut = train_len(items.len(), train_fraction)?.min(items.len());
    Ok((items[..cut].to_vec(), items[cut..].to_vec()))
}
