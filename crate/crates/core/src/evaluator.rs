//! Error metrics and the train/test split-ratio experiment.

use std::thread;

use serde::Serialize;

use crate::dataset::{self, make_windows, Scaler, SohSeries, WindowSample};
use crate::error::{Result, SohError};
use crate::trainer::{self, Checkpoint, TrainConfig, TrainReport, Trainer};

/// Note attached to every results table: the percentage criterion is scored
/// as MAPE on SoH, while MSE is reported in squared SoH units.
pub const METRIC_NOTE: &str = "note: the <5% error target is evaluated as mape_percent on SoH; \
mse is in squared SoH units and is reported alongside, not as a percentage";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub mse: f64,
    pub rmse: f64,
    pub mape_percent: f64,
    pub max_abs_error: f64,
    pub n_points: usize,
}

pub fn compute_metrics(pred: &[f64], actual: &[f64]) -> Result<MetricReport> {
    if pred.len() != actual.len() {
        return Err(SohError::LengthMismatch {
            what: "predictions vs actuals",
            left: pred.len(),
            right: actual.len(),
        });
    }
    if pred.is_empty() {
        return Err(SohError::Data("no points to score".into()));
    }
    if let Some(pos) = actual.iter().position(|&a| a <= 0.0) {
        return Err(SohError::Data(format!(
            "MAPE undefined: actual value {} at index {pos} is not positive",
            actual[pos]
        )));
    }
    let n = pred.len() as f64;
    let mut sq = 0.0;
    let mut pct = 0.0;
    let mut max_abs = 0.0_f64;
    for (&p, &a) in pred.iter().zip(actual) {
        let err = p - a;
        sq += err * err;
        pct += err.abs() / a;
        max_abs = max_abs.max(err.abs());
    }
    let mse = sq / n;
    Ok(MetricReport {
        mse,
        rmse: mse.sqrt(),
        mape_percent: 100.0 * pct / n,
        max_abs_error: max_abs,
        n_points: pred.len(),
    })
}

/// How test-partition predictions are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalMode {
    /// Frozen model, each test window predicted from measured inputs.
    #[default]
    OneStepAhead,
    /// After predicting a window, take one online gradient step on it once
    /// its target has been observed, continuing the training Adam state.
    OnlineUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictionPoint {
    pub n: u64,
    pub soh_actual: f64,
    pub soh_pred: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub metrics: MetricReport,
    pub predictions: Vec<PredictionPoint>,
    pub train_report: TrainReport,
    pub n_train_windows: usize,
    pub checkpoint: Checkpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitOutcome {
    Done(Box<SplitResult>),
    /// Too few records to form a train or test window at this ratio.
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitRow {
    pub train_fraction: f64,
    pub outcome: SplitOutcome,
}

impl SplitRow {
    pub fn result(&self) -> Option<&SplitResult> {
        match &self.outcome {
            SplitOutcome::Done(r) => Some(r),
            SplitOutcome::Infeasible(_) => None,
        }
    }
}

/// Scalers and windows for one chronological split. Both scalers are fitted
/// on the training partition only; windows never straddle the split.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSplit {
    /// Number of leading records in the training partition.
    pub cut: usize,
    pub scaler: Scaler,
    pub target_scaler: Scaler,
    pub train_windows: Vec<WindowSample>,
    pub test_windows: Vec<WindowSample>,
}

fn partition_windows(
    series: &SohSeries,
    range: std::ops::Range<usize>,
    scaler: &Scaler,
    target_scaler: &Scaler,
    p: usize,
    k: usize,
) -> Result<Vec<WindowSample>> {
    let feats = scaler.apply_all(&series.features()[range.clone()])?;
    let targets = series.soh[range.clone()]
        .iter()
        .map(|&v| target_scaler.apply(&[v]).map(|x| x[0]))
        .collect::<Result<Vec<f64>>>()?;
    let mut windows = make_windows(&feats, &targets, p, k)?;
    for w in &mut windows {
        w.start += range.start;
    }
    Ok(windows)
}

/// Splits `series` chronologically and frames both partitions.
pub fn prepare_split(
    series: &SohSeries,
    train_fraction: f64,
    p: usize,
    k: usize,
) -> Result<PreparedSplit> {
    let cut = dataset::train_len(series.len(), train_fraction)?;
    if cut == 0 {
        return Err(SohError::Data(format!(
            "train fraction {train_fraction} of {} records leaves no training data",
            series.len()
        )));
    }
    let scaler = dataset::fit_scaler(&series.records[..cut])?;
    let target_rows: Vec<Vec<f64>> = series.soh[..cut].iter().map(|&v| vec![v]).collect();
    let target_scaler = Scaler::fit(&target_rows)?;
    let train_windows = partition_windows(series, 0..cut, &scaler, &target_scaler, p, k)?;
    let test_windows = partition_windows(series, cut..series.len(), &scaler, &target_scaler, p, k)?;
    Ok(PreparedSplit {
        cut,
        scaler,
        target_scaler,
        train_windows,
        test_windows,
    })
}

/// Trains on the first `train_fraction` of the series and scores
/// one-step-ahead predictions over the rest.
pub fn run_split(
    series: &SohSeries,
    train_fraction: f64,
    config: &TrainConfig,
    mode: EvalMode,
) -> Result<SplitOutcome> {
    let config = TrainConfig {
        train_fraction,
        ..*config
    };
    config.validate()?;
    let (p, k) = (config.window, config.horizon);
    if dataset::train_len(series.len(), train_fraction)? == 0 {
        return Ok(SplitOutcome::Infeasible("empty training partition".into()));
    }
    let split = prepare_split(series, train_fraction, p, k)?;
    if split.train_windows.is_empty() || split.test_windows.is_empty() {
        return Ok(SplitOutcome::Infeasible(format!(
            "{} train / {} test records yield {} train and {} test windows for p={p}, k={k}",
            split.cut,
            series.len() - split.cut,
            split.train_windows.len(),
            split.test_windows.len()
        )));
    }

    let mut tr = Trainer::for_windows(config, &split.train_windows)?;
    let train_report = tr.fit(&split.train_windows)?;

    let mut predictions = Vec::with_capacity(split.test_windows.len());
    for w in &split.test_windows {
        let scaled = trainer::predict_window(&tr.params, &w.inputs, k)?[0];
        let idx = w.target_indices().start;
        predictions.push(PredictionPoint {
            n: series.records[idx].n,
            soh_actual: series.soh[idx],
            soh_pred: split.target_scaler.invert(&[scaled])?[0],
        });
        if mode == EvalMode::OnlineUpdate {
            trainer::online_update(&mut tr.params, &mut tr.adam, w)?;
        }
    }
    if predictions.iter().any(|pt| !pt.soh_pred.is_finite()) {
        return Err(SohError::Numeric("non-finite test prediction".into()));
    }
    let pred: Vec<f64> = predictions.iter().map(|pt| pt.soh_pred).collect();
    let actual: Vec<f64> = predictions.iter().map(|pt| pt.soh_actual).collect();
    let metrics = compute_metrics(&pred, &actual)?;
    Ok(SplitOutcome::Done(Box::new(SplitResult {
        metrics,
        predictions,
        train_report,
        n_train_windows: split.train_windows.len(),
        checkpoint: Checkpoint {
            config,
            scaler: split.scaler,
            target_scaler: split.target_scaler,
            params: tr.params,
        },
    })))
}

/// Runs [`run_split`] for every ratio, at most `jobs` at a time, and returns
/// rows sorted by train fraction, largest first.
pub fn run_split_experiment(
    series: &SohSeries,
    ratios: &[f64],
    config: &TrainConfig,
    mode: EvalMode,
    jobs: usize,
) -> Result<Vec<SplitRow>> {
    if ratios.is_empty() {
        return Err(SohError::InvalidConfig("no train fractions given".into()));
    }
    for &r in ratios {
        dataset::train_len(series.len(), r)?;
    }
    let mut sorted = ratios.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));

    let jobs = jobs.max(1);
    let mut rows = Vec::with_capacity(sorted.len());
    for chunk in sorted.chunks(jobs) {
        let outcomes: Vec<Result<SplitOutcome>> = if chunk.len() == 1 {
            vec![run_split(series, chunk[0], config, mode)]
        } else {
            thread::scope(|s| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|&r| s.spawn(move || run_split(series, r, config, mode)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("split worker panicked"))
                    .collect()
            })
        };
        for (&train_fraction, outcome) in chunk.iter().zip(outcomes) {
            rows.push(SplitRow {
                train_fraction,
                outcome: outcome?,
            });
        }
    }
    Ok(rows)
}

/// Header of the results table.
pub const RESULTS_HEADER: &str = "train_fraction,mse,rmse,mape_percent,max_abs_error,n_test_points";

/// Writes one row per ratio; infeasible rows carry `infeasible` in every
/// metric column and zero test points.
pub fn write_results_csv<W: std::io::Write>(mut w: W, rows: &[SplitRow]) -> std::io::Result<()> {
    writeln!(w, "{RESULTS_HEADER}")?;
    for row in rows {
        match &row.outcome {
            SplitOutcome::Done(r) => {
                let m = r.metrics;
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    row.train_fraction, m.mse, m.rmse, m.mape_percent, m.max_abs_error, m.n_points
                )?;
            }
            SplitOutcome::Infeasible(_) => writeln!(
                w,
                "{},infeasible,infeasible,infeasible,infeasible,0",
                row.train_fraction
            )?,
        }
    }
    w.flush()
}

pub fn write_predictions_csv<W: std::io::Write>(
    mut w: W,
    points: &[PredictionPoint],
) -> std::io::Result<()> {
    writeln!(w, "n,soh_actual,soh_pred")?;
    for pt in points {
        writeln!(w, "{},{},{}", pt.n, pt.soh_actual, pt.soh_pred)?;
    }
    w.flush()
}
