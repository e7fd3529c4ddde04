//! `soh`: ingest cell logs, synthesize data, train, evaluate and predict.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use soh_core::dataset::{self, SohSeries};
use soh_core::evaluator::{self, EvalMode, SplitOutcome};
use soh_core::trainer::{self, Checkpoint, Trainer};
use soh_core::{synth, SohError};

use config::{FileConfig, SynthFlags, TrainFlags};

#[derive(Debug, Parser)]
#[command(
    name = "soh",
    version,
    about = "LSTM state-of-health estimation from stress factors"
)]
struct Cli {
    /// JSON file with `train`, `synth` and `dataset` sections; flags override it
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Aggregate a raw per-sample log into a per-cycle CSV
    Ingest(IngestArgs),
    /// Generate a synthetic per-cycle CSV
    Synth(SynthArgs),
    /// Train on the leading part of a per-cycle CSV and save a checkpoint
    Train(TrainArgs),
    /// Score held-out predictions for several train fractions
    Eval(EvalArgs),
    /// Forecast the next SoH values from recent cycles
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Raw CSV: time_s,current_A,voltage_V,temp_C,segment,cycle_index
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Rated capacity in Ah used as the SoH denominator
    #[arg(long)]
    rated_capacity: Option<f64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    synth: SynthFlags,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Per-cycle CSV
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Loss history CSV [default: <checkpoint stem>_loss.csv]
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// Leading share of cycles used for training
    #[arg(long)]
    train_fraction: Option<f64>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Per-cycle CSV
    #[arg(long)]
    data: PathBuf,
    /// Directory for results.csv and per-ratio prediction CSVs
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.7,0.5,0.4,0.3")]
    ratios: Vec<f64>,
    /// Ratios trained concurrently
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Take one optimizer step on each test window after predicting it
    #[arg(long)]
    online: bool,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Per-cycle CSV; its last p rows are used
    #[arg(long)]
    input: PathBuf,
    /// Also write `horizon,soh_pred` rows here
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<SohError> for Failure {
    fn from(e: SohError) -> Self {
        let code = match e {
            SohError::InvalidConfig(_) => 1,
            SohError::Numeric(_) => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn with_path(path: &Path) -> impl FnOnce(SohError) -> Failure + '_ {
    move |e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| io_failure(path, e))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

/// Fails early if `output` cannot be created or would overwrite an input.
fn check_output(output: &Path, inputs: &[&Path]) -> CmdResult {
    if inputs.iter().any(|input| same_file(output, input)) {
        return Err(Failure::usage(format!(
            "output {} would overwrite an input file",
            output.display()
        )));
    }
    let parent = match output.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        return Err(Failure::usage(format!(
            "output directory {} does not exist",
            parent.display()
        )));
    }
    Ok(())
}

fn write_file(
    path: &Path,
    fill: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> CmdResult {
    let file = File::create(path).map_err(|e| io_failure(path, e))?;
    let mut w = BufWriter::new(file);
    fill(&mut w).map_err(|e| io_failure(path, e))?;
    w.flush().map_err(|e| io_failure(path, e))
}

fn read_series(path: &Path) -> Result<SohSeries, Failure> {
    let series = dataset::read_cycle_csv(open(path)?).map_err(with_path(path))?;
    if series.is_empty() {
        return Err(Failure {
            code: 2,
            message: format!("{}: no cycle records", path.display()),
        });
    }
    Ok(series)
}

fn cmd_ingest(args: &IngestArgs, file: &FileConfig) -> CmdResult {
    let rated = args
        .rated_capacity
        .unwrap_or(file.dataset.rated_capacity_ah);
    if !(rated > 0.0 && rated.is_finite()) {
        return Err(Failure::usage(format!(
            "rated capacity must be positive, got {rated}"
        )));
    }
    let reader = open(&args.input)?;
    check_output(&args.output, &[&args.input])?;
    let samples = dataset::ingest(reader).map_err(with_path(&args.input))?;
    let agg = dataset::aggregate_cycles(&samples).map_err(with_path(&args.input))?;
    let records = agg.records.len();
    let series = SohSeries::from_capacity(agg.records, rated)?;
    write_file(&args.output, |w| dataset::write_cycle_csv(w, &series))?;
    println!(
        "{records} cycles written to {} ({} dropped without a reference discharge)",
        args.output.display(),
        agg.dropped_cycles
    );
    Ok(())
}

fn cmd_synth(args: &SynthArgs, file: &FileConfig) -> CmdResult {
    let cfg = args.synth.apply(file.synth);
    cfg.validate()?;
    check_output(&args.output, &[])?;
    let out = synth::generate(&cfg)?;
    if let Some(kept) = out.truncated_at {
        println!(
            "fade would reach 90% at cycle {}; series truncated",
            kept + 1
        );
    }
    let series = out.into_series(cfg.rated_capacity_ah)?;
    write_file(&args.output, |w| dataset::write_cycle_csv(w, &series))?;
    println!(
        "{} cycles written to {}",
        series.len(),
        args.output.display()
    );
    Ok(())
}

fn default_loss_path(checkpoint: &Path) -> PathBuf {
    let stem = checkpoint
        .file_stem()
        .map_or_else(|| "checkpoint".into(), |s| s.to_string_lossy().into_owned());
    checkpoint.with_file_name(format!("{stem}_loss.csv"))
}

fn cmd_train(args: &TrainArgs, file: &FileConfig) -> CmdResult {
    let mut cfg = args.train.apply(file.train);
    cfg.train_fraction = args.train_fraction.unwrap_or(cfg.train_fraction);
    cfg.validate()?;
    let loss_path = args
        .loss_csv
        .clone()
        .unwrap_or_else(|| default_loss_path(&args.checkpoint));
    let series = read_series(&args.data)?;
    check_output(&args.checkpoint, &[&args.data])?;
    check_output(&loss_path, &[&args.data, &args.checkpoint])?;

    let split = evaluator::prepare_split(&series, cfg.train_fraction, cfg.window, cfg.horizon)?;
    if split.train_windows.is_empty() {
        return Err(Failure {
            code: 2,
            message: format!(
                "{} training cycles are too few for window {} and horizon {}",
                split.cut, cfg.window, cfg.horizon
            ),
        });
    }
    let mut trainer = Trainer::for_windows(cfg, &split.train_windows)?;
    let report = trainer.fit(&split.train_windows)?;
    info!("trained {} epochs in {:.2?}", cfg.epochs, report.wall_time);

    let checkpoint = Checkpoint {
        config: cfg,
        scaler: split.scaler,
        target_scaler: split.target_scaler,
        params: trainer.params,
    };
    trainer::save_checkpoint(&checkpoint, &args.checkpoint)?;
    write_file(&loss_path, |w| {
        trainer::write_loss_csv(w, &report.loss_history)
    })?;
    let final_loss = report.loss_history.last().copied().unwrap_or(f64::NAN);
    println!(
        "{} windows from {} training cycles, final scaled mse {final_loss}",
        split.train_windows.len(),
        split.cut
    );
    println!("checkpoint written to {}", args.checkpoint.display());
    println!("loss history written to {}", loss_path.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs, file: &FileConfig) -> CmdResult {
    let cfg = args.train.apply(file.train);
    cfg.validate()?;
    if args.ratios.is_empty() {
        return Err(Failure::usage("no ratios given"));
    }
    for &r in &args.ratios {
        if !(r > 0.0 && r < 1.0) {
            return Err(Failure::usage(format!("ratio {r} must lie in (0, 1)")));
        }
    }
    if args.jobs == 0 {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    let series = read_series(&args.data)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| io_failure(&args.out_dir, e))?;

    let mode = if args.online {
        EvalMode::OnlineUpdate
    } else {
        EvalMode::OneStepAhead
    };
    let rows = evaluator::run_split_experiment(&series, &args.ratios, &cfg, mode, args.jobs)?;

    let results = args.out_dir.join("results.csv");
    write_file(&results, |w| evaluator::write_results_csv(w, &rows))?;
    for row in &rows {
        match &row.outcome {
            SplitOutcome::Done(r) => {
                let path = args
                    .out_dir
                    .join(format!("predictions_{}.csv", row.train_fraction));
                write_file(&path, |w| {
                    evaluator::write_predictions_csv(w, &r.predictions)
                })?;
                println!(
                    "train_fraction {}: mape {:.3}% mse {:.3e} rmse {:.4} over {} test points",
                    row.train_fraction,
                    r.metrics.mape_percent,
                    r.metrics.mse,
                    r.metrics.rmse,
                    r.metrics.n_points
                );
            }
            SplitOutcome::Infeasible(why) => {
                println!("train_fraction {}: infeasible ({why})", row.train_fraction);
            }
        }
    }
    println!("results written to {}", results.display());
    println!("{}", evaluator::METRIC_NOTE);
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> CmdResult {
    let checkpoint =
        trainer::load_checkpoint(&args.checkpoint).map_err(with_path(&args.checkpoint))?;
    let series = read_series(&args.input)?;
    if let Some(out) = &args.output {
        check_output(out, &[&args.input, &args.checkpoint])?;
    }
    let preds = checkpoint
        .predict(&series.features())
        .map_err(with_path(&args.input))?;
    let body: String = preds
        .iter()
        .enumerate()
        .map(|(h, v)| format!("{},{v}\n", h + 1))
        .collect();
    let text = format!("horizon,soh_pred\n{body}");
    print!("{text}");
    if let Some(out) = &args.output {
        write_file(out, |w| w.write_all(text.as_bytes()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    let file = FileConfig::load(cli.config.as_deref()).map_err(Failure::usage)?;
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a, &file),
        Command::Synth(a) => cmd_synth(a, &file),
        Command::Train(a) => cmd_train(a, &file),
        Command::Eval(a) => cmd_eval(a, &file),
        Command::Predict(a) => cmd_predict(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
