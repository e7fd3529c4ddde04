use std::path::Path;

use soh_core::dataset::{self, SohSeries};
use soh_core::evaluator::{run_split, EvalMode, SplitOutcome};
use soh_core::synth::{self, SynthConfig};
use soh_core::trainer::{Checkpoint, TrainConfig};

fn fixture(name: &str) -> std::fs::File {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    std::fs::File::open(path).unwrap()
}

#[test]
fn raw_fixture_aggregates_to_golden_cycles() {
    let samples = dataset::ingest(fixture("raw_cell.csv")).unwrap();
    assert_eq!(samples.len(), 31);
    let agg = dataset::aggregate_cycles(&samples).unwrap();
    assert_eq!(agg.dropped_cycles, 1);
    let series = SohSeries::from_capacity(agg.records, 2.2).unwrap();
    let golden = dataset::read_cycle_csv(fixture("raw_cell_cycles.csv")).unwrap();
    assert_eq!(series, golden);
    let ns: Vec<u64> = series.records.iter().map(|r| r.n).collect();
    assert_eq!(ns, [1, 2, 4, 5]);
}

#[test]
fn synthetic_series_trains_and_checkpoint_predicts_like_evaluation() {
    let cfg = SynthConfig {
        n_cycles: 120,
        ..SynthConfig::default()
    };
    let series = synth::generate(&cfg)
        .unwrap()
        .into_series(cfg.rated_capacity_ah)
        .unwrap();
    let train = TrainConfig {
        hidden_size: 6,
        epochs: 30,
        ..TrainConfig::default()
    };
    let result = match run_split(&series, 0.7, &train, EvalMode::OneStepAhead).unwrap() {
        SplitOutcome::Done(r) => r,
        SplitOutcome::Infeasible(why) => panic!("{why}"),
    };
    assert_eq!(result.checkpoint.config.train_fraction, 0.7);
    let reloaded = Checkpoint::from_json(&result.checkpoint.to_json().unwrap()).unwrap();

    // The checkpoint applied to raw rows reproduces the evaluator's predictions.
    let rows = series.features();
    let p = train.window;
    for point in &result.predictions {
        let idx = series.records.iter().position(|r| r.n == point.n).unwrap();
        let pred = reloaded.predict(&rows[idx - p..idx]).unwrap()[0];
        assert_eq!(pred.to_bits(), point.soh_pred.to_bits());
    }
    assert_eq!(result.predictions.len(), 36 - p);
}
