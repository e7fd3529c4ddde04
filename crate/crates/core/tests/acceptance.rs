//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fail.

use std::time::{Duration, Instant};

use rand::Rng;
use soh_core::dataset::{self, RawSample, Segment};
use soh_core::evaluator::{run_split, EvalMode, SplitOutcome};
use soh_core::lstm::{self, LstmDims, LstmParams, LstmState};
use soh_core::numerics::Matrix;
use soh_core::optimizer::{adam_step, AdamConfig, AdamState};
use soh_core::seeding::rng_for;
use soh_core::synth::{self, SynthConfig};
use soh_core::trainer::{self, load_checkpoint, save_checkpoint, TrainConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn within(elapsed: Duration, budget: Duration) -> bool {
    elapsed <= budget
}

// Loss on the final readout only, as in single-horizon training.
fn last_step_loss(params: &LstmParams, xs: &[Matrix], target: f64) -> f64 {
    let (ys, _) = lstm::forward(params, xs, &LstmState::zeros(params.dims.hidden, 1)).unwrap();
    (ys.last().unwrap().get(0, 0) - target).powi(2)
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let (f, h, t, step) = (4, 4, 6, 1e-5);
    let mut worst = 0.0_f64;
    let mut checked = 0;
    for seed in 0..10 {
        let mut rng = rng_for(seed, "acceptance-gradcheck");
        let mut params = lstm::init_params(LstmDims::new(f, h, 1).unwrap(), seed).unwrap();
        for b in [
            &mut params.forget.b,
            &mut params.input.b,
            &mut params.candidate.b,
            &mut params.output.b,
            &mut params.readout_b,
        ] {
            b.data_mut()
                .iter_mut()
                .for_each(|v| *v += rng.gen_range(-0.5..0.5));
        }
        let xs: Vec<Matrix> = (0..t)
            .map(|_| Matrix::from_fn(f, 1, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let target: f64 = rng.gen_range(-1.0..1.0);

        let (ys, traces) = lstm::forward(&params, &xs, &LstmState::zeros(h, 1)).unwrap();
        let mut dys = vec![Matrix::zeros(1, 1); t];
        dys[t - 1] = Matrix::column(&[2.0 * (ys[t - 1].get(0, 0) - target)]);
        let grads = lstm::backward(&params, &traces, &dys).unwrap();

        for (k, analytic) in grads.tensors().iter().enumerate() {
            for j in 0..analytic.data().len() {
                let mut plus = params.clone();
                plus.tensors_mut()[k].data_mut()[j] += step;
                let mut minus = params.clone();
                minus.tensors_mut()[k].data_mut()[j] -= step;
                let numeric = (last_step_loss(&plus, &xs, target)
                    - last_step_loss(&minus, &xs, target))
                    / (2.0 * step);
                let a = analytic.data()[j];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst < 1e-5 && within(elapsed, Duration::from_secs(10)),
        detail: format!("{checked} entries, worst relative error {worst:.2e}, {elapsed:.2?}"),
    }
}

fn adam_closed_form() -> Outcome {
    let start = Instant::now();
    let cfg = AdamConfig::default();
    let dims = LstmDims::new(1, 1, 1).unwrap();
    let mut rng = rng_for(0, "acceptance-adam");
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let magnitude = 10f64.powf(rng.gen_range(-3.0..=1.0));
        let g = if rng.gen_bool(0.5) {
            magnitude
        } else {
            -magnitude
        };
        let mut params = LstmParams::zeros(dims);
        let mut grads = LstmParams::zeros(dims);
        for t in grads.tensors_mut() {
            t.fill(g);
        }
        let mut state = AdamState::new(cfg, &params).unwrap();
        adam_step(&mut state, &mut params, &grads).unwrap();
        let expected = -cfg.lr * g / (g.abs() + cfg.epsilon);
        for t in params.tensors() {
            for &delta in t.data() {
                worst = worst.max((delta - expected).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst < 1e-12 && within(elapsed, Duration::from_secs(1)),
        detail: format!("worst |error| {worst:.2e}, {elapsed:.2?}"),
    }
}

fn mape(series: &dataset::SohSeries, fraction: f64, seed: u64) -> f64 {
    let config = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    match run_split(series, fraction, &config, EvalMode::OneStepAhead).unwrap() {
        SplitOutcome::Done(r) => r.metrics.mape_percent,
        SplitOutcome::Infeasible(why) => panic!("split {fraction} infeasible: {why}"),
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn synthetic_series() -> dataset::SohSeries {
    let cfg = SynthConfig::default();
    synth::generate(&cfg)
        .unwrap()
        .into_series(cfg.rated_capacity_ah)
        .unwrap()
}

const SEEDS: std::ops::Range<u64> = 0..5;

fn synthetic_learning(series: &dataset::SohSeries) -> (Outcome, Vec<f64>, Duration) {
    let start = Instant::now();
    let mapes: Vec<f64> = SEEDS.map(|s| mape(series, 0.7, s)).collect();
    let elapsed = start.elapsed();
    let good = mapes.iter().filter(|&&m| m < 5.0).count();
    let outcome = Outcome {
        pass: good >= 4 && within(elapsed, Duration::from_secs(120)),
        detail: format!("MAPE % per seed {mapes:.3?}, {good}/5 below 5%, {elapsed:.2?}"),
    };
    (outcome, mapes, elapsed)
}

fn split_trend(series: &dataset::SohSeries, at_07: &[f64], spent: Duration) -> Outcome {
    let start = Instant::now();
    let mut medians = vec![median(at_07)];
    for fraction in [0.5, 0.4, 0.3] {
        let mapes: Vec<f64> = SEEDS.map(|s| mape(series, fraction, s)).collect();
        medians.push(median(&mapes));
    }
    let elapsed = spent + start.elapsed();
    let inversions = medians.windows(2).filter(|w| w[0] > w[1]).count();
    Outcome {
        pass: medians[0] < medians[3] && inversions <= 1 && within(elapsed, Duration::from_secs(480)),
        detail: format!(
            "median MAPE % at 0.7/0.5/0.4/0.3 = {medians:.3?}, {inversions} inversion(s), {elapsed:.2?}"
        ),
    }
}

fn window_framing() -> Outcome {
    let start = Instant::now();
    let mut cases = 0;
    let mut bad = Vec::new();
    for n in 0..=12usize {
        let feats: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let soh: Vec<f64> = (0..n).map(|i| i as f64).collect();
        for p in 1..=6usize {
            for k in 1..=6usize {
                cases += 1;
                let formula = (n as i64 - p as i64 - k as i64 + 1).max(0) as usize;
                let mut enumerated = 0;
                for j in 0..n {
                    if j + p + k <= n {
                        enumerated += 1;
                    }
                }
                let windows = dataset::make_windows(&feats, &soh, p, k).unwrap();
                let leak = windows.iter().any(|w| {
                    let max_input = w.inputs.iter().map(|r| r[0] as usize).max().unwrap();
                    let min_target = w.targets.iter().map(|&v| v as usize).min().unwrap();
                    min_target <= max_input
                });
                if formula != enumerated
                    || dataset::window_count(n, p, k) != enumerated
                    || windows.len() != enumerated
                    || leak
                {
                    bad.push((n, p, k));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: bad.is_empty() && within(elapsed, Duration::from_secs(1)),
        detail: format!("{cases} (n, p, k) cases, failures {bad:?}, {elapsed:.2?}"),
    }
}

fn discharge(current: impl Fn(f64) -> f64) -> Vec<RawSample> {
    (0..=60)
        .map(|i| {
            let t = 60.0 * i as f64;
            RawSample {
                time_s: t,
                current_a: -current(t),
                voltage_v: 3.7,
                temp_c: 24.0,
                segment: Segment::ReferenceDischarge,
                cycle_index: 1,
            }
        })
        .collect()
}

fn coulomb_counting() -> Outcome {
    let constant = discharge(|_| 2.0);
    let ramp = discharge(|t| 1.0 + 2.0 * t / 3600.0);
    let mut errors = Vec::new();
    for samples in [&constant, &ramp] {
        let direct = dataset::reference_capacity_ah(samples);
        let aggregated = dataset::aggregate_cycles(samples).unwrap().records[0].capacity_ah;
        errors.push((direct - 2.0).abs().max((aggregated - 2.0).abs()));
    }
    Outcome {
        pass: errors.iter().all(|&e| e <= 1e-9),
        detail: format!(
            "|error| constant {:.1e} Ah, ramp {:.1e} Ah",
            errors[0], errors[1]
        ),
    }
}

fn determinism_and_persistence(series: &dataset::SohSeries) -> Outcome {
    let config = TrainConfig {
        epochs: 40,
        hidden_size: 16,
        batch_size: 64,
        seed: 7,
        ..TrainConfig::default()
    };
    let run = || match run_split(series, 0.7, &config, EvalMode::OneStepAhead).unwrap() {
        SplitOutcome::Done(r) => r,
        SplitOutcome::Infeasible(why) => panic!("{why}"),
    };
    let (a, b) = (run(), run());
    let same_history = a.train_report.loss_history == b.train_report.loss_history;
    let same_params = a.checkpoint.params == b.checkpoint.params;

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&a.checkpoint, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    let rows = series.features();
    let mut identical = loaded == a.checkpoint;
    let mut compared = 0;
    for end in (config.window..=rows.len()).step_by(37) {
        let before = a.checkpoint.predict(&rows[..end]).unwrap();
        let after = loaded.predict(&rows[..end]).unwrap();
        identical &= before
            .iter()
            .zip(&after)
            .all(|(x, y)| x.to_bits() == y.to_bits());
        compared += 1;
    }
    let scaled = a
        .checkpoint
        .scaler
        .apply_all(&rows[..config.window])
        .unwrap();
    let direct = trainer::predict_window(&loaded.params, &scaled, 1).unwrap();
    identical &= direct == trainer::predict_window(&a.checkpoint.params, &scaled, 1).unwrap();
    Outcome {
        pass: same_history && same_params && identical,
        detail: format!(
            "loss history identical: {same_history}, params identical: {same_params}, \
             {compared} reloaded predictions bit-identical: {identical}"
        ),
    }
}

fn gate_fuzz() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_for(0, "acceptance-gates");
    let (mut calls, mut violations) = (0usize, 0usize);
    while calls < 100_000 {
        let dims = LstmDims::new(rng.gen_range(1..=4), rng.gen_range(1..=8), 1).unwrap();
        let mut params = LstmParams::zeros(dims);
        for t in params.tensors_mut() {
            t.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-1.0..1.0));
        }
        let mut state = LstmState::zeros(dims.hidden, 1);
        for _ in 0..10 {
            let x = Matrix::from_fn(dims.features, 1, |_, _| rng.gen_range(-1.5..1.5));
            let (next, tr) = lstm::step(&params, &state, &x).unwrap();
            let unit = |m: &Matrix| m.data().iter().all(|&v| v > 0.0 && v < 1.0);
            let ok = unit(&tr.f)
                && unit(&tr.i)
                && unit(&tr.o)
                && tr.c.data().iter().all(|&v| v > -1.0 && v < 1.0)
                && next.s.is_finite()
                && next.h.is_finite();
            violations += usize::from(!ok);
            calls += 1;
            state = next;
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: violations == 0 && within(elapsed, Duration::from_secs(5)),
        detail: format!("{calls} calls, {violations} violations, {elapsed:.2?}"),
    }
}

fn report(index: usize, name: &str, outcome: &Outcome) {
    let status = if outcome.pass { "PASS" } else { "FAIL" };
    println!("acceptance {index} {name}: {status} ({})", outcome.detail);
}

fn main() {
    let mut failed = 0;
    let mut record = |index: usize, name: &str, outcome: Outcome| {
        report(index, name, &outcome);
        failed += usize::from(!outcome.pass);
    };
    record(1, "gradient correctness", gradient_check());
    record(2, "adam first-step closed form", adam_closed_form());
    let series = synthetic_series();
    let (learning, at_07, spent) = synthetic_learning(&series);
    record(3, "synthetic learning", learning);
    record(4, "split-ratio trend", split_trend(&series, &at_07, spent));
    record(5, "window framing", window_framing());
    record(6, "coulomb counting", coulomb_counting());
    record(
        7,
        "determinism and persistence",
        determinism_and_persistence(&series),
    );
    record(8, "gate-range fuzz", gate_fuzz());
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
