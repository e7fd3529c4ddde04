//! Supervised training over sliding windows, online updates and checkpoints.
//!
//! Each window is an independent length-`p` sequence started from a zero
//! state. The readouts of its last `k` steps are compared with the `k`
//! targets under mean squared error.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{Scaler, WindowSample};
use crate::error::{Result, SohError};
use crate::lstm::{self, LstmDims, LstmGrads, LstmParams, LstmState};
use crate::numerics::Matrix;
use crate::optimizer::{adam_step, AdamConfig, AdamState};
use crate::seeding::{self, purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_size: usize,
    /// Window length `p`.
    pub window: usize,
    /// Forecast horizon `k`.
    pub horizon: usize,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Windows per gradient step; 0 means the full set.
    pub batch_size: usize,
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            hidden_size: 32,
            window: 8,
            horizon: 1,
            epochs: 500,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            batch_size: 0,
            seed: 0,
            train_fraction: 0.7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("hidden_size", self.hidden_size),
            ("window", self.window),
            ("horizon", self.horizon),
            ("epochs", self.epochs),
        ] {
            if v == 0 {
                return Err(SohError::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if self.horizon > self.window {
            return Err(SohError::InvalidConfig(format!(
                "horizon {} cannot exceed window {}: the last k readouts of a window are the forecasts",
                self.horizon, self.window
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(SohError::InvalidConfig(format!(
                "train_fraction {} must lie in (0, 1)",
                self.train_fraction
            )));
        }
        self.adam().validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn dims(&self, features: usize) -> Result<LstmDims> {
        LstmDims::new(features, self.hidden_size, 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Per-epoch training MSE, each batch measured before its own update.
    pub loss_history: Vec<f64>,
    pub wall_time: Duration,
}

/// A set of windows laid out as batch columns.
struct Batch {
    /// One `F x B` matrix per time step.
    steps: Vec<Matrix>,
    /// `k x B` targets.
    targets: Matrix,
}

fn build_batch(windows: &[&WindowSample], features: usize, p: usize, k: usize) -> Result<Batch> {
    let b = windows.len();
    let mut steps = vec![Matrix::zeros(features, b); p];
    let mut targets = Matrix::zeros(k, b);
    for (col, w) in windows.iter().enumerate() {
        if w.inputs.len() != p || w.targets.len() != k {
            return Err(SohError::InvalidDims(format!(
                "window at {} has {}x{} inputs and {} targets, model expects p={p}, k={k}",
                w.start,
                w.inputs.len(),
                w.inputs.first().map_or(0, Vec::len),
                w.targets.len()
            )));
        }
        for (t, row) in w.inputs.iter().enumerate() {
            if row.len() != features {
                return Err(SohError::Shape {
                    op: "window features",
                    left: (row.len(), 1),
                    right: (features, 1),
                });
            }
            for (f, &v) in row.iter().enumerate() {
                steps[t].set(f, col, v);
            }
        }
        for (m, &v) in w.targets.iter().enumerate() {
            targets.set(m, col, v);
        }
    }
    Ok(Batch { steps, targets })
}

/// MSE over the last `k` readouts of every window and its gradient.
fn loss_and_grads(params: &LstmParams, batch: &Batch) -> Result<(f64, LstmGrads)> {
    let b = batch.targets.cols();
    let k = batch.targets.rows();
    let p = batch.steps.len();
    let init = LstmState::zeros(params.dims.hidden, b);
    let (outputs, traces) = lstm::forward(params, &batch.steps, &init)?;

    let denom = (b * k) as f64;
    let mut loss = 0.0;
    let mut d_outputs = vec![Matrix::zeros(1, b); p];
    for m in 0..k {
        let t = p - k + m;
        for col in 0..b {
            let err = outputs[t].get(0, col) - batch.targets.get(m, col);
            loss += err * err;
            d_outputs[t].set(0, col, 2.0 * err / denom);
        }
    }
    let loss = loss / denom;
    if !loss.is_finite() {
        return Err(SohError::Numeric(format!("training loss is {loss}")));
    }
    let grads = lstm::backward(params, &traces, &d_outputs)?;
    Ok((loss, grads))
}

/// Mean squared error of `params` over `windows` without updating anything.
pub fn evaluate_loss(params: &LstmParams, windows: &[WindowSample]) -> Result<f64> {
    let k = windows
        .first()
        .ok_or_else(|| SohError::Data("no windows to evaluate".into()))?
        .targets
        .len();
    let refs: Vec<&WindowSample> = windows.iter().collect();
    let batch = build_batch(&refs, params.dims.features, windows[0].inputs.len(), k)?;
    Ok(loss_and_grads(params, &batch)?.0)
}

/// Model and optimizer state carried across epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub config: TrainConfig,
    pub params: LstmParams,
    pub adam: AdamState,
}

impl Trainer {
    /// Fresh parameters from `config.seed`.
    pub fn new(config: TrainConfig, features: usize) -> Result<Self> {
        config.validate()?;
        let params = lstm::init_params(config.dims(features)?, config.seed)?;
        let adam = AdamState::new(config.adam(), &params)?;
        Ok(Trainer {
            config,
            params,
            adam,
        })
    }

    /// Fresh parameters with the readout bias moved to the mean training
    /// target, so optimization starts from the constant best fit.
    pub fn for_windows(config: TrainConfig, windows: &[WindowSample]) -> Result<Self> {
        let features = windows
            .first()
            .and_then(|w| w.inputs.first())
            .map(Vec::len)
            .ok_or_else(|| SohError::Data("no training windows".into()))?;
        let mut trainer = Trainer::new(config, features)?;
        let count: usize = windows.iter().map(|w| w.targets.len()).sum();
        let mean = windows.iter().flat_map(|w| &w.targets).sum::<f64>() / count.max(1) as f64;
        if !mean.is_finite() {
            return Err(SohError::Numeric(format!("mean training target is {mean}")));
        }
        trainer.params.readout_b.fill(mean);
        Ok(trainer)
    }

    /// Continues from existing parameters and optimizer state.
    pub fn resume(config: TrainConfig, params: LstmParams, adam: AdamState) -> Result<Self> {
        config.validate()?;
        if params.dims.hidden != config.hidden_size {
            return Err(SohError::InvalidDims(format!(
                "params have hidden size {}, config says {}",
                params.dims.hidden, config.hidden_size
            )));
        }
        Ok(Trainer {
            config,
            params,
            adam,
        })
    }

    /// Runs `config.epochs` epochs over `windows`.
    pub fn fit(&mut self, windows: &[WindowSample]) -> Result<TrainReport> {
        if windows.is_empty() {
            return Err(SohError::Data("no training windows".into()));
        }
        let start = Instant::now();
        let (p, k) = (self.config.window, self.config.horizon);
        let features = self.params.dims.features;
        let mut order: Vec<&WindowSample> = windows.iter().collect();
        let batch_size = match self.config.batch_size {
            0 => windows.len(),
            n => n.min(windows.len()),
        };
        let full = if batch_size == windows.len() {
            Some(build_batch(&order, features, p, k)?)
        } else {
            None
        };
        let mut shuffle_rng = seeding::rng_for(self.config.seed, purpose::SHUFFLE);

        let mut history = Vec::with_capacity(self.config.epochs);
        for _ in 0..self.config.epochs {
            let epoch_loss = match &full {
                Some(batch) => self.update(batch)?,
                None => {
                    order.shuffle(&mut shuffle_rng);
                    let mut total = 0.0;
                    let mut count = 0;
                    for chunk in order.chunks(batch_size) {
                        let batch = build_batch(chunk, features, p, k)?;
                        total += self.update(&batch)? * chunk.len() as f64;
                        count += chunk.len();
                    }
                    total / count as f64
                }
            };
            history.push(epoch_loss);
        }
        Ok(TrainReport {
            loss_history: history,
            wall_time: start.elapsed(),
        })
    }

    fn update(&mut self, batch: &Batch) -> Result<f64> {
        let (loss, grads) = loss_and_grads(&self.params, batch)?;
        adam_step(&mut self.adam, &mut self.params, &grads)?;
        Ok(loss)
    }
}

/// Trains a freshly initialized network on `windows` (see
/// [`Trainer::for_windows`]).
pub fn train(config: &TrainConfig, windows: &[WindowSample]) -> Result<(LstmParams, TrainReport)> {
    let mut trainer = Trainer::for_windows(*config, windows)?;
    let report = trainer.fit(windows)?;
    Ok((trainer.params, report))
}

/// One gradient step on a single newly observed window, continuing `adam`.
/// Returns the window's loss before the step.
pub fn online_update(
    params: &mut LstmParams,
    adam: &mut AdamState,
    window: &WindowSample,
) -> Result<f64> {
    let batch = build_batch(
        &[window],
        params.dims.features,
        window.inputs.len(),
        window.targets.len(),
    )?;
    if window.targets.len() > window.inputs.len() || window.targets.is_empty() {
        return Err(SohError::InvalidDims(format!(
            "window has {} inputs and {} targets",
            window.inputs.len(),
            window.targets.len()
        )));
    }
    let (loss, grads) = loss_and_grads(params, &batch)?;
    adam_step(adam, params, &grads)?;
    Ok(loss)
}

/// Forecasts `k` values from `p` already-scaled feature rows: the readouts of
/// the last `k` steps.
pub fn predict_window(params: &LstmParams, inputs: &[Vec<f64>], k: usize) -> Result<Vec<f64>> {
    if inputs.is_empty() {
        return Err(SohError::EmptySequence);
    }
    if k == 0 || k > inputs.len() {
        return Err(SohError::InvalidConfig(format!(
            "horizon {k} must lie in 1..={}",
            inputs.len()
        )));
    }
    let xs: Vec<Matrix> = inputs
        .iter()
        .map(|row| {
            if row.len() != params.dims.features {
                Err(SohError::Shape {
                    op: "predict input",
                    left: (row.len(), 1),
                    right: (params.dims.features, 1),
                })
            } else {
                Ok(Matrix::column(row))
            }
        })
        .collect::<Result<_>>()?;
    let init = LstmState::zeros(params.dims.hidden, 1);
    let (outputs, _) = lstm::forward(params, &xs, &init)?;
    Ok(outputs[outputs.len() - k..]
        .iter()
        .map(|y| y.get(0, 0))
        .collect())
}

/// A trained model with everything needed to predict from raw cycle records.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Feature scaler fitted on the training partition.
    pub scaler: Scaler,
    /// One-column scaler mapping SoH to the network's target range.
    pub target_scaler: Scaler,
    pub params: LstmParams,
}

impl Checkpoint {
    /// Scales the last `p` feature rows and forecasts `k` SoH values.
    pub fn predict(&self, feature_rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let p = self.config.window;
        if feature_rows.len() < p {
            return Err(SohError::Data(format!(
                "need at least p={p} cycle records to predict, got {}",
                feature_rows.len()
            )));
        }
        let recent = &feature_rows[feature_rows.len() - p..];
        for row in recent {
            if row.len() != self.params.dims.features {
                return Err(SohError::Shape {
                    op: "predict input features",
                    left: (row.len(), 1),
                    right: (self.params.dims.features, 1),
                });
            }
        }
        let scaled = self.scaler.apply_all(recent)?;
        predict_window(&self.params, &scaled, self.config.horizon)?
            .into_iter()
            .map(|y| self.target_scaler.invert(&[y]).map(|v| v[0]))
            .collect()
    }
}

pub const CHECKPOINT_FORMAT: &str = "soh-lstm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    /// Base64 of little-endian f64 values, row-major.
    data: String,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    dims: LstmDims,
    config: TrainConfig,
    scaler: Scaler,
    target_scaler: Scaler,
    tensors: Vec<TensorRecord>,
}

fn encode_tensor(name: &str, m: &Matrix) -> TensorRecord {
    use base64::Engine;
    let bytes: Vec<u8> = m.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    TensorRecord {
        name: name.to_string(),
        shape: [m.rows(), m.cols()],
        data: base64::engine::general_purpose::STANDARD.encode(bytes),
    }
}

fn decode_tensor(rec: &TensorRecord) -> Result<Matrix> {
    use base64::Engine;
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(&rec.data)
        .map_err(|e| SohError::Checkpoint(format!("tensor {}: bad base64: {e}", rec.name)))?;
    let [rows, cols] = rec.shape;
    if bytes.len() != rows * cols * 8 {
        return Err(SohError::Checkpoint(format!(
            "tensor {} declares shape {rows}x{cols} but holds {} bytes",
            rec.name,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Matrix::new(rows, cols, data)
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let envelope = Envelope {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            dims: self.params.dims,
            config: self.config,
            scaler: self.scaler.clone(),
            target_scaler: self.target_scaler.clone(),
            tensors: self
                .params
                .tensors()
                .iter()
                .zip(lstm::TENSOR_NAMES)
                .map(|(m, name)| encode_tensor(name, m))
                .collect(),
        };
        serde_json::to_string_pretty(&envelope)
            .map_err(|e| SohError::Checkpoint(format!("serialize: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Envelope = serde_json::from_str(text)
            .map_err(|e| SohError::Checkpoint(format!("malformed checkpoint: {e}")))?;
        if env.format != CHECKPOINT_FORMAT {
            return Err(SohError::Checkpoint(format!(
                "unexpected format `{}`",
                env.format
            )));
        }
        if env.version != CHECKPOINT_VERSION {
            return Err(SohError::Checkpoint(format!(
                "unsupported version {} (this build reads version {CHECKPOINT_VERSION})",
                env.version
            )));
        }
        let dims = LstmDims::new(env.dims.features, env.dims.hidden, env.dims.outputs)
            .map_err(|e| SohError::Checkpoint(e.to_string()))?;
        if env.config.hidden_size != dims.hidden {
            return Err(SohError::Checkpoint(format!(
                "config hidden size {} disagrees with dims {}",
                env.config.hidden_size, dims.hidden
            )));
        }
        if env.scaler.width() != dims.features || env.scaler.max.len() != dims.features {
            return Err(SohError::Checkpoint(format!(
                "scaler covers {} features, network expects {}",
                env.scaler.width(),
                dims.features
            )));
        }
        if env.target_scaler.width() != 1 || env.target_scaler.max.len() != 1 {
            return Err(SohError::Checkpoint(
                "target scaler must cover exactly one column".into(),
            ));
        }
        if env.tensors.len() != lstm::TENSOR_NAMES.len() {
            return Err(SohError::Checkpoint(format!(
                "expected {} tensors, found {}",
                lstm::TENSOR_NAMES.len(),
                env.tensors.len()
            )));
        }
        let expected = LstmParams::expected_shapes(dims);
        let mut tensors = Vec::with_capacity(env.tensors.len());
        for ((rec, name), shape) in env.tensors.iter().zip(lstm::TENSOR_NAMES).zip(expected) {
            if rec.name != name {
                return Err(SohError::Checkpoint(format!(
                    "expected tensor {name}, found {}",
                    rec.name
                )));
            }
            if (rec.shape[0], rec.shape[1]) != shape {
                return Err(SohError::Checkpoint(format!(
                    "tensor {name} has shape {:?}, dims imply {shape:?}",
                    rec.shape
                )));
            }
            tensors.push(decode_tensor(rec)?);
        }
        let params = LstmParams::from_tensors(dims, tensors)?;
        Ok(Checkpoint {
            config: env.config,
            scaler: env.scaler,
            target_scaler: env.target_scaler,
            params,
        })
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let text = checkpoint.to_json()?;
    std::fs::write(path, text + "\n").map_err(|e| SohError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| SohError::io(path, e))?;
    Checkpoint::from_json(&text)
}

/// Writes `epoch,mse` rows, epochs numbered from 1.
pub fn write_loss_csv<W: std::io::Write>(mut w: W, history: &[f64]) -> std::io::Result<()> {
    writeln!(w, "epoch,mse")?;
    for (i, loss) in history.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, loss)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_windows(n: usize, p: usize) -> Vec<WindowSample> {
        (0..n)
            .map(|j| WindowSample {
                start: j,
                inputs: (0..p)
                    .map(|t| {
                        let x = (j + t) as f64 / (n + p) as f64;
                        vec![x, 1.0 - x, 0.5, (x * 7.0).sin()]
                    })
                    .collect(),
                targets: vec![1.0],
            })
            .collect()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            hidden_size: 8,
            window: 4,
            epochs: 200,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn learns_constant_target() {
        let windows = constant_windows(40, 4);
        let (_, report) = train(&small_config(), &windows).unwrap();
        assert_eq!(report.loss_history.len(), 200);
        let last = *report.loss_history.last().unwrap();
        assert!(last < 1e-4, "final mse {last}");
    }

    #[test]
    fn constant_target_loss_is_mostly_non_increasing() {
        let windows = constant_windows(40, 4);
        let (mut steps, mut non_increasing) = (0, 0);
        for seed in 0..10 {
            let cfg = TrainConfig {
                seed,
                ..small_config()
            };
            let (_, report) = train(&cfg, &windows).unwrap();
            for pair in report.loss_history[5..].windows(2) {
                steps += 1;
                non_increasing += usize::from(pair[1] <= pair[0]);
            }
        }
        let share = non_increasing as f64 / steps as f64;
        assert!(share >= 0.95, "non-increasing share {share}");
    }

    #[test]
    fn sequential_online_updates_match_batch_of_one_training() {
        let windows = constant_windows(12, 4);
        let cfg = TrainConfig {
            epochs: 1,
            ..small_config()
        };
        let mut online = Trainer::new(cfg, 4).unwrap();
        let mut batched = Trainer::new(cfg, 4).unwrap();
        for w in &windows {
            let loss = online_update(&mut online.params, &mut online.adam, w).unwrap();
            let report = batched.fit(std::slice::from_ref(w)).unwrap();
            assert_eq!(report.loss_history, vec![loss]);
            assert_eq!(online, batched);
        }
    }

    #[test]
    fn config_validation() {
        for cfg in [
            TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                hidden_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                train_fraction: 1.5,
                ..TrainConfig::default()
            },
            TrainConfig {
                horizon: 9,
                ..TrainConfig::default()
            },
        ] {
            assert!(matches!(cfg.validate(), Err(SohError::InvalidConfig(_))));
        }
    }

    #[test]
    fn training_is_deterministic() {
        let windows = constant_windows(20, 4);
        let cfg = TrainConfig {
            epochs: 15,
            batch_size: 6,
            ..small_config()
        };
        let (pa, ra) = train(&cfg, &windows).unwrap();
        let (pb, rb) = train(&cfg, &windows).unwrap();
        assert_eq!(ra.loss_history, rb.loss_history);
        assert_eq!(pa, pb);
    }

    #[test]
    fn rejects_empty_and_misshapen_windows() {
        assert!(train(&small_config(), &[]).is_err());
        let mut windows = constant_windows(5, 4);
        windows[2].inputs.pop();
        assert!(matches!(
            train(&small_config(), &windows),
            Err(SohError::InvalidDims(_))
        ));
    }

    #[test]
    fn online_update_equals_one_epoch_on_one_window() {
        let windows = constant_windows(1, 4);
        let cfg = TrainConfig {
            epochs: 1,
            ..small_config()
        };
        let base = Trainer::new(cfg, 4).unwrap();

        let mut via_fit = base.clone();
        via_fit.fit(&windows).unwrap();

        let mut params = base.params.clone();
        let mut adam = base.adam.clone();
        online_update(&mut params, &mut adam, &windows[0]).unwrap();

        assert_eq!(params, via_fit.params);
        assert_eq!(adam, via_fit.adam);
        assert_eq!(adam.t, base.adam.t + 1);
    }

    #[test]
    fn online_update_with_exact_prediction_is_a_no_op() {
        let window = &constant_windows(1, 4)[0];
        let trainer = Trainer::new(small_config(), 4).unwrap();
        let pred = predict_window(&trainer.params, &window.inputs, 1).unwrap();
        let exact = WindowSample {
            targets: pred,
            ..window.clone()
        };
        let mut params = trainer.params.clone();
        let mut adam = trainer.adam.clone();
        online_update(&mut params, &mut adam, &exact).unwrap();
        for (a, b) in params.tensors().iter().zip(trainer.params.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let trainer = Trainer::new(small_config(), 4).unwrap();
        let ckpt = Checkpoint {
            config: trainer.config,
            scaler: Scaler {
                min: vec![0.0, -3.9764140082743435, 3.3, 20.0],
                max: vec![600.0, -0.5, 4.1, 40.0],
            },
            target_scaler: Scaler {
                min: vec![0.75],
                max: vec![1.0],
            },
            params: trainer.params.clone(),
        };
        let text = ckpt.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        for (a, b) in back.params.tensors().iter().zip(ckpt.params.tensors()) {
            let bits = |m: &Matrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(back, ckpt);

        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            Checkpoint::from_json(truncated),
            Err(SohError::Checkpoint(_))
        ));
        let bumped = text.replace("\"version\": 1", "\"version\": 99");
        assert!(Checkpoint::from_json(&bumped)
            .unwrap_err()
            .to_string()
            .contains("version 99"));
        let bad_dims = text.replace("\"hidden\": 8", "\"hidden\": 9");
        assert!(Checkpoint::from_json(&bad_dims).is_err());
    }

    #[test]
    fn predict_requires_p_rows_and_matching_features() {
        let trainer = Trainer::new(small_config(), 4).unwrap();
        let ckpt = Checkpoint {
            config: trainer.config,
            scaler: Scaler {
                min: vec![0.0; 4],
                max: vec![1.0; 4],
            },
            target_scaler: Scaler {
                min: vec![0.0],
                max: vec![1.0],
            },
            params: trainer.params,
        };
        let rows = vec![vec![0.1, 0.2, 0.3, 0.4]; 3];
        assert!(ckpt.predict(&rows).unwrap_err().to_string().contains("p=4"));
        let rows = vec![vec![0.1, 0.2, 0.3]; 4];
        let err = ckpt.predict(&rows).unwrap_err();
        assert!(matches!(
            err,
            SohError::Shape {
                left: (3, 1),
                right: (4, 1),
                ..
            }
        ));
        let rows = vec![vec![0.1, 0.2, 0.3, 0.4]; 6];
        let a = ckpt.predict(&rows).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a, ckpt.predict(&rows).unwrap());
    }

    #[test]
    fn loss_csv_layout() {
        let mut buf = Vec::new();
        write_loss_csv(&mut buf, &[0.5, 0.25]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,mse\n1,0.5\n2,0.25\n"
        );
    }
}
