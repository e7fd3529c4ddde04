//! Adam with bias-corrected moment estimates, and plain SGD as a baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SohError};
use crate::lstm::{LstmGrads, LstmParams};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(SohError::InvalidConfig(format!(
                "beta1={} and beta2={} must lie in [0, 1)",
                self.beta1, self.beta2
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(SohError::InvalidConfig(format!(
                "lr={} must be finite and >= 0",
                self.lr
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(SohError::InvalidConfig(format!(
                "epsilon={} must be > 0",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Per-tensor moment accumulators plus the step counter used for bias
/// correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    /// First moments, one per parameter tensor.
    pub m: Vec<Matrix>,
    /// Second (uncentered) moments, one per parameter tensor.
    pub v: Vec<Matrix>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &LstmParams) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<Matrix> = params
            .tensors()
            .iter()
            .map(|t| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        Ok(AdamState {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        })
    }

    /// Bias-corrected `(m_hat, v_hat)` of tensor `idx` at the current step.
    pub fn corrected_moments(&self, idx: usize) -> (Matrix, Matrix) {
        let t = self.t.min(i32::MAX as u64) as i32;
        let c1 = 1.0 - self.config.beta1.powi(t);
        let c2 = 1.0 - self.config.beta2.powi(t);
        (self.m[idx].scale(1.0 / c1), self.v[idx].scale(1.0 / c2))
    }
}

fn check_grad_shapes(params: &LstmParams, grads: &LstmGrads) -> Result<()> {
    for (p, g) in params.tensors().iter().zip(grads.tensors()) {
        p.same_shape(g, "optimizer update")?;
    }
    Ok(())
}

/// One Adam update of every parameter tensor.
pub fn adam_step(state: &mut AdamState, params: &mut LstmParams, grads: &LstmGrads) -> Result<()> {
    check_grad_shapes(params, grads)?;
    if state.m.len() != 14 {
        return Err(SohError::LengthMismatch {
            what: "adam moment tensors",
            left: state.m.len(),
            right: 14,
        });
    }
    for (m, p) in state.m.iter().zip(params.tensors()) {
        m.same_shape(p, "adam moments")?;
    }

    let AdamConfig {
        lr,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.t += 1;
    let t = state.t.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);

    for (((theta, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((th, &gj), mj), vj) in theta
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mj = beta1 * *mj + (1.0 - beta1) * gj;
            *vj = beta2 * *vj + (1.0 - beta2) * gj * gj;
            let m_hat = *mj / c1;
            let v_hat = *vj / c2;
            *th -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

/// `theta -= lr * g` on every tensor.
pub fn sgd_step(lr: f64, params: &mut LstmParams, grads: &LstmGrads) -> Result<()> {
    check_grad_shapes(params, grads)?;
    for (theta, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
        for (th, &gj) in theta.data_mut().iter_mut().zip(g.data()) {
            *th -= lr * gj;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{init_params, LstmDims};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_params(value: f64) -> LstmParams {
        let dims = LstmDims::new(1, 1, 1).unwrap();
        let mut p = LstmParams::zeros(dims);
        for t in p.tensors_mut() {
            t.fill(value);
        }
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = init_params(LstmDims::new(2, 3, 1).unwrap(), 5).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(AdamConfig::default(), &p).unwrap();
        let g = LstmParams::zeros(p.dims);
        adam_step(&mut st, &mut p, &g).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = scalar_params(0.0);
        let g = scalar_params(0.01);
        let mut st = AdamState::new(AdamConfig::default(), &p).unwrap();
        adam_step(&mut st, &mut p, &g).unwrap();
        for t in p.tensors() {
            assert!((t.get(0, 0) - (-0.000999999)).abs() < 1e-9);
        }
        for idx in 0..14 {
            let (m_hat, v_hat) = st.corrected_moments(idx);
            assert!((m_hat.get(0, 0) - 0.01).abs() < 1e-15);
            assert!((v_hat.get(0, 0) - 1e-4).abs() < 1e-15);
        }
    }

    #[test]
    fn three_steps_match_transcribed_formulas() {
        // Transcription oracle: the update written out longhand per step.
        let grads = [0.3, -1.2, 0.05];
        let (lr, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-8);
        let (mut theta, mut m, mut v) = (0.5_f64, 0.0_f64, 0.0_f64);
        for (step, g) in grads.iter().enumerate() {
            let t = (step + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t));
            let v_hat = v / (1.0 - b2.powi(t));
            theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }

        let cfg = AdamConfig {
            lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        };
        let mut p = scalar_params(0.5);
        let mut st = AdamState::new(cfg, &p).unwrap();
        for g in grads {
            adam_step(&mut st, &mut p, &scalar_params(g)).unwrap();
        }
        assert_eq!(st.t, 3);
        for t in p.tensors() {
            assert!((t.get(0, 0) - theta).abs() < 1e-12);
        }
    }

    #[test]
    fn second_moment_stays_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = scalar_params(0.0);
        let mut st = AdamState::new(AdamConfig::default(), &p).unwrap();
        for _ in 0..200 {
            let g = scalar_params(rng.gen_range(-100.0..100.0));
            adam_step(&mut st, &mut p, &g).unwrap();
            assert!(st.v.iter().all(|v| v.data().iter().all(|&x| x >= 0.0)));
        }
    }

    #[test]
    fn sgd_basics() {
        let mut p = scalar_params(1.0);
        sgd_step(0.0, &mut p, &scalar_params(2.0)).unwrap();
        assert_eq!(p, scalar_params(1.0));
        sgd_step(0.5, &mut p, &scalar_params(2.0)).unwrap();
        assert_eq!(p, scalar_params(0.0));
    }

    #[test]
    fn sgd_and_first_adam_step_agree_in_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dims = LstmDims::new(3, 4, 1).unwrap();
        let base = init_params(dims, 0).unwrap();
        let mut g = LstmParams::zeros(dims);
        for t in g.tensors_mut() {
            for v in t.data_mut() {
                *v = loop {
                    let x: f64 = rng.gen_range(-1.0..1.0);
                    if x.abs() > 1e-6 {
                        break x;
                    }
                };
            }
        }
        let mut sgd = base.clone();
        sgd_step(0.01, &mut sgd, &g).unwrap();
        let mut adam = base.clone();
        let mut st = AdamState::new(AdamConfig::default(), &adam).unwrap();
        adam_step(&mut st, &mut adam, &g).unwrap();
        for ((b, s), a) in base.tensors().iter().zip(sgd.tensors()).zip(adam.tensors()) {
            for ((&b, &s), &a) in b.data().iter().zip(s.data()).zip(a.data()) {
                assert_eq!((s - b).signum(), (a - b).signum());
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = scalar_params(0.0);
        let g = LstmParams::zeros(LstmDims::new(2, 1, 1).unwrap());
        let mut st = AdamState::new(AdamConfig::default(), &p).unwrap();
        assert!(matches!(
            adam_step(&mut st, &mut p, &g),
            Err(SohError::Shape { .. })
        ));
        assert!(matches!(
            sgd_step(0.1, &mut p, &g),
            Err(SohError::Shape { .. })
        ));
    }

    #[test]
    fn invalid_betas_rejected() {
        let cfg = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::new(cfg, &scalar_params(0.0)).is_err());
    }
}
