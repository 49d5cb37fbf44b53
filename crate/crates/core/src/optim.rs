//! Adam and a central-difference gradient checker.

use crate::error::{GpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub batch_size: BatchSize,
}

impl AdamConfig {
    pub fn new(learning_rate: f64, max_epochs: usize, batch_size: BatchSize) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs,
            batch_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate.is_finite()
            && self.learning_rate >= 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0
            && self.max_epochs > 0
            && self.batch_size != BatchSize::Fixed(0);
        if ok {
            Ok(())
        } else {
            Err(GpError::InvalidConfig(format!("invalid Adam configuration {self:?}")))
        }
    }
}

/// Moment estimates and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Little-endian encoding: step, length, then m and v as raw f64 bits.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 16 * self.m.len());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.m.len() as u64).to_le_bytes());
        for x in self.m.iter().chain(self.v.iter()) {
            out.extend_from_slice(&x.to_bits().to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let word = |i: usize| -> Result<u64> {
            bytes
                .get(8 * i..8 * i + 8)
                .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| GpError::ModelFormat("truncated optimizer state".into()))
        };
        let step = word(0)?;
        let n = word(1)? as usize;
        if bytes.len() != 16 + 16 * n {
            return Err(GpError::ModelFormat("optimizer state length mismatch".into()));
        }
        let m = (0..n).map(|i| word(2 + i).map(f64::from_bits)).collect::<Result<_>>()?;
        let v = (0..n).map(|i| word(2 + n + i).map(f64::from_bits)).collect::<Result<_>>()?;
        Ok(AdamState { step, m, v })
    }
}

/// Adam minimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: AdamState,
    names: Vec<String>,
}

impl Adam {
    pub fn new(config: AdamConfig, names: Vec<String>) -> Self {
        let state = AdamState::new(names.len());
        Adam { config, state, names }
    }

    /// One bias-corrected Adam update that descends along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        adam_step(&self.config, &mut self.state, params, grad, &self.names)
    }
}

pub fn adam_step(
    cfg: &AdamConfig,
    state: &mut AdamState,
    params: &mut [f64],
    grad: &[f64],
    names: &[String],
) -> Result<()> {
    assert_eq!(params.len(), grad.len(), "parameter/gradient length");
    assert_eq!(state.m.len(), params.len(), "optimizer state dimension");
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        let parameter = names.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
        return Err(GpError::Divergence { parameter });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

pub const FD_STEP: f64 = 1e-5;

/// Central-difference check of `analytic` against `f` at `x`.
///
/// Returns max_i |analytic_i − numeric_i| / max(1, |numeric_i|).
pub fn check_gradient<F>(mut f: F, x: &[f64], analytic: &[f64]) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + FD_STEP;
        let up = f(&probe);
        probe[i] = x[i] - FD_STEP;
        let down = f(&probe);
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * FD_STEP);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    worst
}
