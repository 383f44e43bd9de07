//! Optimizers, the training loop and the finite-difference gradient check.

use std::collections::BTreeSet;

use log::info;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::network::{EncodedExample, Grad, TinyGenModel};
use crate::data::{Schedule, Task, TrainingExample};
use crate::error::{contract, Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        Self::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam(0.01)
    }
}

pub const DEFAULT_CLIP_NORM: f64 = 5.0;

/// Optimizer with its moment state. Adam touches only the embedding rows
/// present in a gradient.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub clip_norm: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, clip_norm: f64, n_params: usize) -> Self {
        let (m, v) = match config {
            OptimizerConfig::Sgd { .. } => (Vec::new(), Vec::new()),
            OptimizerConfig::Adam { .. } => (vec![0.0; n_params], vec![0.0; n_params]),
        };
        Self { config, clip_norm, m, v, t: 0 }
    }

    /// Clip to `clip_norm` and apply one update.
    pub fn apply(&mut self, model: &mut TinyGenModel, mut grad: Grad) {
        let norm = grad.norm();
        if self.clip_norm > 0.0 && norm > self.clip_norm {
            grad.scale(self.clip_norm / norm);
        }
        self.t += 1;
        let layout = *model.layout();
        let d = layout.d;
        let params = &mut model.params;
        match self.config {
            OptimizerConfig::Sgd { lr } => {
                for (&row, g) in &grad.tokens {
                    let o = layout.tok + row as usize * d;
                    for (p, gi) in params[o..o + d].iter_mut().zip(g) {
                        *p -= lr * gi;
                    }
                }
                for (p, gi) in params[layout.dense_start()..].iter_mut().zip(&grad.dense) {
                    *p -= lr * gi;
                }
            }
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                let step = lr * bc2.sqrt() / bc1;
                let (m, v) = (&mut self.m, &mut self.v);
                let mut update = |i: usize, g: f64| {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                    params[i] -= step * m[i] / (v[i].sqrt() + eps);
                };
                for (&row, g) in &grad.tokens {
                    let o = layout.tok + row as usize * d;
                    for (j, gi) in g.iter().enumerate() {
                        update(o + j, *gi);
                    }
                }
                let o = layout.dense_start();
                for (j, gi) in grad.dense.iter().enumerate() {
                    update(o + j, *gi);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    /// Index-task and retrieve-task example counts in the batch.
    pub task_mix_counts: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Stop after this many updates even mid-epoch.
    pub max_steps: Option<usize>,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            max_steps: None,
            batch_size: 16,
            optimizer: OptimizerConfig::default(),
            clip_norm: DEFAULT_CLIP_NORM,
            seed: 0,
        }
    }
}

fn mix_counts(batch: &[EncodedExample]) -> (usize, usize) {
    let idx = batch.iter().filter(|e| e.task == Task::Index).count();
    (idx, batch.len() - idx)
}

/// One optimizer update on `batch`.
pub fn train_step(
    model: &mut TinyGenModel,
    optimizer: &mut Optimizer,
    batch: &[EncodedExample],
    step: usize,
    epoch: usize,
) -> Result<TrainReport> {
    let (loss, grad) = model.loss_and_grad(batch)?;
    if !loss.mean.is_finite() {
        return Err(Error::Training(format!(
            "non-finite loss {} at step {step}",
            loss.mean
        )));
    }
    optimizer.apply(model, grad);
    if !model.all_finite() {
        return Err(Error::Training(format!(
            "non-finite parameters after step {step} (loss {})",
            loss.mean
        )));
    }
    Ok(TrainReport {
        step,
        epoch,
        loss: loss.mean,
        task_mix_counts: mix_counts(batch),
    })
}

/// Train on the schedule's epochs, shuffling each epoch with a seeded stream.
pub fn train(
    model: &mut TinyGenModel,
    schedule: &Schedule,
    config: &TrainConfig,
    mut on_step: impl FnMut(&TrainReport),
) -> Result<Vec<TrainReport>> {
    if config.batch_size == 0 {
        return Err(contract("batch_size must be positive"));
    }
    let mut optimizer = Optimizer::new(config.optimizer, config.clip_norm, model.n_params());
    let shuffle_seed = seed::derive(config.seed, "shuffle");
    let mut reports = Vec::new();
    let mut step = 0;
    'epochs: for epoch in 0..config.epochs {
        let examples = schedule.epoch(epoch)?;
        let mut encoded = prepare_all(model, &examples)?;
        crate::data::shuffle(&mut encoded, seed::derive_index(shuffle_seed, epoch as u64));
        for batch in encoded.chunks(config.batch_size) {
            if config.max_steps.is_some_and(|m| step >= m) {
                break 'epochs;
            }
            let r = train_step(model, &mut optimizer, batch, step, epoch)?;
            on_step(&r);
            reports.push(r);
            step += 1;
        }
        if let Some(last) = reports.last() {
            info!("epoch {epoch}: step {} loss {:.4}", last.step, last.loss);
        }
    }
    Ok(reports)
}

pub fn prepare_all(model: &TinyGenModel, examples: &[TrainingExample]) -> Result<Vec<EncodedExample>> {
    examples.iter().map(|e| model.prepare(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// Largest `|a - n| / max(|a|, |n|)` over coordinates with a gradient
    /// of magnitude at least `1e-6`.
    pub max_relative_error: f64,
    /// Largest `|a - n|` over the remaining coordinates.
    pub max_absolute_error_small: f64,
    pub coordinates: usize,
}

pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compare the analytic gradient of one example's loss with central
/// differences over `n_coords` seeded coordinates. Three in four are drawn
/// from parameters the example touches.
pub fn gradient_check(
    model: &TinyGenModel,
    example: &EncodedExample,
    epsilon: f64,
    n_coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(contract(format!("epsilon {epsilon} outside [1e-7, 1e-3]")));
    }
    let batch = std::slice::from_ref(example);
    let (_, grad) = model.loss_and_grad(batch)?;
    let layout = *model.layout();
    let d = layout.d;
    let active_tokens: BTreeSet<u32> = example.tokens.iter().copied().collect();
    let mut rng = seed::rng(seed);
    let mut coords = Vec::with_capacity(n_coords);
    for _ in 0..n_coords {
        let idx = if rng.random_bool(0.75) {
            let n_active = active_tokens.len() * d + layout.dense_len();
            let r = rng.random_range(0..n_active);
            if r < active_tokens.len() * d {
                let row = *active_tokens.iter().nth(r / d).expect("in range");
                layout.tok + row as usize * d + r % d
            } else {
                layout.dense_start() + (r - active_tokens.len() * d)
            }
        } else {
            rng.random_range(0..layout.total)
        };
        coords.push(idx);
    }
    let mut probe = model.clone();
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for &i in &coords {
        let orig = probe.params[i];
        probe.params[i] = orig + epsilon;
        let up = probe.batch_loss(batch);
        probe.params[i] = orig - epsilon;
        let down = probe.batch_loss(batch);
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let analytic = grad.get(&layout, i);
        let scale = analytic.abs().max(numeric.abs());
        let diff = (analytic - numeric).abs();
        if scale >= GRAD_CHECK_FLOOR {
            max_rel = max_rel.max(diff / scale);
        } else {
            max_abs = max_abs.max(diff);
        }
    }
    Ok(GradCheckReport {
        max_relative_error: max_rel,
        max_absolute_error_small: max_abs,
        coordinates: coords.len(),
    })
}
