//! Dice loss, the Adam optimiser and the training loop.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{Gradients, Mode, Network, Param};
use super::tensor::{Scalar, Tensor};
use crate::dtcwt::{StackTag, SubbandStack};
use crate::error::{Error, Result};

/// Smoothing constant of the dice loss; keeps it defined on empty masks.
pub const DICE_EPS: f64 = 1.0;

/// `1 − (2Σpq + ε)/(Σp + Σq + ε)` over one sample (all channels jointly).
pub fn dice_loss<T: Scalar>(pred: &[T], truth: &[T]) -> T {
    let (inter, total) = dice_sums(pred, truth);
    let eps = T::of(DICE_EPS);
    T::one() - (T::of(2.0) * inter + eps) / (total + eps)
}

fn dice_sums<T: Scalar>(pred: &[T], truth: &[T]) -> (T, T) {
    pred.iter()
        .zip(truth)
        .fold((T::zero(), T::zero()), |(i, t), (&p, &q)| (i + p * q, t + p + q))
}

/// Dice loss of two stacks, summed over all six subbands.
pub fn dice_loss_stacks(pred: &SubbandStack, truth: &SubbandStack) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::dim("dice loss operands differ in shape"));
    }
    let p: Vec<f64> = pred.values().collect();
    let q: Vec<f64> = truth.values().collect();
    Ok(dice_loss(&p, &q))
}

/// Mean per-sample dice loss of a batch and its gradient w.r.t. `pred`.
pub fn dice_loss_batch<T: Scalar>(pred: &Tensor<T>, truth: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if pred.shape() != truth.shape() {
        return Err(Error::dim("prediction and truth batches differ in shape"));
    }
    let n = pred.batch();
    let scale = T::one() / T::of(n as f64);
    let eps = T::of(DICE_EPS);
    let two = T::of(2.0);
    let mut grad = Tensor::zeros(pred.shape());
    let mut total_loss = T::zero();
    for i in 0..n {
        let (p, q) = (pred.sample(i), truth.sample(i));
        let (inter, total) = dice_sums(p, q);
        let num = two * inter + eps;
        let den = total + eps;
        total_loss = total_loss + T::one() - num / den;
        // ∂/∂p_k of −num/den = −(2 q_k den − num)/den²
        let g = grad.sample_mut(i);
        for ((gk, &qk), _) in g.iter_mut().zip(q).zip(p) {
            *gk = -(two * qk * den - num) / (den * den) * scale;
        }
    }
    Ok((total_loss * scale, grad))
}

/// Elementwise `≥ threshold` → {0, 1}.
pub fn binarize(pred: &SubbandStack, threshold: f64) -> SubbandStack {
    let planes = pred
        .planes()
        .clone()
        .map(|p| p.map(|&v| if v >= threshold { 1.0 } else { 0.0 }));
    SubbandStack::new(StackTag::BinaryMask, planes).expect("planes share a shape")
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// The step size ramps up linearly over this many steps.
    pub warmup_steps: usize,
    step: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &[Param<T>], learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Adam<T> {
        let zeros = || {
            params
                .iter()
                .map(|p| {
                    if p.trainable {
                        vec![T::zero(); p.data.len()]
                    } else {
                        Vec::new()
                    }
                })
                .collect()
        };
        Adam {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            warmup_steps: 0,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step(&mut self, params: &mut [Param<T>], grads: &Gradients<T>) {
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::one() - T::of(self.beta1.powi(self.step));
        let c2 = T::one() - T::of(self.beta2.powi(self.step));
        let ramp = if self.warmup_steps > 0 {
            (self.step as f64 / self.warmup_steps as f64).min(1.0)
        } else {
            1.0
        };
        let lr = T::of(self.learning_rate * ramp);
        let eps = T::of(self.epsilon);
        for (((p, g), m), v) in params.iter_mut().zip(&grads.values).zip(&mut self.m).zip(&mut self.v) {
            if !p.trainable {
                continue;
            }
            for (((w, &gk), mk), vk) in p.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mk = b1 * *mk + (T::one() - b1) * gk;
                *vk = b2 * *vk + (T::one() - b2) * gk * gk;
                let mhat = *mk / c1;
                let vhat = *vk / c2;
                *w = *w - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Optimisation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    /// Linear learning-rate warmup; the first Adam steps move every weight
    /// by about the full step size, which can saturate whole output planes.
    pub warmup_steps: usize,
    pub validation_fraction: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub bn_momentum: f64,
    /// Optional cap on optimiser steps.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 8,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            warmup_steps: 50,
            validation_fraction: 0.1,
            patience: 10,
            bn_momentum: 0.1,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    /// Preset for the batch-normalised binarisation network, which
    /// tolerates (and needs) a larger step to sharpen its sigmoid outputs.
    pub fn n1() -> TrainConfig {
        TrainConfig {
            learning_rate: 2e-3,
            ..TrainConfig::default()
        }
    }

    /// Preset for the completion network; without normalisation, larger
    /// steps overshoot and can saturate whole output planes.
    pub fn n2() -> TrainConfig {
        TrainConfig {
            learning_rate: 3e-4,
            ..TrainConfig::default()
        }
    }

    /// The preset matching a network's architecture.
    pub fn for_spec(spec: &super::NetworkSpec) -> TrainConfig {
        if spec.use_batchnorm {
            TrainConfig::n1()
        } else {
            TrainConfig::n2()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::config("epochs, batch_size and patience must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be a finite non-negative number"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config("validation_fraction must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Number of held-out samples for `n` examples.
    pub fn validation_count(&self, n: usize) -> usize {
        ((self.validation_fraction * n as f64).round() as usize).min(n.saturating_sub(1))
    }
}

/// Paired network inputs and binary targets, each `C × side × side`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet<T> {
    pub channels: usize,
    pub side: usize,
    pub inputs: Vec<Vec<T>>,
    pub truths: Vec<Vec<T>>,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn from_stacks(inputs: &[SubbandStack], truths: &[SubbandStack]) -> Result<TrainingSet<T>> {
        if inputs.len() != truths.len() {
            return Err(Error::dim("input and truth counts differ"));
        }
        let side = inputs.first().map_or(0, SubbandStack::side);
        let flat = |s: &SubbandStack| -> Result<Vec<T>> {
            if s.shape() != (side, side) {
                return Err(Error::dim("training stacks differ in shape"));
            }
            Ok(s.values().map(T::of).collect())
        };
        Ok(TrainingSet {
            channels: 6,
            side,
            inputs: inputs.iter().map(flat).collect::<Result<_>>()?,
            truths: truths.iter().map(flat).collect::<Result<_>>()?,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn batch(&self, idx: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
        let (c, s) = (self.channels, self.side);
        let xs: Vec<&[T]> = idx.iter().map(|&i| self.inputs[i].as_slice()).collect();
        let ys: Vec<&[T]> = idx.iter().map(|&i| self.truths[i].as_slice()).collect();
        Ok((Tensor::from_samples(&xs, c, s, s)?, Tensor::from_samples(&ys, c, s, s)?))
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Loss on the held-out split (the training loss when nothing is held out).
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub steps: usize,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for r in &self.epochs {
            let _ = writeln!(s, "{},{:.8},{:.8}", r.epoch, r.train_loss, r.val_loss);
        }
        s
    }
}

/// One optimiser step on a batch; returns the batch loss.
pub fn train_step<T: Scalar>(
    net: &mut Network<T>,
    opt: &mut Adam<T>,
    x: &Tensor<T>,
    truth: &Tensor<T>,
    bn_momentum: f64,
) -> Result<f64> {
    let tape = net.forward_taped(x, Mode::Train)?;
    let (loss, dout) = dice_loss_batch(tape.output(), truth)?;
    let grads = net.backward(&tape, &dout)?;
    opt.step(net.params_mut(), &grads);
    net.update_running_stats(&tape, bn_momentum);
    Ok(loss.to_f64().unwrap_or(f64::NAN))
}

/// Mean inference-mode dice loss over `idx`.
pub fn evaluate_loss<T: Scalar>(net: &Network<T>, data: &TrainingSet<T>, idx: &[usize], batch: usize) -> Result<f64> {
    let mut total = 0.0;
    for chunk in idx.chunks(batch.max(1)) {
        let (x, y) = data.batch(chunk)?;
        let pred = net.predict(&x)?;
        let (loss, _) = dice_loss_batch(&pred, &y)?;
        total += loss.to_f64().unwrap_or(f64::NAN) * chunk.len() as f64;
    }
    Ok(total / idx.len().max(1) as f64)
}

/// Mini-batch Adam training. The split, shuffling and initialisation all
/// derive from `seed`; returns the parameters of the epoch with the lowest
/// validation loss.
pub fn train<T: Scalar>(
    net: Network<T>,
    data: &TrainingSet<T>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Network<T>, TrainLog)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::param("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = cfg.validation_count(data.len());
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();

    let mut net = net;
    let mut opt = Adam::new(net.params(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
    opt.warmup_steps = cfg.warmup_steps;
    let mut log = TrainLog {
        best_val_loss: f64::INFINITY,
        ..TrainLog::default()
    };
    let mut best = net.clone();
    let mut since_best = 0;
    'epochs: for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0;
        for chunk in train_idx.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| log.steps >= m) {
                break;
            }
            let (x, y) = data.batch(chunk)?;
            let loss = train_step(&mut net, &mut opt, &x, &y, cfg.bn_momentum)?;
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
            log.steps += 1;
        }
        if seen == 0 {
            break;
        }
        let train_loss = loss_sum / seen as f64;
        let val_loss = if val_idx.is_empty() {
            train_loss
        } else {
            evaluate_loss(&net, data, val_idx, cfg.batch_size)?
        };
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < log.best_val_loss {
            log.best_val_loss = val_loss;
            log.best_epoch = epoch;
            best = net.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break 'epochs;
            }
        }
    }
    Ok((best, log))
}
