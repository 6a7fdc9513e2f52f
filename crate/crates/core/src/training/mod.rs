//! Mini-batch SGD with momentum, coupled weight decay, and early stopping;
//! SWAG moment collection; deep ensembles.
//!
//! Randomness for a run with seed `s` is derived from `seeded_stream(s)`:
//! child 0 initializes the weights, child 1 carves the validation split, and
//! child `2 + epoch` shuffles that epoch (its child 0) and draws the dropout
//! masks of the sample at position `i` (its child `1 + i`). Per-sample
//! gradients are computed in parallel and summed in batch order, so results
//! do not depend on thread scheduling.

mod ensemble;
mod swag;

pub use ensemble::{train_ensemble, train_ensemble_with, EnsembleConfig, EnsembleOutcome, Schedule};
pub use swag::{train_swag, train_swag_observed, SwagConfig, SwagOutcome, SwagStats};

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{init_params, Architecture, Mode, Network, ParamVector};
use crate::prob::argmax;
use crate::rng::{seeded_stream, RngStream};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs_max: usize,
    pub batch_size: usize,
    pub early_stop_patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs_max: 2000,
            batch_size: 50,
            early_stop_patience: 50,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation_fraction must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

/// Per-epoch metrics. Training metrics are running means over the epoch's
/// mini-batches (dropout active); validation metrics use eval mode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    /// CSV with header `epoch,train_loss,train_acc,val_loss,val_acc`; missing
    /// validation metrics are empty fields.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,train_acc,val_loss,val_acc")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.epoch,
                r.train_loss,
                r.train_acc,
                opt(r.val_loss),
                opt(r.val_acc)
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Early-stopping metric of a record: validation loss, else train loss.
    pub fn monitored(r: &EpochRecord) -> f64 {
        r.val_loss.unwrap_or(r.train_loss)
    }
}

/// Parameters plus momentum buffer.
#[derive(Debug, Clone)]
pub(crate) struct SgdState<T> {
    pub params: ParamVector<T>,
    velocity: Vec<T>,
}

impl<T: Real> SgdState<T> {
    pub(crate) fn new(params: ParamVector<T>) -> Self {
        let velocity = vec![T::zero(); params.len()];
        Self { params, velocity }
    }

    /// `v = momentum v + (g + wd theta)`, `theta -= lr v`.
    fn step(&mut self, grad: &[T], lr: f64, momentum: f64, weight_decay: f64) {
        let (lr, mu, wd) = (T::lit(lr), T::lit(momentum), T::lit(weight_decay));
        for ((theta, v), &g) in self.params.as_mut_slice().iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = mu * *v + (g + wd * *theta);
            *theta -= lr * *v;
        }
    }
}

/// Network, training inputs converted to `T`, and the fit/validation split.
pub(crate) struct Trainer<'a, T> {
    net: Network,
    inputs: Vec<Matrix<T>>,
    labels: Vec<usize>,
    fit: Vec<usize>,
    val: Vec<usize>,
    config: &'a TrainConfig,
    root: RngStream,
}

impl<'a, T: Real> Trainer<'a, T> {
    pub(crate) fn new(arch: &Architecture, dataset: &Dataset, train_indices: &[usize], config: &'a TrainConfig) -> Result<Self> {
        config.validate()?;
        if train_indices.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        if let Some(&bad) = train_indices.iter().find(|&&i| i >= dataset.len()) {
            return Err(Error::invalid(format!("training index {bad} out of range")));
        }
        if arch.class_count != dataset.class_count() {
            return Err(Error::invalid(format!(
                "architecture has {} classes, dataset has {}",
                arch.class_count,
                dataset.class_count()
            )));
        }
        let net = Network::new(arch)?;
        let inputs = dataset.samples().iter().map(|s| s.values.map(T::lit)).collect();
        let labels = dataset.samples().iter().map(|s| s.label).collect();
        let root = seeded_stream(config.seed);
        let mut order = train_indices.to_vec();
        root.split(1).shuffle(&mut order);
        let n_val = ((config.validation_fraction * order.len() as f64).floor() as usize).min(order.len() - 1);
        let fit = order.split_off(n_val);
        Ok(Self {
            net,
            inputs,
            labels,
            fit,
            val: order,
            config,
            root,
        })
    }

    pub(crate) fn initial_state(&self) -> Result<SgdState<T>> {
        Ok(SgdState::new(init_params(self.net.arch(), &mut self.root.split(0))?))
    }

    /// One pass over the fit set; returns mean loss and accuracy.
    pub(crate) fn run_epoch(&self, state: &mut SgdState<T>, epoch: usize, lr: f64) -> Result<(f64, f64)> {
        let stream = self.root.split(2 + epoch as u64);
        let mut order = self.fit.clone();
        stream.split(0).shuffle(&mut order);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        let mut grad = vec![T::zero(); state.params.len()];
        for (b, batch) in order.chunks(self.config.batch_size).enumerate() {
            let base = b * self.config.batch_size;
            let params = &state.params;
            let per_sample: Vec<Result<(T, ParamVector<T>, bool)>> = batch
                .par_iter()
                .enumerate()
                .map(|(j, &idx)| {
                    let mut rng = stream.split(1 + (base + j) as u64);
                    let out = self.net.forward(params, &self.inputs[idx], Mode::Train(&mut rng))?;
                    let hit = argmax(&out.logits) == self.labels[idx];
                    let (loss, g) = self.net.backward(params, &out, self.labels[idx])?;
                    Ok((loss, g, hit))
                })
                .collect();
            grad.iter_mut().for_each(|g| *g = T::zero());
            for item in per_sample {
                let (loss, g, hit) = item?;
                loss_sum += loss.as_f64();
                correct += hit as usize;
                for (acc, v) in grad.iter_mut().zip(g.as_slice()) {
                    *acc += *v;
                }
            }
            let inv = T::one() / T::from_usize_lossy(batch.len());
            grad.iter_mut().for_each(|g| *g *= inv);
            state.step(&grad, lr, self.config.momentum, self.config.weight_decay);
        }
        let n = order.len() as f64;
        Ok((loss_sum / n, correct as f64 / n))
    }

    /// Eval-mode mean loss and accuracy on the validation split.
    pub(crate) fn validate(&self, params: &ParamVector<T>) -> Result<Option<(f64, f64)>> {
        if self.val.is_empty() {
            return Ok(None);
        }
        let results: Vec<Result<(f64, bool)>> = self
            .val
            .par_iter()
            .map(|&idx| {
                let out = self.net.forward(params, &self.inputs[idx], Mode::Eval)?;
                let hit = argmax(&out.logits) == self.labels[idx];
                let (loss, _) = self.net.backward(params, &out, self.labels[idx])?;
                Ok((loss.as_f64(), hit))
            })
            .collect();
        let (mut loss, mut correct) = (0.0, 0usize);
        for r in results {
            let (l, hit) = r?;
            loss += l;
            correct += hit as usize;
        }
        let n = self.val.len() as f64;
        Ok(Some((loss / n, correct as f64 / n)))
    }

    pub(crate) fn record(&self, state: &mut SgdState<T>, epoch: usize, lr: f64) -> Result<EpochRecord> {
        let (train_loss, train_acc) = self.run_epoch(state, epoch, lr)?;
        if !train_loss.is_finite() {
            return Err(Error::state(format!("training loss diverged at epoch {epoch}")));
        }
        let val = self.validate(&state.params)?;
        Ok(EpochRecord {
            epoch,
            train_loss,
            train_acc,
            val_loss: val.map(|v| v.0),
            val_acc: val.map(|v| v.1),
        })
    }

    /// Early-stopped SGD from `state`; returns the best-monitored weights.
    pub(crate) fn fit_early_stopped(&self, mut state: SgdState<T>, epochs: usize, history: &mut History) -> Result<SgdState<T>> {
        let mut best: Option<(f64, SgdState<T>)> = None;
        let mut stale = 0;
        for epoch in 0..epochs {
            let rec = self.record(&mut state, epoch, self.config.learning_rate)?;
            history.records.push(rec);
            let metric = History::monitored(&rec);
            if best.as_ref().is_none_or(|(b, _)| metric < *b) {
                best = Some((metric, state.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= self.config.early_stop_patience {
                    break;
                }
            }
        }
        Ok(best.map_or(state, |(_, s)| s))
    }
}

/// Trains one network from the seed in `config`.
pub fn train<T: Real>(
    arch: &Architecture,
    dataset: &Dataset,
    train_indices: &[usize],
    config: &TrainConfig,
) -> Result<(ParamVector<T>, History)> {
    let trainer = Trainer::new(arch, dataset, train_indices, config)?;
    let mut history = History::default();
    let state = trainer.fit_early_stopped(trainer.initial_state()?, config.epochs_max, &mut history)?;
    Ok((state.params, history))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use crate::dataset::{Dataset, Hand, MultivariateTimeSeries};
    use crate::matrix::Matrix;
    use crate::model::{Architecture, ConvBlock, TcnConfig};
    use crate::rng::seeded_stream;

    pub fn small_arch(classes: usize) -> Architecture {
        Architecture {
            input_steps: 16,
            input_channels: 3,
            conv_blocks: vec![ConvBlock {
                filters: 6,
                kernel_size: 3,
                dropout_rate: 0.2,
            }],
            tcn: TcnConfig {
                channels: 6,
                kernel_size: 2,
                dilations: vec![1, 2],
            },
            class_count: classes,
        }
    }

    /// Two classes separated by the sign of channel 0.
    pub fn separable(n: usize, steps: usize, channels: usize) -> Dataset {
        let mut rng = seeded_stream(77);
        let samples = (0..n)
            .map(|i| {
                let label = i % 2;
                let sign = if label == 0 { 1.0 } else { -1.0 };
                let data = (0..steps * channels)
                    .map(|j| if j % channels == 0 { sign } else { 0.0 } + 0.1 * rng.next_normal())
                    .collect();
                MultivariateTimeSeries {
                    values: Matrix::from_vec(steps, channels, data).unwrap(),
                    label,
                    writer_id: (i / 4) as u32,
                    hand: Hand::Right,
                }
            })
            .collect();
        Dataset::new(samples, vec!["a".into(), "b".into()]).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn quick(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs_max: 5,
            batch_size: 4,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_initial_params() {
        let arch = small_arch(2);
        let ds = separable(20, 16, 3);
        let idx: Vec<usize> = (0..20).collect();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..quick(3)
        };
        let (p, _) = train::<f64>(&arch, &ds, &idx, &cfg).unwrap();
        let init: ParamVector<f64> = init_params(&arch, &mut seeded_stream(3).split(0)).unwrap();
        assert_eq!(p, init);
    }

    #[test]
    fn training_is_deterministic() {
        let arch = small_arch(2);
        let ds = separable(20, 16, 3);
        let idx: Vec<usize> = (0..20).collect();
        let a = train::<f64>(&arch, &ds, &idx, &quick(5)).unwrap();
        let b = train::<f64>(&arch, &ds, &idx, &quick(5)).unwrap();
        assert_eq!(a, b);
        let c = train::<f64>(&arch, &ds, &idx, &quick(6)).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn returns_best_validation_weights() {
        let arch = small_arch(2);
        let ds = separable(40, 16, 3);
        let idx: Vec<usize> = (0..40).collect();
        let cfg = TrainConfig {
            epochs_max: 12,
            batch_size: 4,
            learning_rate: 0.05,
            validation_fraction: 0.25,
            early_stop_patience: 3,
            seed: 1,
            ..Default::default()
        };
        let trainer = Trainer::<f64>::new(&arch, &ds, &idx, &cfg).unwrap();
        let (params, history) = train::<f64>(&arch, &ds, &idx, &cfg).unwrap();
        let best = history
            .records
            .iter()
            .map(|r| r.val_loss.unwrap())
            .fold(f64::INFINITY, f64::min);
        let (val_loss, _) = trainer.validate(&params).unwrap().unwrap();
        assert_eq!(val_loss, best);
    }

    #[test]
    fn empty_training_set_and_bad_config() {
        let arch = small_arch(2);
        let ds = separable(8, 16, 3);
        assert!(train::<f64>(&arch, &ds, &[], &quick(0)).is_err());
        let bad = TrainConfig {
            validation_fraction: 1.0,
            ..quick(0)
        };
        assert!(train::<f64>(&arch, &ds, &[0, 1], &bad).is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..quick(0)
        };
        assert!(train::<f64>(&arch, &ds, &[0, 1], &bad).is_err());
    }

    #[test]
    fn history_csv_header() {
        let h = History {
            records: vec![EpochRecord {
                epoch: 0,
                train_loss: 0.5,
                train_acc: 1.0,
                val_loss: None,
                val_acc: None,
            }],
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,train_loss,train_acc,val_loss,val_acc\n0,0.5,1,,\n");
    }
}
