use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{History, SgdState, TrainConfig, Trainer};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{Architecture, ParamVector};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwagConfig {
    pub burn_in_epochs: usize,
    pub snapshot_every_epochs: usize,
    pub max_rank: usize,
    pub swa_learning_rate: f64,
    /// Length of the constant-rate phase after burn-in.
    pub swa_epochs: usize,
}

impl Default for SwagConfig {
    fn default() -> Self {
        Self {
            burn_in_epochs: 10,
            snapshot_every_epochs: 1,
            max_rank: 20,
            swa_learning_rate: 1e-2,
            swa_epochs: 20,
        }
    }
}

impl SwagConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rank < 2 {
            return Err(Error::invalid(format!("max_rank must be at least 2, got {}", self.max_rank)));
        }
        if self.snapshot_every_epochs == 0 {
            return Err(Error::invalid("snapshot_every_epochs must be at least 1"));
        }
        if !(self.swa_learning_rate >= 0.0 && self.swa_learning_rate.is_finite()) {
            return Err(Error::invalid("swa_learning_rate must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Running moments of SGD iterates plus the most recent deviations from the
/// running mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SwagStats<T> {
    pub n_snapshots: usize,
    pub first_moment: ParamVector<T>,
    pub second_moment: ParamVector<T>,
    pub deviation_columns: VecDeque<ParamVector<T>>,
    pub max_rank: usize,
}

impl<T: Real> SwagStats<T> {
    pub fn new(param_count: usize, max_rank: usize) -> Result<Self> {
        if max_rank < 2 {
            return Err(Error::invalid(format!("max_rank must be at least 2, got {max_rank}")));
        }
        Ok(Self {
            n_snapshots: 0,
            first_moment: ParamVector::zeros(param_count),
            second_moment: ParamVector::zeros(param_count),
            deviation_columns: VecDeque::with_capacity(max_rank + 1),
            max_rank,
        })
    }

    pub fn collect(&mut self, theta: &ParamVector<T>) -> Result<()> {
        if theta.len() != self.first_moment.len() {
            return Err(Error::invalid(format!(
                "snapshot has {} parameters, expected {}",
                theta.len(),
                self.first_moment.len()
            )));
        }
        // incremental form: an unchanged snapshot leaves both moments bit-identical
        let n1 = T::from_usize_lossy(self.n_snapshots + 1);
        let mean = self.first_moment.as_mut_slice();
        let sq = self.second_moment.as_mut_slice();
        let mut dev = Vec::with_capacity(theta.len());
        for ((m, s), &t) in mean.iter_mut().zip(sq.iter_mut()).zip(theta.as_slice()) {
            *m += (t - *m) / n1;
            *s += (t * t - *s) / n1;
            dev.push(t - *m);
        }
        self.deviation_columns.push_back(ParamVector::new(dev));
        if self.deviation_columns.len() > self.max_rank {
            self.deviation_columns.pop_front();
        }
        self.n_snapshots += 1;
        Ok(())
    }

    /// `second_moment - first_moment^2` without clamping.
    pub fn raw_variance(&self) -> Vec<T> {
        self.second_moment
            .as_slice()
            .iter()
            .zip(self.first_moment.as_slice())
            .map(|(&s, &m)| s - m * m)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SwagOutcome<T> {
    pub stats: SwagStats<T>,
    pub swa_params: ParamVector<T>,
    /// Burn-in epochs followed by the constant-rate epochs.
    pub history: History,
}

/// Early-stopped burn-in, then constant-rate SGD with periodic snapshots.
pub fn train_swag<T: Real>(
    arch: &Architecture,
    dataset: &Dataset,
    train_indices: &[usize],
    config: &TrainConfig,
    swag: &SwagConfig,
) -> Result<SwagOutcome<T>> {
    train_swag_observed(arch, dataset, train_indices, config, swag, |_| {})
}

/// `train_swag`, calling `on_snapshot` with each collected iterate.
pub fn train_swag_observed<T: Real>(
    arch: &Architecture,
    dataset: &Dataset,
    train_indices: &[usize],
    config: &TrainConfig,
    swag: &SwagConfig,
    mut on_snapshot: impl FnMut(&ParamVector<T>),
) -> Result<SwagOutcome<T>> {
    swag.validate()?;
    let trainer = Trainer::new(arch, dataset, train_indices, config)?;
    let mut history = History::default();
    let burned = trainer.fit_early_stopped(trainer.initial_state()?, swag.burn_in_epochs, &mut history)?;
    let mut state = SgdState::new(burned.params);
    let mut stats = SwagStats::new(state.params.len(), swag.max_rank)?;
    for j in 0..swag.swa_epochs {
        let epoch = swag.burn_in_epochs + j;
        history.records.push(trainer.record(&mut state, epoch, swag.swa_learning_rate)?);
        if (j + 1) % swag.snapshot_every_epochs == 0 {
            stats.collect(&state.params)?;
            on_snapshot(&state.params);
        }
    }
    if stats.n_snapshots < 2 {
        return Err(Error::state(format!(
            "SWAG phase collected {} snapshot(s); at least 2 are required",
            stats.n_snapshots
        )));
    }
    let swa_params = stats.first_moment.clone();
    Ok(SwagOutcome {
        stats,
        swa_params,
        history,
    })
}
