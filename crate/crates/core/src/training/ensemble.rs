use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, History, TrainConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{Architecture, ParamVector};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub member_count: usize,
    pub base_seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            member_count: 10,
            base_seed: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.member_count == 0 {
            return Err(Error::invalid("member_count must be at least 1"));
        }
        Ok(())
    }

    pub fn member_seed(&self, member: usize) -> u64 {
        self.base_seed.wrapping_add(member as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    #[default]
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutcome<T> {
    pub members: Vec<ParamVector<T>>,
    pub histories: Vec<History>,
}

pub fn train_ensemble<T: Real>(
    arch: &Architecture,
    dataset: &Dataset,
    train_indices: &[usize],
    config: &TrainConfig,
    ens: &EnsembleConfig,
) -> Result<EnsembleOutcome<T>> {
    train_ensemble_with(arch, dataset, train_indices, config, ens, Schedule::Parallel)
}

/// Member `i` is `train` with seed `base_seed + i`; `config.seed` is ignored.
pub fn train_ensemble_with<T: Real>(
    arch: &Architecture,
    dataset: &Dataset,
    train_indices: &[usize],
    config: &TrainConfig,
    ens: &EnsembleConfig,
    schedule: Schedule,
) -> Result<EnsembleOutcome<T>> {
    ens.validate()?;
    let run = |member: usize| {
        let cfg = TrainConfig {
            seed: ens.member_seed(member),
            ..config.clone()
        };
        log::info!("training ensemble member {member} (seed {})", cfg.seed);
        train::<T>(arch, dataset, train_indices, &cfg).map_err(|e| Error::Member {
            member,
            source: Box::new(e),
        })
    };
    let results: Vec<_> = match schedule {
        Schedule::Parallel => (0..ens.member_count).into_par_iter().map(run).collect(),
        Schedule::Sequential => (0..ens.member_count).map(run).collect(),
    };
    let mut out = EnsembleOutcome {
        members: Vec::with_capacity(ens.member_count),
        histories: Vec::with_capacity(ens.member_count),
    };
    for r in results {
        let (p, h) = r?;
        out.members.push(p);
        out.histories.push(h);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;

    fn setup() -> (Architecture, Dataset, Vec<usize>, TrainConfig) {
        let cfg = TrainConfig {
            epochs_max: 3,
            batch_size: 4,
            seed: 123,
            ..Default::default()
        };
        (small_arch(2), separable(16, 16, 3), (0..16).collect(), cfg)
    }

    #[test]
    fn single_member_equals_plain_training() {
        let (arch, ds, idx, cfg) = setup();
        let ens = EnsembleConfig {
            member_count: 1,
            base_seed: 40,
        };
        let out = train_ensemble::<f64>(&arch, &ds, &idx, &cfg, &ens).unwrap();
        let plain = train::<f64>(&arch, &ds, &idx, &TrainConfig { seed: 40, ..cfg }).unwrap();
        assert_eq!(out.members, vec![plain.0]);
        assert_eq!(out.histories, vec![plain.1]);
    }

    #[test]
    fn schedule_does_not_change_members() {
        let (arch, ds, idx, cfg) = setup();
        let ens = EnsembleConfig {
            member_count: 3,
            base_seed: 7,
        };
        let par = train_ensemble_with::<f64>(&arch, &ds, &idx, &cfg, &ens, Schedule::Parallel).unwrap();
        let seq = train_ensemble_with::<f64>(&arch, &ds, &idx, &cfg, &ens, Schedule::Sequential).unwrap();
        assert_eq!(par, seq);
        assert_ne!(par.members[0], par.members[1]);
    }

    #[test]
    fn member_errors_carry_index() {
        let (arch, ds, _, cfg) = setup();
        let ens = EnsembleConfig {
            member_count: 2,
            base_seed: 0,
        };
        let err = train_ensemble::<f64>(&arch, &ds, &[], &cfg, &ens).unwrap_err();
        assert!(matches!(err, Error::Member { member: 0, .. }), "{err}");
        assert!(train_ensemble::<f64>(&arch, &ds, &[0], &cfg, &EnsembleConfig { member_count: 0, base_seed: 0 }).is_err());
    }
}
