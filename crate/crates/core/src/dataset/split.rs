//! Cross-validation folds. Writer-dependent folds are stratified by label;
//! writer-independent folds partition the writers.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::seeded_stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FoldMode {
    #[serde(rename = "WD")]
    WriterDependent,
    #[serde(rename = "WI")]
    WriterIndependent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Serialized as the split manifest `{ "mode": "WD"|"WI", "folds": [...] }`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldSplit {
    pub mode: FoldMode,
    pub folds: Vec<Fold>,
}

impl FoldSplit {
    pub fn fold_count(&self) -> usize {
        self.folds.len()
    }
}

pub fn split(dataset: &Dataset, mode: FoldMode, fold_count: usize, seed: u64) -> Result<FoldSplit> {
    if fold_count < 2 {
        return Err(Error::invalid("fold_count must be at least 2"));
    }
    let n = dataset.len();
    let root = seeded_stream(seed);
    // fold index per sample
    let mut assignment = vec![0usize; n];
    match mode {
        FoldMode::WriterDependent => {
            let mut next = 0;
            for class in 0..dataset.class_count() {
                let mut members: Vec<usize> = (0..n).filter(|&i| dataset.samples()[i].label == class).collect();
                root.split(class as u64).shuffle(&mut members);
                for i in members {
                    assignment[i] = next % fold_count;
                    next += 1;
                }
            }
        }
        FoldMode::WriterIndependent => {
            let mut writers = dataset.writers();
            if writers.len() < fold_count {
                return Err(Error::invalid(format!(
                    "writer-independent split needs at least {fold_count} writers, found {}",
                    writers.len()
                )));
            }
            root.split(u64::MAX).shuffle(&mut writers);
            for (i, s) in dataset.samples().iter().enumerate() {
                let pos = writers.iter().position(|&w| w == s.writer_id).expect("writer listed");
                assignment[i] = pos % fold_count;
            }
        }
    }
    let folds = (0..fold_count)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == f);
            Fold { train, test }
        })
        .collect();
    Ok(FoldSplit { mode, folds })
}

pub fn save_split(split: &FoldSplit, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(split).map_err(|e| Error::format(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_split(path: impl AsRef<Path>) -> Result<FoldSplit> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line() as u64,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Hand, MultivariateTimeSeries, CHANNELS, STEPS};
    use crate::matrix::Matrix;
    use std::collections::HashSet;

    fn toy(n: usize, classes: usize, writers: u32) -> Dataset {
        let samples = (0..n)
            .map(|i| MultivariateTimeSeries {
                values: Matrix::filled(STEPS, CHANNELS, 0.0),
                label: i % classes,
                writer_id: i as u32 % writers,
                hand: Hand::Right,
            })
            .collect();
        Dataset::new(samples, (0..classes).map(|c| c.to_string()).collect()).unwrap()
    }

    fn assert_partition(s: &FoldSplit, n: usize) {
        let mut seen = HashSet::new();
        for f in &s.folds {
            for &i in &f.test {
                assert!(seen.insert(i), "index {i} in two test sets");
            }
            let train: HashSet<_> = f.train.iter().collect();
            assert!(f.test.iter().all(|i| !train.contains(i)));
            assert_eq!(f.train.len() + f.test.len(), n);
        }
        assert_eq!(seen.len(), n);
    }

    #[test]
    fn wd_five_folds_of_twenty() {
        let ds = toy(100, 10, 7);
        let s = split(&ds, FoldMode::WriterDependent, 5, 3).unwrap();
        assert!(s.folds.iter().all(|f| f.test.len() == 20));
        assert_partition(&s, 100);
    }

    #[test]
    fn wi_folds_are_writer_disjoint() {
        let ds = toy(120, 4, 10);
        let s = split(&ds, FoldMode::WriterIndependent, 5, 3).unwrap();
        assert_partition(&s, 120);
        for f in &s.folds {
            let test_writers: HashSet<u32> = f.test.iter().map(|&i| ds.samples()[i].writer_id).collect();
            assert!(f.train.iter().all(|&i| !test_writers.contains(&ds.samples()[i].writer_id)));
        }
    }

    #[test]
    fn split_is_deterministic() {
        let ds = toy(60, 3, 6);
        for mode in [FoldMode::WriterDependent, FoldMode::WriterIndependent] {
            assert_eq!(split(&ds, mode, 5, 11).unwrap(), split(&ds, mode, 5, 11).unwrap());
        }
    }

    #[test]
    fn too_few_writers() {
        let ds = toy(40, 2, 4);
        assert!(split(&ds, FoldMode::WriterIndependent, 5, 0).is_err());
        assert!(split(&ds, FoldMode::WriterDependent, 1, 0).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let ds = toy(30, 3, 6);
        let s = split(&ds, FoldMode::WriterIndependent, 3, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.json");
        save_split(&s, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(r#"{"mode":"WI","folds":[{"train":["#));
        assert_eq!(load_split(&path).unwrap(), s);
    }
}
