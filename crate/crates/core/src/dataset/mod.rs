//! Labeled 13-channel pen-sensor recordings, the synthetic generator that
//! stands in for real recordings, CSV ingestion, and cross-validation folds.
//!
//! Sensor values are stored as `f64` regardless of the scalar type a model is
//! later trained in.

mod csv_io;
mod generator;
mod split;

pub use csv_io::{load_csv, read_csv, save_csv, write_csv};
pub use generator::{
    class_names, generate, render_sample, GeneratorConfig, StrokeTemplate, WriterStyle,
    ACCEL_GAIN, CONFUSABLE_SCALE, GRAVITY,
};
pub use split::{load_split, save_split, split, Fold, FoldMode, FoldSplit};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Channels per time step after ingestion (the raw time column is dropped).
pub const CHANNELS: usize = 13;
/// Time steps per sample after resampling.
pub const STEPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hand {
    Right,
    Left,
}

impl Hand {
    pub fn token(self) -> &'static str {
        match self {
            Hand::Right => "R",
            Hand::Left => "L",
        }
    }

    pub fn from_token(s: &str) -> Option<Hand> {
        match s {
            "R" => Some(Hand::Right),
            "L" => Some(Hand::Left),
            _ => None,
        }
    }
}

/// One labeled recording: `values` is `steps x channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateTimeSeries {
    pub values: Matrix<f64>,
    pub label: usize,
    pub writer_id: u32,
    pub hand: Hand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<MultivariateTimeSeries>,
    class_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, checking labels, finiteness, and class coverage.
    pub fn new(samples: Vec<MultivariateTimeSeries>, class_names: Vec<String>) -> Result<Self> {
        let ds = Self::from_parts(samples, class_names)?;
        let empty = ds.empty_classes();
        if !empty.is_empty() {
            return Err(Error::invalid(format!("classes without samples: {empty:?}")));
        }
        Ok(ds)
    }

    fn from_parts(samples: Vec<MultivariateTimeSeries>, class_names: Vec<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("dataset has no samples"));
        }
        if class_names.len() < 2 {
            return Err(Error::invalid("dataset needs at least 2 classes"));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.label >= class_names.len() {
                return Err(Error::invalid(format!(
                    "sample {i} has label {} but only {} classes exist",
                    s.label,
                    class_names.len()
                )));
            }
            if s.values.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("sample {i} contains non-finite values")));
            }
        }
        Ok(Self {
            samples,
            class_names,
        })
    }

    pub fn samples(&self) -> &[MultivariateTimeSeries] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Classes with no sample, ascending.
    pub fn empty_classes(&self) -> Vec<usize> {
        let mut seen = vec![false; self.class_count()];
        for s in &self.samples {
            seen[s.label] = true;
        }
        (0..seen.len()).filter(|&c| !seen[c]).collect()
    }

    /// Indices of samples recorded with `hand`, in dataset order.
    pub fn indices_by_hand(&self, hand: Hand) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.hand == hand)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count_by_hand(&self, hand: Hand) -> usize {
        self.samples.iter().filter(|s| s.hand == hand).count()
    }

    /// Sorted distinct writer ids.
    pub fn writers(&self) -> Vec<u32> {
        let mut w: Vec<u32> = self.samples.iter().map(|s| s.writer_id).collect();
        w.sort_unstable();
        w.dedup();
        w
    }
}

/// Keeps only `hand` samples, preserving order and the class list.
///
/// Classes left without samples are logged as a warning; the result is
/// still returned. An empty result is an error since a dataset cannot be
/// empty.
pub fn filter_by_hand(dataset: &Dataset, hand: Hand) -> Result<Dataset> {
    let samples: Vec<_> = dataset
        .samples
        .iter()
        .filter(|s| s.hand == hand)
        .cloned()
        .collect();
    let out = Dataset::from_parts(samples, dataset.class_names.clone())?;
    let empty = out.empty_classes();
    if !empty.is_empty() {
        let names: Vec<&str> = empty.iter().map(|&c| out.class_names[c].as_str()).collect();
        log::warn!("hand filter {hand:?} left classes without samples: {names:?}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(label: usize, hand: Hand) -> MultivariateTimeSeries {
        MultivariateTimeSeries {
            values: Matrix::filled(STEPS, CHANNELS, label as f64),
            label,
            writer_id: label as u32,
            hand,
        }
    }

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn filter_counts() {
        let mut samples: Vec<_> = (0..6).map(|i| sample(i % 2, Hand::Right)).collect();
        samples.push(sample(0, Hand::Left));
        samples.push(sample(1, Hand::Left));
        let ds = Dataset::new(samples, names(2)).unwrap();
        assert_eq!(filter_by_hand(&ds, Hand::Right).unwrap().len(), 6);
        assert_eq!(filter_by_hand(&ds, Hand::Left).unwrap().len(), 2);
    }

    #[test]
    fn filter_identity_on_single_hand() {
        let ds = Dataset::new((0..4).map(|i| sample(i % 2, Hand::Left)).collect(), names(2)).unwrap();
        assert_eq!(filter_by_hand(&ds, Hand::Left).unwrap(), ds);
    }

    #[test]
    fn filter_reports_empty_classes() {
        let samples = vec![
            sample(0, Hand::Right),
            sample(1, Hand::Right),
            sample(2, Hand::Right),
            sample(3, Hand::Left),
        ];
        let ds = Dataset::new(samples, names(4)).unwrap();
        let right = filter_by_hand(&ds, Hand::Right).unwrap();
        assert_eq!(right.class_count(), 4);
        assert_eq!(right.empty_classes(), vec![3]);
    }

    #[test]
    fn dataset_rejects_bad_labels() {
        assert!(Dataset::new(vec![sample(5, Hand::Right)], names(2)).is_err());
        assert!(Dataset::new(vec![], names(2)).is_err());
        assert!(Dataset::new(vec![sample(0, Hand::Right)], names(2)).is_err());
    }
}
