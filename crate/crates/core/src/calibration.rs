//! Binned confidence against accuracy, expected calibration error, and the
//! data behind reliability diagrams.
//!
//! Bin `e` of `E` covers `(e/E, (e+1)/E]`. Each sample contributes one
//! confidence: the largest entry of its averaged prediction.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::uncertainty::UncertaintyReport;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub confidence: f64,
    pub correct: bool,
}

impl Prediction {
    pub fn new(confidence: f64, correct: bool) -> Self {
        Self { confidence, correct }
    }
}

pub fn predictions<T: Real>(report: &UncertaintyReport<T>) -> Vec<Prediction> {
    report
        .records
        .iter()
        .map(|r| Prediction::new(r.confidence().as_f64(), r.correct()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Mean confidence; `None` for an empty bin.
    pub confidence: Option<f64>,
    /// Fraction correct; `None` for an empty bin.
    pub accuracy: Option<f64>,
}

impl Bin {
    /// `accuracy - confidence`: negative means overconfident.
    pub fn gap(&self) -> Option<f64> {
        Some(self.accuracy? - self.confidence?)
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    pub bins: Vec<Bin>,
    pub ece: f64,
    pub n: usize,
    pub accuracy: f64,
}

impl CalibrationTable {
    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    /// `bin_lower,bin_upper,count,confidence,accuracy`; empty bins leave the
    /// last two fields blank.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_lower,bin_upper,count,confidence,accuracy")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for b in &self.bins {
            writeln!(w, "{},{},{},{},{}", b.lower, b.upper, b.count, opt(b.confidence), opt(b.accuracy))?;
        }
        Ok(())
    }
}

fn bound(e: usize, bins: usize) -> f64 {
    e as f64 / bins as f64
}

/// Index of the bin `(lower, upper]` holding `c`, exact at the edges.
pub fn bin_index(c: f64, bins: usize) -> usize {
    let mut idx = ((c * bins as f64).ceil() as usize).clamp(1, bins) - 1;
    while idx > 0 && c <= bound(idx, bins) {
        idx -= 1;
    }
    while idx + 1 < bins && c > bound(idx + 1, bins) {
        idx += 1;
    }
    idx
}

pub fn calibrate(predictions: &[Prediction], bins: usize) -> Result<CalibrationTable> {
    if bins == 0 {
        return Err(Error::invalid("bin count must be at least 1"));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("no predictions to calibrate"));
    }
    if let Some(p) = predictions.iter().find(|p| !(p.confidence > 0.0 && p.confidence <= 1.0)) {
        return Err(Error::invalid(format!("confidence {} outside (0, 1]", p.confidence)));
    }
    let mut acc = vec![(0usize, 0.0f64, 0usize); bins];
    for p in predictions {
        let a = &mut acc[bin_index(p.confidence, bins)];
        a.0 += 1;
        a.1 += p.confidence;
        a.2 += p.correct as usize;
    }
    let n = predictions.len();
    let mut ece = 0.0;
    let bins: Vec<Bin> = acc
        .iter()
        .enumerate()
        .map(|(e, &(count, conf_sum, hits))| {
            let (confidence, accuracy) = if count == 0 {
                (None, None)
            } else {
                let c = conf_sum / count as f64;
                let a = hits as f64 / count as f64;
                ece += count as f64 / n as f64 * (a - c).abs();
                (Some(c), Some(a))
            };
            Bin {
                lower: bound(e, acc.len()),
                upper: bound(e + 1, acc.len()),
                count,
                confidence,
                accuracy,
            }
        })
        .collect();
    let accuracy = predictions.iter().filter(|p| p.correct).count() as f64 / n as f64;
    Ok(CalibrationTable { bins, ece, n, accuracy })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReliabilityBar {
    pub lower: f64,
    pub upper: f64,
    /// Bin accuracy, 0 when the bin is empty.
    pub height: f64,
    pub empty: bool,
    /// Mean confidence of the bin, if occupied.
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityData {
    pub bars: Vec<ReliabilityBar>,
    /// Endpoints of the perfect-calibration diagonal.
    pub bisector: [(f64, f64); 2],
    /// Samples per bin.
    pub histogram: Vec<usize>,
    pub ece: f64,
}

pub fn reliability_data(table: &CalibrationTable) -> ReliabilityData {
    ReliabilityData {
        bars: table
            .bins
            .iter()
            .map(|b| ReliabilityBar {
                lower: b.lower,
                upper: b.upper,
                height: b.accuracy.unwrap_or(0.0),
                empty: b.is_empty(),
                confidence: b.confidence,
            })
            .collect(),
        bisector: [(0.0, 0.0), (1.0, 1.0)],
        histogram: table.bins.iter().map(|b| b.count).collect(),
        ece: table.ece,
    }
}

/// Headline numbers of an evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub accuracy: f64,
    pub ece: f64,
    pub mean_tu: f64,
    pub mean_au: f64,
    pub mean_eu: f64,
}

impl Summary {
    pub fn new<T: Real>(report: &UncertaintyReport<T>, table: &CalibrationTable) -> Self {
        Self {
            accuracy: report.accuracy(),
            ece: table.ece,
            mean_tu: report.mean_tu(),
            mean_au: report.mean_au(),
            mean_eu: report.mean_eu(),
        }
    }
}
