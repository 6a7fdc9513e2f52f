//! Evaluation bundle: the CSV and JSON files written by `evaluate` and read
//! back by `report`.

use std::fs::File;
use std::path::{Path, PathBuf};

use uqpen::calibration::{CalibrationTable, Summary};
use uqpen::uncertainty::{save_with, write_matrix_csv, write_sweep_csv, ThresholdRow, UncertaintyReport};
use uqpen::Error;

pub const SAMPLES: &str = "samples.csv";
pub const ALEATORIC: &str = "aleatoric.csv";
pub const EPISTEMIC: &str = "epistemic.csv";
pub const CONFUSION: &str = "confusion.csv";
pub const CLASS_UNCERTAINTY: &str = "class_uncertainty.csv";
pub const CALIBRATION: &str = "calibration.csv";
pub const SWEEP: &str = "sweep.csv";
pub const SUMMARY: &str = "summary.json";

pub const FILES: [&str; 8] = [SAMPLES, ALEATORIC, EPISTEMIC, CONFUSION, CLASS_UNCERTAINTY, CALIBRATION, SWEEP, SUMMARY];

pub fn write_bundle(
    dir: &Path,
    report: &UncertaintyReport<f64>,
    table: &CalibrationTable,
    sweep: &[ThresholdRow],
) -> uqpen::Result<Summary> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let names = &report.class_names;
    save_with(dir.join(SAMPLES), |w| report.write_samples_csv(w))?;
    save_with(dir.join(ALEATORIC), |w| write_matrix_csv(&report.mean_aleatoric, names, w))?;
    save_with(dir.join(EPISTEMIC), |w| write_matrix_csv(&report.mean_epistemic, names, w))?;
    save_with(dir.join(CONFUSION), |w| write_matrix_csv(&report.confusion, names, w))?;
    save_with(dir.join(CLASS_UNCERTAINTY), |w| report.write_class_summary_csv(w))?;
    save_with(dir.join(CALIBRATION), |w| table.write_csv(w))?;
    save_with(dir.join(SWEEP), |w| write_sweep_csv(sweep, w))?;
    let summary = Summary::new(report, table);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    save_with(dir.join(SUMMARY), |w| {
        use std::io::Write;
        writeln!(w, "{json}")
    })?;
    Ok(summary)
}

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::io(path, source)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinRow {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub confidence: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRow {
    pub name: String,
    pub count: usize,
    pub mean_tu: Option<f64>,
    pub mean_au: Option<f64>,
    pub mean_eu: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub aleatoric: LabeledMatrix,
    pub epistemic: LabeledMatrix,
    /// Confusion in percent, as stored.
    pub confusion: LabeledMatrix,
    pub classes: Vec<ClassRow>,
    pub calibration: Vec<BinRow>,
    pub sweep: Vec<ThresholdRow>,
    pub summary: Summary,
}

struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

impl Table {
    fn open(path: PathBuf, expected: &[&str]) -> uqpen::Result<Self> {
        let file = File::open(&path).map_err(|e| io(&path, e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::format(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        if !expected.is_empty() && header != expected {
            return Err(Error::Parse {
                line: 1,
                message: format!("{}: expected header {}", path.display(), expected.join(",")),
            });
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec.iter().map(str::to_string).collect()));
        }
        Ok(Self { path, header, rows })
    }

    fn err(&self, line: u64, what: &str) -> Error {
        Error::Parse {
            line,
            message: format!("{}: {what}", self.path.display()),
        }
    }

    fn num(&self, line: u64, field: &str) -> uqpen::Result<f64> {
        field
            .parse::<f64>()
            .map_err(|_| self.err(line, &format!("`{field}` is not a number")))
    }

    fn opt(&self, line: u64, field: &str) -> uqpen::Result<Option<f64>> {
        if field.is_empty() {
            Ok(None)
        } else {
            self.num(line, field).map(Some)
        }
    }

    fn count(&self, line: u64, field: &str) -> uqpen::Result<usize> {
        field
            .parse::<usize>()
            .map_err(|_| self.err(line, &format!("`{field}` is not a count")))
    }
}

fn read_matrix(path: PathBuf) -> uqpen::Result<LabeledMatrix> {
    let t = Table::open(path, &[])?;
    if t.header.first().map(String::as_str) != Some("class") {
        return Err(t.err(1, "first column must be `class`"));
    }
    let names: Vec<String> = t.header[1..].to_vec();
    let mut rows = Vec::new();
    for (i, (line, rec)) in t.rows.iter().enumerate() {
        if rec.len() != names.len() + 1 || names.get(i) != Some(&rec[0]) {
            return Err(t.err(*line, "row does not match the class header"));
        }
        rows.push(rec[1..].iter().map(|f| t.num(*line, f)).collect::<uqpen::Result<Vec<_>>>()?);
    }
    if rows.len() != names.len() {
        return Err(t.err(1, "matrix is not square"));
    }
    Ok(LabeledMatrix { names, rows })
}

pub fn read_bundle(dir: &Path) -> uqpen::Result<Bundle> {
    for f in FILES {
        let p = dir.join(f);
        if !p.is_file() {
            return Err(io(&p, std::io::Error::new(std::io::ErrorKind::NotFound, "bundle file missing")));
        }
    }
    let aleatoric = read_matrix(dir.join(ALEATORIC))?;
    let epistemic = read_matrix(dir.join(EPISTEMIC))?;
    let confusion = read_matrix(dir.join(CONFUSION))?;
    if epistemic.names != aleatoric.names || confusion.names != aleatoric.names {
        return Err(Error::format("bundle matrices disagree on class names"));
    }

    let t = Table::open(dir.join(CLASS_UNCERTAINTY), &["class", "count", "mean_tu", "mean_au", "mean_eu"])?;
    let classes = t
        .rows
        .iter()
        .map(|(l, r)| {
            Ok(ClassRow {
                name: r[0].clone(),
                count: t.count(*l, &r[1])?,
                mean_tu: t.opt(*l, &r[2])?,
                mean_au: t.opt(*l, &r[3])?,
                mean_eu: t.opt(*l, &r[4])?,
            })
        })
        .collect::<uqpen::Result<Vec<_>>>()?;

    let t = Table::open(dir.join(CALIBRATION), &["bin_lower", "bin_upper", "count", "confidence", "accuracy"])?;
    let calibration = t
        .rows
        .iter()
        .map(|(l, r)| {
            Ok(BinRow {
                lower: t.num(*l, &r[0])?,
                upper: t.num(*l, &r[1])?,
                count: t.count(*l, &r[2])?,
                confidence: t.opt(*l, &r[3])?,
                accuracy: t.opt(*l, &r[4])?,
            })
        })
        .collect::<uqpen::Result<Vec<_>>>()?;

    let t = Table::open(
        dir.join(SWEEP),
        &["threshold", "acc_confident", "acc_uncertain", "n_confident", "n_uncertain"],
    )?;
    let sweep = t
        .rows
        .iter()
        .map(|(l, r)| {
            Ok(ThresholdRow {
                threshold: t.num(*l, &r[0])?,
                acc_confident: t.opt(*l, &r[1])?,
                acc_uncertain: t.opt(*l, &r[2])?,
                n_confident: t.count(*l, &r[3])?,
                n_uncertain: t.count(*l, &r[4])?,
            })
        })
        .collect::<uqpen::Result<Vec<_>>>()?;

    let path = dir.join(SUMMARY);
    let text = std::fs::read_to_string(&path).map_err(|e| io(&path, e))?;
    let summary: Summary =
        serde_json::from_str(&text).map_err(|e| Error::format(format!("{}: {e}", path.display())))?;

    Ok(Bundle {
        aleatoric,
        epistemic,
        confusion,
        classes,
        calibration,
        sweep,
        summary,
    })
}
