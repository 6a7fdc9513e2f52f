//! Sample CSV: `sample_id,writer_id,hand,label,step,c0,...,c12`, one row per
//! time step. `label` holds the class name; class indices follow sorted
//! name order.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, Hand, MultivariateTimeSeries, CHANNELS, STEPS};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::prob::resample_linear;

const ID_COLUMNS: [&str; 5] = ["sample_id", "writer_id", "hand", "label", "step"];

fn header() -> Vec<String> {
    ID_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((0..CHANNELS).map(|c| format!("c{c}")))
        .collect()
}

pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let csv_err = |e: csv::Error| Error::format(e.to_string());
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(header()).map_err(csv_err)?;
    let names = dataset.class_names();
    for (id, s) in dataset.samples().iter().enumerate() {
        for t in 0..s.values.rows() {
            let mut rec = vec![
                id.to_string(),
                s.writer_id.to_string(),
                s.hand.token().to_string(),
                names[s.label].clone(),
                t.to_string(),
            ];
            rec.extend(s.values.row(t).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::format(e.to_string()))
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(dataset, std::io::BufWriter::new(file))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file))
}

struct Group {
    writer_id: u32,
    hand: Hand,
    label: String,
    first_line: u64,
    rows: Vec<(usize, u64, [f64; CHANNELS])>,
}

/// Parses sample CSV, resampling every sample to 64 steps.
pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let expected = header();
    let mut column = Vec::with_capacity(expected.len());
    for name in &expected {
        match headers.iter().position(|h| h == name) {
            Some(i) => column.push(i),
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("missing column `{name}`"),
                })
            }
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Group> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let perr = |message: String| Error::Parse { line, message };
        if rec.len() != headers.len() {
            return Err(perr(format!("row has {} fields, expected {}", rec.len(), headers.len())));
        }
        let field = |i: usize| rec.get(column[i]).unwrap_or("");
        let sample_id = field(0).to_string();
        let writer_id: u32 = field(1)
            .parse()
            .map_err(|_| perr(format!("bad writer_id `{}`", field(1))))?;
        let hand = Hand::from_token(field(2)).ok_or_else(|| perr(format!("unknown hand token `{}`", field(2))))?;
        let label = field(3).to_string();
        if label.is_empty() {
            return Err(perr("empty label".into()));
        }
        let step: usize = field(4).parse().map_err(|_| perr(format!("bad step `{}`", field(4))))?;
        let mut values = [0.0; CHANNELS];
        for (c, v) in values.iter_mut().enumerate() {
            let raw = field(5 + c);
            *v = raw
                .trim()
                .parse::<f64>()
                .map_err(|_| perr(format!("bad value `{raw}` in column c{c}")))?;
            if !v.is_finite() {
                return Err(perr(format!("non-finite value in column c{c}")));
            }
        }
        let group = groups.entry(sample_id.clone()).or_insert_with(|| {
            order.push(sample_id.clone());
            Group {
                writer_id,
                hand,
                label: label.clone(),
                first_line: line,
                rows: Vec::new(),
            }
        });
        if group.writer_id != writer_id || group.hand != hand || group.label != label {
            return Err(perr(format!(
                "sample `{sample_id}` changes writer, hand, or label (first seen at line {})",
                group.first_line
            )));
        }
        group.rows.push((step, line, values));
    }
    if order.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no samples".into(),
        });
    }

    let mut names: Vec<String> = groups.values().map(|g| g.label.clone()).collect();
    names.sort();
    names.dedup();
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

    let mut samples = Vec::with_capacity(order.len());
    for id in &order {
        let group = &groups[id];
        let mut rows = group.rows.clone();
        rows.sort_by_key(|r| r.0);
        for (expect, &(step, line, _)) in rows.iter().enumerate() {
            if step != expect {
                return Err(Error::Parse {
                    line,
                    message: format!("sample `{id}`: step {step} where {expect} was expected"),
                });
            }
        }
        let data: Vec<f64> = rows.iter().flat_map(|r| r.2).collect();
        let raw = Matrix::from_vec(rows.len(), CHANNELS, data)?;
        samples.push(MultivariateTimeSeries {
            values: resample_linear(&raw, STEPS)?,
            label: index[group.label.as_str()],
            writer_id: group.writer_id,
            hand: group.hand,
        });
    }
    Dataset::new(samples, names)
}
