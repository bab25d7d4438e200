//! Circuit datasets: labeling, line-delimited persistence, splitting.
//!
//! # File format
//!
//! UTF-8 text, one JSON object per line. Line 1 is a header:
//!
//! ```text
//! {"format":"entcap-dataset","version":1,"config":{...}}
//! ```
//!
//! Every following line is one circuit:
//!
//! ```text
//! {"id":"pqc-000000","n_qubits":6,"strategy":"GateStrategy",
//!  "gates":[{"kind":"RX","qubits":[3]},{"kind":"CNOT","qubits":[0,5]},...],
//!  "ent":0.4213,"sample_count":1000,"label_seed":1234,"std_error":0.004}
//! ```
//!
//! The four label fields are omitted for unlabeled circuits. CNOT qubits
//! are `[control, target]`. Reals are written as shortest round-trip
//! decimals and parsed with correct rounding, so a write/read cycle
//! reproduces every `f64` bit for bit. A zero-byte file is an empty dataset.

mod metrics;

pub use metrics::{
    evaluate, histogram, median, pearson, rmse, subsample_pc_distribution, MetricsReport, SubsamplePcs,
    SubsampleSpec, HISTOGRAM_BIN_WIDTH,
};

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate, Strategy};
use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, stream};
use crate::simulator::estimate_ent;

pub const DATASET_FORMAT: &str = "entcap-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub ent: f64,
    pub sample_count: usize,
    pub label_seed: u64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub circuit: Circuit,
    pub label: Option<Label>,
}

impl Record {
    pub fn unlabeled(id: impl Into<String>, circuit: Circuit) -> Self {
        Record {
            id: id.into(),
            circuit,
            label: None,
        }
    }

    pub fn ent(&self) -> Result<f64> {
        self.label
            .map(|l| l.ent)
            .ok_or_else(|| invalid(format!("record {} has no label", self.id)))
    }
}

pub fn record_id(index: usize) -> String {
    format!("pqc-{index:06}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl Header {
    pub fn new(config: serde_json::Value) -> Self {
        Header {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            config,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    id: String,
    n_qubits: usize,
    strategy: Strategy,
    gates: Vec<Gate>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    ent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    sample_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    label_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    std_error: Option<f64>,
}

impl Line {
    fn from_record(r: &Record) -> Self {
        Line {
            id: r.id.clone(),
            n_qubits: r.circuit.n_qubits(),
            strategy: r.circuit.strategy(),
            gates: r.circuit.gates().to_vec(),
            ent: r.label.map(|l| l.ent),
            sample_count: r.label.map(|l| l.sample_count),
            label_seed: r.label.map(|l| l.label_seed),
            std_error: r.label.map(|l| l.std_error),
        }
    }

    fn into_record(self) -> std::result::Result<Record, String> {
        let circuit = Circuit::new(self.n_qubits, self.gates, self.strategy).map_err(|e| e.to_string())?;
        let label = match (self.ent, self.sample_count, self.label_seed, self.std_error) {
            (None, None, None, None) => None,
            (Some(ent), Some(sample_count), Some(label_seed), Some(std_error)) => {
                if !(0.0..=1.0).contains(&ent) {
                    return Err(format!("ent {ent} outside [0, 1]"));
                }
                if sample_count < 1 {
                    return Err("sample_count must be at least 1".into());
                }
                if !(std_error >= 0.0) {
                    return Err(format!("std_error {std_error} is negative"));
                }
                Some(Label {
                    ent,
                    sample_count,
                    label_seed,
                    std_error,
                })
            }
            _ => return Err("label fields must be all present or all absent".into()),
        };
        Ok(Record {
            id: self.id,
            circuit,
            label,
        })
    }
}

pub fn write_dataset<W: Write>(mut out: W, header: &Header, records: &[Record]) -> Result<()> {
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut out, &Line::from_record(r))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a dataset file. Errors name the 1-based line number.
pub fn read_dataset<R: BufRead>(input: R) -> Result<(Option<Header>, Vec<Record>)> {
    let mut header = None;
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let parse_err = |reason: String| Error::Parse { line: lineno, reason };
        if lineno == 1 {
            let h: Header = serde_json::from_str(&line).map_err(|e| parse_err(format!("bad header: {e}")))?;
            if h.format != DATASET_FORMAT || h.version != DATASET_VERSION {
                return Err(Error::Format(format!(
                    "dataset {} version {} is not supported",
                    h.format, h.version
                )));
            }
            header = Some(h);
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let record = parsed.into_record().map_err(parse_err)?;
        if !ids.insert(record.id.clone()) {
            return Err(parse_err(format!("duplicate id {}", record.id)));
        }
        records.push(record);
    }
    Ok((header, records))
}

/// Labels every record with an entangling-capability estimate. Record `i`
/// uses seed `derive_seed(base_seed, i)`, so the result does not depend on
/// `parallel`.
pub fn label_records(
    records: Vec<Record>,
    sample_count: usize,
    base_seed: u64,
    parallel: bool,
) -> Result<Vec<Record>> {
    label_records_with_progress(records, sample_count, base_seed, parallel, |_| {})
}

/// As [`label_records`]; `progress` receives the running count of finished
/// records (in completion order when parallel).
pub fn label_records_with_progress(
    records: Vec<Record>,
    sample_count: usize,
    base_seed: u64,
    parallel: bool,
    progress: impl Fn(usize) + Sync,
) -> Result<Vec<Record>> {
    let done = AtomicUsize::new(0);
    if sample_count < 1 {
        return Err(invalid("sample_count must be at least 1"));
    }
    let label = |(i, mut r): (usize, Record)| -> Result<Record> {
        let seed = derive_seed(base_seed, i as u64);
        let est = estimate_ent(&r.circuit, sample_count, seed).map_err(|e| Error::Record {
            id: r.id.clone(),
            source: Box::new(e),
        })?;
        r.label = Some(Label {
            ent: est.value,
            sample_count,
            label_seed: seed,
            std_error: est.std_error,
        });
        progress(done.fetch_add(1, Ordering::Relaxed) + 1);
        Ok(r)
    };
    if parallel {
        records.into_par_iter().enumerate().map(label).collect()
    } else {
        records.into_iter().enumerate().map(label).collect()
    }
}

/// Assigns ids `pqc-000000, …` in order and labels every circuit.
pub fn build_dataset(
    circuits: Vec<Circuit>,
    sample_count: usize,
    base_seed: u64,
    parallel: bool,
) -> Result<Vec<Record>> {
    if circuits.is_empty() {
        return Err(invalid("no circuits to label"));
    }
    let records = circuits
        .into_iter()
        .enumerate()
        .map(|(i, c)| Record::unlabeled(record_id(i), c))
        .collect();
    label_records(records, sample_count, base_seed, parallel)
}

/// Seeded shuffle, then the first `round(n · train_fraction)` records train.
pub fn split<T: Clone>(records: &[T], train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(invalid(format!("train fraction {train_fraction} must lie in (0, 1)")));
    }
    let n_train = (records.len() as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train == records.len() {
        return Err(invalid(format!(
            "fraction {train_fraction} of {} records leaves an empty side",
            records.len()
        )));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut stream(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}
