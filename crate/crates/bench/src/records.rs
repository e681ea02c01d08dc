//! One CSV row per (seed, method, budget) run.

use std::io::{Read, Write};
use std::path::Path;

use rambo_core::config::Toggles;
use serde::{Deserialize, Serialize};

use crate::config::SCHEMA_VERSION;
use crate::{io_err, BenchError, Result};

/// Column order is the CSV schema; bump [`SCHEMA_VERSION`] when it changes.
/// Toggle and `lambda_ot` columns are empty for baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub seed: u64,
    pub method: String,
    pub dataset: String,
    pub k: usize,
    #[serde(rename = "B")]
    pub budget: usize,
    pub lambda_ot: Option<f64>,
    pub bilevel: Option<bool>,
    pub ot: Option<bool>,
    pub ranknet: Option<bool>,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub pretrain_seconds: f64,
    pub acquire_seconds: f64,
}

pub const CSV_COLUMNS: [&str; 14] = [
    "schema_version",
    "seed",
    "method",
    "dataset",
    "k",
    "B",
    "lambda_ot",
    "bilevel",
    "ot",
    "ranknet",
    "val_accuracy",
    "test_accuracy",
    "pretrain_seconds",
    "acquire_seconds",
];

impl RunRecord {
    pub fn toggles(&self) -> Option<Toggles> {
        Some(Toggles {
            bilevel: self.bilevel?,
            ot: self.ot?,
            ranknet: self.ranknet?,
        })
    }

    /// Display name: the method, plus the disabled components of a RAMBO
    /// ablation variant, e.g. `rambo[-ot,-ranknet]`.
    pub fn label(&self) -> String {
        match self.toggles() {
            Some(t) if t != Toggles::all(true) => {
                let off: Vec<&str> = [("bilevel", t.bilevel), ("ot", t.ot), ("ranknet", t.ranknet)]
                    .into_iter()
                    .filter(|(_, on)| !on)
                    .map(|(name, _)| name)
                    .collect();
                format!("{}[-{}]", self.method, off.join(",-"))
            }
            _ => self.method.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(BenchError::Schema {
                found: self.schema_version as u64,
                expected: SCHEMA_VERSION,
            });
        }
        for (name, v) in [
            ("val_accuracy", self.val_accuracy),
            ("test_accuracy", self.test_accuracy),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(BenchError::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

pub fn write_csv(records: &[RunRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_csv(input: impl Read) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(BenchError::Config(format!(
            "unexpected CSV header: {headers:?}"
        )));
    }
    let mut out = Vec::new();
    for row in r.deserialize() {
        let rec: RunRecord = row?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn save_csv(records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(io_err(path))?;
    write_csv(records, std::io::BufWriter::new(f))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    read_csv(std::io::BufReader::new(f))
}
