//! Sweep rows and their CSV/JSON encodings.
//!
//! The CSV starts with a `# schema=<id>` line followed by the column header.
//! Scalars are written in shortest round-trip form. Lists use `;` between
//! values carrying 12 significant digits; records round lists to that
//! precision on construction, so both encodings round-trip bit-exactly.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kt::{ConstraintSet, KTReport};
use crate::optimizer::Solution;
use crate::special::ChannelSpec;

pub const SWEEP_SCHEMA: &str = "rician-capacity.sweep.v1";
pub const SOLVE_SCHEMA: &str = "rician-capacity.solve.v1";

pub const COLUMNS: [&str; 13] = [
    "snr_alpha",
    "model",
    "constraint",
    "rician_k",
    "kappa",
    "capacity_nats",
    "n_points",
    "locations",
    "probabilities",
    "lambda1",
    "lambda2",
    "kt_grid_min",
    "converged",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRecord {
    pub snr_alpha: f64,
    pub model: String,
    pub constraint: String,
    pub rician_k: f64,
    pub kappa: Option<f64>,
    pub capacity_nats: f64,
    pub n_points: usize,
    pub locations: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub kt_grid_min: f64,
    pub converged: bool,
}

/// Shortest round-trip form, in exponent notation outside `[1e-4, 1e15)`.
fn real(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn round12(x: f64) -> f64 {
    format!("{x:.11e}").parse().unwrap_or(x)
}

impl SweepRecord {
    pub fn from_solution(
        channel: &ChannelSpec,
        constraints: &ConstraintSet,
        solution: &Solution,
    ) -> Self {
        let d = &solution.distribution;
        let r = &solution.report;
        let m = constraints.multiplier_count();
        Self {
            snr_alpha: constraints.alpha(),
            model: channel.model.name().to_string(),
            constraint: constraints.name().to_string(),
            rician_k: channel.rician_k,
            kappa: constraints.kappa(),
            capacity_nats: solution.capacity_nats,
            n_points: d.len(),
            locations: d.locations().into_iter().map(round12).collect(),
            probabilities: d.probabilities().into_iter().map(round12).collect(),
            lambda1: (m >= 1).then_some(r.lambda1),
            lambda2: (m >= 2).then_some(r.lambda2),
            kt_grid_min: r.grid_min,
            converged: solution.converged,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.locations.len() != self.n_points || self.probabilities.len() != self.n_points {
            return Err(Error::Parse(format!(
                "n_points is {} but there are {} locations and {} probabilities",
                self.n_points,
                self.locations.len(),
                self.probabilities.len()
            )));
        }
        Ok(())
    }

    fn csv_fields(&self) -> [String; 13] {
        let opt = |x: Option<f64>| x.map(real).unwrap_or_default();
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.11e}"))
                .collect::<Vec<_>>()
                .join(";")
        };
        [
            real(self.snr_alpha),
            self.model.clone(),
            self.constraint.clone(),
            real(self.rician_k),
            opt(self.kappa),
            real(self.capacity_nats),
            self.n_points.to_string(),
            list(&self.locations),
            list(&self.probabilities),
            opt(self.lambda1),
            opt(self.lambda2),
            real(self.kt_grid_min),
            self.converged.to_string(),
        ]
    }

    fn from_csv_fields(row: &csv::StringRecord, line: u64) -> Result<Self> {
        if row.len() != COLUMNS.len() {
            return Err(Error::Parse(format!(
                "line {line}: expected {} fields, got {}",
                COLUMNS.len(),
                row.len()
            )));
        }
        let err = |col: usize, e: &dyn std::fmt::Display| {
            Error::Parse(format!("line {line}, column {}: {e}", COLUMNS[col]))
        };
        let real = |col: usize| -> Result<f64> { row[col].parse().map_err(|e| err(col, &e)) };
        let opt = |col: usize| -> Result<Option<f64>> {
            if row[col].is_empty() {
                Ok(None)
            } else {
                real(col).map(Some)
            }
        };
        let list = |col: usize| -> Result<Vec<f64>> {
            if row[col].is_empty() {
                return Ok(Vec::new());
            }
            row[col]
                .split(';')
                .map(|s| s.parse().map_err(|e| err(col, &e)))
                .collect()
        };
        let rec = Self {
            snr_alpha: real(0)?,
            model: row[1].to_string(),
            constraint: row[2].to_string(),
            rician_k: real(3)?,
            kappa: opt(4)?,
            capacity_nats: real(5)?,
            n_points: row[6].parse().map_err(|e| err(6, &e))?,
            locations: list(7)?,
            probabilities: list(8)?,
            lambda1: opt(9)?,
            lambda2: opt(10)?,
            kt_grid_min: real(11)?,
            converged: row[12].parse().map_err(|e| err(12, &e))?,
        };
        rec.validate()?;
        Ok(rec)
    }
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

/// Streams records to CSV, flushing after every row so that a failed sweep
/// leaves its completed rows behind.
pub struct CsvSink<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "# schema={SWEEP_SCHEMA}").map_err(io_err)?;
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(COLUMNS).map_err(io_err)?;
        inner.flush().map_err(io_err)?;
        Ok(Self { inner })
    }

    pub fn push(&mut self, record: &SweepRecord) -> Result<()> {
        self.inner
            .write_record(record.csv_fields())
            .map_err(io_err)?;
        self.inner.flush().map_err(io_err)
    }
}

pub fn write_csv<W: Write>(out: W, records: &[SweepRecord]) -> Result<()> {
    let mut sink = CsvSink::new(out)?;
    for r in records {
        sink.push(r)?;
    }
    Ok(())
}

/// Reads a sweep CSV, rejecting any schema id other than [`SWEEP_SCHEMA`].
pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRecord>> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(io_err)?;
    match first.trim_end().strip_prefix("# schema=") {
        Some(SWEEP_SCHEMA) => {}
        Some(other) => return Err(Error::Parse(format!("unknown schema id {other:?}"))),
        None => return Err(Error::Parse("missing schema line".into())),
    }
    let mut csv = csv::Reader::from_reader(reader);
    let header = csv.headers().map_err(io_err)?;
    if header.iter().ne(COLUMNS) {
        return Err(Error::Parse(format!("unexpected columns: {header:?}")));
    }
    let mut out = Vec::new();
    for row in csv.records() {
        let row = row.map_err(io_err)?;
        let line = row.position().map_or(0, |p| p.line() + 1);
        out.push(SweepRecord::from_csv_fields(&row, line)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDocument {
    pub schema: String,
    pub records: Vec<SweepRecord>,
}

impl SweepDocument {
    pub fn new(records: Vec<SweepRecord>) -> Self {
        Self {
            schema: SWEEP_SCHEMA.to_string(),
            records,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if doc.schema != SWEEP_SCHEMA {
            return Err(Error::Parse(format!("unknown schema id {:?}", doc.schema)));
        }
        for r in &doc.records {
            r.validate()?;
        }
        Ok(doc)
    }
}

/// Output of a single solve: the row plus the full certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveDocument {
    pub schema: String,
    pub record: SweepRecord,
    pub n_points_tried: usize,
    pub report: KTReport,
}

impl SolveDocument {
    pub fn new(channel: &ChannelSpec, constraints: &ConstraintSet, solution: &Solution) -> Self {
        Self {
            schema: SOLVE_SCHEMA.to_string(),
            record: SweepRecord::from_solution(channel, constraints, solution),
            n_points_tried: solution.n_points_tried,
            report: solution.report.clone(),
        }
    }
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Io(e.to_string()))
}
