//! CSV traces and JSON snapshot files.

use crate::flow::{FlowTrace, FlowVariant, Snapshot, TraceRecord};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const TRACE_COLUMNS: [&str; 6] = ["S_sup", "S_inf", "gap", "u_min", "u_max", "dtu_norm"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("unexpected trace header {0:?}")]
    BadHeader(String),
    #[error("trace has no records")]
    Empty,
}

/// Name of the time column: flow time `t` or reparametrized time `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeColumn {
    T,
    Tau,
}

impl TimeColumn {
    pub fn name(self) -> &'static str {
        match self {
            TimeColumn::T => "t",
            TimeColumn::Tau => "tau",
        }
    }

    pub fn header(self) -> String {
        std::iter::once(self.name())
            .chain(TRACE_COLUMNS)
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_trace_csv<W: Write>(out: W, records: &[TraceRecord], time: TimeColumn) -> Result<(), IoError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(std::iter::once(time.name()).chain(TRACE_COLUMNS))?;
    for r in records {
        w.serialize((r.t, r.s_sup, r.s_inf, r.gap, r.u_min, r.u_max, r.dtu_norm))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace_csv(path: &Path, records: &[TraceRecord], time: TimeColumn) -> Result<(), IoError> {
    write_trace_csv(create(path)?, records, time)
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<(TimeColumn, Vec<TraceRecord>), IoError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    let time = [TimeColumn::T, TimeColumn::Tau]
        .into_iter()
        .find(|c| c.header() == header)
        .ok_or(IoError::BadHeader(header))?;
    let mut records = Vec::new();
    for row in r.deserialize() {
        let (t, s_sup, s_inf, gap, u_min, u_max, dtu_norm): (f64, f64, f64, f64, f64, f64, f64) = row?;
        records.push(TraceRecord {
            t,
            s_sup,
            s_inf,
            gap,
            u_min,
            u_max,
            dtu_norm,
        });
    }
    if records.is_empty() {
        return Err(IoError::Empty);
    }
    Ok((time, records))
}

pub fn load_trace_csv(path: &Path) -> Result<(TimeColumn, Vec<TraceRecord>), IoError> {
    read_trace_csv(open(path)?)
}

/// Snapshots of `u` with the grid they live on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotFile {
    pub variant: Option<FlowVariant>,
    pub time_column: TimeColumn,
    pub nodes: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
}

impl SnapshotFile {
    pub fn of_trace(nodes: &[f64], trace: &FlowTrace) -> Self {
        Self {
            variant: Some(trace.variant),
            time_column: TimeColumn::T,
            nodes: nodes.to_vec(),
            snapshots: trace.snapshots.clone(),
        }
    }
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    Ok(serde_json::from_reader(std::io::BufReader::new(open(path)?))?)
}
