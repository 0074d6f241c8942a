//! Energy trace CSV loader.
//!
//! Header `prosumer_id,slot,consumption_wh,generation_wh`, one row per
//! (prosumer, slot), integer fields. Each prosumer's slots must cover
//! `0..n` without gaps.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

const HEADER: [&str; 4] = ["prosumer_id", "slot", "consumption_wh", "generation_wh"];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read traces: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("expected header {expected:?}, found {found:?}")]
    Header { expected: String, found: String },
    #[error("prosumer {prosumer}: duplicate row for slot {slot}")]
    Duplicate { prosumer: String, slot: u64 },
    #[error("prosumer {prosumer}: missing slot {slot}")]
    MissingSlot { prosumer: String, slot: u64 },
}

/// Per-slot metered quantities of one prosumer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub consumption_wh: Vec<u64>,
    pub generation_wh: Vec<u64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.consumption_wh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.consumption_wh.is_empty()
    }

    /// Consumption minus generation at `slot`.
    pub fn net(&self, slot: u64) -> Option<i64> {
        let i = slot as usize;
        Some(*self.consumption_wh.get(i)? as i64 - *self.generation_wh.get(i)? as i64)
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    prosumer_id: String,
    slot: u64,
    consumption_wh: i64,
    generation_wh: i64,
}

pub fn parse_traces<R: Read>(input: R) -> Result<BTreeMap<String, Trace>, TraceError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().map_err(|e| row_error(&e))?.clone();
    if header.iter().ne(HEADER) {
        return Err(TraceError::Header {
            expected: HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows: BTreeMap<String, BTreeMap<u64, (u64, u64)>> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record).map_err(|e| row_error(&e))? {
        let line = record.position().map_or(0, |p| p.line());
        let row: Row = record.deserialize(Some(&header)).map_err(|e| row_error(&e))?;
        let non_negative = |v: i64, what: &str| {
            u64::try_from(v).map_err(|_| TraceError::Row {
                line,
                message: format!("negative {what} {v}"),
            })
        };
        let c = non_negative(row.consumption_wh, "consumption_wh")?;
        let g = non_negative(row.generation_wh, "generation_wh")?;
        let slots = rows.entry(row.prosumer_id.clone()).or_default();
        if slots.insert(row.slot, (c, g)).is_some() {
            return Err(TraceError::Duplicate {
                prosumer: row.prosumer_id,
                slot: row.slot,
            });
        }
    }
    let mut traces = BTreeMap::new();
    for (prosumer, slots) in rows {
        let mut trace = Trace::default();
        for (expected, (slot, (c, g))) in slots.into_iter().enumerate() {
            if slot != expected as u64 {
                return Err(TraceError::MissingSlot {
                    prosumer,
                    slot: expected as u64,
                });
            }
            trace.consumption_wh.push(c);
            trace.generation_wh.push(g);
        }
        traces.insert(prosumer, trace);
    }
    Ok(traces)
}

fn row_error(e: &csv::Error) -> TraceError {
    let line = e.position().map_or(0, |p| p.line());
    TraceError::Row {
        line,
        message: match e.kind() {
            csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
            _ => e.to_string(),
        },
    }
}

pub fn load_traces(path: &Path) -> Result<BTreeMap<String, Trace>, TraceError> {
    parse_traces(std::fs::File::open(path)?)
}
