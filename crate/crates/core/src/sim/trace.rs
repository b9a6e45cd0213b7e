use std::io::{Read, Write};

use thiserror::Error;

use crate::controller::ProbePhase;

pub const TRACE_HEADER: [&str; 6] = ["time", "flow_id", "pacing_rate", "rtt", "queue_depth", "loss"];

/// One row of a simulation trace: an ACK delivery (`rtt` present) or a drop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub flow_id: u32,
    /// Packets/s.
    pub pacing_rate: f64,
    pub rtt: Option<f64>,
    /// Packets waiting at the bottleneck.
    pub queue_depth: f64,
    pub loss: bool,
    /// Not serialised; lets analyses drop probe windows.
    pub probe: ProbePhase,
}

/// Receives records as the event loop produces them.
pub trait TraceSink {
    fn record(&mut self, rec: &TraceRecord);
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, rec: &TraceRecord) {
        self.push(*rec);
    }
}

/// Discards everything.
impl TraceSink for () {
    fn record(&mut self, _rec: &TraceRecord) {}
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace row {row}: {msg}")]
    Malformed { row: u64, msg: String },
    #[error("trace header mismatch: expected `{}`", TRACE_HEADER.join(","))]
    Header,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_csv<W: Write>(records: &[TraceRecord], out: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        let rtt = r.rtt.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            format!("{:.9}", r.time),
            r.flow_id.to_string(),
            r.pacing_rate.to_string(),
            rtt,
            r.queue_depth.to_string(),
            u8::from(r.loss).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a trace written by [`write_csv`]. Row numbers in errors count the
/// header as row 1.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(TraceError::Header);
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i as u64 + 2;
        let row = row.map_err(|e| TraceError::Malformed {
            row: row_no,
            msg: e.to_string(),
        })?;
        let bad = |field: &str, msg: String| TraceError::Malformed {
            row: row_no,
            msg: format!("{field}: {msg}"),
        };
        let num = |idx: usize, field: &str| -> Result<f64, TraceError> {
            row[idx].parse::<f64>().map_err(|e| bad(field, e.to_string()))
        };
        let rtt = match &row[3] {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|e| bad("rtt", e.to_string()))?),
        };
        let loss = match &row[5] {
            "0" => false,
            "1" => true,
            other => return Err(bad("loss", format!("expected 0 or 1, got `{other}`"))),
        };
        out.push(TraceRecord {
            time: num(0, "time")?,
            flow_id: row[1].parse().map_err(|e: std::num::ParseIntError| bad("flow_id", e.to_string()))?,
            pacing_rate: num(2, "pacing_rate")?,
            rtt,
            queue_depth: num(4, "queue_depth")?,
            loss,
            probe: ProbePhase::None,
        });
    }
    Ok(out)
}
