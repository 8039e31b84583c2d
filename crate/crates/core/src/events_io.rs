//! `.events.csv` reader and writer.
//!
//! ```text
//! #meta {"schema_version":1,"basis":"near_field",...}
//! frame_id,arm,u,v
//! 0,S,0.01,-0.23
//! 0,AS,0.03,-0.25
//! ```
//!
//! Rows are sorted by `(frame_id, arm, u, v)` with `S` before `AS`, and
//! coordinates use the shortest decimal that round-trips to the same `f64`,
//! so a run has exactly one byte representation. Frames without events have
//! no rows; the reader restores them from `first_frame_id` and `frame_count`.

use crate::model::{Basis, DiffusionModel, EprGaussianState};
use crate::simulate::{Arm, DetectionEvent, DetectorConfig, Frame};
use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const META_PREFIX: &str = "#meta ";
pub const HEADER: &str = "frame_id,arm,u,v";

#[derive(Debug, Error)]
pub enum EventsError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("line {line}: frame_id {frame_id} {message}")]
    Range {
        line: u64,
        frame_id: u64,
        message: String,
    },
    #[error("invalid metadata: {0}")]
    Metadata(String),
}

impl EventsError {
    /// Line number for row-level errors.
    pub fn line(&self) -> Option<u64> {
        match self {
            EventsError::Row { line, .. } | EventsError::Range { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub coordinate: String,
    pub delay: String,
}

impl Units {
    pub fn for_basis(basis: Basis) -> Self {
        Self {
            coordinate: basis.unit().to_string(),
            delay: "us".to_string(),
        }
    }
}

/// Model parameters a run was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub state: EprGaussianState,
    pub diffusion: DiffusionModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub schema_version: u32,
    pub basis: Basis,
    pub units: Units,
    pub tau: f64,
    pub first_frame_id: u64,
    pub frame_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
    /// Free-form echo of the configuration that produced the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl RunMetadata {
    pub fn new(basis: Basis, tau: f64, first_frame_id: u64, frame_count: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            basis,
            units: Units::for_basis(basis),
            tau,
            first_frame_id,
            frame_count,
            master_seed: None,
            detector: None,
            ground_truth: None,
            config: None,
        }
    }

    pub fn validate(&self) -> Result<(), EventsError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(EventsError::Metadata(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        if self.units != Units::for_basis(self.basis) {
            return Err(EventsError::Metadata(format!(
                "units {:?} inconsistent with basis {}",
                self.units, self.basis
            )));
        }
        if let Some(det) = &self.detector {
            if det.basis != self.basis {
                return Err(EventsError::Metadata("detector basis differs from run basis".into()));
            }
        }
        if self.first_frame_id.checked_add(self.frame_count).is_none() {
            return Err(EventsError::Metadata("frame id range overflows".into()));
        }
        Ok(())
    }

    pub fn frame_ids(&self) -> std::ops::Range<u64> {
        self.first_frame_id..self.first_frame_id + self.frame_count
    }
}

/// Streaming writer; frames must arrive in ascending id order.
pub struct EventWriter<W: Write> {
    sink: W,
    range: std::ops::Range<u64>,
    last_id: Option<u64>,
    scratch: Vec<DetectionEvent>,
}

impl<W: Write> EventWriter<W> {
    pub fn new(mut sink: W, meta: &RunMetadata) -> Result<Self, EventsError> {
        meta.validate()?;
        let json = serde_json::to_string(meta).map_err(|e| EventsError::Metadata(e.to_string()))?;
        writeln!(sink, "{META_PREFIX}{json}")?;
        writeln!(sink, "{HEADER}")?;
        Ok(Self {
            sink,
            range: meta.frame_ids(),
            last_id: None,
            scratch: Vec::new(),
        })
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<(), EventsError> {
        let id = frame.frame_id;
        let range_err = |message: &str| EventsError::Range {
            line: 0,
            frame_id: id,
            message: message.to_string(),
        };
        if !self.range.contains(&id) {
            return Err(range_err("outside the declared range"));
        }
        if self.last_id.is_some_and(|last| id <= last) {
            return Err(range_err("is not ascending"));
        }
        self.last_id = Some(id);
        self.scratch.clear();
        self.scratch.extend_from_slice(&frame.events);
        self.scratch.sort_by(DetectionEvent::canonical_cmp);
        for e in &self.scratch {
            if !(e.coord[0].is_finite() && e.coord[1].is_finite()) {
                return Err(range_err("has a non-finite coordinate"));
            }
            writeln!(self.sink, "{},{},{},{}", id, e.arm, e.coord[0], e.coord[1])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, EventsError> {
        self.sink.flush()?;
        Ok(self.sink)
    }
}

pub fn write_events<'a, W, I>(frames: I, meta: &RunMetadata, sink: W) -> Result<W, EventsError>
where
    W: Write,
    I: IntoIterator<Item = &'a Frame>,
{
    let mut writer = EventWriter::new(sink, meta)?;
    for frame in frames {
        writer.write_frame(frame)?;
    }
    writer.finish()
}

struct Row {
    line: u64,
    frame_id: u64,
    event: DetectionEvent,
}

/// Streaming reader yielding every frame of the declared range, including
/// frames that have no rows. Only one frame is held in memory at a time.
pub struct EventReader<R: BufRead> {
    source: R,
    meta: RunMetadata,
    buf: String,
    line: u64,
    offset: u64,
    next_id: u64,
    end_id: u64,
    pending: Option<Row>,
    eof: bool,
    failed: bool,
}

impl<R: BufRead> EventReader<R> {
    pub fn new(source: R) -> Result<Self, EventsError> {
        let mut reader = Self {
            source,
            meta: RunMetadata::new(Basis::Position, 0.0, 0, 0),
            buf: String::new(),
            line: 0,
            offset: 0,
            next_id: 0,
            end_id: 0,
            pending: None,
            eof: false,
            failed: false,
        };
        let start = reader.offset;
        let first = reader.read_line()?.ok_or_else(|| EventsError::Format {
            offset: start,
            message: "missing `#meta` line".into(),
        })?;
        let json = first.strip_prefix(META_PREFIX).ok_or_else(|| EventsError::Format {
            offset: start,
            message: "missing `#meta` line".into(),
        })?;
        let meta: RunMetadata = serde_json::from_str(json).map_err(|e| EventsError::Format {
            offset: start,
            message: format!("metadata JSON: {e}"),
        })?;
        meta.validate()?;
        let start = reader.offset;
        match reader.read_line()? {
            Some(h) if h == HEADER => {}
            _ => {
                return Err(EventsError::Format {
                    offset: start,
                    message: format!("expected header `{HEADER}`"),
                })
            }
        }
        reader.next_id = meta.first_frame_id;
        reader.end_id = meta.first_frame_id + meta.frame_count;
        reader.meta = meta;
        Ok(reader)
    }

    pub fn metadata(&self) -> &RunMetadata {
        &self.meta
    }

    // Next complete line without its terminator; a final line lacking '\n'
    // is a truncation.
    fn read_line(&mut self) -> Result<Option<String>, EventsError> {
        self.buf.clear();
        let start = self.offset;
        let n = self.source.read_line(&mut self.buf)?;
        if n == 0 {
            return Ok(None);
        }
        self.offset += n as u64;
        self.line += 1;
        if !self.buf.ends_with('\n') {
            return Err(EventsError::Format {
                offset: start,
                message: format!("truncated row on line {}", self.line),
            });
        }
        let text = self.buf.trim_end_matches('\n').trim_end_matches('\r');
        Ok(Some(text.to_string()))
    }

    fn next_row(&mut self) -> Result<Option<Row>, EventsError> {
        if let Some(row) = self.pending.take() {
            return Ok(Some(row));
        }
        if self.eof {
            return Ok(None);
        }
        let Some(text) = self.read_line()? else {
            self.eof = true;
            return Ok(None);
        };
        let line = self.line;
        let row_err = |message: String| EventsError::Row { line, message };
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != 4 {
            return Err(row_err(format!("expected 4 fields, found {}", fields.len())));
        }
        let frame_id: u64 = fields[0]
            .parse()
            .map_err(|_| row_err(format!("invalid frame_id `{}`", fields[0])))?;
        let arm = Arm::from_token(fields[1])
            .ok_or_else(|| row_err(format!("unknown arm token `{}`", fields[1])))?;
        let mut coord = [0.0; 2];
        for k in 0..2 {
            let v: f64 = fields[2 + k]
                .parse()
                .map_err(|_| row_err(format!("non-numeric coordinate `{}`", fields[2 + k])))?;
            if !v.is_finite() {
                return Err(row_err(format!("non-finite coordinate `{}`", fields[2 + k])));
            }
            coord[k] = v;
        }
        Ok(Some(Row {
            line,
            frame_id,
            event: DetectionEvent { arm, coord },
        }))
    }

    fn next_frame(&mut self) -> Result<Option<Frame>, EventsError> {
        if self.next_id >= self.end_id {
            // Any leftover row lies outside the declared range.
            if let Some(row) = self.next_row()? {
                return Err(EventsError::Range {
                    line: row.line,
                    frame_id: row.frame_id,
                    message: "outside the declared range".into(),
                });
            }
            return Ok(None);
        }
        let id = self.next_id;
        let mut frame = Frame::new(id);
        while let Some(row) = self.next_row()? {
            if row.frame_id == id {
                frame.events.push(row.event);
                continue;
            }
            if row.frame_id < id || row.frame_id >= self.end_id {
                let message = if row.frame_id < id {
                    "is out of order or duplicated"
                } else {
                    "outside the declared range"
                };
                return Err(EventsError::Range {
                    line: row.line,
                    frame_id: row.frame_id,
                    message: message.into(),
                });
            }
            self.pending = Some(row);
            break;
        }
        frame.canonicalize();
        self.next_id += 1;
        Ok(Some(frame))
    }
}

impl<R: BufRead> Iterator for EventReader<R> {
    type Item = Result<Frame, EventsError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_frame() {
            Ok(Some(f)) => Some(Ok(f)),
            Ok(None) => None,
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

pub fn read_events<R: BufRead>(source: R) -> Result<(RunMetadata, EventReader<R>), EventsError> {
    let reader = EventReader::new(source)?;
    Ok((reader.metadata().clone(), reader))
}

/// Reads a whole file into memory.
pub fn read_all<R: BufRead>(source: R) -> Result<(RunMetadata, Vec<Frame>), EventsError> {
    let (meta, reader) = read_events(source)?;
    let frames = reader.collect::<Result<Vec<_>, _>>()?;
    Ok((meta, frames))
}
