//! JSONL persistence for handover datasets.
//!
//! The first line is a header record, then one pair per line:
//! `{"id": .., "label": "ID"|"OOD", "rate_hz": .., "receiver": [[t,x,y],..], "giver": [[t,x,y,z],..]}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use handover_core::dataset::{DatasetError, Sample, Trajectory};
use handover_core::{GiverPose, HandoverDataset, HandoverPair, Label, ReceiverPose};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT: &str = "handover-pairs";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {source}")]
    InvalidPair { line: usize, source: DatasetError },
    #[error("header declares {declared} pairs but file has {found}")]
    CountMismatch { declared: usize, found: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    pairs: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRecord {
    id: String,
    label: Label,
    rate_hz: f64,
    receiver: Vec<[f64; 3]>,
    giver: Vec<[f64; 4]>,
}

impl From<&HandoverPair> for PairRecord {
    fn from(p: &HandoverPair) -> Self {
        Self {
            id: p.id.clone(),
            label: p.label,
            rate_hz: p.receiver.sample_rate_hz(),
            receiver: p.receiver.samples().iter().map(|s| [s.t, s.pose.x, s.pose.y]).collect(),
            giver: p.giver.samples().iter().map(|s| [s.t, s.pose.x, s.pose.y, s.pose.z]).collect(),
        }
    }
}

impl PairRecord {
    fn into_pair(self) -> Result<HandoverPair, DatasetError> {
        let id = self.id;
        let wrap = |e: DatasetError, id: &str| DatasetError::InvalidPair { id: id.to_string(), source: Box::new(e) };
        let receiver = Trajectory::new(
            self.receiver.iter().map(|r| Sample { t: r[0], pose: ReceiverPose::new(r[1], r[2]) }).collect(),
            self.rate_hz,
        )
        .map_err(|e| wrap(e, &id))?;
        let giver = Trajectory::new(
            self.giver.iter().map(|g| Sample { t: g[0], pose: GiverPose::new(g[1], g[2], g[3]) }).collect(),
            self.rate_hz,
        )
        .map_err(|e| wrap(e, &id))?;
        HandoverPair::new(id, self.label, receiver, giver)
    }
}

pub fn write_dataset<W: Write>(dataset: &HandoverDataset, mut out: W) -> Result<(), IoError> {
    let header = Header { format: FORMAT.into(), version: VERSION, pairs: dataset.len() };
    serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for pair in dataset.pairs() {
        serde_json::to_writer(&mut out, &PairRecord::from(pair)).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<HandoverDataset, IoError> {
    let mut lines = input.lines().enumerate();
    let header: Header = match lines.next() {
        Some((_, line)) => serde_json::from_str(&line?)
            .map_err(|e| IoError::Malformed { line: 1, message: format!("bad header: {e}") })?,
        None => return Err(IoError::Malformed { line: 1, message: "missing header".into() }),
    };
    if header.format != FORMAT || header.version != VERSION {
        return Err(IoError::Malformed {
            line: 1,
            message: format!("unsupported format {} v{}", header.format, header.version),
        });
    }
    let mut pairs = Vec::with_capacity(header.pairs);
    for (i, line) in lines {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: PairRecord =
            serde_json::from_str(&line).map_err(|e| IoError::Malformed { line: n, message: e.to_string() })?;
        pairs.push(record.into_pair().map_err(|source| IoError::InvalidPair { line: n, source })?);
    }
    if pairs.len() != header.pairs {
        return Err(IoError::CountMismatch { declared: header.pairs, found: pairs.len() });
    }
    Ok(HandoverDataset::new(pairs)?)
}

pub fn save(dataset: &HandoverDataset, path: &Path) -> Result<(), IoError> {
    let file = File::create(path).map_err(|source| IoError::File { path: path.display().to_string(), source })?;
    write_dataset(dataset, BufWriter::new(file))
}

pub fn load(path: &Path) -> Result<HandoverDataset, IoError> {
    let file = File::open(path).map_err(|source| IoError::File { path: path.display().to_string(), source })?;
    read_dataset(BufReader::new(file))
}

/// Write any serializable report as pretty JSON.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    let file = File::create(path).map_err(|source| IoError::File { path: path.display().to_string(), source })?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
