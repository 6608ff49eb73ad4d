//! `pid,camid` label tables.

use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::eval::{Label, SampleLabels};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelsError {
    #[error("label file is empty")]
    Empty,
    #[error("label header on line 1 lacks a '{0}' column")]
    MissingColumn(&'static str),
    #[error("line {line}: field '{column}' is not a non-negative integer: {value:?}")]
    InvalidField {
        line: u64,
        column: &'static str,
        value: String,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount { line: u64, expected: usize, found: usize },
    #[error("malformed CSV at byte {byte}, line {line}: {reason}")]
    Csv { line: u64, byte: u64, reason: String },
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<io::Error> for LabelsError {
    fn from(e: io::Error) -> Self {
        LabelsError::Io(e.to_string())
    }
}

fn csv_error(e: csv::Error) -> LabelsError {
    let (line, byte) = e.position().map_or((0, 0), |p| (p.line(), p.byte()));
    match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => LabelsError::FieldCount {
            line,
            expected: *expected_len as usize,
            found: *len as usize,
        },
        _ => LabelsError::Csv {
            line,
            byte,
            reason: e.to_string(),
        },
    }
}

/// Parses a UTF-8 CSV table with a header naming `pid` and `camid`.
/// Row order defines sample order; LF and CRLF line endings are accepted.
pub fn read_labels(text: &[u8]) -> Result<SampleLabels, LabelsError> {
    if text.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(LabelsError::Empty);
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let column = |name: &'static str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or(LabelsError::MissingColumn(name))
    };
    let pid_col = column("pid")?;
    let cam_col = column("camid")?;

    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |idx: usize, name: &'static str| -> Result<u32, LabelsError> {
            let raw = record.get(idx).unwrap_or("");
            raw.trim().parse::<u32>().map_err(|_| LabelsError::InvalidField {
                line,
                column: name,
                value: raw.to_string(),
            })
        };
        labels.push(Label {
            pid: field(pid_col, "pid")?,
            camid: field(cam_col, "camid")?,
        });
    }
    Ok(SampleLabels::new(labels))
}

pub fn read_labels_file(path: impl AsRef<Path>) -> Result<SampleLabels, LabelsError> {
    read_labels(&std::fs::read(path)?)
}

/// Writes `pid,camid` with LF line endings.
pub fn write_labels<W: Write>(w: W, labels: &SampleLabels) -> io::Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    writer.write_record(["pid", "camid"])?;
    for l in labels.iter() {
        writer.write_record([l.pid.to_string(), l.camid.to_string()])?;
    }
    writer.flush()
}

pub fn labels_to_string(labels: &SampleLabels) -> String {
    let mut out = Vec::new();
    write_labels(&mut out, labels).expect("writing to a Vec cannot fail");
    String::from_utf8(out).expect("ASCII output")
}

pub fn write_labels_file(path: impl AsRef<Path>, labels: &SampleLabels) -> io::Result<()> {
    write_labels(io::BufWriter::new(std::fs::File::create(path)?), labels)
}
