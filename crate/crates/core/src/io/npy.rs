//! NPY v1.0 reader and writer for rank-2 little-endian float arrays.
//!
//! Layout: the magic `\x93NUMPY`, version bytes `1 0`, a little-endian `u16`
//! header length, then an ASCII Python dict literal with the keys `descr`,
//! `fortran_order` and `shape`, space padded and terminated by `\n` so the
//! data starts at a multiple of 64 bytes. The payload is the C-order array.

use std::io::{self, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::FeatureMatrix;

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREFIX_LEN: usize = 10;
const ALIGN: usize = 64;

/// Element type of a stored array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn descr(self) -> &'static str {
        match self {
            Precision::F32 => "<f4",
            Precision::F64 => "<f8",
        }
    }

    pub fn size(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NpyError {
    #[error("not an NPY file: bad magic at byte 0")]
    BadMagic,
    #[error("unsupported NPY version {major}.{minor} (only 1.0 is supported)")]
    UnsupportedVersion { major: u8, minor: u8 },
    #[error("truncated header: need {expected} bytes, file has {found}")]
    TruncatedHeader { expected: usize, found: usize },
    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },
    #[error("unsupported dtype {0:?} (expected '<f4' or '<f8')")]
    UnsupportedDtype(String),
    #[error("unsupported array rank {0} (expected 2)")]
    UnsupportedRank(usize),
    #[error("Fortran-order arrays are not supported")]
    FortranOrder,
    #[error("truncated payload: need {expected} bytes after byte {offset}, found {found}")]
    TruncatedPayload {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("{extra} unexpected trailing bytes after byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("empty {rows}x{cols} array where features were expected")]
    Empty { rows: usize, cols: usize },
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<io::Error> for NpyError {
    fn from(e: io::Error) -> Self {
        NpyError::Io(e.to_string())
    }
}

/// Decoded header of an NPY file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NpyHeader {
    pub precision: Precision,
    pub fortran_order: bool,
    pub shape: (usize, usize),
    /// Byte offset of the first array element.
    pub data_offset: usize,
}

/// Parses and validates the header without touching the payload.
pub fn read_header(bytes: &[u8]) -> Result<NpyHeader, NpyError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(NpyError::BadMagic);
    }
    if bytes.len() < PREFIX_LEN {
        return Err(NpyError::TruncatedHeader {
            expected: PREFIX_LEN,
            found: bytes.len(),
        });
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(NpyError::UnsupportedVersion { major, minor });
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_offset = PREFIX_LEN + header_len;
    if bytes.len() < data_offset {
        return Err(NpyError::TruncatedHeader {
            expected: data_offset,
            found: bytes.len(),
        });
    }
    let text = std::str::from_utf8(&bytes[PREFIX_LEN..data_offset])
        .ok()
        .filter(|t| t.is_ascii())
        .ok_or_else(|| NpyError::MalformedHeader {
            offset: PREFIX_LEN,
            reason: "header is not ASCII".into(),
        })?;
    if !text.ends_with('\n') {
        return Err(NpyError::MalformedHeader {
            offset: data_offset.saturating_sub(1),
            reason: "header must end with a newline".into(),
        });
    }
    let dict = dict::parse(text).map_err(|(pos, reason)| NpyError::MalformedHeader {
        offset: PREFIX_LEN + pos,
        reason,
    })?;

    let missing = |key: &str| NpyError::MalformedHeader {
        offset: PREFIX_LEN,
        reason: format!("missing key '{key}'"),
    };
    let descr = match dict.get("descr").ok_or_else(|| missing("descr"))? {
        dict::Value::Str(s) => s.clone(),
        _ => return Err(wrong_type("descr")),
    };
    let fortran_order = match dict.get("fortran_order").ok_or_else(|| missing("fortran_order"))? {
        dict::Value::Bool(b) => *b,
        _ => return Err(wrong_type("fortran_order")),
    };
    let shape = match dict.get("shape").ok_or_else(|| missing("shape"))? {
        dict::Value::Tuple(t) => t.clone(),
        _ => return Err(wrong_type("shape")),
    };
    let precision = match descr.as_str() {
        "<f4" => Precision::F32,
        "<f8" => Precision::F64,
        _ => return Err(NpyError::UnsupportedDtype(descr)),
    };
    if shape.len() != 2 {
        return Err(NpyError::UnsupportedRank(shape.len()));
    }
    if fortran_order {
        return Err(NpyError::FortranOrder);
    }
    Ok(NpyHeader {
        precision,
        fortran_order,
        shape: (shape[0], shape[1]),
        data_offset,
    })
}

fn wrong_type(key: &str) -> NpyError {
    NpyError::MalformedHeader {
        offset: PREFIX_LEN,
        reason: format!("key '{key}' has the wrong type"),
    }
}

/// Decodes a rank-2 float array, upcasting `<f4` to `f64`.
pub fn read_npy(bytes: &[u8]) -> Result<Array2<f64>, NpyError> {
    let header = read_header(bytes)?;
    let (rows, cols) = header.shape;
    let size = header.precision.size();
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(size))
        .ok_or_else(|| NpyError::MalformedHeader {
            offset: PREFIX_LEN,
            reason: "shape overflows".into(),
        })?;
    let payload = &bytes[header.data_offset..];
    if payload.len() < expected {
        return Err(NpyError::TruncatedPayload {
            offset: header.data_offset,
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(NpyError::TrailingBytes {
            offset: header.data_offset + expected,
            extra: payload.len() - expected,
        });
    }
    let values: Vec<f64> = match header.precision {
        Precision::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        Precision::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
}

/// Decodes a feature matrix: non-empty and finite.
pub fn read_features(bytes: &[u8]) -> Result<FeatureMatrix, NpyError> {
    let data = read_npy(bytes)?;
    let (rows, cols) = data.dim();
    if rows == 0 || cols == 0 {
        return Err(NpyError::Empty { rows, cols });
    }
    if let Some(((row, col), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(NpyError::NonFinite { row, col });
    }
    Ok(FeatureMatrix::new(data).expect("validated"))
}

pub fn read_features_file(path: impl AsRef<Path>) -> Result<FeatureMatrix, NpyError> {
    read_features(&std::fs::read(path)?)
}

pub fn read_npy_file(path: impl AsRef<Path>) -> Result<Array2<f64>, NpyError> {
    read_npy(&std::fs::read(path)?)
}

fn header_text(precision: Precision, rows: usize, cols: usize) -> String {
    let dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': ({}, {}), }}",
        precision.descr(),
        rows,
        cols
    );
    let unpadded = PREFIX_LEN + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    format!("{dict}{}\n", " ".repeat(pad))
}

/// Streams `m` as an NPY v1.0 file.
pub fn write_npy<W: Write>(mut w: W, m: ArrayView2<'_, f64>, precision: Precision) -> io::Result<()> {
    let (rows, cols) = m.dim();
    let header = header_text(precision, rows, cols);
    let header_len = u16::try_from(header.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "header too long"))?;
    w.write_all(MAGIC)?;
    w.write_all(&[1, 0])?;
    w.write_all(&header_len.to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    let mut buf = Vec::with_capacity(8 * 1024);
    for &v in m.iter() {
        match precision {
            Precision::F32 => buf.extend_from_slice(&(v as f32).to_le_bytes()),
            Precision::F64 => buf.extend_from_slice(&v.to_le_bytes()),
        }
        if buf.len() >= 8 * 1024 {
            w.write_all(&buf)?;
            buf.clear();
        }
    }
    w.write_all(&buf)?;
    w.flush()
}

pub fn to_npy_bytes(m: ArrayView2<'_, f64>, precision: Precision) -> Vec<u8> {
    let mut out = Vec::with_capacity(128 + m.len() * precision.size());
    write_npy(&mut out, m, precision).expect("writing to a Vec cannot fail");
    out
}

pub fn write_npy_file(path: impl AsRef<Path>, m: ArrayView2<'_, f64>, precision: Precision) -> io::Result<()> {
    let file = std::fs::File::create(path)?;
    write_npy(io::BufWriter::new(file), m, precision)
}

/// Minimal parser for the Python dict literal in NPY headers.
mod dict {
    use std::collections::HashMap;

    #[derive(Debug, Clone, PartialEq)]
    pub enum Value {
        Str(String),
        Bool(bool),
        Tuple(Vec<usize>),
    }

    type ParseResult<T> = Result<T, (usize, String)>;

    struct Cursor<'a> {
        s: &'a [u8],
        pos: usize,
    }

    impl<'a> Cursor<'a> {
        fn skip_ws(&mut self) {
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
        }

        fn peek(&mut self) -> Option<u8> {
            self.skip_ws();
            self.s.get(self.pos).copied()
        }

        fn expect(&mut self, c: u8) -> ParseResult<()> {
            if self.peek() == Some(c) {
                self.pos += 1;
                Ok(())
            } else {
                Err((self.pos, format!("expected '{}'", c as char)))
            }
        }

        fn string(&mut self) -> ParseResult<String> {
            let quote = match self.peek() {
                Some(q @ (b'\'' | b'"')) => q,
                _ => return Err((self.pos, "expected a quoted string".into())),
            };
            let start = self.pos + 1;
            let end = self.s[start..]
                .iter()
                .position(|&c| c == quote)
                .map(|p| start + p)
                .ok_or((start, "unterminated string".to_string()))?;
            self.pos = end + 1;
            Ok(String::from_utf8_lossy(&self.s[start..end]).into_owned())
        }

        fn word(&mut self) -> &'a [u8] {
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphanumeric() {
                self.pos += 1;
            }
            &self.s[start..self.pos]
        }

        fn tuple(&mut self) -> ParseResult<Vec<usize>> {
            self.expect(b'(')?;
            let mut dims = Vec::new();
            loop {
                if self.peek() == Some(b')') {
                    self.pos += 1;
                    return Ok(dims);
                }
                let at = self.pos;
                let w = self.word();
                let n = std::str::from_utf8(w)
                    .ok()
                    .and_then(|t| t.strip_suffix('L').or(Some(t)))
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or((at, "expected a dimension".to_string()))?;
                dims.push(n);
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {}
                    _ => return Err((self.pos, "expected ',' or ')' in shape".into())),
                }
            }
        }

        fn value(&mut self) -> ParseResult<Value> {
            match self.peek() {
                Some(b'\'' | b'"') => self.string().map(Value::Str),
                Some(b'(') => self.tuple().map(Value::Tuple),
                _ => {
                    let at = self.pos;
                    match self.word() {
                        b"True" => Ok(Value::Bool(true)),
                        b"False" => Ok(Value::Bool(false)),
                        _ => Err((at, "unsupported value".into())),
                    }
                }
            }
        }
    }

    pub fn parse(text: &str) -> ParseResult<HashMap<String, Value>> {
        let mut c = Cursor {
            s: text.as_bytes(),
            pos: 0,
        };
        let mut map = HashMap::new();
        c.expect(b'{')?;
        loop {
            if c.peek() == Some(b'}') {
                c.pos += 1;
                break;
            }
            let at = c.pos;
            let key = c.string()?;
            c.expect(b':')?;
            let value = c.value()?;
            if map.insert(key, value).is_some() {
                return Err((at, "duplicate key".into()));
            }
            match c.peek() {
                Some(b',') => c.pos += 1,
                Some(b'}') => {}
                _ => return Err((c.pos, "expected ',' or '}'".into())),
            }
        }
        c.skip_ws();
        if c.pos != c.s.len() {
            return Err((c.pos, "unexpected characters after dict".into()));
        }
        Ok(map)
    }
}
