//! CSIR: a little-endian binary container for [`CsiLog`].
//!
//! ```text
//! header (12 bytes): "CSIR" | version u16 | n_tx u8 | n_rx u8 | n_subcarriers u16 | record_count u16
//! record:            identity u32 | condition u8 | timestamp_ns u64 | noise_floor_dbm f32
//!                    | n_rx*n_tx*K x (re f32, im f32), subcarrier fastest, then tx, then rx
//! ```
//!
//! `record_count` is 16 bits wide, so a log with more than 65 535 records is
//! written as consecutive segments, each with its own header. Segmentation is
//! canonical: every segment but the last is full, and only an empty log has an
//! empty segment. The parser rejects anything else, which keeps
//! `write(parse(bytes)) == bytes` exact.

use std::io::{self, Read, Write};

use num_complex::Complex32;
use thiserror::Error;

use super::{validate_sample, ArrayGeometry, Condition, CsiLog, CsiSample, Violation};

pub const MAGIC: [u8; 4] = *b"CSIR";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 12;
pub const MAX_SEGMENT_RECORDS: usize = u16::MAX as usize;

const RECORD_FIXED_LEN: usize = 4 + 1 + 8 + 4;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}, expected \"CSIR\"")]
    BadMagic([u8; 4]),
    #[error("unsupported CSIR version {0}")]
    UnsupportedVersion(u16),
    #[error("invalid geometry {0}")]
    InvalidGeometry(ArrayGeometry),
    #[error("geometry {0} does not fit the CSIR header fields")]
    GeometryTooLarge(ArrayGeometry),
    #[error("truncated header in segment {segment}")]
    TruncatedHeader { segment: usize },
    #[error("truncated record {record}")]
    TruncatedRecord { record: usize },
    #[error("record {record}: non-finite {field}")]
    NonFinite { record: usize, field: &'static str },
    #[error("record {record}: unknown condition code {code}")]
    UnknownCondition { record: usize, code: u8 },
    #[error("record {record}: geometry {sample} differs from log geometry {log}")]
    GeometryMismatch {
        record: usize,
        sample: ArrayGeometry,
        log: ArrayGeometry,
    },
    #[error("record {record}: {violation}")]
    InvalidSample { record: usize, violation: Violation },
    #[error("segment {segment}: header disagrees with the first segment")]
    SegmentHeaderMismatch { segment: usize },
    #[error("segment {segment}: non-canonical segmentation")]
    NonCanonicalSegment { segment: usize },
}

/// Serialized size of one record for `geometry`.
pub fn record_len(geometry: &ArrayGeometry) -> usize {
    RECORD_FIXED_LEN + geometry.n_gains() * 8
}

fn check_geometry(g: &ArrayGeometry) -> Result<(), FormatError> {
    if !g.is_valid() {
        return Err(FormatError::InvalidGeometry(*g));
    }
    if g.n_tx > u8::MAX as usize || g.n_rx > u8::MAX as usize || g.n_subcarriers > u16::MAX as usize
    {
        return Err(FormatError::GeometryTooLarge(*g));
    }
    Ok(())
}

fn encode_header(log: &CsiLog, count: usize, out: &mut Vec<u8>) {
    let g = &log.geometry;
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&log.version.to_le_bytes());
    out.push(g.n_tx as u8);
    out.push(g.n_rx as u8);
    out.extend_from_slice(&(g.n_subcarriers as u16).to_le_bytes());
    out.extend_from_slice(&(count as u16).to_le_bytes());
}

fn encode_record(s: &CsiSample, out: &mut Vec<u8>) {
    out.extend_from_slice(&s.identity.to_le_bytes());
    out.push(s.condition.code());
    out.extend_from_slice(&s.timestamp_ns.to_le_bytes());
    out.extend_from_slice(&s.noise_floor_dbm.to_le_bytes());
    for z in &s.h {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
}

/// Writes `log` as CSIR and returns the number of bytes emitted.
///
/// Every sample is validated before the first byte is written.
pub fn write_log<W: Write>(log: &CsiLog, sink: &mut W) -> Result<u64, FormatError> {
    if log.version != VERSION {
        return Err(FormatError::UnsupportedVersion(log.version));
    }
    check_geometry(&log.geometry)?;
    for (record, s) in log.samples.iter().enumerate() {
        if s.geometry != log.geometry {
            return Err(FormatError::GeometryMismatch {
                record,
                sample: s.geometry,
                log: log.geometry,
            });
        }
        if let Some(violation) = validate_sample(s).into_iter().next() {
            return Err(FormatError::InvalidSample { record, violation });
        }
    }

    let rec_len = record_len(&log.geometry);
    let mut written = 0u64;
    let mut buf = Vec::with_capacity(HEADER_LEN + rec_len * log.samples.len().min(4096));
    let mut segments = log.samples.chunks(MAX_SEGMENT_RECORDS).peekable();
    if segments.peek().is_none() {
        encode_header(log, 0, &mut buf);
        sink.write_all(&buf)?;
        return Ok(buf.len() as u64);
    }
    for segment in segments {
        buf.clear();
        encode_header(log, segment.len(), &mut buf);
        for s in segment {
            encode_record(s, &mut buf);
            if buf.len() >= 1 << 20 {
                sink.write_all(&buf)?;
                written += buf.len() as u64;
                buf.clear();
            }
        }
        sink.write_all(&buf)?;
        written += buf.len() as u64;
    }
    Ok(written)
}

struct Header {
    version: u16,
    geometry: ArrayGeometry,
    count: usize,
}

/// Reads as many bytes as are available up to `buf.len()`.
fn read_full<R: Read>(source: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

fn read_header<R: Read>(source: &mut R, segment: usize) -> Result<Option<Header>, FormatError> {
    let mut raw = [0u8; HEADER_LEN];
    let n = read_full(source, &mut raw)?;
    if n == 0 && segment > 0 {
        return Ok(None);
    }
    if n < HEADER_LEN {
        // Enough bytes to judge the magic still get the more specific error.
        if n >= 4 && raw[..4] != MAGIC {
            return Err(FormatError::BadMagic([raw[0], raw[1], raw[2], raw[3]]));
        }
        return Err(FormatError::TruncatedHeader { segment });
    }
    if raw[..4] != MAGIC {
        return Err(FormatError::BadMagic([raw[0], raw[1], raw[2], raw[3]]));
    }
    let version = u16::from_le_bytes([raw[4], raw[5]]);
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let geometry = ArrayGeometry::new(
        raw[6] as usize,
        raw[7] as usize,
        u16::from_le_bytes([raw[8], raw[9]]) as usize,
    );
    if !geometry.is_valid() {
        return Err(FormatError::InvalidGeometry(geometry));
    }
    let count = u16::from_le_bytes([raw[10], raw[11]]) as usize;
    Ok(Some(Header {
        version,
        geometry,
        count,
    }))
}

fn decode_record(
    raw: &[u8],
    geometry: ArrayGeometry,
    record: usize,
) -> Result<CsiSample, FormatError> {
    let identity = u32::from_le_bytes(raw[0..4].try_into().unwrap());
    let code = raw[4];
    let condition =
        Condition::from_code(code).ok_or(FormatError::UnknownCondition { record, code })?;
    let timestamp_ns = u64::from_le_bytes(raw[5..13].try_into().unwrap());
    let noise_floor_dbm = f32::from_le_bytes(raw[13..17].try_into().unwrap());
    if !noise_floor_dbm.is_finite() {
        return Err(FormatError::NonFinite {
            record,
            field: "noise_floor_dbm",
        });
    }
    let h = raw[RECORD_FIXED_LEN..]
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
            let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
            if re.is_finite() && im.is_finite() {
                Ok(Complex32::new(re, im))
            } else {
                Err(FormatError::NonFinite { record, field: "h" })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CsiSample {
        geometry,
        h,
        noise_floor_dbm,
        timestamp_ns,
        identity,
        condition,
    })
}

/// Parses a CSIR stream. Never reads past the last declared record of a
/// segment except to look for the next segment header.
pub fn parse_log<R: Read>(source: &mut R) -> Result<CsiLog, FormatError> {
    let first = read_header(source, 0)?.expect("first header is mandatory");
    let geometry = first.geometry;
    let rec_len = record_len(&geometry);
    let mut log = CsiLog {
        geometry,
        version: first.version,
        samples: Vec::with_capacity(first.count),
    };
    let mut raw = vec![0u8; rec_len];
    let mut header = first;
    let mut segment = 0;
    loop {
        for _ in 0..header.count {
            let record = log.samples.len();
            if read_full(source, &mut raw)? < rec_len {
                return Err(FormatError::TruncatedRecord { record });
            }
            log.samples.push(decode_record(&raw, geometry, record)?);
        }
        let full = header.count == MAX_SEGMENT_RECORDS;
        segment += 1;
        match read_header(source, segment)? {
            None => break,
            Some(next) => {
                if next.geometry != geometry || next.version != log.version {
                    return Err(FormatError::SegmentHeaderMismatch { segment });
                }
                if !full || next.count == 0 {
                    return Err(FormatError::NonCanonicalSegment { segment });
                }
                header = next;
            }
        }
    }
    Ok(log)
}
