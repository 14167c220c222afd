//! SSCT trace files.
//!
//! Binary layout, all little-endian:
//!
//! | bytes | field                              |
//! |-------|------------------------------------|
//! | 4     | magic `b"SSCT"`                    |
//! | 4     | format version, `u32` (currently 1)|
//! | 8     | sample rate in Hz, `f64`           |
//! | 8     | sample count, `u64`                |
//! | 1     | origin label, `u8`                 |
//! | 8 * n | interleaved `f32` I/Q pairs        |
//!
//! Records may be concatenated; a trace-pair file is two records back to
//! back. The CSV debugging form is a `index,i,q` header followed by one row
//! per sample (sample rate and label are not carried).

use std::io::{self, BufRead, Read, Write};

use num_complex::Complex;

use crate::channel::{OriginLabel, SignalTrace};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"SSCT";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 1;

pub fn write_trace<T: Real, W: Write>(writer: &mut W, trace: &SignalTrace<T>) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + trace.len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&trace.sample_rate_hz().as_f64().to_le_bytes());
    buf.extend_from_slice(&(trace.len() as u64).to_le_bytes());
    buf.push(trace.origin() as u8);
    for s in trace.samples() {
        buf.extend_from_slice(&(s.re.as_f64() as f32).to_le_bytes());
        buf.extend_from_slice(&(s.im.as_f64() as f32).to_le_bytes());
    }
    writer.write_all(&buf)?;
    Ok(())
}

/// Reads one record. Returns `Ok(None)` on a clean end of stream.
pub fn read_trace<T: Real, R: Read>(reader: &mut R) -> Result<Option<SignalTrace<T>>> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match reader.read(&mut header[filled..])? {
            0 if filled == 0 => return Ok(None),
            0 => return Err(Error::Format("truncated header".into())),
            n => filled += n,
        }
    }
    if &header[0..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let rate = f64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
    let count = u64::from_le_bytes(header[16..24].try_into().expect("8 bytes"));
    let origin = OriginLabel::from_u8(header[24])
        .ok_or_else(|| Error::Format(format!("unknown origin label {}", header[24])))?;
    let count = usize::try_from(count).map_err(|_| Error::Format("sample count overflow".into()))?;
    let mut body = vec![0u8; count.checked_mul(8).ok_or_else(|| Error::Format("sample count overflow".into()))?];
    reader.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Format("truncated samples".into()),
        _ => Error::Io(e),
    })?;
    let samples = body
        .chunks_exact(8)
        .map(|c| {
            let i = f32::from_le_bytes(c[0..4].try_into().expect("4 bytes"));
            let q = f32::from_le_bytes(c[4..8].try_into().expect("4 bytes"));
            Complex::new(T::lit(i as f64), T::lit(q as f64))
        })
        .collect();
    SignalTrace::new(samples, T::lit(rate), origin).map(Some)
}

/// Reads every record in the stream.
pub fn read_all<T: Real, R: Read>(reader: &mut R) -> Result<Vec<SignalTrace<T>>> {
    let mut out = Vec::new();
    while let Some(trace) = read_trace(reader)? {
        out.push(trace);
    }
    Ok(out)
}

pub fn write_csv<T: Real, W: Write>(writer: &mut W, trace: &SignalTrace<T>) -> Result<()> {
    writeln!(writer, "index,i,q")?;
    for (k, s) in trace.samples().iter().enumerate() {
        writeln!(writer, "{},{},{}", k, s.re.as_f64(), s.im.as_f64())?;
    }
    Ok(())
}

/// Parses the CSV form; rows must be in index order.
pub fn read_csv<T: Real, R: BufRead>(reader: R, sample_rate_hz: T) -> Result<SignalTrace<T>> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim) != Some("index,i,q") {
        return Err(Error::Format("missing index,i,q header".into()));
    }
    let mut samples = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Format(format!("row {row}: expected 3 fields")));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Format(format!("row {row}: {e}")))
        };
        if parse(fields[0])? as usize != row {
            return Err(Error::Format(format!("row {row}: index out of order")));
        }
        samples.push(Complex::new(T::lit(parse(fields[1])?), T::lit(parse(fields[2])?)));
    }
    SignalTrace::new(samples, sample_rate_hz, OriginLabel::Unknown)
}
