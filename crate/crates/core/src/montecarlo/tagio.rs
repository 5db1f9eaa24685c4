//! Tag-stream files.
//!
//! Binary layout: a 16-byte header (`ETAG`, format version as u16 LE,
//! channel count as u16 LE, 8 zero bytes) followed by 9-byte records of
//! one channel byte and the time in picoseconds as u64 LE. The CSV form has
//! a `channel,time_ps` header and one tag per line; lines starting with `#`
//! are comments.

use std::io::{self, BufRead, Read, Write};

use super::TimeTag;

pub const ETAG_MAGIC: [u8; 4] = *b"ETAG";
pub const ETAG_VERSION: u16 = 1;

pub fn write_etag<W: Write>(mut out: W, channel_count: u16, tags: &[TimeTag]) -> io::Result<()> {
    let mut header = [0u8; 16];
    header[..4].copy_from_slice(&ETAG_MAGIC);
    header[4..6].copy_from_slice(&ETAG_VERSION.to_le_bytes());
    header[6..8].copy_from_slice(&channel_count.to_le_bytes());
    out.write_all(&header)?;
    let mut record = [0u8; 9];
    for t in tags {
        record[0] = t.channel;
        record[1..].copy_from_slice(&t.time_ps.to_le_bytes());
        out.write_all(&record)?;
    }
    out.flush()
}

/// Reads a binary stream, returning the channel count and the tags.
pub fn read_etag<R: Read>(mut input: R) -> io::Result<(u16, Vec<TimeTag>)> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if header[..4] != ETAG_MAGIC {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "not an ETAG stream",
        ));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != ETAG_VERSION {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unsupported ETAG version {version}"),
        ));
    }
    let channels = u16::from_le_bytes([header[6], header[7]]);
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() % 9 != 0 {
        return Err(io::Error::new(
            io::ErrorKind::UnexpectedEof,
            "truncated ETAG record",
        ));
    }
    let tags = body
        .chunks_exact(9)
        .map(|r| {
            let mut time = [0u8; 8];
            time.copy_from_slice(&r[1..]);
            TimeTag::new(r[0], u64::from_le_bytes(time))
        })
        .collect();
    Ok((channels, tags))
}

pub fn write_tags_csv<W: Write>(mut out: W, tags: &[TimeTag]) -> io::Result<()> {
    writeln!(out, "channel,time_ps")?;
    for t in tags {
        writeln!(out, "{},{}", t.channel, t.time_ps)?;
    }
    out.flush()
}

pub fn read_tags_csv<R: BufRead>(input: R) -> io::Result<Vec<TimeTag>> {
    let bad = |line: usize, what: &str| {
        io::Error::new(io::ErrorKind::InvalidData, format!("line {line}: {what}"))
    };
    let mut tags = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("channel") {
            continue;
        }
        let (ch, t) = line
            .split_once(',')
            .ok_or_else(|| bad(k + 1, "expected `channel,time_ps`"))?;
        let channel = ch.trim().parse().map_err(|_| bad(k + 1, "bad channel"))?;
        let time_ps = t.trim().parse().map_err(|_| bad(k + 1, "bad time"))?;
        tags.push(TimeTag::new(channel, time_ps));
    }
    Ok(tags)
}
