//! Event files.
//!
//! CSV: header `t_us,x,y,p`, then one `t,x,y,p` row per event with `p` in
//! `{-1, 1}`. Blank lines are ignored.
//!
//! Binary: the 4-byte magic `EVS1`, then 16-byte little-endian records
//! `u64 t | u16 x | u16 y | i8 p | 3 zero bytes`.
//!
//! Both require non-decreasing timestamps.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Position, Result};
use crate::event_model::{Event, EventStream, Polarity, SensorGeometry};

pub const EVENTS_CSV_HEADER: &str = "t_us,x,y,p";
pub const EVENTS_MAGIC: &[u8; 4] = b"EVS1";
const RECORD: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Binary,
}

impl EventFormat {
    /// `.bin` and `.evs` are binary, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("evs") => EventFormat::Binary,
            _ => EventFormat::Csv,
        }
    }
}

impl std::str::FromStr for EventFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(EventFormat::Csv),
            "bin" | "binary" => Ok(EventFormat::Binary),
            _ => Err(Error::Parameter(format!("unknown event format {s:?} (csv or binary)"))),
        }
    }
}

/// Incremental reader for large event files.
pub struct EventReader<R> {
    source: PathBuf,
    body: Body<R>,
    last_t: Option<u64>,
    done: bool,
}

enum Body<R> {
    Csv {
        reader: csv::Reader<R>,
        record: csv::StringRecord,
    },
    /// `pos` is the byte offset of the next record.
    Binary { inner: R, pos: u64, bytes: Vec<u8> },
}

impl EventReader<BufReader<File>> {
    pub fn open(path: &Path, format: EventFormat) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        EventReader::new(BufReader::with_capacity(1 << 20, file), format, path)
    }
}

impl<R: BufRead> EventReader<R> {
    /// Consumes the header or magic. `source` is only used in error messages.
    pub fn new(mut inner: R, format: EventFormat, source: impl Into<PathBuf>) -> Result<Self> {
        let source = source.into();
        let body = match format {
            EventFormat::Csv => {
                let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(inner);
                let header = reader.headers().map_err(|e| csv_error(e, &source))?;
                if header.iter().collect::<Vec<_>>().join(",") != EVENTS_CSV_HEADER {
                    return Err(Error::parse(
                        Position::Line(1),
                        format!("expected header {EVENTS_CSV_HEADER:?}"),
                    ));
                }
                Body::Csv {
                    reader,
                    record: csv::StringRecord::new(),
                }
            }
            EventFormat::Binary => {
                let mut magic = [0u8; 4];
                let n = read_full(&mut inner, &mut magic).map_err(|e| Error::io(&source, e))?;
                if n < 4 || &magic != EVENTS_MAGIC {
                    return Err(Error::parse(Position::Byte(0), "missing EVS1 magic"));
                }
                Body::Binary {
                    inner,
                    pos: 4,
                    bytes: Vec::new(),
                }
            }
        };
        Ok(EventReader {
            source,
            body,
            last_t: None,
            done: false,
        })
    }

    /// Appends up to `max` events to `out`; returns how many were read, 0 at end of input.
    pub fn read_chunk(&mut self, out: &mut Vec<Event>, max: usize) -> Result<usize> {
        if self.done || max == 0 {
            return Ok(0);
        }
        match &mut self.body {
            Body::Csv { reader, record } => {
                let mut n = 0;
                while n < max {
                    if !reader.read_record(record).map_err(|e| csv_error(e, &self.source))? {
                        self.done = true;
                        break;
                    }
                    let position = Position::Line(record.position().map_or(0, |p| p.line() as usize));
                    let event = parse_csv_event(record).map_err(|m| Error::parse(position, m))?;
                    check_order(&mut self.last_t, event.t, position)?;
                    out.push(event);
                    n += 1;
                }
                Ok(n)
            }
            Body::Binary { inner, pos, bytes } => {
                let want = max.saturating_mul(RECORD).min(1 << 24);
                bytes.resize(want, 0);
                let got = read_full(inner, bytes).map_err(|e| Error::io(&self.source, e))?;
                if got < want {
                    self.done = true;
                }
                let whole = got / RECORD;
                for (i, rec) in bytes[..whole * RECORD].chunks_exact(RECORD).enumerate() {
                    let position = Position::Byte(*pos + (i * RECORD) as u64);
                    let event = decode_record(rec).map_err(|m| Error::parse(position, m))?;
                    check_order(&mut self.last_t, event.t, position)?;
                    out.push(event);
                }
                if got % RECORD != 0 {
                    return Err(Error::parse(
                        Position::Byte(*pos + (whole * RECORD) as u64),
                        format!("truncated record: {} of {RECORD} bytes", got % RECORD),
                    ));
                }
                *pos += got as u64;
                Ok(whole)
            }
        }
    }
}

/// Malformed text is a format error; only genuine read failures are I/O errors.
fn csv_error(e: csv::Error, source: &Path) -> Error {
    let line = e.position().map(|p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(source, io),
        kind => {
            let message = match kind {
                csv::ErrorKind::Utf8 { .. } => "invalid UTF-8".to_string(),
                csv::ErrorKind::UnequalLengths { len, .. } => format!("{len} fields, expected 4"),
                other => format!("{other:?}"),
            };
            Error::parse(Position::Line(line.unwrap_or(1)), message)
        }
    }
}

fn check_order(last: &mut Option<u64>, t: u64, position: Position) -> Result<()> {
    if let Some(prev) = *last {
        if t < prev {
            return Err(Error::parse(position, format!("timestamp {t} decreases from {prev}")));
        }
    }
    *last = Some(t);
    Ok(())
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

fn parse_csv_event(record: &csv::StringRecord) -> std::result::Result<Event, String> {
    let (t, x, y, p) = (&record[0], &record[1], &record[2], &record[3]);
    let t: u64 = t.parse().map_err(|_| format!("bad timestamp {t:?}"))?;
    let x: u16 = x.parse().map_err(|_| format!("bad x coordinate {x:?}"))?;
    let y: u16 = y.parse().map_err(|_| format!("bad y coordinate {y:?}"))?;
    let p = match p {
        "1" | "+1" => Polarity::Positive,
        "-1" => Polarity::Negative,
        _ => return Err(format!("polarity {p:?} is not -1 or 1")),
    };
    Ok(Event::new(t, x, y, p))
}

fn decode_record(rec: &[u8]) -> std::result::Result<Event, String> {
    let t = u64::from_le_bytes(rec[0..8].try_into().unwrap());
    let x = u16::from_le_bytes([rec[8], rec[9]]);
    let y = u16::from_le_bytes([rec[10], rec[11]]);
    let p = Polarity::try_from(rec[12] as i8).map_err(|_| format!("polarity {} is not -1 or 1", rec[12] as i8))?;
    if rec[13..16] != [0, 0, 0] {
        return Err("non-zero padding".into());
    }
    Ok(Event::new(t, x, y, p))
}

/// Parses a whole in-memory event file.
pub fn read_events_bytes(bytes: &[u8], format: EventFormat) -> Result<Vec<Event>> {
    let mut reader = EventReader::new(bytes, format, "<memory>")?;
    let mut out = Vec::new();
    while reader.read_chunk(&mut out, 1 << 16)? > 0 {}
    Ok(out)
}

/// Reads a whole event file; the format follows the file extension.
pub fn read_events(path: &Path, geometry: SensorGeometry) -> Result<EventStream> {
    let mut reader = EventReader::open(path, EventFormat::from_path(path))?;
    let mut out = Vec::new();
    while reader.read_chunk(&mut out, 1 << 16)? > 0 {}
    EventStream::new(out, geometry)
}

pub fn write_events_to(w: &mut impl Write, events: &[Event], format: EventFormat) -> std::io::Result<()> {
    match format {
        EventFormat::Csv => {
            writeln!(w, "{EVENTS_CSV_HEADER}")?;
            for e in events {
                writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.p.as_i8())?;
            }
        }
        EventFormat::Binary => {
            w.write_all(EVENTS_MAGIC)?;
            let mut rec = [0u8; RECORD];
            for e in events {
                rec[0..8].copy_from_slice(&e.t.to_le_bytes());
                rec[8..10].copy_from_slice(&e.x.to_le_bytes());
                rec[10..12].copy_from_slice(&e.y.to_le_bytes());
                rec[12] = e.p.as_i8() as u8;
                w.write_all(&rec)?;
            }
        }
    }
    Ok(())
}

pub fn write_events(path: &Path, events: &[Event], format: EventFormat) -> Result<()> {
    super::write_atomic(path, |w| write_events_to(w, events, format))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: u64, p: Polarity) -> Event {
        Event::new(t, 3, 4, p)
    }

    #[test]
    fn csv_cases() {
        let ok = "t_us,x,y,p\n0,3,4,1\n\n5,3,4,-1\r\n";
        let got = read_events_bytes(ok.as_bytes(), EventFormat::Csv).unwrap();
        assert_eq!(got, vec![ev(0, Polarity::Positive), ev(5, Polarity::Negative)]);

        assert!(read_events_bytes(b"t_us,x,y,p\n", EventFormat::Csv).unwrap().is_empty());
        let at = |s: &str| match read_events_bytes(s.as_bytes(), EventFormat::Csv) {
            Err(Error::Parse { position, .. }) => position,
            other => panic!("{other:?}"),
        };
        assert_eq!(at(""), Position::Line(1));
        assert_eq!(at("t,x,y,p\n"), Position::Line(1));
        assert_eq!(at("t_us,x,y,p\n0,1,1,1\n0,1,1,0\n"), Position::Line(3));
        assert_eq!(at("t_us,x,y,p\n9,1,1,1\n8,1,1,1\n"), Position::Line(3));
        assert_eq!(at("t_us,x,y,p\n9,1,1\n"), Position::Line(2));
        assert_eq!(at("t_us,x,y,p\n9,1,1,1,1\n"), Position::Line(2));
        assert_eq!(at("t_us,x,y,p\n9,70000,1,1\n"), Position::Line(2));
        assert!(matches!(
            read_events_bytes(b"t_us,x,y,p\n1,1,1,1\n\xff\n", EventFormat::Csv),
            Err(Error::Parse {
                position: Position::Line(3),
                ..
            })
        ));
    }

    #[test]
    fn binary_cases() {
        let events = vec![ev(1, Polarity::Positive), ev(2, Polarity::Negative)];
        let mut buf = Vec::new();
        write_events_to(&mut buf, &events, EventFormat::Binary).unwrap();
        assert_eq!(buf.len(), 4 + 2 * RECORD);
        assert_eq!(read_events_bytes(&buf, EventFormat::Binary).unwrap(), events);

        let at = |b: &[u8]| match read_events_bytes(b, EventFormat::Binary) {
            Err(Error::Parse { position, .. }) => position,
            other => panic!("{other:?}"),
        };
        assert_eq!(at(&buf[..buf.len() - 3]), Position::Byte(20));
        assert_eq!(at(b"EVS2"), Position::Byte(0));
        assert_eq!(at(b"EV"), Position::Byte(0));
        let mut bad = buf.clone();
        bad[20 + 12] = 0;
        assert_eq!(at(&bad), Position::Byte(20));
        let mut bad = buf.clone();
        bad[4 + 15] = 1;
        assert_eq!(at(&bad), Position::Byte(4));
        let mut bad = buf.clone();
        bad[20] = 0;
        bad[4] = 9;
        assert_eq!(at(&bad), Position::Byte(20));
        assert!(read_events_bytes(EVENTS_MAGIC, EventFormat::Binary).unwrap().is_empty());
    }

    #[test]
    fn chunked_binary_matches_whole() {
        let events: Vec<_> = (0..1000)
            .map(|i| Event::new(i * 3, (i % 7) as u16, 1, Polarity::Positive))
            .collect();
        let mut buf = Vec::new();
        write_events_to(&mut buf, &events, EventFormat::Binary).unwrap();
        let mut reader = EventReader::new(&buf[..], EventFormat::Binary, "<memory>").unwrap();
        let mut out = Vec::new();
        while reader.read_chunk(&mut out, 37).unwrap() > 0 {}
        assert_eq!(out, events);
    }
}
