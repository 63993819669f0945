//! Frame directories: one 8-bit binary PGM per frame plus `index.csv`
//! with header `file,t_us,window_start_us,window_us`.
//!
//! Intensities are quantized to `round(255 v)` on write and read back as
//! `byte / 255`.

use std::io::Write;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use super::tables::rows;
use crate::error::{Error, Position, Result};
use crate::event_model::{EventFrame, SensorGeometry};

pub const FRAME_INDEX_HEADER: &str = "file,t_us,window_start_us,window_us";
pub const FRAME_INDEX_FILE: &str = "index.csv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameIndexEntry {
    pub file: String,
    pub timestamp: u64,
    pub window_start: u64,
    pub window_duration: u64,
}

pub fn encode_pgm(frame: &EventFrame) -> Vec<u8> {
    let raster: Vec<u8> = frame
        .pixels
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut out = Vec::with_capacity(raster.len() + 32);
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            &raster,
            frame.width() as u32,
            frame.height() as u32,
            ExtendedColorType::L8,
        )
        .expect("in-memory PGM encode");
    out
}

pub fn write_pgm(path: &Path, frame: &EventFrame) -> Result<()> {
    let bytes = encode_pgm(frame);
    super::write_atomic(path, |w| w.write_all(&bytes))
}

/// Decodes an 8-bit greyscale PGM.
pub fn decode_pgm(bytes: &[u8]) -> Result<(SensorGeometry, Vec<f32>)> {
    let bad = |msg: String| Error::parse(Position::Byte(0), msg);
    let image = image::load_from_memory_with_format(bytes, ImageFormat::Pnm).map_err(|e| bad(e.to_string()))?;
    let DynamicImage::ImageLuma8(gray) = image else {
        return Err(bad(format!("expected 8-bit greyscale, got {:?}", image.color())));
    };
    let geometry = SensorGeometry::new(gray.width(), gray.height()).map_err(|e| bad(e.to_string()))?;
    Ok((geometry, gray.as_raw().iter().map(|&b| b as f32 / 255.0).collect()))
}

pub fn read_pgm(path: &Path) -> Result<(SensorGeometry, Vec<f32>)> {
    decode_pgm(&super::read_file(path)?)
}

/// Writes frames into `dir` as they arrive, then the index on `finish`.
pub struct FrameWriter {
    dir: PathBuf,
    entries: Vec<FrameIndexEntry>,
}

impl FrameWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(FrameWriter {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn push(&mut self, frame: &EventFrame) -> Result<()> {
        let file = format!("frame_{:06}.pgm", self.entries.len());
        write_pgm(&self.dir.join(&file), frame)?;
        self.entries.push(FrameIndexEntry {
            file,
            timestamp: frame.timestamp,
            window_start: frame.window_start,
            window_duration: frame.window_duration,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn finish(self) -> Result<Vec<FrameIndexEntry>> {
        super::write_atomic(&self.dir.join(FRAME_INDEX_FILE), |w| {
            writeln!(w, "{FRAME_INDEX_HEADER}")?;
            for e in &self.entries {
                writeln!(w, "{},{},{},{}", e.file, e.timestamp, e.window_start, e.window_duration)?;
            }
            Ok(())
        })?;
        Ok(self.entries)
    }
}

pub fn write_frames(dir: &Path, frames: &[EventFrame]) -> Result<Vec<FrameIndexEntry>> {
    let mut w = FrameWriter::create(dir)?;
    for f in frames {
        w.push(f)?;
    }
    w.finish()
}

pub fn read_frame_index(dir: &Path) -> Result<Vec<FrameIndexEntry>> {
    let bytes = super::read_file(&dir.join(FRAME_INDEX_FILE))?;
    let (header, rows) = rows(&bytes)?;
    if header.join(",") != FRAME_INDEX_HEADER {
        return Err(Error::parse(
            Position::Line(1),
            format!("expected header {FRAME_INDEX_HEADER:?}"),
        ));
    }
    let mut out: Vec<FrameIndexEntry> = Vec::with_capacity(rows.len());
    for row in &rows {
        let file = row.field(0);
        if file.is_empty() || file.contains(['/', '\\']) {
            return Err(row.err(format!("bad frame file name {file:?}")));
        }
        let entry = FrameIndexEntry {
            file: file.to_string(),
            timestamp: row.get(1, "t_us")?,
            window_start: row.get(2, "window_start_us")?,
            window_duration: row.get(3, "window_us")?,
        };
        if out.last().is_some_and(|p| p.timestamp > entry.timestamp) {
            return Err(row.err("frame timestamps decrease"));
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn read_frames(dir: &Path) -> Result<Vec<EventFrame>> {
    read_frame_index(dir)?
        .into_iter()
        .map(|e| {
            let (geometry, pixels) = read_pgm(&dir.join(&e.file))?;
            let mut f = EventFrame::from_pixels(geometry, pixels, e.timestamp)?;
            f.window_start = e.window_start;
            f.window_duration = e.window_duration;
            Ok(f)
        })
        .collect()
}
