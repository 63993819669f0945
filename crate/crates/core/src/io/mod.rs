//! File formats and dataset layout.
//!
//! Every reader reports malformed input with the line (text) or byte offset
//! (binary) where it happened. Every writer writes to a temporary sibling
//! file and renames it into place, so an interrupted write never leaves a
//! truncated output behind.

mod config;
mod events;
mod pgm;
mod tables;

pub use config::{parse_duration_us, Config, DatasetManifest, Motion, Pace, ScenarioName, LIGHTINGS};
pub use events::{
    read_events, read_events_bytes, write_events, write_events_to, EventFormat, EventReader, EVENTS_CSV_HEADER,
    EVENTS_MAGIC,
};
pub use pgm::{
    decode_pgm, encode_pgm, read_frame_index, read_frames, read_pgm, write_frames, write_pgm, FrameIndexEntry,
    FrameWriter, FRAME_INDEX_FILE,
};
pub use tables::{
    parse_correspondences, parse_ground_truth, parse_landmarks, parse_poses, read_correspondences, read_ground_truth,
    read_landmarks, read_poses, write_correspondences, write_ground_truth, write_landmarks, write_poses,
    FrameCorrespondences,
};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `path` through a temporary file in the same directory.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Parameter(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        fill(&mut w)?;
        w.flush()?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
