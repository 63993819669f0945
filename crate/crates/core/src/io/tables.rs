//! Text tables: poses, correspondences, landmarks and per-frame ground truth.
//!
//! All are comma-separated with a fixed header line. Floats are written in
//! shortest round-trip form, so a write followed by a read is bit-exact.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Quaternion, UnitQuaternion};

use crate::error::{Error, Position, Result};
use crate::event_sim::{GroundTruthRecord, Landmark2d, TimedPose};
use crate::geometry::{BoundingBox, LandmarkSet, Pose, Vec2, Vec3};
use crate::landmark_oracle::Correspondence;

pub const POSES_HEADER: &str = "t_us,tx,ty,tz,qw,qx,qy,qz";
pub const CORRESPONDENCES_HEADER: &str = "t_us,landmark,u,v,confidence";
pub const LANDMARKS_HEADER: &str = "index,x,y,z,label";
const GT_PREFIX: [&str; 13] = [
    "t_us",
    "tx",
    "ty",
    "tz",
    "qw",
    "qx",
    "qy",
    "qz",
    "degenerate",
    "bbox_x_min",
    "bbox_y_min",
    "bbox_x_max",
    "bbox_y_max",
];

/// Quaternions further than this from unit norm are rejected on read.
const QUATERNION_NORM_TOLERANCE: f64 = 1e-3;

pub(crate) struct Row {
    pub line: usize,
    pub fields: csv::StringRecord,
}

impl Row {
    pub(crate) fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(Position::Line(self.line), msg)
    }

    pub(crate) fn field(&self, i: usize) -> &str {
        &self.fields[i]
    }

    pub(crate) fn get<T: FromStr>(&self, i: usize, name: &str) -> Result<T> {
        let raw = self.field(i);
        raw.parse().map_err(|_| self.err(format!("bad {name} {raw:?}")))
    }

    fn finite(&self, i: usize, name: &str) -> Result<f64> {
        let v: f64 = self.get(i, name)?;
        if !v.is_finite() {
            return Err(self.err(format!("{name} is not finite")));
        }
        Ok(v)
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.position() {
        Some(p) => Error::parse(Position::Line(p.line() as usize), e.to_string()),
        None => Error::parse(Position::Byte(0), e.to_string()),
    }
}

/// Reads a table into its header fields and data rows of the same width.
pub(crate) fn rows(bytes: &[u8]) -> Result<(Vec<String>, Vec<Row>)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let header: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(String::from).collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(Error::parse(Position::Line(1), "missing header"));
    }
    let mut out = Vec::new();
    for record in reader.into_records() {
        let fields = record.map_err(csv_error)?;
        let line = fields.position().map_or(0, |p| p.line() as usize);
        out.push(Row { line, fields });
    }
    Ok((header, out))
}

fn expect_header(header: &[String], expected: &str) -> Result<()> {
    if header.join(",") != expected {
        return Err(Error::parse(Position::Line(1), format!("expected header {expected:?}")));
    }
    Ok(())
}

/// Formats one row, quoting fields only where CSV requires it.
fn csv_line(fields: &[&str]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(fields).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("fields are UTF-8")
}

fn pose_fields(row: &Row, at: usize) -> Result<Pose> {
    let mut v = [0.0; 7];
    for (k, name) in ["tx", "ty", "tz", "qw", "qx", "qy", "qz"].iter().enumerate() {
        v[k] = row.finite(at + k, name)?;
    }
    let q = Quaternion::new(v[3], v[4], v[5], v[6]);
    let norm = q.norm();
    if (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
        return Err(row.err(format!("quaternion norm {norm} is too far from 1")));
    }
    // Leaving already-unit quaternions untouched keeps round trips bit-exact.
    let rotation = if (norm - 1.0).abs() > 1e-12 {
        UnitQuaternion::new_normalize(q)
    } else {
        UnitQuaternion::new_unchecked(q)
    };
    Ok(Pose::new(rotation, Vec3::new(v[0], v[1], v[2])))
}

fn push_pose(s: &mut String, p: &Pose) {
    let t = p.translation;
    let [w, x, y, z] = p.quaternion_wxyz();
    write!(s, "{:?},{:?},{:?},{w:?},{x:?},{y:?},{z:?}", t.x, t.y, t.z).unwrap();
}

pub fn parse_poses(bytes: &[u8]) -> Result<Vec<TimedPose>> {
    let (header, rows) = rows(bytes)?;
    expect_header(&header, POSES_HEADER)?;
    let mut out: Vec<TimedPose> = Vec::with_capacity(rows.len());
    for row in &rows {
        let t: u64 = row.get(0, "t_us")?;
        if let Some(prev) = out.last() {
            if t <= prev.t {
                return Err(row.err(format!("timestamp {t} does not increase from {}", prev.t)));
            }
        }
        out.push(TimedPose {
            t,
            pose: pose_fields(row, 1)?,
        });
    }
    Ok(out)
}

pub fn read_poses(path: &Path) -> Result<Vec<TimedPose>> {
    parse_poses(&super::read_file(path)?)
}

pub fn write_poses(path: &Path, poses: &[TimedPose]) -> Result<()> {
    super::write_atomic(path, |w| {
        writeln!(w, "{POSES_HEADER}")?;
        let mut line = String::new();
        for p in poses {
            line.clear();
            write!(line, "{},", p.t).unwrap();
            push_pose(&mut line, &p.pose);
            writeln!(w, "{line}")?;
        }
        Ok(())
    })
}

/// Correspondences observed in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameCorrespondences {
    pub t: u64,
    pub correspondences: Vec<Correspondence>,
}

/// Rows sharing a timestamp form one frame; timestamps must not decrease.
pub fn parse_correspondences(bytes: &[u8]) -> Result<Vec<FrameCorrespondences>> {
    let (header, rows) = rows(bytes)?;
    expect_header(&header, CORRESPONDENCES_HEADER)?;
    let mut out: Vec<FrameCorrespondences> = Vec::new();
    for row in &rows {
        let t: u64 = row.get(0, "t_us")?;
        let c = Correspondence::new(
            row.get(1, "landmark")?,
            Vec2::new(row.finite(2, "u")?, row.finite(3, "v")?),
            row.get(4, "confidence")?,
        )
        .map_err(|e| row.err(e.to_string()))?;
        match out.last_mut() {
            Some(f) if f.t == t => f.correspondences.push(c),
            Some(f) if f.t > t => return Err(row.err(format!("timestamp {t} decreases from {}", f.t))),
            _ => out.push(FrameCorrespondences {
                t,
                correspondences: vec![c],
            }),
        }
    }
    Ok(out)
}

pub fn read_correspondences(path: &Path) -> Result<Vec<FrameCorrespondences>> {
    parse_correspondences(&super::read_file(path)?)
}

pub fn write_correspondences(path: &Path, frames: &[FrameCorrespondences]) -> Result<()> {
    super::write_atomic(path, |w| {
        writeln!(w, "{CORRESPONDENCES_HEADER}")?;
        for f in frames {
            for c in &f.correspondences {
                writeln!(
                    w,
                    "{},{},{:?},{:?},{:?}",
                    f.t, c.landmark_index, c.uv.x, c.uv.y, c.confidence
                )?;
            }
        }
        Ok(())
    })
}

/// `index` must count up from 0. Labels are optional; an all-empty label column reads as none.
pub fn parse_landmarks(bytes: &[u8]) -> Result<LandmarkSet> {
    let (header, rows) = rows(bytes)?;
    expect_header(&header, LANDMARKS_HEADER)?;
    let mut points = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let index: usize = row.get(0, "index")?;
        if index != i {
            return Err(row.err(format!("landmark index {index}, expected {i}")));
        }
        points.push(Vec3::new(row.finite(1, "x")?, row.finite(2, "y")?, row.finite(3, "z")?));
        labels.push(row.field(4).to_string());
    }
    let mut set = LandmarkSet::new(points);
    if labels.iter().any(|l| !l.is_empty()) {
        set.labels = Some(labels);
    }
    Ok(set)
}

pub fn read_landmarks(path: &Path) -> Result<LandmarkSet> {
    parse_landmarks(&super::read_file(path)?)
}

pub fn write_landmarks(path: &Path, set: &LandmarkSet) -> Result<()> {
    if let Some(labels) = &set.labels {
        if labels.len() != set.len() {
            return Err(Error::Validation(
                "landmark label count differs from point count".into(),
            ));
        }
        if let Some(bad) = labels.iter().find(|l| l.trim() != l.as_str()) {
            return Err(Error::Validation(format!(
                "landmark label {bad:?} has surrounding whitespace"
            )));
        }
    }
    super::write_atomic(path, |w| {
        writeln!(w, "{LANDMARKS_HEADER}")?;
        for (i, p) in set.points.iter().enumerate() {
            let label = set.labels.as_ref().map_or("", |l| l[i].as_str());
            let (i, x, y, z) = (
                i.to_string(),
                format!("{:?}", p.x),
                format!("{:?}", p.y),
                format!("{:?}", p.z),
            );
            w.write_all(csv_line(&[&i, &x, &y, &z, label]).as_bytes())?;
        }
        Ok(())
    })
}

fn gt_header(landmarks: usize) -> String {
    let mut h = GT_PREFIX.join(",");
    for i in 0..landmarks {
        write!(h, ",u{i},v{i},vis{i}").unwrap();
    }
    h
}

/// Per-frame labels: pose, degenerate flag, optional box (empty fields when
/// absent) and `u,v,visible` for every landmark.
pub fn parse_ground_truth(bytes: &[u8]) -> Result<Vec<GroundTruthRecord>> {
    let (header, rows) = rows(bytes)?;
    let n = header.len().saturating_sub(GT_PREFIX.len()) / 3;
    if header.len() < GT_PREFIX.len() || header.join(",") != gt_header(n) {
        return Err(Error::parse(Position::Line(1), "malformed ground-truth header"));
    }
    let flag = |row: &Row, i: usize, name: &str| match row.field(i) {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(row.err(format!("{name} flag {other:?} is not 0 or 1"))),
    };
    let mut out: Vec<GroundTruthRecord> = Vec::with_capacity(rows.len());
    for row in &rows {
        let t: u64 = row.get(0, "t_us")?;
        if let Some(prev) = out.last() {
            if t < prev.t {
                return Err(row.err(format!("timestamp {t} decreases from {}", prev.t)));
            }
        }
        let pose = pose_fields(row, 1)?;
        let degenerate = flag(row, 8, "degenerate")?;
        let bbox = if (9..13).all(|i| row.field(i).is_empty()) {
            None
        } else {
            let v: Vec<f64> = (9..13).map(|i| row.finite(i, GT_PREFIX[i])).collect::<Result<_>>()?;
            Some(BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| row.err(e.to_string()))?)
        };
        let landmarks = (0..n)
            .map(|k| {
                let at = GT_PREFIX.len() + 3 * k;
                Ok(Landmark2d {
                    uv: Vec2::new(row.get(at, "u")?, row.get(at + 1, "v")?),
                    visible: flag(row, at + 2, "visibility")?,
                })
            })
            .collect::<Result<_>>()?;
        out.push(GroundTruthRecord {
            t,
            pose,
            landmarks,
            bbox,
            degenerate,
        });
    }
    Ok(out)
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthRecord>> {
    parse_ground_truth(&super::read_file(path)?)
}

pub fn write_ground_truth(path: &Path, records: &[GroundTruthRecord]) -> Result<()> {
    let n = records.first().map_or(0, |r| r.landmarks.len());
    if records.iter().any(|r| r.landmarks.len() != n) {
        return Err(Error::Validation("records disagree on landmark count".into()));
    }
    super::write_atomic(path, |w| {
        writeln!(w, "{}", gt_header(n))?;
        let mut line = String::new();
        for r in records {
            line.clear();
            write!(line, "{},", r.t).unwrap();
            push_pose(&mut line, &r.pose);
            write!(line, ",{}", r.degenerate as u8).unwrap();
            match &r.bbox {
                Some(b) => write!(line, ",{:?},{:?},{:?},{:?}", b.x_min, b.y_min, b.x_max, b.y_max).unwrap(),
                None => line.push_str(",,,,"),
            }
            for l in &r.landmarks {
                write!(line, ",{:?},{:?},{}", l.uv.x, l.uv.y, l.visible as u8).unwrap();
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    })
}
