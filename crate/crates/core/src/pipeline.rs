//! End-to-end helpers shared by the command line and the test suites.

use rand::Rng;

use crate::error::{Error, Result};
use crate::event_model::{Event, EventFrame, SensorGeometry, StreamingE2f};
use crate::event_sim::{
    make_ground_truth, render_wireframe, DvsSimulator, GroundTruthRecord, TimedPose, TrajectorySpec, WireframeModel,
};
use crate::geometry::{CameraIntrinsics, LandmarkSet};
use crate::landmark_oracle::{predict_landmarks, OracleConfig};
use crate::pnp::{estimate_pose_with, PnpConfig};
use crate::time_match::{check_sorted_times, nearest_index};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSettings {
    pub contrast_threshold: f64,
    pub timestamp_resolution: u64,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        SimulationSettings {
            contrast_threshold: crate::event_sim::DEFAULT_CONTRAST_THRESHOLD,
            timestamp_resolution: crate::event_sim::DEFAULT_TIMESTAMP_RESOLUTION_US,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    /// Poses at the ground-truth rate.
    pub ground_truth: Vec<TimedPose>,
    /// Labels at every rendered frame, for assigning to event frames.
    pub frame_labels: Vec<GroundTruthRecord>,
    pub event_count: u64,
}

/// Renders the trajectory frame by frame and feeds each interval's events to
/// `sink`, so long sequences never hold more than two frames in memory.
pub fn simulate<F>(
    spec: &TrajectorySpec,
    model: &WireframeModel,
    k: &CameraIntrinsics,
    geometry: SensorGeometry,
    settings: &SimulationSettings,
    mut sink: F,
) -> Result<SimulationOutput>
where
    F: FnMut(&[Event]) -> Result<()>,
{
    let trajectory = crate::event_sim::generate_trajectory(spec)?;
    let mut dvs = DvsSimulator::new(settings.contrast_threshold, settings.timestamp_resolution)?;
    let mut buf = Vec::new();
    let mut event_count = 0;
    for tp in &trajectory.frames {
        let frame = render_wireframe(model, &tp.pose, k, geometry, tp.t);
        buf.clear();
        dvs.push_frame(&frame, &mut buf)?;
        event_count += buf.len() as u64;
        if !buf.is_empty() {
            sink(&buf)?;
        }
    }
    Ok(SimulationOutput {
        frame_labels: make_ground_truth(model, &trajectory.frames, k, geometry)?,
        ground_truth: trajectory.ground_truth,
        event_count,
    })
}

/// Streams events through E2F, collecting every frame.
pub fn frames_from_events(events: &[Event], geometry: SensorGeometry, tau: u64) -> Result<Vec<EventFrame>> {
    let mut e2f = StreamingE2f::new(geometry, tau)?;
    let mut frames = Vec::new();
    let mut sink = |f: EventFrame| frames.push(f);
    e2f.push(events, &mut sink)?;
    e2f.finish(&mut sink);
    Ok(frames)
}

/// Label record closest in time to each timestamp (ties to the earlier record).
pub fn nearest_labels<'a>(times: &[u64], records: &'a [GroundTruthRecord]) -> Result<Vec<&'a GroundTruthRecord>> {
    if records.is_empty() {
        return Err(Error::Parameter("no label records".into()));
    }
    let record_times: Vec<u64> = records.iter().map(|r| r.t).collect();
    check_sorted_times(&record_times, "label records")?;
    Ok(times
        .iter()
        .map(|&t| &records[nearest_index(&record_times, t).expect("records non-empty")])
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackEstimate {
    pub poses: Vec<TimedPose>,
    /// Timestamps for which no pose could be estimated, with the reason.
    pub skipped: Vec<(u64, String)>,
}

/// Runs the oracle on the label nearest each timestamp and estimates a pose,
/// stamped with that timestamp. Frames whose labels are degenerate or whose
/// estimation fails are reported in `skipped`.
pub fn estimate_track(
    times: &[u64],
    records: &[GroundTruthRecord],
    landmarks: &LandmarkSet,
    k: &CameraIntrinsics,
    oracle: &OracleConfig,
    pnp: &PnpConfig,
    rng: &mut impl Rng,
) -> Result<TrackEstimate> {
    check_sorted_times(times, "frame timestamps")?;
    let labels = nearest_labels(times, records)?;
    let mut out = TrackEstimate {
        poses: Vec::with_capacity(times.len()),
        skipped: Vec::new(),
    };
    for (&t, record) in times.iter().zip(labels) {
        if record.landmarks.len() != landmarks.len() {
            return Err(Error::Validation(format!(
                "labels carry {} landmarks, the landmark set has {}",
                record.landmarks.len(),
                landmarks.len()
            )));
        }
        let prediction = predict_landmarks(record, oracle, rng)?;
        if prediction.degenerate {
            out.skipped.push((t, "too few visible landmarks".into()));
            continue;
        }
        match estimate_pose_with(&prediction.correspondences, landmarks, k, pnp) {
            Ok(r) => {
                // Equal timestamps can arise when a short window repeats a midpoint.
                if out.poses.last().is_some_and(|p: &TimedPose| p.t == t) {
                    out.skipped.push((t, "duplicate timestamp".into()));
                } else {
                    out.poses.push(TimedPose { t, pose: r.pose });
                }
            }
            Err(e @ (Error::Degenerate(_) | Error::Cheirality { .. } | Error::Numerical(_))) => {
                out.skipped.push((t, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
