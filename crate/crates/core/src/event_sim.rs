//! Synthetic data generation: rendezvous trajectories, a wireframe renderer,
//! log-intensity frame-to-event conversion and ground-truth labels.

use crate::error::{Error, Result};
use crate::event_model::{Event, EventFrame, EventStream, Polarity, SensorGeometry};
use crate::geometry::{bbox_from_landmarks, BoundingBox, CameraIntrinsics, LandmarkSet, Pose, Vec2, Vec3};
use crate::time_match::{check_sorted_times, nearest_index};

/// Reference speeds of the four rendezvous scenarios, m/s.
pub const APPROACH_SLOW_SPEED: f64 = 0.0332;
pub const APPROACH_FAST_SPEED: f64 = 0.2186;
pub const ORBIT_SLOW_SPEED: f64 = 0.0142;
pub const ORBIT_FAST_SPEED: f64 = 0.3007;

/// Batch durations used when generating event frames for training, microseconds.
pub const TRAINING_TAUS_US: [u64; 4] = [200_000, 100_000, 50_000, 10_000];

pub const DEFAULT_CONTRAST_THRESHOLD: f64 = 0.2;
pub const DEFAULT_TIMESTAMP_RESOLUTION_US: u64 = 10_000;

pub const BACKGROUND_INTENSITY: f32 = 10.0;
pub const LINE_INTENSITY: f32 = 200.0;

/// Near-plane depth used to clip edges that cross behind the camera, meters.
const NEAR_PLANE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPose {
    /// Microseconds.
    pub t: u64,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryKind {
    /// Straight line from `target_center + start_offset` toward the target.
    Approach { start_offset: Vec3 },
    /// Horizontal circle of the given radius around the target.
    Orbit { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    /// m/s along the path.
    pub speed: f64,
    /// Seconds.
    pub duration: f64,
    /// Ground-truth pose rate, Hz.
    pub pose_rate: f64,
    /// Render rate, Hz.
    pub frame_rate: f64,
    pub target_center: Vec3,
}

impl TrajectorySpec {
    pub fn approach(speed: f64, duration: f64, start_offset: Vec3) -> Self {
        TrajectorySpec {
            kind: TrajectoryKind::Approach { start_offset },
            speed,
            duration,
            pose_rate: 10.0,
            frame_rate: 100.0,
            target_center: Vec3::zeros(),
        }
    }

    pub fn orbit(speed: f64, duration: f64, radius: f64) -> Self {
        TrajectorySpec {
            kind: TrajectoryKind::Orbit { radius },
            speed,
            duration,
            pose_rate: 10.0,
            frame_rate: 100.0,
            target_center: Vec3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive(self.speed, "speed")?;
        positive(self.duration, "duration")?;
        positive(self.pose_rate, "pose rate")?;
        positive(self.frame_rate, "frame rate")?;
        if self.frame_rate < self.pose_rate {
            return Err(Error::Parameter(format!(
                "frame rate {} must be at least the pose rate {}",
                self.frame_rate, self.pose_rate
            )));
        }
        match self.kind {
            TrajectoryKind::Approach { start_offset } => {
                let dist = start_offset.norm();
                let travel = self.path_length();
                if travel >= dist {
                    return Err(Error::Parameter(format!(
                        "approach of {travel:.4} m reaches the target {dist:.4} m away before the trajectory ends"
                    )));
                }
            }
            TrajectoryKind::Orbit { radius } => positive(radius, "orbit radius")?,
        }
        Ok(())
    }

    /// Analytic path length, `speed * duration`.
    pub fn path_length(&self) -> f64 {
        self.speed * self.duration
    }

    /// Camera position at `t` seconds.
    pub fn position_at(&self, t: f64) -> Vec3 {
        let s = self.speed * t;
        match self.kind {
            TrajectoryKind::Approach { start_offset } => {
                let dir = -start_offset.normalize();
                self.target_center + start_offset + dir * s
            }
            TrajectoryKind::Orbit { radius } => {
                let theta = s / radius;
                self.target_center + Vec3::new(radius * theta.cos(), radius * theta.sin(), 0.0)
            }
        }
    }

    /// Camera-from-world pose at `t` seconds, aimed at the target.
    pub fn pose_at(&self, t: f64) -> Result<Pose> {
        Pose::look_at(&self.position_at(t), &self.target_center, &Vec3::z())
    }

    fn sample(&self, rate: f64) -> Result<Vec<TimedPose>> {
        let count = (self.duration * rate + 1e-9).floor() as u64 + 1;
        (0..count)
            .map(|k| {
                let t_s = k as f64 / rate;
                Ok(TimedPose {
                    t: (t_s * 1e6).round() as u64,
                    pose: self.pose_at(t_s)?,
                })
            })
            .collect()
    }
}

/// Poses sampled at the render rate plus the ground-truth-rate stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<TimedPose>,
    pub ground_truth: Vec<TimedPose>,
}

pub fn generate_trajectory(spec: &TrajectorySpec) -> Result<Trajectory> {
    spec.validate()?;
    Ok(Trajectory {
        frames: spec.sample(spec.frame_rate)?,
        ground_truth: spec.sample(spec.pose_rate)?,
    })
}

/// Linear 0-255 single-channel intensity image.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityFrame {
    /// Microseconds.
    pub t: u64,
    pub geometry: SensorGeometry,
    /// Row-major `height x width`.
    pub pixels: Vec<f32>,
}

impl IntensityFrame {
    pub fn uniform(t: u64, geometry: SensorGeometry, value: f32) -> Self {
        IntensityFrame {
            t,
            geometry,
            pixels: vec![value; geometry.pixel_count()],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.geometry.width as usize + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        let w = self.geometry.width as usize;
        self.pixels[y * w + x] = v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireframeModel {
    pub vertices: Vec<Vec3>,
    pub edges: Vec<(usize, usize)>,
    pub landmark_indices: Vec<usize>,
}

impl WireframeModel {
    pub fn new(vertices: Vec<Vec3>, edges: Vec<(usize, usize)>, landmark_indices: Vec<usize>) -> Result<Self> {
        let n = vertices.len();
        if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= n || b >= n) {
            return Err(Error::Validation(format!(
                "edge ({a}, {b}) references a missing vertex"
            )));
        }
        let mut seen = vec![false; n];
        for &i in &landmark_indices {
            if i >= n {
                return Err(Error::Validation(format!("landmark index {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Validation(format!("landmark index {i} repeated")));
            }
        }
        Ok(WireframeModel {
            vertices,
            edges,
            landmark_indices,
        })
    }

    /// A space-telescope-like target about 0.5 m long: an octagonal body
    /// along z with two solar panels along ±y. Its 24 landmarks are the body
    /// ring corners and the panel corners.
    pub fn satellite() -> Self {
        let radius = 0.09;
        let half_len = 0.25;
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        for &z in &[-half_len, half_len] {
            for i in 0..8 {
                let a = std::f64::consts::FRAC_PI_4 * (i as f64 + 0.5);
                vertices.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
            }
        }
        for i in 0..8 {
            edges.push((i, (i + 1) % 8));
            edges.push((8 + i, 8 + (i + 1) % 8));
            edges.push((i, 8 + i));
        }
        // Panels: inner edge 0.14 m off-axis, 0.32 m span, 0.12 m tall, offset
        // towards the aft end so the landmark set is not symmetric.
        for side in [1.0, -1.0] {
            let base = vertices.len();
            let (y0, y1) = (side * 0.14, side * 0.46);
            let (z0, z1) = (-0.10, 0.04);
            let x = 0.01 * side;
            vertices.push(Vec3::new(x, y0, z0));
            vertices.push(Vec3::new(x, y1, z0));
            vertices.push(Vec3::new(x, y1, z1));
            vertices.push(Vec3::new(x, y0, z1));
            for i in 0..4 {
                edges.push((base + i, base + (i + 1) % 4));
            }
        }
        let landmark_indices: Vec<usize> = (0..24).collect();
        // Panel struts and an aperture dish (not landmarks).
        let strut_anchor = vertices.len();
        vertices.push(Vec3::new(0.0, radius, -0.03));
        vertices.push(Vec3::new(0.0, -radius, -0.03));
        edges.push((strut_anchor, 16));
        edges.push((strut_anchor, 19));
        edges.push((strut_anchor + 1, 20));
        edges.push((strut_anchor + 1, 23));
        let dish = vertices.len();
        for i in 0..6 {
            let a = std::f64::consts::TAU * i as f64 / 6.0;
            vertices.push(Vec3::new(0.05 * a.cos() + 0.1, 0.05 * a.sin(), 0.18));
        }
        for i in 0..6 {
            edges.push((dish + i, dish + (i + 1) % 6));
        }
        WireframeModel {
            vertices,
            edges,
            landmark_indices,
        }
    }

    pub fn landmarks(&self) -> Vec<Vec3> {
        self.landmark_indices.iter().map(|&i| self.vertices[i]).collect()
    }

    pub fn landmark_set(&self) -> LandmarkSet {
        LandmarkSet {
            points: self.landmarks(),
            labels: None,
            cloud: Some(self.vertices.clone()),
        }
    }
}

/// Renders the model's edges as anti-aliased bright lines on a dark background.
pub fn render_wireframe(
    model: &WireframeModel,
    pose: &Pose,
    k: &CameraIntrinsics,
    geometry: SensorGeometry,
    t: u64,
) -> IntensityFrame {
    let mut frame = IntensityFrame::uniform(t, geometry, BACKGROUND_INTENSITY);
    let cam: Vec<Vec3> = model.vertices.iter().map(|v| pose.transform_point(v)).collect();
    for &(a, b) in &model.edges {
        let (mut p, mut q) = (cam[a], cam[b]);
        if p.z < NEAR_PLANE && q.z < NEAR_PLANE {
            continue;
        }
        if p.z < NEAR_PLANE {
            p = clip_to_near(&q, &p);
        } else if q.z < NEAR_PLANE {
            q = clip_to_near(&p, &q);
        }
        let u = k.project_camera_point(&p);
        let v = k.project_camera_point(&q);
        draw_aa_line(&mut frame, u, v);
    }
    frame
}

fn clip_to_near(front: &Vec3, back: &Vec3) -> Vec3 {
    let s = (front.z - NEAR_PLANE) / (front.z - back.z);
    front + (back - front) * s
}

fn plot(frame: &mut IntensityFrame, x: i64, y: i64, coverage: f64) {
    let (w, h) = (frame.geometry.width as i64, frame.geometry.height as i64);
    if x < 0 || y < 0 || x >= w || y >= h || coverage <= 0.0 {
        return;
    }
    let value = BACKGROUND_INTENSITY + (LINE_INTENSITY - BACKGROUND_INTENSITY) * coverage as f32;
    let px = &mut frame.pixels[(y * w + x) as usize];
    if value > *px {
        *px = value;
    }
}

/// Wu-style line: one sample per column (or row), coverage split between the
/// two nearest pixels of the minor axis.
fn draw_aa_line(frame: &mut IntensityFrame, a: Vec2, b: Vec2) {
    if !(a.x.is_finite() && a.y.is_finite() && b.x.is_finite() && b.y.is_finite()) {
        return;
    }
    let steep = (b.y - a.y).abs() > (b.x - a.x).abs();
    let (mut a, mut b) = if steep {
        (Vec2::new(a.y, a.x), Vec2::new(b.y, b.x))
    } else {
        (a, b)
    };
    if a.x > b.x {
        std::mem::swap(&mut a, &mut b);
    }
    let dx = b.x - a.x;
    let limit = if steep {
        frame.geometry.height
    } else {
        frame.geometry.width
    } as f64;
    if dx < 1e-12 {
        let (x, y) = (a.x.round() as i64, a.y.round() as i64);
        if steep {
            plot(frame, y, x, 1.0);
        } else {
            plot(frame, x, y, 1.0);
        }
        return;
    }
    let slope = (b.y - a.y) / dx;
    let start = a.x.ceil().max(0.0);
    let end = b.x.floor().min(limit - 1.0);
    if start > end {
        return;
    }
    for xi in start as i64..=end as i64 {
        let y = a.y + (xi as f64 - a.x) * slope;
        let yf = y.floor();
        let frac = y - yf;
        let yi = yf as i64;
        if steep {
            plot(frame, yi, xi, 1.0 - frac);
            plot(frame, yi + 1, xi, frac);
        } else {
            plot(frame, xi, yi, 1.0 - frac);
            plot(frame, xi, yi + 1, frac);
        }
    }
}

/// Log-intensity DVS model over a sequence of uniformly spaced frames.
///
/// Each pixel keeps a reference `ln(I + 1)`. Between consecutive frames a
/// change of `dL` emits `floor(|dL| / C)` events of sign `dL`, timestamped at
/// the linearly interpolated threshold crossings and rounded to the nearest
/// multiple of `timestamp_resolution` inside the interval. The reference moves
/// by the emitted amount, so the residual carries over to the next interval.
pub fn frames_to_events(
    frames: &[IntensityFrame],
    contrast_threshold: f64,
    timestamp_resolution: u64,
) -> Result<EventStream> {
    if frames.len() < 2 {
        return Err(Error::Parameter(format!(
            "event simulation needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let mut sim = DvsSimulator::new(contrast_threshold, timestamp_resolution)?;
    let mut events = Vec::new();
    for f in frames {
        sim.push_frame(f, &mut events)?;
    }
    EventStream::new(events, frames[0].geometry)
}

/// Streaming form of [`frames_to_events`]: feed frames one at a time.
#[derive(Debug, Clone)]
pub struct DvsSimulator {
    contrast_threshold: f64,
    resolution: u64,
    reference: Vec<f64>,
    geometry: Option<SensorGeometry>,
    last_t: u64,
    spacing: Option<u64>,
    frames_seen: usize,
    interval: Vec<Event>,
}

impl DvsSimulator {
    pub fn new(contrast_threshold: f64, timestamp_resolution: u64) -> Result<Self> {
        if !(contrast_threshold > 0.0 && contrast_threshold.is_finite()) {
            return Err(Error::Parameter(format!(
                "contrast threshold must be positive, got {contrast_threshold}"
            )));
        }
        if timestamp_resolution == 0 {
            return Err(Error::Parameter("timestamp resolution must be positive".into()));
        }
        Ok(DvsSimulator {
            contrast_threshold,
            resolution: timestamp_resolution,
            reference: Vec::new(),
            geometry: None,
            last_t: 0,
            spacing: None,
            frames_seen: 0,
            interval: Vec::new(),
        })
    }

    /// Consumes the next frame, appending the events of the interval it closes
    /// to `out` in time order.
    pub fn push_frame(&mut self, frame: &IntensityFrame, out: &mut Vec<Event>) -> Result<()> {
        let index = self.frames_seen;
        let Some(geometry) = self.geometry else {
            let g = frame.geometry;
            if g.width > u16::MAX as u32 + 1 || g.height > u16::MAX as u32 + 1 {
                return Err(Error::Parameter("frame too large for 16-bit event coordinates".into()));
            }
            if frame.pixels.len() != g.pixel_count() {
                return Err(Error::Validation("frame 0 pixel count does not match its size".into()));
            }
            self.geometry = Some(g);
            self.reference = frame.pixels.iter().map(|&v| log_intensity(v)).collect();
            self.last_t = frame.t;
            self.frames_seen = 1;
            return Ok(());
        };
        if frame.geometry != geometry || frame.pixels.len() != geometry.pixel_count() {
            return Err(Error::Validation(format!(
                "frame {index} does not match the first frame's size"
            )));
        }
        let (t0, t1) = (self.last_t, frame.t);
        let d = t1.saturating_sub(t0);
        let spacing = *self.spacing.get_or_insert(d);
        // One microsecond of slack absorbs rounding of non-integer frame periods.
        if d == 0 || d.abs_diff(spacing) > 1 {
            return Err(Error::Validation(format!(
                "non-uniform frame spacing between frames {} and {index}: {d} us vs {spacing} us",
                index - 1
            )));
        }
        let res = self.resolution;
        let lo = t0.div_ceil(res) * res;
        let hi = t1 / res * res;
        if lo > hi {
            return Err(Error::Validation(format!(
                "timestamp resolution {res} us has no tick inside [{t0}, {t1}]"
            )));
        }
        let c = self.contrast_threshold;
        let width = geometry.width as usize;
        let dt = d as f64;
        self.interval.clear();
        for (idx, (r, &next)) in self.reference.iter_mut().zip(&frame.pixels).enumerate() {
            let delta = log_intensity(next) - *r;
            let n = (delta.abs() / c).floor();
            if n < 1.0 {
                continue;
            }
            let (x, y) = ((idx % width) as u16, (idx / width) as u16);
            let polarity = if delta > 0.0 {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            for i in 1..=n as u64 {
                let frac = i as f64 * c / delta.abs();
                let t = t0 as f64 + frac * dt;
                let q = ((t / res as f64).round() as u64 * res).clamp(lo, hi);
                self.interval.push(Event::new(q, x, y, polarity));
            }
            *r += n * c * delta.signum();
        }
        self.interval.sort_by_key(|e| e.t);
        out.extend_from_slice(&self.interval);
        self.last_t = t1;
        self.frames_seen += 1;
        Ok(())
    }
}

#[inline]
fn log_intensity(v: f32) -> f64 {
    (v as f64 + 1.0).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark2d {
    /// Pixel position; NaN when the landmark is behind the camera.
    pub uv: Vec2,
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthRecord {
    /// Microseconds.
    pub t: u64,
    pub pose: Pose,
    pub landmarks: Vec<Landmark2d>,
    /// Box around the visible landmarks with 10% clearance; `None` when fewer
    /// than two distinct visible landmarks exist.
    pub bbox: Option<BoundingBox>,
    /// Fewer than four visible landmarks: unusable for PnP.
    pub degenerate: bool,
}

pub const BBOX_CLEARANCE: f64 = 0.10;
pub const MIN_VISIBLE_LANDMARKS: usize = 4;

impl GroundTruthRecord {
    pub fn visible_points(&self) -> Vec<Vec2> {
        self.landmarks.iter().filter(|l| l.visible).map(|l| l.uv).collect()
    }

    pub fn visible_count(&self) -> usize {
        self.landmarks.iter().filter(|l| l.visible).count()
    }

    /// Recomputes `bbox` and `degenerate` from the landmark visibility flags.
    pub fn refresh_derived(&mut self) {
        let visible = self.visible_points();
        self.bbox = bbox_from_landmarks(&visible, BBOX_CLEARANCE).ok();
        self.degenerate = visible.len() < MIN_VISIBLE_LANDMARKS;
    }
}

pub fn make_ground_truth(
    model: &WireframeModel,
    poses: &[TimedPose],
    k: &CameraIntrinsics,
    geometry: SensorGeometry,
) -> Result<Vec<GroundTruthRecord>> {
    if poses.is_empty() || model.landmark_indices.is_empty() {
        return Err(Error::Parameter("ground truth needs poses and landmarks".into()));
    }
    let landmarks = model.landmarks();
    let (w, h) = (geometry.width as f64, geometry.height as f64);
    Ok(poses
        .iter()
        .map(|tp| {
            let projected = landmarks
                .iter()
                .map(|p| {
                    let pc = tp.pose.transform_point(p);
                    if pc.z <= 0.0 {
                        return Landmark2d {
                            uv: Vec2::new(f64::NAN, f64::NAN),
                            visible: false,
                        };
                    }
                    let uv = k.project_camera_point(&pc);
                    let visible = uv.x >= 0.0 && uv.y >= 0.0 && uv.x < w && uv.y < h;
                    Landmark2d { uv, visible }
                })
                .collect();
            let mut record = GroundTruthRecord {
                t: tp.t,
                pose: tp.pose,
                landmarks: projected,
                bbox: None,
                degenerate: true,
            };
            record.refresh_derived();
            record
        })
        .collect())
}

/// Pairs each event frame with the record closest in time (ties to the earlier record).
pub fn assign_labels_to_frames<'a>(
    frames: &'a [EventFrame],
    records: &'a [GroundTruthRecord],
) -> Result<Vec<(&'a EventFrame, &'a GroundTruthRecord)>> {
    if records.is_empty() {
        return Err(Error::Parameter("no ground-truth records to assign".into()));
    }
    let times: Vec<u64> = records.iter().map(|r| r.t).collect();
    check_sorted_times(&times, "ground-truth records")?;
    let frame_times: Vec<u64> = frames.iter().map(|f| f.timestamp).collect();
    check_sorted_times(&frame_times, "event frames")?;
    Ok(frames
        .iter()
        .map(|f| {
            (
                f,
                &records[nearest_index(&times, f.timestamp).expect("records non-empty")],
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> SensorGeometry {
        SensorGeometry::new(4, 3).unwrap()
    }

    /// Dark frames 10 ms apart whose pixel (1, 1) takes the given intensities.
    fn frames_from(values: &[f32]) -> Vec<IntensityFrame> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut f = IntensityFrame::uniform(i as u64 * 10_000, tiny(), 0.0);
                f.set(1, 1, v);
                f
            })
            .collect()
    }

    #[test]
    fn orbit_arc_length() {
        let spec = TrajectorySpec::orbit(ORBIT_SLOW_SPEED, 87.48, 1.0);
        let arc = spec.path_length();
        assert_relative_eq!(arc, 1.242216, epsilon = 1e-6);
        assert_relative_eq!(arc.to_degrees(), 71.17, epsilon = 0.01);
        let end = spec.position_at(87.48);
        let angle = end.y.atan2(end.x).to_degrees();
        assert_relative_eq!(angle, arc.to_degrees(), epsilon = 1e-9);
    }

    #[test]
    fn approach_advance() {
        let spec = TrajectorySpec::approach(APPROACH_FAST_SPEED, 2.40, Vec3::new(1.5, 0.0, 0.0));
        let traj = generate_trajectory(&spec).unwrap();
        let start = traj.frames.first().unwrap().pose.camera_center();
        let end = traj.frames.last().unwrap().pose.camera_center();
        // 0.2186 m/s * 2.40 s.
        assert_relative_eq!((end - start).norm(), 0.52464, epsilon = 1e-9);
        assert_eq!(traj.ground_truth.len(), 25);
        assert_eq!(traj.frames.len(), 241);
    }

    #[test]
    fn approach_through_target_rejected() {
        let spec = TrajectorySpec::approach(0.5, 4.0, Vec3::new(1.0, 0.0, 0.0));
        assert!(matches!(generate_trajectory(&spec), Err(Error::Parameter(_))));
    }

    #[test]
    fn camera_axis_through_target() {
        for spec in [
            TrajectorySpec::orbit(ORBIT_FAST_SPEED, 4.31, 1.0),
            TrajectorySpec::approach(APPROACH_SLOW_SPEED, 14.73, Vec3::new(1.2, -0.4, 0.3)),
        ] {
            let traj = generate_trajectory(&spec).unwrap();
            for tp in traj.frames.iter().chain(&traj.ground_truth) {
                let c = tp.pose.transform_point(&spec.target_center);
                assert!(c.x.abs() < 1e-9 && c.y.abs() < 1e-9 && c.z > 0.0);
            }
        }
    }

    #[test]
    fn path_length_matches_speed_times_duration() {
        for spec in [
            TrajectorySpec::orbit(ORBIT_FAST_SPEED, 4.31, 1.0),
            TrajectorySpec::orbit(ORBIT_SLOW_SPEED, 87.48, 1.0),
            TrajectorySpec::approach(APPROACH_SLOW_SPEED, 14.73, Vec3::new(1.5, 0.0, 0.0)),
        ] {
            let traj = generate_trajectory(&spec).unwrap();
            let len: f64 = traj
                .frames
                .windows(2)
                .map(|w| (w[1].pose.camera_center() - w[0].pose.camera_center()).norm())
                .sum();
            let last_t = traj.frames.last().unwrap().t as f64 * 1e-6;
            let expected = spec.speed * last_t;
            assert!(((len - expected) / expected).abs() < 1e-6, "{len} vs {expected}");
        }
    }

    #[test]
    fn ground_truth_is_ten_hz() {
        let spec = TrajectorySpec::orbit(ORBIT_SLOW_SPEED, 87.48, 1.0);
        let traj = generate_trajectory(&spec).unwrap();
        assert_eq!(traj.ground_truth.len(), 875);
        assert!(traj.ground_truth.windows(2).all(|w| w[1].t - w[0].t == 100_000));
    }

    #[test]
    fn empty_model_renders_background() {
        let model = WireframeModel::new(vec![Vec3::new(0.0, 0.0, 1.0)], vec![], vec![]).unwrap();
        let k = CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0).unwrap();
        let g = SensorGeometry::new(64, 48).unwrap();
        let f = render_wireframe(&model, &Pose::identity(), &k, g, 0);
        assert!(f.pixels.iter().all(|&v| v == BACKGROUND_INTENSITY));
    }

    #[test]
    fn axis_edge_lights_principal_point() {
        let model = WireframeModel::new(
            vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 3.0)],
            vec![(0, 1)],
            vec![],
        )
        .unwrap();
        let k = CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0).unwrap();
        let g = SensorGeometry::new(64, 48).unwrap();
        let f = render_wireframe(&model, &Pose::identity(), &k, g, 0);
        assert_eq!(f.get(32, 24), LINE_INTENSITY);
        let lit = f.pixels.iter().filter(|&&v| v > BACKGROUND_INTENSITY).count();
        assert_eq!(lit, 1);
    }

    #[test]
    fn render_is_deterministic_and_bounded() {
        let model = WireframeModel::satellite();
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap();
        let pose = TrajectorySpec::orbit(ORBIT_FAST_SPEED, 4.31, 1.0).pose_at(1.0).unwrap();
        let a = render_wireframe(&model, &pose, &k, SensorGeometry::default(), 0);
        let b = render_wireframe(&model, &pose, &k, SensorGeometry::default(), 0);
        assert_eq!(a, b);
        assert!(a
            .pixels
            .iter()
            .all(|&v| (BACKGROUND_INTENSITY..=LINE_INTENSITY).contains(&v)));
        assert!(a.pixels.iter().filter(|&&v| v > 100.0).count() > 500);
    }

    #[test]
    fn edge_crossing_behind_camera_is_clipped() {
        let model = WireframeModel::new(
            vec![Vec3::new(0.1, 0.0, 1.0), Vec3::new(0.1, 0.0, -1.0)],
            vec![(0, 1)],
            vec![],
        )
        .unwrap();
        let k = CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0).unwrap();
        let g = SensorGeometry::new(64, 48).unwrap();
        let f = render_wireframe(&model, &Pose::identity(), &k, g, 0);
        // Visible half runs from (42, 24) off to the right.
        assert!(f.get(42, 24) > 100.0);
        assert!(f.get(63, 24) > 100.0);
        assert_eq!(f.get(20, 24), BACKGROUND_INTENSITY);
    }

    #[test]
    fn constant_frames_emit_nothing() {
        let s = frames_to_events(&frames_from(&[50.0, 50.0, 50.0]), 0.2, 10_000).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn step_up_emits_three_positive_events() {
        // ln(201/101) = 0.68813..., floor(0.68813 / 0.2) = 3.
        let delta = (201f64 / 101.0).ln();
        assert_relative_eq!(delta, 0.6881, epsilon = 1e-4);
        let s = frames_from(&[100.0, 200.0]);
        let stream = frames_to_events(&s, 0.2, 10_000).unwrap();
        assert_eq!(stream.len(), 3);
        assert!(stream
            .events()
            .iter()
            .all(|e| e.p == Polarity::Positive && (e.x, e.y) == (1, 1)));
        assert!(stream.events().iter().all(|e| e.t % 10_000 == 0 && e.t <= 10_000));
    }

    #[test]
    fn up_down_is_symmetric() {
        let stream = frames_to_events(&frames_from(&[100.0, 200.0, 100.0]), 0.2, 10_000).unwrap();
        let pos = stream.events().iter().filter(|e| e.p == Polarity::Positive).count();
        let neg = stream.events().iter().filter(|e| e.p == Polarity::Negative).count();
        assert_eq!((pos, neg), (3, 3));
    }

    #[test]
    fn residual_carries_forward() {
        // 0.15 per step with C = 0.2: no event after one step, one after two.
        let a = 100.0f64;
        let b = (a + 1.0) * 0.15f64.exp() - 1.0;
        let c = (a + 1.0) * 0.30f64.exp() - 1.0;
        let s1 = frames_to_events(&frames_from(&[a as f32, b as f32]), 0.2, 10_000).unwrap();
        assert!(s1.is_empty());
        let s2 = frames_to_events(&frames_from(&[a as f32, b as f32, c as f32]), 0.2, 10_000).unwrap();
        assert_eq!(s2.len(), 1);
        assert_eq!(s2.events()[0].t, 20_000);
    }

    #[test]
    fn simulator_rejects_bad_input() {
        let one = frames_from(&[1.0]);
        assert!(matches!(frames_to_events(&one, 0.2, 10_000), Err(Error::Parameter(_))));
        let mut two = frames_from(&[1.0, 2.0, 3.0]);
        assert!(matches!(frames_to_events(&two, 0.0, 10_000), Err(Error::Parameter(_))));
        two[2].t = 50_000;
        assert!(matches!(frames_to_events(&two, 0.2, 10_000), Err(Error::Validation(_))));
    }

    #[test]
    fn satellite_landmarks_visible_from_orbit() {
        let model = WireframeModel::satellite();
        assert_eq!(model.landmark_indices.len(), 24);
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap();
        let spec = TrajectorySpec::orbit(ORBIT_FAST_SPEED, 4.31, 1.0);
        let traj = generate_trajectory(&spec).unwrap();
        let records = make_ground_truth(&model, &traj.ground_truth, &k, SensorGeometry::default()).unwrap();
        for r in &records {
            assert_eq!(r.visible_count(), 24);
            assert!(!r.degenerate);
            let rebuilt = bbox_from_landmarks(&r.visible_points(), 0.10).unwrap();
            assert_eq!(r.bbox, Some(rebuilt));
        }
    }

    #[test]
    fn looking_away_is_degenerate() {
        let model = WireframeModel::satellite();
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap();
        let away = Pose::look_at(&Vec3::new(1.0, 0.0, 0.0), &Vec3::new(2.0, 0.0, 0.0), &Vec3::z()).unwrap();
        let recs = make_ground_truth(&model, &[TimedPose { t: 0, pose: away }], &k, SensorGeometry::default()).unwrap();
        assert!(recs[0].degenerate);
        assert_eq!(recs[0].visible_count(), 0);
        assert!(recs[0].bbox.is_none());
    }

    fn record(t: u64) -> GroundTruthRecord {
        GroundTruthRecord {
            t,
            pose: Pose::identity(),
            landmarks: vec![],
            bbox: None,
            degenerate: true,
        }
    }

    #[test]
    fn label_assignment_ties_and_nearest() {
        let g = SensorGeometry::new(2, 2).unwrap();
        let frames = [EventFrame::zeros(g, 25_000), EventFrame::zeros(g, 26_000)];
        let records = [record(0), record(50_000)];
        let pairs = assign_labels_to_frames(&frames, &records).unwrap();
        assert_eq!(pairs[0].1.t, 0);
        assert_eq!(pairs[1].1.t, 50_000);
        assert!(assign_labels_to_frames(&frames, &[]).is_err());
    }

    #[test]
    fn label_assignment_is_order_independent() {
        let g = SensorGeometry::new(2, 2).unwrap();
        let frames: Vec<EventFrame> = (0..40).map(|i| EventFrame::zeros(g, i * 7_300)).collect();
        let records: Vec<GroundTruthRecord> = (0..30).map(|i| record(i * 10_000)).collect();
        let expected: Vec<u64> = assign_labels_to_frames(&frames, &records)
            .unwrap()
            .iter()
            .map(|p| p.1.t)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut rng);
            shuffled.sort_by_key(|r| r.t);
            let got: Vec<u64> = assign_labels_to_frames(&frames, &shuffled)
                .unwrap()
                .iter()
                .map(|p| p.1.t)
                .collect();
            assert_eq!(got, expected);
        }
        // Brute-force oracle: scan every record.
        for (f, t) in frames.iter().zip(&expected) {
            let best = records.iter().min_by_key(|r| (r.t.abs_diff(f.timestamp), r.t)).unwrap();
            assert_eq!(best.t, *t);
        }
    }
}
