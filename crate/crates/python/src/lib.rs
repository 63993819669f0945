//! Python bindings for the event-camera pose estimation toolkit.
//!
//! Events cross the boundary as `(t_us, x, y, p)` tuples, poses as `Pose`
//! objects (camera-from-object, quaternion `w, x, y, z`).

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use evpose_core::augment::{augment_sample, AugmentConfig};
use evpose_core::event_model::{Event, EventFrame, Polarity, SensorGeometry};
use evpose_core::event_sim::{make_ground_truth, GroundTruthRecord, TimedPose, TrajectorySpec, WireframeModel};
use evpose_core::geometry::{self, CameraIntrinsics, Vec2, Vec3};
use evpose_core::io::{self as evio, EventFormat};
use evpose_core::landmark_oracle::{predict_landmarks, Correspondence, OracleConfig};
use evpose_core::pipeline::{self, SimulationSettings};
use evpose_core::pnp::{self, FilterPolicy};
use evpose_core::{metrics, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Degenerate(_) | Error::Cheirality { .. } | Error::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn v3(p: (f64, f64, f64)) -> Vec3 {
    Vec3::new(p.0, p.1, p.2)
}

fn t3(v: &Vec3) -> (f64, f64, f64) {
    (v.x, v.y, v.z)
}

type EventTuple = (u64, u16, u16, i8);

fn events_from_py(events: Vec<EventTuple>) -> PyResult<Vec<Event>> {
    events
        .into_iter()
        .map(|(t, x, y, p)| {
            let p = Polarity::try_from(p).map_err(|_| PyValueError::new_err(format!("polarity {p} is not -1 or 1")))?;
            Ok(Event::new(t, x, y, p))
        })
        .collect()
}

fn events_to_py(events: &[Event]) -> Vec<EventTuple> {
    events.iter().map(|e| (e.t, e.x, e.y, e.p.as_i8())).collect()
}

/// Rigid transform mapping object coordinates into the camera frame.
#[pyclass(name = "Pose", module = "evpose", skip_from_py_object, frozen)]
#[derive(Clone, Copy)]
struct PyPose(geometry::Pose);

#[pymethods]
impl PyPose {
    #[new]
    #[pyo3(signature = (wxyz = (1.0, 0.0, 0.0, 0.0), translation = (0.0, 0.0, 0.0)))]
    fn new(wxyz: (f64, f64, f64, f64), translation: (f64, f64, f64)) -> PyResult<Self> {
        let q = [wxyz.0, wxyz.1, wxyz.2, wxyz.3];
        Ok(PyPose(geometry::Pose::from_wxyz(q, v3(translation)).map_err(to_py)?))
    }

    /// Camera at `eye` looking at `target`, with `up` pointing towards image -y.
    #[staticmethod]
    #[pyo3(signature = (eye, target = (0.0, 0.0, 0.0), up = (0.0, 0.0, 1.0)))]
    fn look_at(eye: (f64, f64, f64), target: (f64, f64, f64), up: (f64, f64, f64)) -> PyResult<Self> {
        Ok(PyPose(
            geometry::Pose::look_at(&v3(eye), &v3(target), &v3(up)).map_err(to_py)?,
        ))
    }

    #[getter]
    fn wxyz(&self) -> (f64, f64, f64, f64) {
        let [w, x, y, z] = self.0.quaternion_wxyz();
        (w, x, y, z)
    }

    #[getter]
    fn translation(&self) -> (f64, f64, f64) {
        t3(&self.0.translation)
    }

    #[getter]
    fn rotation_matrix(&self) -> Vec<Vec<f64>> {
        let r = self.0.rotation_matrix();
        (0..3).map(|i| (0..3).map(|j| r[(i, j)]).collect()).collect()
    }

    #[getter]
    fn camera_center(&self) -> (f64, f64, f64) {
        t3(&self.0.camera_center())
    }

    /// `self * other`: applies `other` first.
    fn compose(&self, other: &PyPose) -> PyPose {
        PyPose(self.0.compose(&other.0))
    }

    fn inverse(&self) -> PyPose {
        PyPose(self.0.inverse())
    }

    fn transform_point(&self, p: (f64, f64, f64)) -> (f64, f64, f64) {
        t3(&self.0.transform_point(&v3(p)))
    }

    fn __mul__(&self, other: &PyPose) -> PyPose {
        self.compose(other)
    }

    fn __repr__(&self) -> String {
        let (w, x, y, z) = self.wxyz();
        let t = self.0.translation;
        format!(
            "Pose(wxyz=({w}, {x}, {y}, {z}), translation=({}, {}, {}))",
            t.x, t.y, t.z
        )
    }
}

/// Pinhole intrinsics in pixels.
#[pyclass(name = "CameraIntrinsics", module = "evpose", skip_from_py_object, frozen)]
#[derive(Clone, Copy)]
struct PyIntrinsics(CameraIntrinsics);

#[pymethods]
impl PyIntrinsics {
    #[new]
    fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> PyResult<Self> {
        Ok(PyIntrinsics(CameraIntrinsics::new(fx, fy, cx, cy).map_err(to_py)?))
    }

    #[getter]
    fn fx(&self) -> f64 {
        self.0.fx
    }

    #[getter]
    fn fy(&self) -> f64 {
        self.0.fy
    }

    #[getter]
    fn cx(&self) -> f64 {
        self.0.cx
    }

    #[getter]
    fn cy(&self) -> f64 {
        self.0.cy
    }

    /// Projects object-frame points seen from `pose`; fails for points behind the camera.
    fn project(&self, pose: &PyPose, points: Vec<(f64, f64, f64)>) -> PyResult<Vec<(f64, f64)>> {
        let pts: Vec<Vec3> = points.into_iter().map(v3).collect();
        let uv = geometry::project(&self.0, &pose.0, &pts).map_err(to_py)?;
        Ok(uv.iter().map(|p| (p.x, p.y)).collect())
    }

    fn __repr__(&self) -> String {
        let k = self.0;
        format!("CameraIntrinsics(fx={}, fy={}, cx={}, cy={})", k.fx, k.fy, k.cx, k.cy)
    }
}

/// Normalized event frame with intensities in `[0, 1]`.
#[pyclass(name = "EventFrame", module = "evpose", skip_from_py_object)]
#[derive(Clone)]
struct PyEventFrame(EventFrame);

#[pymethods]
impl PyEventFrame {
    /// Wraps row-major pixels.
    #[new]
    #[pyo3(signature = (width, height, pixels, timestamp = 0))]
    fn new(width: u32, height: u32, pixels: Vec<f32>, timestamp: u64) -> PyResult<Self> {
        let g = SensorGeometry::new(width, height).map_err(to_py)?;
        Ok(PyEventFrame(
            EventFrame::from_pixels(g, pixels, timestamp).map_err(to_py)?,
        ))
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn timestamp(&self) -> u64 {
        self.0.timestamp
    }

    #[getter]
    fn window_start(&self) -> u64 {
        self.0.window_start
    }

    #[getter]
    fn window_duration(&self) -> u64 {
        self.0.window_duration
    }

    /// Row-major pixel values.
    #[getter]
    fn pixels(&self) -> Vec<f32> {
        self.0.pixels.clone()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<f32> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(PyValueError::new_err(format!("pixel ({x}, {y}) outside the frame")));
        }
        Ok(self.0.get(x, y))
    }

    fn max(&self) -> f32 {
        self.0.max()
    }

    fn save_pgm(&self, path: PathBuf) -> PyResult<()> {
        evio::write_pgm(&path, &self.0).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "EventFrame({}x{}, t={} us)",
            self.0.width(),
            self.0.height(),
            self.0.timestamp
        )
    }
}

/// Per-frame ground truth: pose, projected landmarks, box and degeneracy flag.
#[pyclass(name = "Label", module = "evpose", skip_from_py_object)]
#[derive(Clone)]
struct PyLabel(GroundTruthRecord);

#[pymethods]
impl PyLabel {
    #[getter]
    fn t(&self) -> u64 {
        self.0.t
    }

    #[getter]
    fn pose(&self) -> PyPose {
        PyPose(self.0.pose)
    }

    /// `(u, v, visible)` per landmark; `u, v` are NaN behind the camera.
    #[getter]
    fn landmarks(&self) -> Vec<(f64, f64, bool)> {
        self.0.landmarks.iter().map(|l| (l.uv.x, l.uv.y, l.visible)).collect()
    }

    /// `(x_min, y_min, x_max, y_max)` or `None`.
    #[getter]
    fn bbox(&self) -> Option<(f64, f64, f64, f64)> {
        self.0.bbox.map(|b| (b.x_min, b.y_min, b.x_max, b.y_max))
    }

    #[getter]
    fn degenerate(&self) -> bool {
        self.0.degenerate
    }

    fn __repr__(&self) -> String {
        format!(
            "Label(t={} us, visible={}, degenerate={})",
            self.0.t,
            self.0.visible_count(),
            self.0.degenerate
        )
    }
}

/// A 2D observation of landmark `landmark` with a confidence in `[0, 1]`.
#[pyclass(name = "Correspondence", module = "evpose", skip_from_py_object, frozen)]
#[derive(Clone, Copy)]
struct PyCorrespondence(Correspondence);

#[pymethods]
impl PyCorrespondence {
    #[new]
    #[pyo3(signature = (landmark, u, v, confidence = 1.0))]
    fn new(landmark: usize, u: f64, v: f64, confidence: f64) -> PyResult<Self> {
        Ok(PyCorrespondence(
            Correspondence::new(landmark, Vec2::new(u, v), confidence).map_err(to_py)?,
        ))
    }

    #[getter]
    fn landmark(&self) -> usize {
        self.0.landmark_index
    }

    #[getter]
    fn u(&self) -> f64 {
        self.0.uv.x
    }

    #[getter]
    fn v(&self) -> f64 {
        self.0.uv.y
    }

    #[getter]
    fn confidence(&self) -> f64 {
        self.0.confidence
    }

    fn __repr__(&self) -> String {
        let c = self.0;
        format!(
            "Correspondence({}, u={}, v={}, confidence={})",
            c.landmark_index, c.uv.x, c.uv.y, c.confidence
        )
    }
}

/// Output of pose estimation for one frame.
#[pyclass(name = "PnPResult", module = "evpose", frozen, get_all)]
struct PyPnPResult {
    pose: PyPose,
    inliers: Vec<usize>,
    reprojection_rmse: f64,
    iterations: usize,
    converged: bool,
}

#[pymethods]
impl PyPnPResult {
    fn __repr__(&self) -> String {
        format!(
            "PnPResult(inliers={}, rmse={:.4} px, iterations={}, converged={})",
            self.inliers.len(),
            self.reprojection_rmse,
            self.iterations,
            self.converged
        )
    }
}

/// Simulated sequence: events, ground-truth poses and per-render-frame labels.
#[pyclass(name = "Simulation", module = "evpose", frozen, get_all)]
struct PySimulation {
    events: Vec<EventTuple>,
    ground_truth: Vec<(u64, PyPose)>,
    labels: Vec<PyLabel>,
}

fn corrs(list: Vec<PyRef<'_, PyCorrespondence>>) -> Vec<Correspondence> {
    list.iter().map(|c| c.0).collect()
}

fn policy(initial_threshold: f64, min_count: usize, decay: f64, floor: f64) -> FilterPolicy {
    FilterPolicy {
        initial_threshold,
        min_count,
        decay,
        floor,
    }
}

fn timed(poses: Vec<(u64, PyRef<'_, PyPose>)>) -> Vec<TimedPose> {
    poses.into_iter().map(|(t, p)| TimedPose { t, pose: p.0 }).collect()
}

/// Relative motion `a^-1 * b`.
#[pyfunction]
fn relative_pose(a: &PyPose, b: &PyPose) -> PyPose {
    PyPose(geometry::relative_pose(&a.0, &b.0))
}

/// Angle between two rotations in degrees.
#[pyfunction]
fn rotation_angle(a: &PyPose, b: &PyPose) -> f64 {
    geometry::quaternion_angle(&a.0.rotation, &b.0.rotation)
}

/// Tightest box around `points`, width and height scaled by `1 + clearance` about its centre.
#[pyfunction]
#[pyo3(signature = (points, clearance = 0.1))]
fn bbox_from_landmarks(points: Vec<(f64, f64)>, clearance: f64) -> PyResult<(f64, f64, f64, f64)> {
    let pts: Vec<Vec2> = points.into_iter().map(|(u, v)| Vec2::new(u, v)).collect();
    let b = geometry::bbox_from_landmarks(&pts, clearance).map_err(to_py)?;
    Ok((b.x_min, b.y_min, b.x_max, b.y_max))
}

/// Landmarks of the built-in satellite model, object frame, meters.
#[pyfunction]
fn satellite_landmarks() -> Vec<(f64, f64, f64)> {
    WireframeModel::satellite().landmarks().iter().map(t3).collect()
}

/// Labels of the satellite model seen from each `(t_us, pose)`.
#[pyfunction]
fn make_labels(
    poses: Vec<(u64, PyRef<'_, PyPose>)>,
    intrinsics: &PyIntrinsics,
    width: u32,
    height: u32,
) -> PyResult<Vec<PyLabel>> {
    let g = SensorGeometry::new(width, height).map_err(to_py)?;
    let records = make_ground_truth(&WireframeModel::satellite(), &timed(poses), &intrinsics.0, g).map_err(to_py)?;
    Ok(records.into_iter().map(PyLabel).collect())
}

/// Splits events into windows of `tau_us` and renders each as a normalized frame.
#[pyfunction]
fn events_to_frames(
    py: Python<'_>,
    events: Vec<EventTuple>,
    width: u32,
    height: u32,
    tau_us: u64,
) -> PyResult<Vec<PyEventFrame>> {
    let events = events_from_py(events)?;
    let g = SensorGeometry::new(width, height).map_err(to_py)?;
    let frames = py
        .detach(|| pipeline::frames_from_events(&events, g, tau_us))
        .map_err(to_py)?;
    Ok(frames.into_iter().map(PyEventFrame).collect())
}

/// Renders the satellite model along an orbit or approach and converts the
/// renders to events.
#[pyfunction]
#[pyo3(signature = (
    motion = "orbit", speed = 0.3, duration = 2.0, intrinsics = None, width = 640, height = 480,
    radius = 1.0, start_offset = (1.5, 0.0, 0.2), frame_rate = 100.0, pose_rate = 10.0,
    contrast_threshold = 0.2, resolution_us = 10_000
))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    motion: &str,
    speed: f64,
    duration: f64,
    intrinsics: Option<PyRef<'_, PyIntrinsics>>,
    width: u32,
    height: u32,
    radius: f64,
    start_offset: (f64, f64, f64),
    frame_rate: f64,
    pose_rate: f64,
    contrast_threshold: f64,
    resolution_us: u64,
) -> PyResult<PySimulation> {
    let mut spec = match motion {
        "orbit" => TrajectorySpec::orbit(speed, duration, radius),
        "approach" => TrajectorySpec::approach(speed, duration, v3(start_offset)),
        other => {
            return Err(PyValueError::new_err(format!(
                "motion {other:?} is not orbit or approach"
            )))
        }
    };
    spec.frame_rate = frame_rate;
    spec.pose_rate = pose_rate;
    let k = match intrinsics {
        Some(k) => k.0,
        None => CameraIntrinsics::new(500.0, 500.0, width as f64 / 2.0, height as f64 / 2.0).map_err(to_py)?,
    };
    let g = SensorGeometry::new(width, height).map_err(to_py)?;
    let settings = SimulationSettings {
        contrast_threshold,
        timestamp_resolution: resolution_us,
    };
    let mut events = Vec::new();
    let out = py
        .detach(|| {
            pipeline::simulate(&spec, &WireframeModel::satellite(), &k, g, &settings, |chunk| {
                events.extend_from_slice(chunk);
                Ok(())
            })
        })
        .map_err(to_py)?;
    Ok(PySimulation {
        events: events_to_py(&events),
        ground_truth: out.ground_truth.iter().map(|tp| (tp.t, PyPose(tp.pose))).collect(),
        labels: out.frame_labels.into_iter().map(PyLabel).collect(),
    })
}

/// Rigid motion, noise and line augmentation of a frame and its label.
#[pyfunction]
#[pyo3(signature = (
    frame, label, seed = 0, noise_density = 0.02, noise_range = (0.1, 1.0), line_count_range = (1, 4),
    line_intensity = 0.8, rotation_deg = 15.0, translation_px = 20.0
))]
#[allow(clippy::too_many_arguments)]
fn augment(
    frame: &PyEventFrame,
    label: &PyLabel,
    seed: u64,
    noise_density: f64,
    noise_range: (f32, f32),
    line_count_range: (u32, u32),
    line_intensity: f32,
    rotation_deg: f64,
    translation_px: f64,
) -> PyResult<(PyEventFrame, PyLabel)> {
    let cfg = AugmentConfig {
        noise_density,
        noise_intensity_range: noise_range,
        line_count_range,
        line_intensity,
        rotation_range: rotation_deg,
        translation_range: translation_px,
        seed,
    };
    cfg.validate().map_err(to_py)?;
    let (f, l) = augment_sample(&frame.0, &label.0, &cfg, &mut cfg.rng());
    Ok((PyEventFrame(f), PyLabel(l)))
}

/// Noisy correspondences for the visible landmarks of `label`.
#[pyfunction]
#[pyo3(signature = (label, sigma = 0.5, outlier_rate = 0.0, outlier_spread = 50.0, confidence_floor = 1.0, seed = 0))]
fn predict_correspondences(
    label: &PyLabel,
    sigma: f64,
    outlier_rate: f64,
    outlier_spread: f64,
    confidence_floor: f64,
    seed: u64,
) -> PyResult<Vec<PyCorrespondence>> {
    let cfg = OracleConfig {
        pixel_noise_sigma: sigma,
        outlier_rate,
        outlier_spread,
        confidence_sigma_floor: confidence_floor,
        seed,
    };
    let pred = predict_landmarks(&label.0, &cfg, &mut cfg.rng()).map_err(to_py)?;
    Ok(pred.correspondences.into_iter().map(PyCorrespondence).collect())
}

/// Indices kept by the decaying confidence threshold, and the final threshold.
#[pyfunction]
#[pyo3(signature = (correspondences, initial_threshold = 0.95, min_count = 15, decay = 0.8, floor = 0.0))]
fn filter_correspondences(
    correspondences: Vec<PyRef<'_, PyCorrespondence>>,
    initial_threshold: f64,
    min_count: usize,
    decay: f64,
    floor: f64,
) -> PyResult<(Vec<usize>, f64)> {
    let out = pnp::filter_correspondences(
        &corrs(correspondences),
        &policy(initial_threshold, min_count, decay, floor),
    )
    .map_err(to_py)?;
    Ok((out.indices, out.threshold))
}

/// Filters, solves linearly and refines the pose from 2D-3D correspondences.
#[pyfunction]
#[pyo3(signature = (correspondences, landmarks, intrinsics, initial_threshold = 0.95, min_count = 15, decay = 0.8, floor = 0.0))]
fn estimate_pose(
    correspondences: Vec<PyRef<'_, PyCorrespondence>>,
    landmarks: Vec<(f64, f64, f64)>,
    intrinsics: &PyIntrinsics,
    initial_threshold: f64,
    min_count: usize,
    decay: f64,
    floor: f64,
) -> PyResult<PyPnPResult> {
    let set = geometry::LandmarkSet::new(landmarks.into_iter().map(v3).collect());
    let r = pnp::estimate_pose(
        &corrs(correspondences),
        &set,
        &intrinsics.0,
        &policy(initial_threshold, min_count, decay, floor),
    )
    .map_err(to_py)?;
    Ok(PyPnPResult {
        pose: PyPose(r.pose),
        inliers: r.inlier_indices,
        reprojection_rmse: r.reprojection_rmse,
        iterations: r.iterations,
        converged: r.converged,
    })
}

type SequenceErrors = (f64, f64, Vec<(u64, f64, f64)>);

/// Relative-transform errors of an estimated track: `(Phi [m], Psi [deg], per-step (t, phi, psi))`.
#[pyfunction]
fn evaluate(
    estimated: Vec<(u64, PyRef<'_, PyPose>)>,
    ground_truth: Vec<(u64, PyRef<'_, PyPose>)>,
) -> PyResult<SequenceErrors> {
    let errs = metrics::evaluate(&timed(ground_truth), &timed(estimated)).map_err(to_py)?;
    let steps = errs.per_step.iter().map(|s| (s.t, s.phi, s.psi)).collect();
    Ok((errs.phi, errs.psi, steps))
}

fn format_arg(path: &std::path::Path, format: Option<&str>) -> PyResult<EventFormat> {
    match format {
        None => Ok(EventFormat::from_path(path)),
        Some(f) => f.parse().map_err(to_py),
    }
}

/// Reads an event file; the format follows the extension unless given.
#[pyfunction]
#[pyo3(signature = (path, format = None))]
fn read_events(path: PathBuf, format: Option<&str>) -> PyResult<Vec<EventTuple>> {
    let fmt = format_arg(&path, format)?;
    let mut reader = evio::EventReader::open(&path, fmt).map_err(to_py)?;
    let mut out = Vec::new();
    while reader.read_chunk(&mut out, 1 << 16).map_err(to_py)? > 0 {}
    Ok(events_to_py(&out))
}

#[pyfunction]
#[pyo3(signature = (path, events, format = None))]
fn write_events(path: PathBuf, events: Vec<EventTuple>, format: Option<&str>) -> PyResult<()> {
    let fmt = format_arg(&path, format)?;
    evio::write_events(&path, &events_from_py(events)?, fmt).map_err(to_py)
}

#[pymodule]
fn evpose(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPose>()?;
    m.add_class::<PyIntrinsics>()?;
    m.add_class::<PyEventFrame>()?;
    m.add_class::<PyLabel>()?;
    m.add_class::<PyCorrespondence>()?;
    m.add_class::<PyPnPResult>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(relative_pose, m)?)?;
    m.add_function(wrap_pyfunction!(rotation_angle, m)?)?;
    m.add_function(wrap_pyfunction!(bbox_from_landmarks, m)?)?;
    m.add_function(wrap_pyfunction!(satellite_landmarks, m)?)?;
    m.add_function(wrap_pyfunction!(make_labels, m)?)?;
    m.add_function(wrap_pyfunction!(events_to_frames, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(augment, m)?)?;
    m.add_function(wrap_pyfunction!(predict_correspondences, m)?)?;
    m.add_function(wrap_pyfunction!(filter_correspondences, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_pose, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(read_events, m)?)?;
    m.add_function(wrap_pyfunction!(write_events, m)?)?;
    Ok(())
}
