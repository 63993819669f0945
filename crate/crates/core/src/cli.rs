//! `evpose` command line.
//!
//! Exit codes: 0 success, 1 usage or invalid input, 2 I/O failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::{augment_sample, AugmentConfig};
use crate::error::{Error, Result};
use crate::event_model::{EventFrame, SensorGeometry, StreamingE2f};
use crate::event_sim::{
    TrajectorySpec, WireframeModel, APPROACH_FAST_SPEED, APPROACH_SLOW_SPEED, ORBIT_FAST_SPEED, ORBIT_SLOW_SPEED,
    TRAINING_TAUS_US,
};
use crate::geometry::{CameraIntrinsics, Vec3};
use crate::io::{self, Config, DatasetManifest, EventFormat, EventReader, FrameWriter};
use crate::landmark_oracle::OracleConfig;
use crate::metrics::evaluate;
use crate::pipeline::{estimate_track, nearest_labels, simulate, SimulationSettings};
use crate::pnp::{estimate_pose_with, FilterPolicy, PnpConfig, RefineOptions, Weighting};

const CONFIG_KEYS: [&str; 25] = [
    "seed",
    "camera.width",
    "camera.height",
    "camera.fx",
    "camera.fy",
    "camera.cx",
    "camera.cy",
    "simulate.contrast_threshold",
    "simulate.resolution",
    "augment.noise_density",
    "augment.noise_min",
    "augment.noise_max",
    "augment.lines_min",
    "augment.lines_max",
    "augment.line_intensity",
    "augment.rotation_deg",
    "augment.translation_px",
    "oracle.sigma",
    "oracle.outlier_rate",
    "oracle.outlier_spread",
    "oracle.confidence_floor",
    "filter.initial_threshold",
    "filter.min_count",
    "filter.decay",
    "filter.floor",
];
const REFINE_KEYS: [&str; 3] = ["refine.max_iters", "refine.tol", "refine.weighting"];

/// Events read per chunk when streaming files.
const CHUNK: usize = 1 << 20;

#[derive(Parser, Debug)]
#[command(name = "evpose", version, about = "Event-camera pose estimation toolkit")]
struct Cli {
    /// TOML configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a wireframe target sequence: events, poses, labels, landmarks.
    Simulate(SimulateArgs),
    /// Turn an event file into normalized event frames (PGM + index.csv).
    E2f(E2fArgs),
    /// Augment labelled event frames.
    Augment(AugmentArgs),
    /// Estimate poses from correspondences or from oracle predictions.
    Estimate(EstimateArgs),
    /// Relative-pose errors of an estimated track against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Motion {
    Approach,
    Orbit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Pace {
    Slow,
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Binary,
}

impl From<FormatArg> for EventFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => EventFormat::Csv,
            FormatArg::Binary => EventFormat::Binary,
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    /// Trajectory kind.
    #[arg(long, visible_alias = "motion", value_enum, default_value = "orbit")]
    kind: Motion,
    #[arg(long, value_enum, default_value = "fast")]
    pace: Pace,
    /// m/s; defaults to the speed of the chosen motion and pace.
    #[arg(long)]
    speed: Option<f64>,
    /// Seconds.
    #[arg(long, default_value_t = 2.0)]
    duration: f64,
    /// Orbit radius, m.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Approach start position relative to the target, "x,y,z" in m.
    #[arg(long, default_value = "1.5,0,0.2")]
    start_offset: String,
    #[arg(long, default_value_t = 100.0)]
    frame_rate: f64,
    #[arg(long, default_value_t = 10.0)]
    pose_rate: f64,
    #[arg(long)]
    contrast_threshold: Option<f64>,
    /// Event timestamp resolution, e.g. "10ms".
    #[arg(long)]
    resolution: Option<String>,
    #[arg(long, value_enum, default_value = "binary")]
    format: FormatArg,
    /// Sequence name recorded in the manifest.
    #[arg(long)]
    name: Option<String>,
    /// Comma-separated frame windows to render, e.g. "200ms,10ms", or "none".
    #[arg(long)]
    taus: Option<String>,
}

#[derive(Args, Debug)]
struct E2fArgs {
    /// Dataset manifest providing the event file, sensor size and name.
    #[arg(long, conflicts_with = "events")]
    manifest: Option<PathBuf>,
    #[arg(long, requires_all = ["width", "height"])]
    events: Option<PathBuf>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Window length, e.g. "50ms" or "0.2s"; defaults by sequence name.
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    /// Directory of event frames with index.csv.
    #[arg(long)]
    frames: PathBuf,
    /// Ground-truth label file; each frame takes the record closest in time.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Dataset manifest providing intrinsics, landmarks and labels.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    landmarks: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Observed correspondences (t_us,landmark,u,v,confidence).
    #[arg(long, conflicts_with = "oracle")]
    correspondences: Option<PathBuf>,
    /// Simulate predictions from the labels, e.g. "sigma=0.5,outlier_rate=0.1".
    #[arg(long)]
    oracle: Option<String>,
    /// Estimate at these frames' timestamps instead of at every label.
    #[arg(long)]
    frames: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    estimated: PathBuf,
    #[arg(long)]
    ground_truth: PathBuf,
    /// Per-step errors (t_us,phi_m,psi_deg).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Runs the command line on `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // Usage errors go through `eprint!` so test harnesses capture them.
            if e.use_stderr() {
                eprint!("{}", e.render());
                return 1;
            }
            let _ = e.print();
            return 0;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("evpose: {e}");
            match e {
                Error::Io { .. } => 2,
                _ => 1,
            }
        }
    }
}

struct Context {
    config: Config,
    seed: u64,
}

fn dispatch(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let known: Vec<&str> = CONFIG_KEYS.iter().chain(&REFINE_KEYS).copied().collect();
    config.check_known(&known)?;
    let seed = match cli.seed {
        Some(s) => s,
        None => config.get_or("seed", 0u64)?,
    };
    let ctx = Context { config, seed };
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::E2f(a) => cmd_e2f(a),
        Command::Augment(a) => cmd_augment(&ctx, a),
        Command::Estimate(a) => cmd_estimate(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn camera(cfg: &Config) -> Result<(SensorGeometry, CameraIntrinsics)> {
    let geometry = SensorGeometry::new(cfg.get_or("camera.width", 640)?, cfg.get_or("camera.height", 480)?)?;
    let k = CameraIntrinsics::new(
        cfg.get_or("camera.fx", 500.0)?,
        cfg.get_or("camera.fy", 500.0)?,
        cfg.get_or("camera.cx", geometry.width as f64 / 2.0)?,
        cfg.get_or("camera.cy", geometry.height as f64 / 2.0)?,
    )?;
    Ok((geometry, k))
}

fn parse_vec3(s: &str) -> Result<Vec3> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parameter(format!("bad vector {s:?}, expected x,y,z")))?;
    match parts[..] {
        [x, y, z] => Ok(Vec3::new(x, y, z)),
        _ => Err(Error::Parameter(format!("bad vector {s:?}, expected x,y,z"))),
    }
}

fn parse_taus(s: &str) -> Result<Vec<u64>> {
    if s.trim() == "none" {
        return Ok(Vec::new());
    }
    s.split(',').map(io::parse_duration_us).collect()
}

fn cmd_simulate(ctx: &Context, a: SimulateArgs) -> Result<()> {
    let cfg = &ctx.config;
    let (geometry, k) = camera(cfg)?;
    let speed = a.speed.unwrap_or(match (a.kind, a.pace) {
        (Motion::Approach, Pace::Slow) => APPROACH_SLOW_SPEED,
        (Motion::Approach, Pace::Fast) => APPROACH_FAST_SPEED,
        (Motion::Orbit, Pace::Slow) => ORBIT_SLOW_SPEED,
        (Motion::Orbit, Pace::Fast) => ORBIT_FAST_SPEED,
    });
    let mut spec = match a.kind {
        Motion::Approach => TrajectorySpec::approach(speed, a.duration, parse_vec3(&a.start_offset)?),
        Motion::Orbit => TrajectorySpec::orbit(speed, a.duration, a.radius),
    };
    spec.frame_rate = a.frame_rate;
    spec.pose_rate = a.pose_rate;
    let settings = SimulationSettings {
        contrast_threshold: match a.contrast_threshold {
            Some(c) => c,
            None => cfg.get_or(
                "simulate.contrast_threshold",
                crate::event_sim::DEFAULT_CONTRAST_THRESHOLD,
            )?,
        },
        timestamp_resolution: match a.resolution.or(cfg.raw("simulate.resolution").map(String::from)) {
            Some(r) => io::parse_duration_us(&r)?,
            None => crate::event_sim::DEFAULT_TIMESTAMP_RESOLUTION_US,
        },
    };
    let taus = match &a.taus {
        Some(s) => parse_taus(s)?,
        None => TRAINING_TAUS_US.to_vec(),
    };
    let format: EventFormat = a.format.into();
    let motion = match a.kind {
        Motion::Approach => "approach",
        Motion::Orbit => "orbit",
    };
    let pace = match a.pace {
        Pace::Slow => "slow",
        Pace::Fast => "fast",
    };
    let name = a.name.unwrap_or_else(|| format!("{motion}-{pace}-sim"));

    create_dir(&a.out)?;
    let events_path = a.out.join(match format {
        EventFormat::Csv => "events.csv",
        EventFormat::Binary => "events.bin",
    });
    let model = WireframeModel::satellite();
    // Events go straight to disk; the file is renamed into place once complete.
    let tmp = a.out.join(".events.partial");
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::new();
    io::write_events_to(&mut header, &[], format).map_err(|e| Error::io(&tmp, e))?;
    w.write_all(&header).map_err(|e| Error::io(&tmp, e))?;
    let out = simulate(&spec, &model, &k, geometry, &settings, |chunk| {
        let mut bytes = Vec::new();
        io::write_events_to(&mut bytes, chunk, format).map_err(|e| Error::io(&tmp, e))?;
        w.write_all(&bytes[header.len()..]).map_err(|e| Error::io(&tmp, e))
    });
    let out = match out.and_then(|o| w.flush().map(|_| o).map_err(|e| Error::io(&tmp, e))) {
        Ok(o) => o,
        Err(e) => {
            drop(w);
            let _ = std::fs::remove_file(&tmp);
            return Err(e);
        }
    };
    drop(w);
    std::fs::rename(&tmp, &events_path).map_err(|e| Error::io(&events_path, e))?;

    let poses = a.out.join("poses.csv");
    let labels = a.out.join("labels.csv");
    let landmarks = a.out.join("landmarks.csv");
    io::write_poses(&poses, &out.ground_truth)?;
    io::write_ground_truth(&labels, &out.frame_labels)?;
    io::write_landmarks(&landmarks, &model.landmark_set())?;
    let manifest = DatasetManifest {
        name,
        events: events_path.clone(),
        poses,
        labels: Some(labels),
        landmarks: Some(landmarks),
        geometry,
        intrinsics: k,
    };
    manifest.write(&a.out.join("manifest.toml"))?;
    for &tau in &taus {
        let dir = a.out.join("frames").join(format!("tau_{tau}us"));
        let n = stream_e2f(&events_path, format, geometry, tau, &dir)?;
        println!("tau {tau} us: {n} frames in {}", dir.display());
    }
    println!(
        "{} events, {} ground-truth poses written to {}",
        out.event_count,
        out.ground_truth.len(),
        a.out.display()
    );
    Ok(())
}

/// Streams an event file through E2F into a frame directory; returns the frame count.
fn stream_e2f(events: &Path, format: EventFormat, geometry: SensorGeometry, tau: u64, out: &Path) -> Result<usize> {
    let mut reader = EventReader::open(events, format)?;
    let mut e2f = StreamingE2f::new(geometry, tau)?;
    let mut writer = FrameWriter::create(out)?;
    let mut failure: Option<Error> = None;
    let mut sink = |f: EventFrame| {
        if failure.is_none() {
            if let Err(e) = writer.push(&f) {
                failure = Some(e);
            }
        }
    };
    let mut chunk = Vec::with_capacity(CHUNK);
    loop {
        chunk.clear();
        if reader.read_chunk(&mut chunk, CHUNK)? == 0 {
            break;
        }
        e2f.push(&chunk, &mut sink)?;
    }
    e2f.finish(&mut sink);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(writer.finish()?.len())
}

fn cmd_e2f(a: E2fArgs) -> Result<()> {
    let (events, geometry, default_tau) = match (&a.manifest, &a.events) {
        (Some(m), _) => {
            let m = DatasetManifest::load(m)?;
            let tau = m.default_tau_us();
            (m.events, m.geometry, tau)
        }
        (None, Some(e)) => {
            let g = SensorGeometry::new(a.width.unwrap_or(0), a.height.unwrap_or(0))?;
            (e.clone(), g, None)
        }
        (None, None) => return Err(Error::Parameter("either --manifest or --events is required".into())),
    };
    let tau = match (&a.tau, default_tau) {
        (Some(t), _) => io::parse_duration_us(t)?,
        (None, Some(t)) => t,
        (None, None) => {
            return Err(Error::Parameter(
                "--tau is required unless the manifest names a known scenario".into(),
            ))
        }
    };
    let format = a
        .format
        .map(EventFormat::from)
        .unwrap_or_else(|| EventFormat::from_path(&events));
    let n = stream_e2f(&events, format, geometry, tau, &a.out)?;
    println!("{n} frames at tau {tau} us written to {}", a.out.display());
    Ok(())
}

fn augment_config(cfg: &Config, seed: u64) -> Result<AugmentConfig> {
    let d = AugmentConfig::default();
    let c = AugmentConfig {
        noise_density: cfg.get_or("augment.noise_density", d.noise_density)?,
        noise_intensity_range: (
            cfg.get_or("augment.noise_min", d.noise_intensity_range.0)?,
            cfg.get_or("augment.noise_max", d.noise_intensity_range.1)?,
        ),
        line_count_range: (
            cfg.get_or("augment.lines_min", d.line_count_range.0)?,
            cfg.get_or("augment.lines_max", d.line_count_range.1)?,
        ),
        line_intensity: cfg.get_or("augment.line_intensity", d.line_intensity)?,
        rotation_range: cfg.get_or("augment.rotation_deg", d.rotation_range)?,
        translation_range: cfg.get_or("augment.translation_px", d.translation_range)?,
        seed,
    };
    c.validate()?;
    Ok(c)
}

fn cmd_augment(ctx: &Context, a: AugmentArgs) -> Result<()> {
    let cfg = augment_config(&ctx.config, ctx.seed)?;
    let frames = io::read_frames(&a.frames)?;
    let records = io::read_ground_truth(&a.labels)?;
    let times: Vec<u64> = frames.iter().map(|f| f.timestamp).collect();
    let labels = nearest_labels(&times, &records)?;
    let mut rng = cfg.rng();
    let mut writer = FrameWriter::create(&a.out)?;
    let mut out_labels = Vec::with_capacity(frames.len());
    for (frame, record) in frames.iter().zip(labels) {
        let (f, mut l) = augment_sample(frame, record, &cfg, &mut rng);
        l.t = f.timestamp;
        writer.push(&f)?;
        out_labels.push(l);
    }
    let n = writer.finish()?.len();
    io::write_ground_truth(&a.out.join("labels.csv"), &out_labels)?;
    println!("{n} augmented frames written to {}", a.out.display());
    Ok(())
}

/// Applies "key=value,..." overrides to an oracle configuration.
fn apply_oracle_spec(mut o: OracleConfig, spec: &str) -> Result<OracleConfig> {
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::Parameter(format!("oracle option {item:?} is not key=value")))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Parameter(format!("oracle option {key} has bad value {value:?}")))?;
        match key.trim() {
            "sigma" => o.pixel_noise_sigma = v,
            "outlier_rate" => o.outlier_rate = v,
            "spread" | "outlier_spread" => o.outlier_spread = v,
            "floor" | "confidence_floor" => o.confidence_sigma_floor = v,
            other => return Err(Error::Parameter(format!("unknown oracle option {other:?}"))),
        }
    }
    o.validate()?;
    Ok(o)
}

fn pnp_config(cfg: &Config) -> Result<PnpConfig> {
    let p = FilterPolicy::default();
    let policy = FilterPolicy {
        initial_threshold: cfg.get_or("filter.initial_threshold", p.initial_threshold)?,
        min_count: cfg.get_or("filter.min_count", p.min_count)?,
        decay: cfg.get_or("filter.decay", p.decay)?,
        floor: cfg.get_or("filter.floor", p.floor)?,
    };
    policy.validate()?;
    let r = RefineOptions::default();
    let weighting = match cfg.raw("refine.weighting") {
        None | Some("confidence") => Weighting::Confidence,
        Some("uniform") => Weighting::Uniform,
        Some(other) => return Err(Error::Parameter(format!("unknown weighting {other:?}"))),
    };
    Ok(PnpConfig {
        policy,
        refine: RefineOptions {
            max_iters: cfg.get_or("refine.max_iters", r.max_iters)?,
            tol: cfg.get_or("refine.tol", r.tol)?,
            weighting,
        },
        ..PnpConfig::default()
    })
}

fn cmd_estimate(ctx: &Context, a: EstimateArgs) -> Result<()> {
    let cfg = &ctx.config;
    let manifest = a.manifest.as_deref().map(DatasetManifest::load).transpose()?;
    let k = match &manifest {
        Some(m) => m.intrinsics,
        None => camera(cfg)?.1,
    };
    let landmarks_path = a
        .landmarks
        .or_else(|| manifest.as_ref().and_then(|m| m.landmarks.clone()))
        .ok_or_else(|| Error::Parameter("no landmark file (--landmarks or manifest)".into()))?;
    let landmarks = io::read_landmarks(&landmarks_path)?;
    let pnp = pnp_config(cfg)?;

    let (poses, skipped) = if let Some(path) = &a.correspondences {
        let mut poses = Vec::new();
        let mut skipped = Vec::new();
        for f in io::read_correspondences(path)? {
            match estimate_pose_with(&f.correspondences, &landmarks, &k, &pnp) {
                Ok(r) => poses.push(crate::event_sim::TimedPose { t: f.t, pose: r.pose }),
                Err(e @ (Error::Degenerate(_) | Error::Cheirality { .. } | Error::Numerical(_))) => {
                    skipped.push((f.t, e.to_string()))
                }
                Err(e) => return Err(e),
            }
        }
        (poses, skipped)
    } else {
        let labels_path = a
            .labels
            .or_else(|| manifest.as_ref().and_then(|m| m.labels.clone()))
            .ok_or_else(|| Error::Parameter("no label file (--labels or manifest) for the oracle".into()))?;
        let records = io::read_ground_truth(&labels_path)?;
        let base = OracleConfig {
            pixel_noise_sigma: cfg.get_or("oracle.sigma", 0.5)?,
            outlier_rate: cfg.get_or("oracle.outlier_rate", 0.0)?,
            outlier_spread: cfg.get_or("oracle.outlier_spread", 50.0)?,
            confidence_sigma_floor: cfg.get_or("oracle.confidence_floor", 1.0)?,
            seed: ctx.seed,
        };
        let oracle = apply_oracle_spec(base, a.oracle.as_deref().unwrap_or(""))?;
        let times: Vec<u64> = match &a.frames {
            Some(dir) => io::read_frame_index(dir)?.iter().map(|e| e.timestamp).collect(),
            None => records.iter().map(|r| r.t).collect(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(oracle.seed);
        let track = estimate_track(&times, &records, &landmarks, &k, &oracle, &pnp, &mut rng)?;
        (track.poses, track.skipped)
    };
    for (t, why) in &skipped {
        eprintln!("evpose: skipped t={t} us: {why}");
    }
    io::write_poses(&a.out, &poses)?;
    println!(
        "{} poses written to {} ({} skipped)",
        poses.len(),
        a.out.display(),
        skipped.len()
    );
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let est = io::read_poses(&a.estimated)?;
    let gt = io::read_poses(&a.ground_truth)?;
    let errs = evaluate(&gt, &est)?;
    if let Some(path) = &a.out {
        io::write_atomic(path, |w| {
            writeln!(w, "t_us,phi_m,psi_deg")?;
            for s in &errs.per_step {
                writeln!(w, "{},{},{}", s.t, s.phi, s.psi)?;
            }
            Ok(())
        })?;
    }
    println!("Phi={:.6},Psi={:.6}", errs.phi, errs.psi);
    Ok(())
}
