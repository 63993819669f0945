//! Event-frame augmentations: background-activity noise, spurious edge lines,
//! and random in-plane rigid motion applied jointly to frames and labels.
//!
//! Every function takes the random source explicitly; seeding it from
//! [`AugmentConfig::rng`] makes a run reproducible bit for bit.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::event_model::EventFrame;
use crate::event_sim::GroundTruthRecord;
use crate::geometry::Vec2;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Fraction of pixels overwritten with noise.
    pub noise_density: f64,
    pub noise_intensity_range: (f32, f32),
    /// Inclusive range for the number of lines drawn.
    pub line_count_range: (u32, u32),
    pub line_intensity: f32,
    /// Maximum absolute rotation, degrees.
    pub rotation_range: f64,
    /// Maximum absolute shift per axis, pixels.
    pub translation_range: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            noise_density: 0.02,
            noise_intensity_range: (0.1, 1.0),
            line_count_range: (1, 4),
            line_intensity: 0.8,
            rotation_range: 15.0,
            translation_range: 20.0,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// A configuration that leaves frames and labels untouched.
    pub fn identity() -> Self {
        AugmentConfig {
            noise_density: 0.0,
            noise_intensity_range: (0.0, 0.0),
            line_count_range: (0, 0),
            line_intensity: 0.0,
            rotation_range: 0.0,
            translation_range: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let (lo, hi) = self.noise_intensity_range;
        let (cmin, cmax) = self.line_count_range;
        if !unit(self.noise_density) {
            return Err(Error::Parameter(format!(
                "noise density {} outside [0, 1]",
                self.noise_density
            )));
        }
        if !(unit(lo as f64) && unit(hi as f64) && lo <= hi) {
            return Err(Error::Parameter(format!(
                "noise intensity range [{lo}, {hi}] is not an ordered subset of [0, 1]"
            )));
        }
        if cmin > cmax {
            return Err(Error::Parameter(format!(
                "line count range [{cmin}, {cmax}] is reversed"
            )));
        }
        if !unit(self.line_intensity as f64) {
            return Err(Error::Parameter(format!(
                "line intensity {} outside [0, 1]",
                self.line_intensity
            )));
        }
        if !(self.rotation_range >= 0.0 && self.translation_range >= 0.0) {
            return Err(Error::Parameter(
                "rotation and translation ranges must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn symmetric(rng: &mut impl Rng, range: f64) -> f64 {
    if range > 0.0 {
        rng.random_range(-range..=range)
    } else {
        0.0
    }
}

/// Overwrites `round(density * M * N)` distinct, uniformly chosen pixels with
/// intensities drawn uniformly from the noise range.
pub fn random_event_noise(frame: &EventFrame, cfg: &AugmentConfig, rng: &mut impl Rng) -> EventFrame {
    let mut out = frame.clone();
    let n = out.pixels.len();
    let count = ((cfg.noise_density * n as f64).round() as usize).min(n);
    if count == 0 {
        return out;
    }
    let (lo, hi) = cfg.noise_intensity_range;
    for i in index::sample(rng, n, count) {
        out.pixels[i] = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    }
    out
}

/// Draws a uniform number of straight segments between random points on the
/// frame border.
pub fn random_event_lines(frame: &EventFrame, cfg: &AugmentConfig, rng: &mut impl Rng) -> EventFrame {
    let mut out = frame.clone();
    let (cmin, cmax) = cfg.line_count_range;
    let count = if cmax > cmin {
        rng.random_range(cmin..=cmax)
    } else {
        cmin
    };
    let (w, h) = (out.width(), out.height());
    for _ in 0..count {
        let a = border_point(rng, w, h);
        let b = border_point(rng, w, h);
        draw_line(&mut out, a, b, cfg.line_intensity);
    }
    out
}

fn border_point(rng: &mut impl Rng, w: usize, h: usize) -> (i64, i64) {
    let (w, h) = (w as i64, h as i64);
    if w == 1 || h == 1 {
        return (rng.random_range(0..w), rng.random_range(0..h));
    }
    let perimeter = 2 * (w - 1) + 2 * (h - 1);
    let s = rng.random_range(0..perimeter);
    if s < w - 1 {
        (s, 0)
    } else if s < w - 1 + h - 1 {
        (w - 1, s - (w - 1))
    } else if s < 2 * (w - 1) + h - 1 {
        (w - 1 - (s - (w - 1 + h - 1)), h - 1)
    } else {
        (0, h - 1 - (s - (2 * (w - 1) + h - 1)))
    }
}

/// Bresenham segment from `a` to `b` (pixel `(x, y)`), pixels set to `intensity`.
pub fn draw_line(frame: &mut EventFrame, a: (i64, i64), b: (i64, i64), intensity: f32) {
    let (w, h) = (frame.width() as i64, frame.height() as i64);
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if x >= 0 && y >= 0 && x < w && y < h {
            frame.set(x as usize, y as usize, intensity);
        }
        if x == b.0 && y == b.1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// In-plane rigid map `p' = R(theta) (p - c) + c + shift` in pixel coordinates
/// (x right, y down).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMap2d {
    /// Radians.
    pub angle: f64,
    pub center: Vec2,
    pub shift: Vec2,
}

impl RigidMap2d {
    pub fn identity(center: Vec2) -> Self {
        RigidMap2d {
            angle: 0.0,
            center,
            shift: Vec2::zeros(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.angle == 0.0 && self.shift == Vec2::zeros()
    }

    pub fn apply(&self, p: &Vec2) -> Vec2 {
        let (s, c) = self.angle.sin_cos();
        let d = p - self.center;
        Vec2::new(c * d.x - s * d.y, s * d.x + c * d.y) + self.center + self.shift
    }

    pub fn apply_inverse(&self, p: &Vec2) -> Vec2 {
        let (s, c) = self.angle.sin_cos();
        let d = p - self.center - self.shift;
        Vec2::new(c * d.x + s * d.y, -s * d.x + c * d.y) + self.center
    }
}

/// Draws a rotation and shift from the configured ranges, about the image centre.
pub fn sample_rigid_map(frame: &EventFrame, cfg: &AugmentConfig, rng: &mut impl Rng) -> RigidMap2d {
    let center = Vec2::new((frame.width() as f64 - 1.0) / 2.0, (frame.height() as f64 - 1.0) / 2.0);
    let angle = symmetric(rng, cfg.rotation_range).to_radians();
    let shift = Vec2::new(
        symmetric(rng, cfg.translation_range),
        symmetric(rng, cfg.translation_range),
    );
    RigidMap2d { angle, center, shift }
}

/// Warps the frame (bilinear, zero fill) and moves the labels with the same map.
///
/// Landmarks that leave the image become invisible; the box is rebuilt from
/// the landmarks that remain visible.
pub fn apply_rigid_map(
    frame: &EventFrame,
    labels: &GroundTruthRecord,
    map: &RigidMap2d,
) -> (EventFrame, GroundTruthRecord) {
    if map.is_identity() {
        return (frame.clone(), labels.clone());
    }
    let (w, h) = (frame.width(), frame.height());
    let mut out = frame.clone();
    for y in 0..h {
        for x in 0..w {
            let src = map.apply_inverse(&Vec2::new(x as f64, y as f64));
            out.pixels[y * w + x] = bilinear(frame, src.x, src.y);
        }
    }
    let mut moved = labels.clone();
    for l in &mut moved.landmarks {
        l.uv = map.apply(&l.uv);
        l.visible = l.visible && l.uv.x >= 0.0 && l.uv.y >= 0.0 && l.uv.x < w as f64 && l.uv.y < h as f64;
    }
    moved.refresh_derived();
    (out, moved)
}

fn bilinear(frame: &EventFrame, x: f64, y: f64) -> f32 {
    let (w, h) = (frame.width() as i64, frame.height() as i64);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let at = |xi: i64, yi: i64| -> f64 {
        if xi < 0 || yi < 0 || xi >= w || yi >= h {
            0.0
        } else {
            frame.get(xi as usize, yi as usize) as f64
        }
    };
    let v = (1.0 - fx) * (1.0 - fy) * at(x0, y0)
        + fx * (1.0 - fy) * at(x0 + 1, y0)
        + (1.0 - fx) * fy * at(x0, y0 + 1)
        + fx * fy * at(x0 + 1, y0 + 1);
    v.clamp(0.0, 1.0) as f32
}

pub fn random_rigid_augment(
    frame: &EventFrame,
    labels: &GroundTruthRecord,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> (EventFrame, GroundTruthRecord) {
    let map = sample_rigid_map(frame, cfg, rng);
    apply_rigid_map(frame, labels, &map)
}

/// Rigid motion, then noise, then lines.
pub fn augment_sample(
    frame: &EventFrame,
    labels: &GroundTruthRecord,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> (EventFrame, GroundTruthRecord) {
    let (moved, labels) = random_rigid_augment(frame, labels, cfg, rng);
    let noisy = random_event_noise(&moved, cfg, rng);
    (random_event_lines(&noisy, cfg, rng), labels)
}
