//! Noisy-oracle landmark predictor.
//!
//! Perturbs ground-truth landmark projections to stand in for a learned
//! landmark regressor, attaching a confidence that decays with the realized
//! error: `exp(-err^2 / (2 sigma_c^2))`, `sigma_c = max(sigma, floor)`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::event_sim::GroundTruthRecord;
use crate::geometry::Vec2;

/// One 2D observation of a known 3D landmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub landmark_index: usize,
    pub uv: Vec2,
    /// In `[0, 1]`.
    pub confidence: f64,
}

impl Correspondence {
    pub fn new(landmark_index: usize, uv: Vec2, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Validation(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Correspondence {
            landmark_index,
            uv,
            confidence,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    /// Isotropic Gaussian noise per axis, pixels.
    pub pixel_noise_sigma: f64,
    /// Probability that an observation is replaced by an outlier.
    pub outlier_rate: f64,
    /// Outliers land uniformly in a disc of this radius around the truth, pixels.
    pub outlier_spread: f64,
    /// Lower bound of the confidence kernel width, pixels.
    pub confidence_sigma_floor: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            pixel_noise_sigma: 0.5,
            outlier_rate: 0.0,
            outlier_spread: 50.0,
            confidence_sigma_floor: 1.0,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_noise_sigma >= 0.0 && self.pixel_noise_sigma.is_finite()) {
            return Err(Error::Parameter(format!(
                "noise sigma {} must be >= 0",
                self.pixel_noise_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return Err(Error::Parameter(format!(
                "outlier rate {} outside [0, 1]",
                self.outlier_rate
            )));
        }
        let floor = self.confidence_sigma_floor;
        if self.outlier_spread.is_nan() || self.outlier_spread < 0.0 || floor.is_nan() || floor <= 0.0 {
            return Err(Error::Parameter(
                "outlier spread must be >= 0 and the confidence floor > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn confidence_sigma(&self) -> f64 {
        self.pixel_noise_sigma.max(self.confidence_sigma_floor)
    }

    /// Confidence assigned to an observation `err` pixels from the truth.
    pub fn confidence(&self, err: f64) -> f64 {
        let s = self.confidence_sigma();
        (-err * err / (2.0 * s * s)).exp()
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkPrediction {
    pub correspondences: Vec<Correspondence>,
    /// The record had too few visible landmarks; no correspondences produced.
    pub degenerate: bool,
}

pub fn predict_landmarks(
    record: &GroundTruthRecord,
    cfg: &OracleConfig,
    rng: &mut impl Rng,
) -> Result<LandmarkPrediction> {
    cfg.validate()?;
    if record.degenerate {
        return Ok(LandmarkPrediction {
            correspondences: Vec::new(),
            degenerate: true,
        });
    }
    let noise =
        Normal::new(0.0, cfg.pixel_noise_sigma).map_err(|e| Error::Parameter(format!("noise distribution: {e}")))?;
    let correspondences = record
        .landmarks
        .iter()
        .enumerate()
        .filter(|(_, l)| l.visible)
        .map(|(landmark_index, l)| {
            let offset = if rng.random::<f64>() < cfg.outlier_rate {
                let r = cfg.outlier_spread * rng.random::<f64>().sqrt();
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                Vec2::new(r * a.cos(), r * a.sin())
            } else {
                Vec2::new(noise.sample(rng), noise.sample(rng))
            };
            Correspondence {
                landmark_index,
                uv: l.uv + offset,
                confidence: cfg.confidence(offset.norm()),
            }
        })
        .collect();
    Ok(LandmarkPrediction {
        correspondences,
        degenerate: false,
    })
}
