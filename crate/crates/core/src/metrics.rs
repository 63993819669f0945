//! Relative-transform error metrics for an evaluated sequence.
//!
//! Ground-truth poses are paired with the estimate closest in time. For each
//! consecutive pair of pairs, the relative motion of the estimated track is
//! compared with that of the ground-truth track: `phi` is the distance between
//! the relative translations (m), `psi` the angle between the relative
//! rotations (deg). The sequence error is `Phi = RMS(phi)`, `Psi = mean(psi)`.
//!
//! Both tracks must use the same pose convention (camera-from-object here).
//! Composing one fixed transform on the left of every pose of a track leaves
//! both errors unchanged.

use crate::error::{Error, Result};
use crate::event_sim::TimedPose;
use crate::geometry::{quaternion_angle, relative_pose, Pose};
use crate::time_match::{check_sorted_times, nearest_index};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosePair {
    /// Ground-truth timestamp, microseconds.
    pub t: u64,
    pub estimated: Pose,
    pub ground_truth: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepError {
    /// Timestamp of the later pose of the step, microseconds.
    pub t: u64,
    /// Meters.
    pub phi: f64,
    /// Degrees.
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceErrors {
    pub per_step: Vec<StepError>,
    /// RMS of `phi`, meters.
    pub phi: f64,
    /// Mean of `psi`, degrees.
    pub psi: f64,
}

/// Matches every ground-truth pose with the estimate closest in time (ties to the earlier).
pub fn pair_poses(gt: &[TimedPose], estimates: &[TimedPose]) -> Result<Vec<PosePair>> {
    if estimates.is_empty() {
        return Err(Error::Parameter("no estimates to pair with ground truth".into()));
    }
    let est_times: Vec<u64> = estimates.iter().map(|e| e.t).collect();
    check_sorted_times(&est_times, "estimates")?;
    let gt_times: Vec<u64> = gt.iter().map(|g| g.t).collect();
    check_sorted_times(&gt_times, "ground-truth poses")?;
    Ok(gt
        .iter()
        .map(|g| {
            let i = nearest_index(&est_times, g.t).expect("estimates non-empty");
            PosePair {
                t: g.t,
                estimated: estimates[i].pose,
                ground_truth: g.pose,
            }
        })
        .collect())
}

pub fn step_errors(pairs: &[PosePair]) -> Result<Vec<StepError>> {
    if pairs.len() < 2 {
        return Err(Error::Parameter(format!(
            "step errors need at least 2 pose pairs, got {}",
            pairs.len()
        )));
    }
    Ok(pairs
        .windows(2)
        .map(|w| {
            let est = relative_pose(&w[0].estimated, &w[1].estimated);
            let gt = relative_pose(&w[0].ground_truth, &w[1].ground_truth);
            StepError {
                t: w[1].t,
                phi: (est.translation - gt.translation).norm(),
                psi: quaternion_angle(&est.rotation, &gt.rotation),
            }
        })
        .collect())
}

pub fn aggregate(steps: &[StepError]) -> Result<SequenceErrors> {
    if steps.is_empty() {
        return Err(Error::Parameter("cannot aggregate an empty step list".into()));
    }
    let n = steps.len() as f64;
    let phi = (steps.iter().map(|s| s.phi * s.phi).sum::<f64>() / n).sqrt();
    let psi = steps.iter().map(|s| s.psi).sum::<f64>() / n;
    Ok(SequenceErrors {
        per_step: steps.to_vec(),
        phi,
        psi,
    })
}

/// Pairing, per-step errors and aggregation in one call.
pub fn evaluate(gt: &[TimedPose], estimates: &[TimedPose]) -> Result<SequenceErrors> {
    aggregate(&step_errors(&pair_poses(gt, estimates)?)?)
}
