//! Turn pose and IMU streams into supervised training records:
//! ground-truth gravity, aligned prior, prior error, and dynamics
//! metadata.
//!
//! Ground truth comes from VIO poses in an ARKit-style Y-up world
//! (world gravity (0, -1, 0)); all emitted directions are in the EuRoC
//! camera convention.

use crate::error::{Error, Result};
use crate::geom3::{angle_deg, arkit_to_euroc, normalize, quat_to_rot, Quat, UnitVec3, Vec3};
use crate::mahony::{run_sequence, ImuSample, MahonyGains, STANDARD_GRAVITY};
use crate::procrustes::{align_sequence, solve_procrustes, AlignmentResult, PairedDirections};

/// World gravity direction in the ARKit Y-up world frame.
const G_WORLD_ARKIT: Vec3 = Vec3 { x: 0.0, y: -1.0, z: 0.0 };

/// One camera pose from a VIO odometry stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    /// Timestamp, seconds.
    pub t: f64,
    /// Camera-to-world rotation.
    pub q_wc: Quat,
    /// Camera position, meters. Unused by the gravity math, retained
    /// for fidelity to the recording format.
    pub p_wc: Vec3,
}

/// A supervised per-frame record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledFrame {
    pub t: f64,
    /// Ground-truth gravity, EuRoC camera convention.
    pub g_gt: UnitVec3,
    /// Aligned IMU prior, same convention.
    pub g_prior: UnitVec3,
    /// Angle between prior and ground truth, degrees.
    pub prior_error_deg: f64,
    /// Mean accelerometer magnitude deviation |a|/g - 1 around the frame.
    pub nongravity_ratio: f64,
    /// Camera tilt arccos(g_z), degrees in [0, 180].
    pub tilt_deg: f64,
}

/// A full labeled recording.
#[derive(Debug, Clone)]
pub struct SequenceRecord {
    pub id: String,
    pub frames: Vec<LabeledFrame>,
    pub alignment: AlignmentResult,
    /// Frames dropped because they preceded the IMU stream.
    pub dropped_frames: usize,
    /// Frames before this timestamp fall inside the filter warm-up and
    /// can be excluded from evaluation.
    pub burn_in_until: f64,
}

/// Knobs for label construction.
#[derive(Debug, Clone, Copy)]
pub struct LabelConfig {
    /// Half-width of the accelerometer window per frame, seconds.
    pub accel_window: f64,
    /// Filter warm-up span flagged via `burn_in_until`, seconds.
    pub burn_in: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        // The 50 ms half-window spans one 30 Hz frame interval.
        LabelConfig { accel_window: 0.05, burn_in: 1.0 }
    }
}

/// Gravity in the camera frame from a camera-to-world rotation,
/// converted to the EuRoC convention.
pub fn gravity_from_pose(q_wc: &Quat) -> UnitVec3 {
    let g_cam_arkit = quat_to_rot(q_wc).transpose().apply(G_WORLD_ARKIT);
    arkit_to_euroc(normalize(g_cam_arkit).expect("rotation of a unit vector"))
}

/// Per-pose ground-truth gravity labels.
pub fn build_labels(poses: &[PoseSample]) -> Result<Vec<(f64, UnitVec3)>> {
    if poses.is_empty() {
        return Err(Error::EmptyStream);
    }
    Ok(poses
        .iter()
        .map(|p| (p.t, gravity_from_pose(&p.q_wc)))
        .collect())
}

/// Mean non-gravity ratio |a|/g - 1 over an accelerometer window.
pub fn nongravity_ratio(accel_window: &[Vec3]) -> Result<f64> {
    if accel_window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let sum: f64 = accel_window
        .iter()
        .map(|a| a.norm() / STANDARD_GRAVITY - 1.0)
        .sum();
    Ok(sum / accel_window.len() as f64)
}

/// Camera tilt angle arccos(g_z) in degrees.
pub fn tilt_deg(g: UnitVec3) -> f64 {
    g.z.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Build a fully labeled sequence: run the filter, align it to the
/// camera frame with a per-sequence rotation fit, and fill in the
/// per-frame metadata.
pub fn build_sequence(
    id: &str,
    poses: &[PoseSample],
    imu: &[ImuSample],
    gains: MahonyGains,
    cfg: &LabelConfig,
) -> Result<SequenceRecord> {
    if poses.is_empty() || imu.is_empty() {
        return Err(Error::EmptyStream);
    }
    let imu_start = imu[0].t;
    let imu_end = imu[imu.len() - 1].t;
    if poses[poses.len() - 1].t < imu_start || poses[0].t > imu_end {
        return Err(Error::NoTemporalOverlap);
    }

    // Frames lacking an IMU observation (before the stream starts) are
    // dropped; the count is recorded on the output.
    let usable: Vec<&PoseSample> = poses.iter().filter(|p| p.t >= imu_start).collect();
    let dropped_frames = poses.len() - usable.len();
    if usable.is_empty() {
        return Err(Error::NoTemporalOverlap);
    }

    let labels: Vec<(f64, UnitVec3)> = usable
        .iter()
        .map(|p| (p.t, gravity_from_pose(&p.q_wc)))
        .collect();
    let frame_times: Vec<f64> = labels.iter().map(|(t, _)| *t).collect();
    let estimates = run_sequence(imu, &frame_times, gains)?;

    let pairs = PairedDirections::new(
        labels.iter().map(|(_, g)| *g).collect(),
        estimates.iter().map(|e| e.g_imu).collect(),
    )?;
    let alignment = solve_procrustes(&pairs)?;
    let priors = align_sequence(&alignment.r, &estimates);

    let frames = labels
        .iter()
        .zip(&priors)
        .map(|(&(t, g_gt), &g_prior)| {
            let window = accel_window(imu, t, cfg.accel_window);
            let r = nongravity_ratio(&window)
                .expect("window always holds at least the preceding sample");
            LabeledFrame {
                t,
                g_gt,
                g_prior,
                prior_error_deg: angle_deg(g_prior, g_gt),
                nongravity_ratio: r,
                tilt_deg: tilt_deg(g_gt),
            }
        })
        .collect();

    Ok(SequenceRecord {
        id: id.to_string(),
        frames,
        alignment,
        dropped_frames,
        burn_in_until: imu_start + cfg.burn_in,
    })
}

/// Accelerometer samples within +/-`half_width` of `t`; falls back to
/// the nearest preceding sample when the window is empty.
fn accel_window(imu: &[ImuSample], t: f64, half_width: f64) -> Vec<Vec3> {
    let lo = imu.partition_point(|s| s.t < t - half_width);
    let hi = imu.partition_point(|s| s.t <= t + half_width);
    if lo < hi {
        imu[lo..hi].iter().map(|s| s.accel).collect()
    } else {
        let idx = imu.partition_point(|s| s.t <= t).saturating_sub(1);
        vec![imu[idx].accel]
    }
}
