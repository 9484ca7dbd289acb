//! Complementary attitude filter turning raw IMU streams into per-frame
//! gravity priors in the IMU body frame.
//!
//! The gyroscope drives fast-rate integration of a body-to-world unit
//! quaternion (Z-up world); the accelerometer supplies a low-frequency
//! up-direction correction through proportional-integral feedback.

use crate::error::{Error, Result};
use crate::geom3::{normalize, quat_to_rot, Quat, UnitVec3, Vec3, EPS_NORM};

/// Standard gravity used to normalize accelerometer magnitudes, m/s^2.
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Correction is skipped when a gap between samples exceeds this, seconds.
pub const DT_MAX: f64 = 0.1;

/// Correction is skipped when |norm(accel)/g - 1| exceeds this: heavy
/// dynamics corrupt the up reference.
pub const ACCEL_REJECT_RATIO: f64 = 0.5;

/// One synchronized accelerometer + gyroscope reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// Timestamp, seconds.
    pub t: f64,
    /// Angular rate, rad/s, body frame.
    pub gyro: Vec3,
    /// Specific force, m/s^2, body frame. Points up when static under
    /// the default sign convention.
    pub accel: Vec3,
}

/// Accelerometer polarity. The default `UpPositive` matches iOS-style
/// readings where a device at rest reports +g along up; recorders that
/// report the gravity vector itself need `DownPositive`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AccelSign {
    #[default]
    UpPositive,
    DownPositive,
}

/// Filter gains. The proportional term pulls the attitude toward the
/// accelerometer up reference; the integral term absorbs slow gyro bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MahonyGains {
    pub kp: f64,
    pub ki: f64,
    pub accel_sign: AccelSign,
}

impl Default for MahonyGains {
    fn default() -> Self {
        MahonyGains { kp: 0.5, ki: 0.01, accel_sign: AccelSign::UpPositive }
    }
}

impl MahonyGains {
    pub fn new(kp: f64, ki: f64) -> Result<Self> {
        if kp < 0.0 || ki < 0.0 || !kp.is_finite() || !ki.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "gains must be non-negative, got kp={kp} ki={ki}"
            )));
        }
        Ok(MahonyGains { kp, ki, ..Default::default() })
    }
}

/// Filter state: body-to-world unit quaternion plus integral feedback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MahonyState {
    pub q: Quat,
    /// Integral feedback term, rad/s.
    pub integral_fb: Vec3,
    /// Timestamp of the last processed sample; `None` until the first
    /// update establishes the time base.
    pub last_t: Option<f64>,
    gains: MahonyGains,
}

/// A gravity direction extracted from the filter at a frame time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GravityEstimate {
    pub t: f64,
    /// Gravity direction in the IMU body frame.
    pub g_imu: UnitVec3,
}

/// Initialize the filter.
///
/// With `first_accel` the quaternion is tilt-aligned so the body-frame
/// up estimate equals the measured accelerometer direction (yaw is left
/// at zero); without it the quaternion starts at identity.
pub fn mahony_init(gains: MahonyGains, first_accel: Option<Vec3>) -> Result<MahonyState> {
    let q = match first_accel {
        None => Quat::IDENTITY,
        Some(a) => {
            let measured_up = measured_up(a, gains.accel_sign)?;
            tilt_alignment(measured_up)
        }
    };
    Ok(MahonyState { q, integral_fb: Vec3::ZERO, last_t: None, gains })
}

fn measured_up(accel: Vec3, sign: AccelSign) -> Result<UnitVec3> {
    let a = match sign {
        AccelSign::UpPositive => accel,
        AccelSign::DownPositive => -accel,
    };
    normalize(a)
}

/// Quaternion rotating the measured body-frame up direction onto world
/// up, i.e. a body-to-world attitude whose up estimate matches `m`.
fn tilt_alignment(m: UnitVec3) -> Quat {
    let z = Vec3::new(0.0, 0.0, 1.0);
    let axis = m.as_vec3().cross(&z);
    let dot = m.as_vec3().dot(&z).clamp(-1.0, 1.0);
    match normalize(axis) {
        Ok(axis) => Quat::from_axis_angle(axis, dot.acos()),
        // m parallel to z: either already aligned or flipped 180 about x.
        Err(_) if dot > 0.0 => Quat::IDENTITY,
        Err(_) => Quat { w: 0.0, x: 1.0, y: 0.0, z: 0.0 },
    }
}

/// Advance the filter by one IMU sample.
///
/// The accelerometer correction is applied only when the sample gap is
/// within [`DT_MAX`], the accel is non-degenerate, and its magnitude is
/// within [`ACCEL_REJECT_RATIO`] of 1 g; otherwise the gyro alone is
/// integrated.
pub fn mahony_update(state: &MahonyState, s: &ImuSample) -> Result<MahonyState> {
    let mut next = *state;
    let dt = match state.last_t {
        None => 0.0,
        Some(prev) => {
            if s.t < prev {
                return Err(Error::NonMonotonicTime { prev, t: s.t });
            }
            s.t - prev
        }
    };
    next.last_t = Some(s.t);
    if dt == 0.0 {
        return Ok(next);
    }

    let gains = state.gains;
    let accel_ok = {
        let n = s.accel.norm();
        n > EPS_NORM && (n / STANDARD_GRAVITY - 1.0).abs() <= ACCEL_REJECT_RATIO
    };

    let mut omega = s.gyro;
    if dt <= DT_MAX && accel_ok {
        let measured = measured_up(s.accel, gains.accel_sign)?;
        let estimated = up_body(&state.q);
        let e = measured.as_vec3().cross(&estimated.as_vec3());
        next.integral_fb = state.integral_fb + e.scale(gains.ki * dt);
        omega = omega + e.scale(gains.kp) + next.integral_fb;
    } else {
        omega = omega + state.integral_fb;
    }

    // First-order step of q_dot = 1/2 q (0, omega), then renormalize.
    let omega_quat = Quat { w: 0.0, x: omega.x, y: omega.y, z: omega.z };
    let dq = state.q.mul(&omega_quat);
    next.q = Quat {
        w: state.q.w + 0.5 * dq.w * dt,
        x: state.q.x + 0.5 * dq.x * dt,
        y: state.q.y + 0.5 * dq.y * dt,
        z: state.q.z + 0.5 * dq.z * dt,
    }
    .normalized();
    Ok(next)
}

/// World up expressed in the body frame: the third row of the
/// body-to-world rotation.
fn up_body(q: &Quat) -> UnitVec3 {
    let r = quat_to_rot(q);
    normalize(Vec3::new(r.m[2][0], r.m[2][1], r.m[2][2])).expect("rotation row is unit")
}

/// Gravity direction in the body frame: the negated up estimate.
pub fn gravity_body(state: &MahonyState) -> UnitVec3 {
    up_body(&state.q).flipped()
}

/// Run the filter over a full IMU stream and sample it at frame times.
///
/// Each frame receives the estimate from the most recent IMU sample at
/// or before its timestamp (nearest-preceding, no interpolation).
pub fn run_sequence(
    imu: &[ImuSample],
    frame_times: &[f64],
    gains: MahonyGains,
) -> Result<Vec<GravityEstimate>> {
    let first = imu.first().ok_or(Error::EmptyStream)?;
    if let Some(&t) = frame_times.first() {
        if t < first.t {
            return Err(Error::FrameBeforeStream { frame_t: t, imu_t: first.t });
        }
    }
    for w in frame_times.windows(2) {
        if w[1] < w[0] {
            return Err(Error::NonMonotonicTime { prev: w[0], t: w[1] });
        }
    }

    let mut state = mahony_init(gains, Some(first.accel))
        .or_else(|_| mahony_init(gains, None))?;
    let mut out = Vec::with_capacity(frame_times.len());
    let mut frames = frame_times.iter().peekable();

    for (i, sample) in imu.iter().enumerate() {
        let next_t = imu.get(i + 1).map(|s| s.t);
        state = mahony_update(&state, sample)?;
        // Emit every frame that this sample is the nearest predecessor of.
        while let Some(&&ft) = frames.peek() {
            if next_t.is_some_and(|nt| nt <= ft) {
                break;
            }
            out.push(GravityEstimate { t: ft, g_imu: gravity_body(&state) });
            frames.next();
        }
    }
    Ok(out)
}
