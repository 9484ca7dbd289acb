//! Run the complementary attitude filter over a synthetic IMU stream:
//! a stationary stretch for convergence, then a pure roll the gyro
//! must track.

use plumbline::geom3::{angle_deg, normalize, Vec3};
use plumbline::mahony::{gravity_body, mahony_init, mahony_update, ImuSample, MahonyGains, STANDARD_GRAVITY};

fn main() -> plumbline::Result<()> {
    let gains = MahonyGains::default();
    let down = normalize(Vec3::new(0.0, 0.0, -1.0))?;

    // Start deliberately 30 degrees off so the correction has work to do.
    let mut state = mahony_init(gains, Some(Vec3::new(0.5 * 9.81, 0.0, 0.866 * 9.81)))?;

    println!("static stream at 100 Hz, accelerometer pointing straight up:");
    for i in 0..=3000 {
        let sample = ImuSample {
            t: i as f64 * 0.01,
            gyro: Vec3::ZERO,
            accel: Vec3::new(0.0, 0.0, STANDARD_GRAVITY),
        };
        state = mahony_update(&state, &sample)?;
        if i % 500 == 0 {
            println!(
                "  t = {:5.1} s   gravity error {:6.3} deg",
                i as f64 * 0.01,
                angle_deg(gravity_body(&state), down)
            );
        }
    }

    println!("\n90-degree roll at pi/2 rad/s, gyro only:");
    let mut state = mahony_init(MahonyGains::new(0.0, 0.0)?, None)?;
    let rate = std::f64::consts::FRAC_PI_2;
    for i in 0..=1000 {
        let sample = ImuSample {
            t: i as f64 * 1e-3,
            gyro: Vec3::new(rate, 0.0, 0.0),
            accel: Vec3::ZERO,
        };
        state = mahony_update(&state, &sample)?;
    }
    let g = gravity_body(&state);
    println!("  final gravity in body frame: ({:+.4}, {:+.4}, {:+.4})", g.x, g.y, g.z);
    println!("  expected (0, -1, 0) after rolling the body +90 deg about x");
    Ok(())
}
