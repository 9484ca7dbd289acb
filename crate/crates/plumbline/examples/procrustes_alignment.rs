//! Recover a known body-to-camera rotation from paired gravity
//! directions, with and without observation noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use plumbline::geom3::{normalize, quat_to_rot, rotation_gap_deg, Quat, UnitVec3, Vec3};
use plumbline::procrustes::{solve_procrustes, PairedDirections};

fn random_unit(rng: &mut impl Rng) -> UnitVec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if v.norm() > 1e-3 {
            return normalize(v).unwrap();
        }
    }
}

fn main() -> plumbline::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // The rotation we pretend not to know.
    let axis = random_unit(&mut rng);
    let truth = quat_to_rot(&Quat::from_axis_angle(axis, 1.234));

    for (label, noise_deg, n) in [("noiseless", 0.0f64, 12), ("1 deg noise", 1.0, 1000)] {
        let g_imu: Vec<UnitVec3> = (0..n).map(|_| random_unit(&mut rng)).collect();
        let g_cam: Vec<UnitVec3> = g_imu
            .iter()
            .map(|g| {
                let exact = truth.apply_unit(*g);
                if noise_deg == 0.0 {
                    exact
                } else {
                    // Tip by the noise angle about a random tangent.
                    let t = loop {
                        let v = random_unit(&mut rng);
                        let rej = v.as_vec3() - exact.as_vec3().scale(v.dot(&exact));
                        if rej.norm() > 1e-6 {
                            break normalize(rej).unwrap();
                        }
                    };
                    let a = noise_deg.to_radians();
                    normalize(exact.as_vec3().scale(a.cos()) + t.as_vec3().scale(a.sin())).unwrap()
                }
            })
            .collect();

        let result = solve_procrustes(&PairedDirections::new(g_cam, g_imu)?)?;
        println!(
            "{label:>12}: {n:4} pairs  recovery error {:.2e} deg  residual {:.4} deg  {:?}",
            rotation_gap_deg(&result.r, &truth),
            result.residual_rms_deg,
            result.condition_flag
        );
    }
    Ok(())
}
