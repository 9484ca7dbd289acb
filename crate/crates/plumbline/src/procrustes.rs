//! Recover the constant IMU-to-camera rotation from paired gravity
//! observations and apply it to align priors.
//!
//! The fit minimizes sum ||g_cam - R g_imu||^2 over SO(3) via SVD of the
//! cross-covariance matrix. The SVD is a fixed-size one-sided Jacobi
//! routine: deterministic, fast, and free of any general-purpose linear
//! algebra dependency.

use crate::error::{Error, Result};
use crate::geom3::{angle_deg, normalize, Rot3, UnitVec3, Vec3};
use crate::mahony::GravityEstimate;

/// Jacobi sweep budget; exceeding it reports `NoConvergence`.
const MAX_SWEEPS: usize = 60;

/// Paired direction observations: VIO ground truth in the camera frame
/// against filter output in the body frame.
#[derive(Debug, Clone)]
pub struct PairedDirections {
    pub g_cam: Vec<UnitVec3>,
    pub g_imu: Vec<UnitVec3>,
}

impl PairedDirections {
    pub fn new(g_cam: Vec<UnitVec3>, g_imu: Vec<UnitVec3>) -> Result<Self> {
        if g_cam.len() != g_imu.len() {
            return Err(Error::ShapeMismatch { expected: g_cam.len(), got: g_imu.len() });
        }
        if g_cam.len() < 3 {
            return Err(Error::InsufficientPairs { got: g_cam.len(), need: 3 });
        }
        Ok(PairedDirections { g_cam, g_imu })
    }

    pub fn len(&self) -> usize {
        self.g_cam.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g_cam.is_empty()
    }
}

/// Whether the paired directions span enough of the sphere for a
/// well-posed rotation fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionFlag {
    WellPosed,
    Degenerate,
}

/// Result of the rotation fit.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AlignmentResult {
    /// Rotation taking body-frame directions into the camera frame.
    pub r: Rot3,
    pub residual_rms_deg: f64,
    pub condition_flag: ConditionFlag,
}

/// Cross-covariance M[a][b] = sum_i g_cam_i[a] * g_imu_i[b].
pub fn cross_covariance(pairs: &PairedDirections) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for (c, b) in pairs.g_cam.iter().zip(&pairs.g_imu) {
        let c = [c.x, c.y, c.z];
        let b = [b.x, b.y, b.z];
        for (row, &ca) in m.iter_mut().zip(&c) {
            for (cell, &bb) in row.iter_mut().zip(&b) {
                *cell += ca * bb;
            }
        }
    }
    m
}

/// Singular value decomposition of a 3x3 matrix: M = U diag(S) V^T with
/// S sorted descending and non-negative, U and V orthogonal.
///
/// (U, singular values, V) of a 3x3 decomposition.
pub type Svd3 = ([[f64; 3]; 3], [f64; 3], [[f64; 3]; 3]);

/// One-sided Jacobi: right rotations orthogonalize the columns of M;
/// the accumulated rotations form V, the orthogonalized columns give
/// U and S.
pub fn svd3(m: &[[f64; 3]; 3]) -> Result<Svd3> {
    let mut b = *m; // working copy, columns get orthogonalized
    let mut v = [[0.0; 3], [0.0; 3], [0.0; 3]];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..2 {
            for q in (p + 1)..3 {
                // Column inner products.
                let (mut app, mut aqq, mut apq) = (0.0, 0.0, 0.0);
                for row in &b {
                    app += row[p] * row[p];
                    aqq += row[q] * row[q];
                    apq += row[p] * row[q];
                }
                // Already orthogonal (relative to the column norms), or a
                // zero column: nothing to rotate.
                let denom = (app * aqq).sqrt();
                if denom <= f64::MIN_POSITIVE || apq.abs() <= 1e-15 * denom {
                    continue;
                }
                rotated = true;
                // Rotation zeroing the (p, q) column inner product.
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for row in &mut b {
                    let (bp, bq) = (row[p], row[q]);
                    row[p] = c * bp - s * bq;
                    row[q] = s * bp + c * bq;
                }
                for row in &mut v {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { sweeps: MAX_SWEEPS });
    }

    // Column norms are the singular values; sort descending.
    let mut s = [0.0; 3];
    for (j, sj) in s.iter_mut().enumerate() {
        *sj = (b[0][j] * b[0][j] + b[1][j] * b[1][j] + b[2][j] * b[2][j]).sqrt();
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &c| s[c].partial_cmp(&s[a]).unwrap());

    let mut u = [[0.0; 3]; 3];
    let mut v_sorted = [[0.0; 3]; 3];
    let mut s_sorted = [0.0; 3];
    for (jj, &j) in order.iter().enumerate() {
        s_sorted[jj] = s[j];
        for i in 0..3 {
            v_sorted[i][jj] = v[i][j];
        }
        if s[j] > 1e-300 {
            for i in 0..3 {
                u[i][jj] = b[i][j] / s[j];
            }
        }
    }

    // Complete U where singular values vanish (rank-deficient input).
    complete_orthonormal(&mut u, &s_sorted);

    Ok((u, s_sorted, v_sorted))
}

/// Fill zero columns of `u` so the matrix is orthonormal.
fn complete_orthonormal(u: &mut [[f64; 3]; 3], s: &[f64; 3]) {
    let col = |u: &[[f64; 3]; 3], j: usize| Vec3::new(u[0][j], u[1][j], u[2][j]);
    let set = |u: &mut [[f64; 3]; 3], j: usize, v: Vec3| {
        u[0][j] = v.x;
        u[1][j] = v.y;
        u[2][j] = v.z;
    };
    for (j, &sj) in s.iter().enumerate() {
        if sj > 1e-300 {
            continue;
        }
        // Candidate orthogonal to all previous columns.
        let mut best = Vec3::ZERO;
        for cand in [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ] {
            let mut w = cand;
            for k in 0..j {
                let c = col(u, k);
                w = w - c.scale(w.dot(&c));
            }
            if w.norm() > best.norm() {
                best = w;
            }
        }
        set(u, j, normalize(best).expect("orthogonal complement exists").as_vec3());
    }
}

/// Solve the rotation fit over the paired directions.
pub fn solve_procrustes(pairs: &PairedDirections) -> Result<AlignmentResult> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientPairs { got: pairs.len(), need: 3 });
    }
    let m = cross_covariance(pairs);
    let (u, s, v) = svd3(&m)?;

    // R = U diag(1, 1, det(U V^T)) V^T; the sign column guards against
    // reflections when det(U V^T) = -1.
    let u_rot = Rot3 { m: u };
    let vt = Rot3 { m: v }.transpose();
    let d = u_rot.compose(&vt).det().signum();
    let sign = Rot3::from_rows([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, d]);
    let r = u_rot.compose(&sign).compose(&vt);

    let mut sq_sum = 0.0;
    for (c, b) in pairs.g_cam.iter().zip(&pairs.g_imu) {
        let e = angle_deg(*c, r.apply_unit(*b));
        sq_sum += e * e;
    }
    let residual_rms_deg = (sq_sum / pairs.len() as f64).sqrt();

    // Directions spanning fewer than two dimensions cannot pin down a
    // rotation.
    let sigma_min = 1e-6 * pairs.len() as f64;
    let condition_flag = if s[1] < sigma_min {
        ConditionFlag::Degenerate
    } else {
        ConditionFlag::WellPosed
    };

    Ok(AlignmentResult { r, residual_rms_deg, condition_flag })
}

/// Rotate body-frame estimates into the camera frame.
pub fn align_sequence(r: &Rot3, estimates: &[GravityEstimate]) -> Vec<UnitVec3> {
    estimates.iter().map(|e| r.apply_unit(e.g_imu)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom3::{euler_rot, quat_to_rot, rotation_gap_deg, Axis, Quat};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(x: f64, y: f64, z: f64) -> UnitVec3 {
        normalize(Vec3::new(x, y, z)).unwrap()
    }

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

    fn random_rotation(rng: &mut impl Rng) -> Rot3 {
        let axis = random_unit(rng);
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        quat_to_rot(&Quat::from_axis_angle(axis, angle))
    }

    #[test]
    fn cross_covariance_single_pair() {
        let pairs = PairedDirections {
            g_cam: vec![unit(0.0, 0.0, 1.0)],
            g_imu: vec![unit(0.0, 0.0, 1.0)],
        };
        let m = cross_covariance(&pairs);
        for (i, row) in m.iter().enumerate() {
            for (j, &cell) in row.iter().enumerate() {
                let expect = if i == 2 && j == 2 { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(cell, expect, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn cross_covariance_canonical_basis_is_identity() {
        let basis = vec![unit(1.0, 0.0, 0.0), unit(0.0, 1.0, 0.0), unit(0.0, 0.0, 1.0)];
        let pairs = PairedDirections { g_cam: basis.clone(), g_imu: basis };
        let m = cross_covariance(&pairs);
        for (i, row) in m.iter().enumerate() {
            for (j, &cell) in row.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(cell, expect, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn cross_covariance_matches_outer_product_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 50;
        let g_cam: Vec<UnitVec3> = (0..n).map(|_| random_unit(&mut rng)).collect();
        let g_imu: Vec<UnitVec3> = (0..n).map(|_| random_unit(&mut rng)).collect();
        let pairs = PairedDirections { g_cam: g_cam.clone(), g_imu: g_imu.clone() };
        let m = cross_covariance(&pairs);
        // Brute-force oracle: explicit accumulation per entry.
        #[allow(clippy::needless_range_loop)]
        for a in 0..3 {
            for b in 0..3 {
                let mut expect = 0.0;
                for i in 0..n {
                    let c = [g_cam[i].x, g_cam[i].y, g_cam[i].z];
                    let d = [g_imu[i].x, g_imu[i].y, g_imu[i].z];
                    expect += c[a] * d[b];
                }
                assert_abs_diff_eq!(m[a][b], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn svd3_identity_and_diagonal() {
        let (_, s, _) = svd3(&Rot3::IDENTITY.m).unwrap();
        assert_abs_diff_eq!(s[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[2], 1.0, epsilon = 1e-12);

        let d = [[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]];
        let (_, s, _) = svd3(&d).unwrap();
        assert_abs_diff_eq!(s[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn svd3_reconstruction_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let mut m = [[0.0; 3]; 3];
            for row in &mut m {
                for cell in row.iter_mut() {
                    *cell = rng.gen_range(-10.0..10.0);
                }
            }
            let (u, s, v) = svd3(&m).unwrap();
            let norm: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();

            assert!(s[0] >= s[1] && s[1] >= s[2] && s[2] >= 0.0);
            let ur = Rot3 { m: u };
            let vr = Rot3 { m: v };
            for (q, name) in [(&ur, "U"), (&vr, "V")] {
                let qtq = q.transpose().compose(q);
                for i in 0..3 {
                    for j in 0..3 {
                        let expect = if i == j { 1.0 } else { 0.0 };
                        assert!(
                            (qtq.m[i][j] - expect).abs() < 1e-9,
                            "{name}^T {name} off identity"
                        );
                    }
                }
            }
            // M = U S V^T
            let mut svt = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    svt[i][j] = s[i] * v[j][i];
                }
            }
            let recon = ur.compose(&Rot3 { m: svt });
            for (i, row) in recon.m.iter().enumerate() {
                for (j, cell) in row.iter().enumerate() {
                    assert!(
                        (cell - m[i][j]).abs() < 1e-9 * norm.max(1.0),
                        "reconstruction error at ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn svd3_rank_deficient() {
        // Rank-1 outer product.
        let m = [[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [3.0, 6.0, 9.0]];
        let (u, s, _v) = svd3(&m).unwrap();
        assert!(s[0] > 1.0);
        assert!(s[1].abs() < 1e-9 && s[2].abs() < 1e-9);
        assert!(Rot3 { m: u }.transpose().compose(&Rot3 { m: u }).is_rotation(1e-9) || {
            // U may be orthogonal with det -1; only orthonormality matters.
            let utu = Rot3 { m: u }.transpose().compose(&Rot3 { m: u });
            (0..3).all(|i| (0..3).all(|j| {
                (utu.m[i][j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-9
            }))
        });
    }

    #[test]
    fn procrustes_identity_alignment() {
        let dirs = vec![
            unit(1.0, 0.0, 0.0),
            unit(0.0, 1.0, 0.0),
            unit(0.0, 0.0, 1.0),
            unit(1.0, 1.0, 1.0),
        ];
        let pairs = PairedDirections { g_cam: dirs.clone(), g_imu: dirs };
        let res = solve_procrustes(&pairs).unwrap();
        assert!(rotation_gap_deg(&res.r, &Rot3::IDENTITY) < 1e-9);
        assert!(res.residual_rms_deg < 1e-9);
        assert_eq!(res.condition_flag, ConditionFlag::WellPosed);
    }

    #[test]
    fn procrustes_recovers_constructed_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let r0 = random_rotation(&mut rng);
            let g_imu: Vec<UnitVec3> = (0..10).map(|_| random_unit(&mut rng)).collect();
            let g_cam: Vec<UnitVec3> = g_imu.iter().map(|g| r0.apply_unit(*g)).collect();
            let res = solve_procrustes(&PairedDirections { g_cam, g_imu }).unwrap();
            assert!(
                rotation_gap_deg(&res.r, &r0) < 1e-6,
                "recovery error {} deg",
                rotation_gap_deg(&res.r, &r0)
            );
            assert!(res.r.is_rotation(1e-9));
        }
    }

    #[test]
    fn procrustes_flags_rank_one_input() {
        let d = unit(0.3, -0.4, 0.86);
        let pairs = PairedDirections {
            g_cam: vec![d; 5],
            g_imu: vec![d; 5],
        };
        let res = solve_procrustes(&pairs).unwrap();
        assert_eq!(res.condition_flag, ConditionFlag::Degenerate);
    }

    #[test]
    fn procrustes_rejects_reflections() {
        // Near-planar sets that push det(UV^T) negative must still give
        // a proper rotation.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let g_imu: Vec<UnitVec3> = (0..6)
                .map(|_| {
                    let v = Vec3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-0.01..0.01),
                    );
                    normalize(v).unwrap()
                })
                .collect();
            // Mirror through the xy plane: a reflection, not a rotation.
            let g_cam: Vec<UnitVec3> = g_imu
                .iter()
                .map(|g| unit(g.x, g.y, -g.z))
                .collect();
            let res = solve_procrustes(&PairedDirections { g_cam, g_imu }).unwrap();
            assert!(res.r.det() > 0.0, "det must stay +1 on reflective input");
            assert!(res.r.is_rotation(1e-9));
        }
    }

    #[test]
    fn procrustes_beats_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g_imu: Vec<UnitVec3> = (0..40).map(|_| random_unit(&mut rng)).collect();
        let r0 = random_rotation(&mut rng);
        // Noisy correspondences.
        let g_cam: Vec<UnitVec3> = g_imu
            .iter()
            .map(|g| {
                let n = Vec3::new(
                    rng.gen_range(-0.05..0.05),
                    rng.gen_range(-0.05..0.05),
                    rng.gen_range(-0.05..0.05),
                );
                normalize(r0.apply_unit(*g).as_vec3() + n).unwrap()
            })
            .collect();
        let pairs = PairedDirections { g_cam, g_imu };
        let res = solve_procrustes(&pairs).unwrap();
        let rms = |r: &Rot3| {
            let mut sq = 0.0;
            for (c, b) in pairs.g_cam.iter().zip(&pairs.g_imu) {
                let e = angle_deg(*c, r.apply_unit(*b));
                sq += e * e;
            }
            (sq / pairs.len() as f64).sqrt()
        };
        for _ in 0..100 {
            let r = random_rotation(&mut rng);
            assert!(rms(&res.r) <= rms(&r) + 1e-12);
        }
    }

    #[test]
    fn noise_error_shrinks_with_pair_count() {
        // 1 deg of iid angular noise; median recovery error over 50
        // trials must strictly decrease as N grows.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let noise_rad = 1.0f64.to_radians();
        let mut medians = Vec::new();
        for n in [10usize, 100, 1000] {
            let mut errors: Vec<f64> = (0..50)
                .map(|_| {
                    let r0 = random_rotation(&mut rng);
                    let g_imu: Vec<UnitVec3> =
                        (0..n).map(|_| random_unit(&mut rng)).collect();
                    let g_cam: Vec<UnitVec3> = g_imu
                        .iter()
                        .map(|g| {
                            let exact = r0.apply_unit(*g);
                            perturb(exact, noise_rad, &mut rng)
                        })
                        .collect();
                    let res =
                        solve_procrustes(&PairedDirections { g_cam, g_imu }).unwrap();
                    rotation_gap_deg(&res.r, &r0)
                })
                .collect();
            errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
            medians.push(errors[25]);
        }
        assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
    }

    /// Rotate `g` by `angle` about a random axis perpendicular to it.
    fn perturb(g: UnitVec3, angle: f64, rng: &mut impl Rng) -> UnitVec3 {
        let tangent = loop {
            let v = random_unit(rng);
            let rejected = v.as_vec3() - g.as_vec3().scale(v.dot(&g));
            if rejected.norm() > 1e-6 {
                break normalize(rejected).unwrap();
            }
        };
        normalize(g.as_vec3().scale(angle.cos()) + tangent.as_vec3().scale(angle.sin())).unwrap()
    }

    #[test]
    fn align_sequence_basics() {
        let est = vec![
            GravityEstimate { t: 0.0, g_imu: unit(0.0, 0.0, -1.0) },
            GravityEstimate { t: 1.0, g_imu: unit(1.0, 0.0, 0.0) },
        ];
        let aligned = align_sequence(&Rot3::IDENTITY, &est);
        assert!(angle_deg(aligned[0], est[0].g_imu) < 1e-12);
        assert!(angle_deg(aligned[1], est[1].g_imu) < 1e-12);

        let r = euler_rot(Axis::X, std::f64::consts::FRAC_PI_2);
        let aligned = align_sequence(&r, &est);
        assert!(angle_deg(aligned[0], unit(0.0, 1.0, 0.0)) < 1e-9);

        // Round trip through the inverse.
        let back = align_sequence(
            &r.transpose(),
            &aligned
                .iter()
                .zip(&est)
                .map(|(g, e)| GravityEstimate { t: e.t, g_imu: *g })
                .collect::<Vec<_>>(),
        );
        for (b, e) in back.iter().zip(&est) {
            assert!(angle_deg(*b, e.g_imu) < 1e-9);
        }
    }
}
