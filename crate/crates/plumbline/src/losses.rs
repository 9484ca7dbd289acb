//! The four-term training objective with oracle gate supervision, plus
//! the finite-difference gradient checker used to validate the
//! hand-written backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibnet::{
    backward, forward, init_params, Activation, CalibratorParams, ForwardOutput, NetDims,
    OutputGrads,
};
use crate::error::{Error, Result};
use crate::geom3::{normalize, UnitVec3, Vec3};

/// Term weights of the composite objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_delta: f64,
    pub lambda_tau: f64,
    pub lambda_img: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_delta: 1e-4, lambda_tau: 0.05, lambda_img: 0.2 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_delta < 0.0 || self.lambda_tau < 0.0 || self.lambda_img < 0.0 {
            return Err(Error::InvalidConfig("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Batch-mean loss terms. `main` and `img` are in radians, `delta` in
/// squared radians, `tau` unitless; `total` is the weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub main: f64,
    pub delta: f64,
    pub tau: f64,
    pub img: f64,
    pub total: f64,
}

/// Unweighted per-sample loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleTerms {
    pub main: f64,
    pub delta: f64,
    pub tau: f64,
    pub img: f64,
}

/// Gate supervision target from the true prior error in degrees:
/// sigma((eps_p - 25) / 5). Rises from ~0 for accurate priors to ~1
/// for badly corrupted ones, centered at 25 degrees.
pub fn oracle_tau(prior_error_deg: f64) -> f64 {
    sigmoid((prior_error_deg - 25.0) / 5.0)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Clamp bound for arccos inputs on the differentiable path; keeps the
/// gradient bounded at perfect alignment. The non-differentiable metric
/// path clamps to [-1, 1] exactly instead.
pub const ARCCOS_CLAMP: f64 = 1.0 - 1e-7;

fn angular_loss(a: UnitVec3, b: UnitVec3) -> f64 {
    a.dot(&b).clamp(-ARCCOS_CLAMP, ARCCOS_CLAMP).acos()
}

/// Derivative factor of `angular_loss` with respect to the first
/// argument: d arccos(c)/dc * b, zero where the clamp is active.
fn angular_loss_grad(a: UnitVec3, b: UnitVec3) -> Vec3 {
    let dot = a.dot(&b);
    if dot.abs() >= ARCCOS_CLAMP {
        return Vec3::ZERO;
    }
    b.as_vec3().scale(-1.0 / (1.0 - dot * dot).sqrt())
}

/// Per-sample loss terms.
///
/// - main: angular error of the fused prediction;
/// - tau: squared gate error against the oracle target;
/// - delta: residual-rotation magnitude, relaxed when the prior is
///   known bad (weight 1 - tau_star);
/// - img: angular error of the image branch, up-weighted when the
///   prior is bad (weight 0.5 + tau_star).
pub fn loss_terms(out: &ForwardOutput, g_star: UnitVec3, tau_star: f64) -> SampleTerms {
    SampleTerms {
        main: angular_loss(out.g_pred, g_star),
        tau: (out.tau - tau_star) * (out.tau - tau_star),
        delta: (1.0 - tau_star)
            * (out.delta.delta_x * out.delta.delta_x + out.delta.delta_y * out.delta.delta_y),
        img: (0.5 + tau_star) * angular_loss(out.g_img, g_star),
    }
}

/// Batch-mean reduction of per-sample terms into the weighted total.
pub fn total_loss(batch: &[SampleTerms], w: &LossWeights) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = batch.len() as f64;
    let main = batch.iter().map(|t| t.main).sum::<f64>() / n;
    let delta = batch.iter().map(|t| t.delta).sum::<f64>() / n;
    let tau = batch.iter().map(|t| t.tau).sum::<f64>() / n;
    let img = batch.iter().map(|t| t.img).sum::<f64>() / n;
    let total = main + w.lambda_delta * delta + w.lambda_tau * tau + w.lambda_img * img;
    Ok(LossBreakdown { main, delta, tau, img, total })
}

/// Derivatives of the batch total with respect to this sample's
/// outputs, for a batch of size `batch_size`. The `mask` scales the
/// four terms (main, delta, tau, img) and exists so each term can be
/// gradient-checked in isolation; training uses all ones.
pub fn loss_output_grads_masked(
    out: &ForwardOutput,
    g_star: UnitVec3,
    tau_star: f64,
    w: &LossWeights,
    batch_size: usize,
    mask: [f64; 4],
) -> OutputGrads {
    let inv_b = 1.0 / batch_size as f64;
    OutputGrads {
        d_g_pred: angular_loss_grad(out.g_pred, g_star).scale(mask[0] * inv_b),
        d_g_corr: Vec3::ZERO,
        d_g_img: angular_loss_grad(out.g_img, g_star)
            .scale(mask[3] * w.lambda_img * (0.5 + tau_star) * inv_b),
        d_tau: mask[2] * w.lambda_tau * 2.0 * (out.tau - tau_star) * inv_b,
        d_delta_x: mask[1] * w.lambda_delta * 2.0 * (1.0 - tau_star) * out.delta.delta_x * inv_b,
        d_delta_y: mask[1] * w.lambda_delta * 2.0 * (1.0 - tau_star) * out.delta.delta_y * inv_b,
    }
}

/// Derivatives of the full training objective for one sample.
pub fn loss_output_grads(
    out: &ForwardOutput,
    g_star: UnitVec3,
    tau_star: f64,
    w: &LossWeights,
    batch_size: usize,
) -> OutputGrads {
    loss_output_grads_masked(out, g_star, tau_star, w, batch_size, [1.0; 4])
}

// ---------------------------------------------------------------------------
// Finite-difference verification

/// Result of a finite-difference sweep over every parameter.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub configs: usize,
    pub params_checked: usize,
    /// Max over parameters of |analytic - numeric| relative error, with
    /// the absolute floor folded in.
    pub max_rel_err: f64,
    pub worst_config: usize,
    pub threshold: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.threshold
    }
}

/// Relative error with an absolute floor: values below
/// `abs_floor / rel_tol` in magnitude are compared absolutely.
fn fd_error(analytic: f64, numeric: f64, rel_tol: f64, abs_floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(abs_floor / rel_tol);
    (analytic - numeric).abs() / scale
}

/// Check the reverse-mode gradients of the masked objective against
/// central finite differences over `configs` random configurations
/// (random small dims, randomized parameters, random inputs and
/// targets).
pub fn grad_check_masked(seed: u64, configs: usize, mask: [f64; 4]) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = LossWeights::default();
    let step = 1e-5;
    let rel_tol = 1e-4;
    let abs_floor = 1e-8;

    let mut max_rel_err = 0.0f64;
    let mut worst_config = 0;
    let mut params_checked = 0;

    for cfg_idx in 0..configs {
        let dims = NetDims {
            c: rng.gen_range(4..10),
            h_prior: rng.gen_range(3..8),
            h_head: rng.gen_range(3..8),
            h_img: rng.gen_range(3..8),
            prior_act: Activation::Tanh,
            head_act: Activation::Relu,
        };
        let mut params = init_params(dims, rng.gen())?;
        // Perturb every parameter so zero-initialized blocks carry
        // gradient signal too.
        let mut flat = params.to_flat();
        for v in &mut flat {
            *v += rng.gen_range(-0.3..0.3);
        }
        params.set_flat(&flat)?;

        let f: Vec<f64> = (0..dims.c).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let g_hat = random_unit(&mut rng);
        let g_star = random_unit(&mut rng);
        let tau_star = oracle_tau(rng.gen_range(0.0..60.0));

        let scalar_loss = |p: &CalibratorParams| -> Result<f64> {
            let (out, _) = forward(p, &f, g_hat)?;
            let t = loss_terms(&out, g_star, tau_star);
            Ok(mask[0] * t.main
                + mask[1] * w.lambda_delta * t.delta
                + mask[2] * w.lambda_tau * t.tau
                + mask[3] * w.lambda_img * t.img)
        };

        let (out, cache) = forward(&params, &f, g_hat)?;
        let upstream = loss_output_grads_masked(&out, g_star, tau_star, &w, 1, mask);
        let analytic = backward(&params, &cache, &upstream).to_flat();

        let base = params.to_flat();
        let mut probe = params.clone();
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += step;
            probe.set_flat(&plus)?;
            let l_plus = scalar_loss(&probe)?;
            let mut minus = base.clone();
            minus[i] -= step;
            probe.set_flat(&minus)?;
            let l_minus = scalar_loss(&probe)?;
            let numeric = (l_plus - l_minus) / (2.0 * step);
            let err = fd_error(analytic[i], numeric, rel_tol, abs_floor);
            if err > max_rel_err {
                max_rel_err = err;
                worst_config = cfg_idx;
            }
            params_checked += 1;
        }
    }

    Ok(GradCheckReport {
        configs,
        params_checked,
        max_rel_err,
        worst_config,
        threshold: rel_tol,
    })
}

/// Gradient check of the full objective.
pub fn grad_check(seed: u64, configs: usize) -> Result<GradCheckReport> {
    grad_check_masked(seed, configs, [1.0; 4])
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom3::EulerDelta;
    use approx::assert_abs_diff_eq;

    fn unit(x: f64, y: f64, z: f64) -> UnitVec3 {
        normalize(Vec3::new(x, y, z)).unwrap()
    }

    fn sample_output(
        g_pred: UnitVec3,
        g_img: UnitVec3,
        tau: f64,
        delta: EulerDelta,
    ) -> ForwardOutput {
        ForwardOutput {
            g_pred,
            g_corr: g_pred,
            g_img,
            tau,
            delta,
            gamma: vec![],
            beta: vec![],
        }
    }

    #[test]
    fn oracle_tau_reference_points() {
        assert_eq!(oracle_tau(25.0), 0.5);
        assert_abs_diff_eq!(oracle_tau(15.0), sigmoid(-2.0), epsilon = 1e-15);
        assert_abs_diff_eq!(oracle_tau(15.0), 0.11920292202211755, epsilon = 1e-9);
        assert_abs_diff_eq!(oracle_tau(35.0), sigmoid(2.0), epsilon = 1e-15);
        assert_abs_diff_eq!(oracle_tau(35.0), 0.8807970779778823, epsilon = 1e-9);
    }

    #[test]
    fn oracle_tau_monotone_and_symmetric() {
        let mut prev = 0.0;
        for i in 0..=120 {
            let eps = i as f64;
            let t = oracle_tau(eps);
            assert!(t > prev, "oracle target must be strictly increasing");
            prev = t;
            // Sigmoid symmetry about the 25 degree center.
            assert_abs_diff_eq!(oracle_tau(eps) + oracle_tau(50.0 - eps), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn perfect_prediction_zeroes_terms() {
        let g = unit(0.0, 0.0, 1.0);
        let g_img = unit(1.0, 0.0, 0.0);
        let out = sample_output(g, g_img, 0.3, EulerDelta::ZERO);
        let t = loss_terms(&out, g, 0.3);
        // arccos is clamped at 1 - 1e-7, so "zero" is the clamp angle.
        assert!(t.main < 5e-4);
        assert_eq!(t.tau, 0.0);
        assert_eq!(t.delta, 0.0);
        assert_abs_diff_eq!(
            t.img,
            (0.5 + 0.3) * std::f64::consts::FRAC_PI_2,
            epsilon = 1e-9
        );
    }

    #[test]
    fn delta_term_vanishes_when_prior_is_bad() {
        let g = unit(0.0, 0.0, 1.0);
        let out = sample_output(
            g,
            g,
            0.9,
            EulerDelta { delta_x: 0.7, delta_y: -0.3 },
        );
        let t = loss_terms(&out, g, 1.0);
        assert_eq!(t.delta, 0.0, "tau_star = 1 disables delta regularization");
    }

    #[test]
    fn orthogonal_prediction_term_values() {
        // g_pred perpendicular to g_star, delta = (45 deg, 0),
        // tau_star = 0, tau = 0.
        let g_star = unit(0.0, 0.0, 1.0);
        let g_pred = unit(1.0, 0.0, 0.0);
        let out = sample_output(
            g_pred,
            g_pred,
            0.0,
            EulerDelta { delta_x: std::f64::consts::FRAC_PI_4, delta_y: 0.0 },
        );
        let t = loss_terms(&out, g_star, 0.0);
        assert_abs_diff_eq!(t.main, std::f64::consts::FRAC_PI_2, epsilon = 1e-9);
        assert_abs_diff_eq!(t.delta, 0.61685, epsilon = 1e-4);
        assert_eq!(t.tau, 0.0);
    }

    #[test]
    fn total_loss_identity_and_linearity() {
        let g = unit(0.0, 1.0, 0.0);
        let out = sample_output(
            unit(1.0, 0.0, 0.0),
            unit(0.0, 0.0, 1.0),
            0.7,
            EulerDelta { delta_x: 0.2, delta_y: 0.1 },
        );
        let terms: Vec<SampleTerms> = (0..4).map(|_| loss_terms(&out, g, 0.4)).collect();
        let w = LossWeights::default();
        let b = total_loss(&terms, &w).unwrap();

        // Mean of identical samples equals the per-sample values.
        assert_abs_diff_eq!(b.main, terms[0].main, epsilon = 1e-12);
        assert_abs_diff_eq!(b.img, terms[0].img, epsilon = 1e-12);
        // Breakdown identity.
        assert_abs_diff_eq!(
            b.total,
            b.main + w.lambda_delta * b.delta + w.lambda_tau * b.tau + w.lambda_img * b.img,
            epsilon = 1e-12
        );

        // Doubling lambda_tau moves only the tau contribution.
        let w2 = LossWeights { lambda_tau: 2.0 * w.lambda_tau, ..w };
        let b2 = total_loss(&terms, &w2).unwrap();
        assert_abs_diff_eq!(b2.total - b.total, w.lambda_tau * b.tau, epsilon = 1e-12);

        assert!(matches!(total_loss(&[], &w), Err(Error::EmptyBatch)));
    }

    #[test]
    fn total_matches_scalar_resummation() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let w = LossWeights::default();
        let terms: Vec<SampleTerms> = (0..33)
            .map(|_| SampleTerms {
                main: rng.gen_range(0.0..3.0),
                delta: rng.gen_range(0.0..1.0),
                tau: rng.gen_range(0.0..1.0),
                img: rng.gen_range(0.0..4.5),
            })
            .collect();
        let b = total_loss(&terms, &w).unwrap();
        // Independent summation oracle.
        let mut acc = 0.0;
        for t in &terms {
            acc += t.main + w.lambda_delta * t.delta + w.lambda_tau * t.tau + w.lambda_img * t.img;
        }
        assert_abs_diff_eq!(b.total, acc / terms.len() as f64, epsilon = 1e-12);
    }

    #[test]
    fn loss_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        for _ in 0..500 {
            let out = sample_output(
                random_unit(&mut rng),
                random_unit(&mut rng),
                rng.gen_range(0.0..1.0),
                EulerDelta {
                    delta_x: rng.gen_range(-0.785..0.785),
                    delta_y: rng.gen_range(-0.785..0.785),
                },
            );
            let tau_star = oracle_tau(rng.gen_range(0.0..90.0));
            let t = loss_terms(&out, random_unit(&mut rng), tau_star);
            assert!(t.main >= 0.0 && t.main <= std::f64::consts::PI);
            assert!(t.tau >= 0.0 && t.tau <= 1.0);
            assert!(t.delta >= 0.0);
            // Weight of the image term sits in [0.5, 1.5].
            assert!(t.img >= 0.0 && t.img <= 1.5 * std::f64::consts::PI);
        }
    }

    #[test]
    fn gradients_match_finite_differences_per_term() {
        // Each term in isolation, then the composite.
        for (i, mask) in [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [1.0, 1.0, 1.0, 1.0],
        ]
        .iter()
        .enumerate()
        {
            let report = grad_check_masked(100 + i as u64, 8, *mask).unwrap();
            assert!(
                report.passed(),
                "term mask {mask:?}: max rel err {}",
                report.max_rel_err
            );
        }
    }
}
