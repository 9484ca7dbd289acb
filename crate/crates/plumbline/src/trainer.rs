//! Adam + cosine-annealing training loop and the synthetic desk-scale
//! dataset generator that stands in for a CNN backbone.
//!
//! Synthetic samples embed the true gravity direction linearly into a
//! feature vector (plus noise and distractor coordinates) and corrupt
//! the prior by rotating the truth through a drift angle drawn from a
//! configurable mixture, so the gate has a real error distribution to
//! learn from.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::calibnet::{
    backward_into, forward, CalibratorParams, GradientSet,
};
use crate::error::{Error, Result};
use crate::geom3::{angle_deg, normalize, UnitVec3, Vec3};
use crate::losses::{
    loss_output_grads, loss_terms, oracle_tau, total_loss, LossBreakdown, LossWeights,
    SampleTerms,
};

/// Cosine schedule stepping granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrStep {
    Epoch,
    Iter,
}

/// Optimizer and loop configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Learning rate for the prediction heads.
    pub lr_heads: f64,
    /// Reduced rate reserved for backbone fine-tuning slots; carried in
    /// the config for fidelity but unused when no backbone is trained.
    pub lr_backbone_slots: f64,
    pub epochs: usize,
    pub batch: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub seed: u64,
    pub lr_step: LrStep,
    /// Optional global-norm gradient clip.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_heads: 5e-5,
            lr_backbone_slots: 2e-6,
            epochs: 50,
            batch: 64,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            seed: 0,
            lr_step: LrStep::Epoch,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr_heads <= 0.0 || self.batch == 0 {
            return Err(Error::InvalidConfig(
                "learning rate and batch size must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Cosine annealing from `base_lr` at t = 0 to zero at t = total.
pub fn cosine_lr(base_lr: f64, t: f64, total: f64) -> f64 {
    let x = (t / total).clamp(0.0, 1.0);
    (0.5 * base_lr * (1.0 + (std::f64::consts::PI * x).cos())).max(0.0)
}

/// Adam moment accumulators, one slot per parameter in declaration
/// order.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &CalibratorParams) -> AdamState {
        let n = params.n_params();
        AdamState { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(
    params: &mut CalibratorParams,
    grads: &GradientSet,
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    if state.m.len() != params.n_params() || grads.n_params() != params.n_params() {
        return Err(Error::ShapeMismatch {
            expected: params.n_params(),
            got: grads.n_params().min(state.m.len()),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    let mut idx = 0;
    let grad_blocks = grads.blocks().map(|l| {
        let mut vals = l.w.clone();
        vals.extend_from_slice(&l.b);
        vals
    });
    for (block, gvals) in params.blocks_mut().into_iter().zip(grad_blocks) {
        for (p, g) in block.w.iter_mut().chain(block.b.iter_mut()).zip(gvals) {
            let m = &mut state.m[idx];
            let v = &mut state.v[idx];
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps_adam);
            idx += 1;
        }
    }
    Ok(())
}

/// Synthetic dataset configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Feature dimension.
    pub c: usize,
    pub n_train: usize,
    pub n_val: usize,
    /// Gaussian noise added to the informative feature coordinates.
    pub feature_noise_sigma: f64,
    /// Trailing coordinates that carry pure noise.
    pub distractor_dims: usize,
    /// Row scale of the embedding; sets the magnitude of the
    /// orientation-dependent part of the features.
    pub feature_scale: f64,
    /// Scale of the fixed per-coordinate offset. Real pooled backbone
    /// features are post-activation values with large means, and the
    /// mean component is what lets the conditioning pathway pick up
    /// consistent gradients.
    pub offset_scale: f64,
    /// (weight, mean_deg, std_deg) components of the prior drift angle.
    pub drift_mixture: Vec<(f64, f64, f64)>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            c: 64,
            n_train: 20_000,
            n_val: 4_000,
            feature_noise_sigma: 0.7,
            distractor_dims: 16,
            feature_scale: 1.0,
            offset_scale: 0.5,
            drift_mixture: vec![(0.6, 8.0, 4.0), (0.3, 25.0, 8.0), (0.1, 50.0, 15.0)],
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_val == 0 || self.c == 0 {
            return Err(Error::InvalidConfig("counts and dims must be positive".into()));
        }
        if self.distractor_dims >= self.c {
            return Err(Error::InvalidConfig(
                "distractor dims must leave informative coordinates".into(),
            ));
        }
        if self.feature_scale <= 0.0 {
            return Err(Error::InvalidConfig("feature scale must be positive".into()));
        }
        let wsum: f64 = self.drift_mixture.iter().map(|(w, _, _)| w).sum();
        if self.drift_mixture.is_empty() || (wsum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "mixture weights must sum to 1, got {wsum}"
            )));
        }
        Ok(())
    }
}

/// One synthetic training record: features plus the supervision the
/// loss needs. Mirrors a labeled frame with its feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub f: Vec<f64>,
    pub g_star: UnitVec3,
    pub g_prior: UnitVec3,
    pub prior_error_deg: f64,
    pub nongravity_ratio: f64,
}

fn random_unit(rng: &mut impl Rng) -> UnitVec3 {
    let v: [f64; 3] = UnitSphere.sample(rng);
    normalize(Vec3::new(v[0], v[1], v[2])).expect("unit sphere sample")
}

/// Rotate `g` away from itself by `angle` about a random perpendicular
/// axis; the angular error of the result is exactly `angle`.
fn drift(g: UnitVec3, angle: f64, rng: &mut impl Rng) -> UnitVec3 {
    let tangent = loop {
        let v = random_unit(rng);
        let rej = v.as_vec3() - g.as_vec3().scale(v.dot(&g));
        if rej.norm() > 1e-9 {
            break normalize(rej).unwrap();
        }
    };
    normalize(g.as_vec3().scale(angle.cos()) + tangent.as_vec3().scale(angle.sin()))
        .expect("rotated direction stays unit")
}

/// Generate train and validation sets. The linear embedding, offset,
/// and both sample streams are fully determined by the seed.
pub fn make_synth(cfg: &SynthConfig) -> Result<(Vec<SynthSample>, Vec<SynthSample>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let informative = cfg.c - cfg.distractor_dims;
    let std_normal = Normal::new(0.0, 1.0).unwrap();

    // Fixed seeded embedding shared by both splits.
    let a: Vec<f64> = (0..informative * 3)
        .map(|_| cfg.feature_scale * std_normal.sample(&mut rng))
        .collect();
    let b: Vec<f64> = (0..informative)
        .map(|_| cfg.offset_scale * std_normal.sample(&mut rng))
        .collect();

    let cum_weights: Vec<f64> = cfg
        .drift_mixture
        .iter()
        .scan(0.0, |acc, (w, _, _)| {
            *acc += w;
            Some(*acc)
        })
        .collect();

    let draw = |rng: &mut ChaCha8Rng| -> Result<SynthSample> {
        let g_star = random_unit(rng);

        let pick: f64 = rng.gen_range(0.0..1.0);
        let comp = cum_weights.iter().position(|&c| pick < c).unwrap_or(cfg.drift_mixture.len() - 1);
        let (_, mean_deg, std_deg) = cfg.drift_mixture[comp];
        let angle_deg_drawn = if std_deg > 0.0 {
            Normal::new(mean_deg, std_deg)
                .map_err(|e| Error::InvalidConfig(format!("bad mixture component: {e}")))?
                .sample(rng)
                .abs()
        } else {
            mean_deg
        };
        let g_prior = drift(g_star, angle_deg_drawn.to_radians(), rng);

        let mut f = Vec::with_capacity(cfg.c);
        let gs = [g_star.x, g_star.y, g_star.z];
        for i in 0..informative {
            let mut acc = b[i];
            for (j, gsj) in gs.iter().enumerate() {
                acc += a[i * 3 + j] * gsj;
            }
            if cfg.feature_noise_sigma > 0.0 {
                acc += cfg.feature_noise_sigma * std_normal.sample(rng);
            }
            f.push(acc);
        }
        for _ in 0..cfg.distractor_dims {
            f.push(std_normal.sample(rng));
        }

        // Monotone-in-expectation noisy stand-in for dynamic motion.
        let r = (0.01 * angle_deg_drawn * (1.0 + 0.3 * std_normal.sample(rng))).max(0.0);

        Ok(SynthSample {
            f,
            g_star,
            g_prior,
            prior_error_deg: angle_deg(g_prior, g_star),
            nongravity_ratio: r,
        })
    };

    let train: Vec<SynthSample> = (0..cfg.n_train)
        .map(|_| draw(&mut rng))
        .collect::<Result<_>>()?;
    let val: Vec<SynthSample> = (0..cfg.n_val)
        .map(|_| draw(&mut rng))
        .collect::<Result<_>>()?;
    Ok((train, val))
}

/// Angular-error means (degrees) of each output against the truth.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ValAngles {
    pub pred_deg: f64,
    pub corr_deg: f64,
    pub img_deg: f64,
    pub prior_deg: f64,
}

/// Per-epoch record.
#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train: LossBreakdown,
    pub val: LossBreakdown,
    pub val_angles: ValAngles,
}

pub type History = Vec<EpochStats>;

/// Forward the whole set without updates; mean losses and angles.
pub fn evaluate(
    params: &CalibratorParams,
    data: &[SynthSample],
    w: &LossWeights,
) -> Result<(LossBreakdown, ValAngles)> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut terms = Vec::with_capacity(data.len());
    let mut sums = [0.0f64; 4];
    for s in data {
        let (out, _) = forward(params, &s.f, s.g_prior)?;
        terms.push(loss_terms(&out, s.g_star, oracle_tau(s.prior_error_deg)));
        sums[0] += angle_deg(out.g_pred, s.g_star);
        sums[1] += angle_deg(out.g_corr, s.g_star);
        sums[2] += angle_deg(out.g_img, s.g_star);
        sums[3] += s.prior_error_deg;
    }
    let n = data.len() as f64;
    Ok((
        total_loss(&terms, w)?,
        ValAngles {
            pred_deg: sums[0] / n,
            corr_deg: sums[1] / n,
            img_deg: sums[2] / n,
            prior_deg: sums[3] / n,
        },
    ))
}

/// Mean gate value over a filtered subset; `None` when nothing matches.
pub fn mean_tau_where(
    params: &CalibratorParams,
    data: &[SynthSample],
    mut keep: impl FnMut(&SynthSample) -> bool,
) -> Result<Option<f64>> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in data.iter().filter(|s| keep(s)) {
        let (out, _) = forward(params, &s.f, s.g_prior)?;
        sum += out.tau;
        n += 1;
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Train over shuffled minibatches with the cosine-annealed Adam
/// schedule. Returns the trained parameters and the per-epoch history.
pub fn train_loop(
    mut params: CalibratorParams,
    train: &[SynthSample],
    val: &[SynthSample],
    w: &LossWeights,
    cfg: &TrainConfig,
) -> Result<(CalibratorParams, History)> {
    cfg.validate()?;
    w.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for s in train.iter().chain(val).take(1) {
        if s.f.len() != params.dims.c {
            return Err(Error::ShapeMismatch { expected: params.dims.c, got: s.f.len() });
        }
    }

    let mut adam = AdamState::new(&params);
    let mut history = Vec::with_capacity(cfg.epochs);
    let n_batches = train.len().div_ceil(cfg.batch);

    for epoch in 0..cfg.epochs {
        // Seed-deterministic epoch permutation.
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64).wrapping_mul(0x9E37_79B9));
        for i in (1..order.len()).rev() {
            order.swap(i, shuffle_rng.gen_range(0..=i));
        }

        let epoch_lr = cosine_lr(cfg.lr_heads, epoch as f64, cfg.epochs as f64);
        let mut epoch_terms: Vec<SampleTerms> = Vec::with_capacity(train.len());

        for (batch_idx, batch) in order.chunks(cfg.batch).enumerate() {
            let lr = match cfg.lr_step {
                LrStep::Epoch => epoch_lr,
                LrStep::Iter => cosine_lr(
                    cfg.lr_heads,
                    epoch as f64 + batch_idx as f64 / n_batches as f64,
                    cfg.epochs as f64,
                ),
            };

            let mut grads: GradientSet = params.zeros_like();
            for &idx in batch {
                let s = &train[idx];
                let tau_star = oracle_tau(s.prior_error_deg);
                let (out, cache) = forward(&params, &s.f, s.g_prior)?;
                let upstream = loss_output_grads(&out, s.g_star, tau_star, w, batch.len());
                backward_into(&params, &cache, &upstream, &mut grads);
                epoch_terms.push(loss_terms(&out, s.g_star, tau_star));
            }

            if let Some(max_norm) = cfg.grad_clip {
                clip_global_norm(&mut grads, max_norm);
            }
            adam_step(&mut params, &grads, &mut adam, lr, cfg)?;
        }

        let train_breakdown = total_loss(&epoch_terms, w)?;
        let (val_breakdown, val_angles) = evaluate(&params, val, w)?;
        history.push(EpochStats {
            epoch,
            lr: epoch_lr,
            train: train_breakdown,
            val: val_breakdown,
            val_angles,
        });
    }

    Ok((params, history))
}

fn clip_global_norm(grads: &mut GradientSet, max_norm: f64) {
    let norm: f64 = grads
        .blocks()
        .iter()
        .flat_map(|l| l.w.iter().chain(&l.b))
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for l in grads.blocks_mut() {
            l.w.iter_mut().for_each(|g| *g *= scale);
            l.b.iter_mut().for_each(|g| *g *= scale);
        }
    }
}

// ---------------------------------------------------------------------------
// Dataset and history files

/// Write a dataset as CSV: supervision columns then feature columns.
pub fn write_dataset(path: &Path, data: &[SynthSample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let c = data.first().map_or(0, |s| s.f.len());
    write!(
        w,
        "gstar_x,gstar_y,gstar_z,gprior_x,gprior_y,gprior_z,prior_error_deg,nongravity_ratio"
    )?;
    for i in 0..c {
        write!(w, ",f_{i}")?;
    }
    writeln!(w)?;
    for s in data {
        write!(
            w,
            "{},{},{},{},{},{},{},{}",
            s.g_star.x,
            s.g_star.y,
            s.g_star.z,
            s.g_prior.x,
            s.g_prior.y,
            s.g_prior.z,
            s.prior_error_deg,
            s.nongravity_ratio
        )?;
        for v in &s.f {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a dataset written by [`write_dataset`] (or any precomputed
/// feature CSV in the same layout).
pub fn read_dataset(path: &Path) -> Result<Vec<SynthSample>> {
    let file = File::open(path).map_err(|_| Error::MissingFile { path: path.to_path_buf() })?;
    let malformed = |line: usize, reason: String| Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || (i == 0 && trimmed.starts_with("gstar"))
        {
            continue;
        }
        let vals: Vec<f64> = trimmed
            .split(',')
            .enumerate()
            .map(|(j, tok)| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| malformed(line_no, format!("field {} is not a number", j + 1)))
            })
            .collect::<Result<_>>()?;
        if vals.len() < 9 {
            return Err(malformed(line_no, format!("expected >= 9 fields, got {}", vals.len())));
        }
        let g_star = UnitVec3::new(vals[0], vals[1], vals[2])
            .map_err(|_| malformed(line_no, "g_star is not unit".into()))?;
        let g_prior = UnitVec3::new(vals[3], vals[4], vals[5])
            .map_err(|_| malformed(line_no, "g_prior is not unit".into()))?;
        out.push(SynthSample {
            f: vals[8..].to_vec(),
            g_star,
            g_prior,
            prior_error_deg: vals[6],
            nongravity_ratio: vals[7],
        });
    }
    Ok(out)
}

/// Write the per-epoch history CSV.
pub fn write_history(path: &Path, history: &History) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "epoch,lr,train_main,train_delta,train_tau,train_img,train_total,\
         val_main,val_delta,val_tau,val_img,val_total,\
         val_pred_deg,val_corr_deg,val_img_deg,val_prior_deg"
    )?;
    for e in history {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            e.epoch,
            e.lr,
            e.train.main,
            e.train.delta,
            e.train.tau,
            e.train.img,
            e.train.total,
            e.val.main,
            e.val.delta,
            e.val.tau,
            e.val.img,
            e.val.total,
            e.val_angles.pred_deg,
            e.val_angles.corr_deg,
            e.val_angles.img_deg,
            e.val_angles.prior_deg
        )?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Plain-text key-value configuration

/// Everything the synth/train commands configure.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub synth: SynthConfigWrapper,
    pub train: TrainConfig,
    pub weights: LossWeights,
    pub dims: DimsOverride,
}

/// SynthConfig with Default in a separate wrapper so RunConfig can
/// derive Default without clashing field semantics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SynthConfigWrapper(pub SynthConfig);

/// Optional overrides for the hidden widths.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DimsOverride {
    pub h_prior: Option<usize>,
    pub h_head: Option<usize>,
    pub h_img: Option<usize>,
}

impl RunConfig {
    /// Apply one `key = value` pair.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::InvalidConfig(format!("bad value for {what}: '{value}'"));
        let synth = &mut self.synth.0;
        match key {
            "c" => synth.c = value.parse().map_err(|_| bad("c"))?,
            "n_train" => synth.n_train = value.parse().map_err(|_| bad("n_train"))?,
            "n_val" => synth.n_val = value.parse().map_err(|_| bad("n_val"))?,
            "feature_noise_sigma" => {
                synth.feature_noise_sigma = value.parse().map_err(|_| bad("feature_noise_sigma"))?
            }
            "distractor_dims" => {
                synth.distractor_dims = value.parse().map_err(|_| bad("distractor_dims"))?
            }
            "feature_scale" => {
                synth.feature_scale = value.parse().map_err(|_| bad("feature_scale"))?
            }
            "offset_scale" => {
                synth.offset_scale = value.parse().map_err(|_| bad("offset_scale"))?
            }
            "drift_mixture" => synth.drift_mixture = parse_mixture(value)?,
            "data_seed" => synth.seed = value.parse().map_err(|_| bad("data_seed"))?,
            "seed" => self.train.seed = value.parse().map_err(|_| bad("seed"))?,
            "lr_heads" => self.train.lr_heads = value.parse().map_err(|_| bad("lr_heads"))?,
            "lr_backbone_slots" => {
                self.train.lr_backbone_slots =
                    value.parse().map_err(|_| bad("lr_backbone_slots"))?
            }
            "epochs" => self.train.epochs = value.parse().map_err(|_| bad("epochs"))?,
            "batch" => self.train.batch = value.parse().map_err(|_| bad("batch"))?,
            "beta1" => self.train.beta1 = value.parse().map_err(|_| bad("beta1"))?,
            "beta2" => self.train.beta2 = value.parse().map_err(|_| bad("beta2"))?,
            "eps_adam" => self.train.eps_adam = value.parse().map_err(|_| bad("eps_adam"))?,
            "lr_step" => {
                self.train.lr_step = match value {
                    "epoch" => LrStep::Epoch,
                    "iter" => LrStep::Iter,
                    _ => return Err(bad("lr_step (epoch|iter)")),
                }
            }
            "grad_clip" => {
                self.train.grad_clip = match value {
                    "off" | "none" => None,
                    v => Some(v.parse().map_err(|_| bad("grad_clip"))?),
                }
            }
            "lambda_delta" => {
                self.weights.lambda_delta = value.parse().map_err(|_| bad("lambda_delta"))?
            }
            "lambda_tau" => {
                self.weights.lambda_tau = value.parse().map_err(|_| bad("lambda_tau"))?
            }
            "lambda_img" => {
                self.weights.lambda_img = value.parse().map_err(|_| bad("lambda_img"))?
            }
            "h_prior" => self.dims.h_prior = Some(value.parse().map_err(|_| bad("h_prior"))?),
            "h_head" => self.dims.h_head = Some(value.parse().map_err(|_| bad("h_head"))?),
            "h_img" => self.dims.h_img = Some(value.parse().map_err(|_| bad("h_img"))?),
            other => {
                return Err(Error::InvalidConfig(format!("unknown config key '{other}'")))
            }
        }
        Ok(())
    }

    /// Load `key = value` lines; `#` starts a comment.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let file = File::open(path).map_err(|_| Error::MissingFile { path: path.to_path_buf() })?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let stripped = line.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                return Err(Error::MalformedRow {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: "expected 'key = value'".into(),
                });
            };
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }
}

/// Parse `w:mean:std,w:mean:std,...` mixture syntax.
pub fn parse_mixture(s: &str) -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let nums: Vec<&str> = part.split(':').collect();
        if nums.len() != 3 {
            return Err(Error::InvalidConfig(format!(
                "mixture component '{part}' must be weight:mean_deg:std_deg"
            )));
        }
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad mixture number '{t}'")))
        };
        out.push((parse(nums[0])?, parse(nums[1])?, parse(nums[2])?));
    }
    Ok(out)
}
