//! The calibration network: prior-conditioned feature modulation, a
//! prior-correction branch, an image-only branch, and adaptive gating.
//! Forward pass and exact reverse-mode gradients, written out by hand
//! so every derivative is inspectable and testable against finite
//! differences.
//!
//! Feature vectors come from a pluggable provider (the synthetic
//! generator in `trainer`, or a precomputed feature CSV); nothing here
//! assumes a particular backbone.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom3::{
    euler_rot, normalize, Axis, EulerDelta, UnitVec3, Vec3, DELTA_MAX, EPS_NORM,
};

/// Hidden-layer activation choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative given pre- and post-activation values.
    fn derivative(&self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - post * post,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Network dimensions and activation choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    /// Feature dimension.
    pub c: usize,
    /// Hidden width of the prior-conditioning MLP.
    pub h_prior: usize,
    /// Hidden width of the correction/gate head.
    pub h_head: usize,
    /// Hidden width of the image-only head.
    pub h_img: usize,
    pub prior_act: Activation,
    pub head_act: Activation,
}

impl Default for NetDims {
    fn default() -> Self {
        NetDims {
            c: 64,
            h_prior: 64,
            h_head: 128,
            h_img: 64,
            prior_act: Activation::Tanh,
            head_act: Activation::Relu,
        }
    }
}

impl NetDims {
    pub fn validate(&self) -> Result<()> {
        if self.c == 0 || self.h_prior == 0 || self.h_head == 0 || self.h_img == 0 {
            return Err(Error::InvalidConfig("network dims must be positive".into()));
        }
        Ok(())
    }
}

/// A dense layer, weights row-major (out x in).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    fn zeros(in_dim: usize, out_dim: usize) -> Linear {
        Linear {
            in_dim,
            out_dim,
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
        }
    }

    fn init_uniform(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Linear {
        Linear::init_uniform_gain(in_dim, out_dim, 1.0, rng)
    }

    /// Symmetric fan-in-scaled band, scaled by the usual activation
    /// gain (5/3 for tanh, sqrt(2) for relu hidden layers).
    fn init_uniform_gain(in_dim: usize, out_dim: usize, gain: f64, rng: &mut impl Rng) -> Linear {
        let bound = gain * (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut l = Linear::zeros(in_dim, out_dim);
        for w in &mut l.w {
            *w = rng.gen_range(-bound..bound);
        }
        l
    }

    fn with_random_bias(mut self, rng: &mut impl Rng) -> Linear {
        let bound = (6.0 / (self.in_dim + self.out_dim) as f64).sqrt();
        for b in &mut self.b {
            *b = rng.gen_range(-bound..bound);
        }
        self
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.b.clone();
        for (o, row) in out.iter_mut().zip(self.w.chunks_exact(self.in_dim)) {
            for (wi, xi) in row.iter().zip(x) {
                *o += wi * xi;
            }
        }
        out
    }

    /// Accumulate parameter gradients and return the input gradient.
    fn backward(&self, x: &[f64], dy: &[f64], gw: &mut [f64], gb: &mut [f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_dim];
        for (i, (&dyi, row)) in dy.iter().zip(self.w.chunks_exact(self.in_dim)).enumerate() {
            gb[i] += dyi;
            let grow = &mut gw[i * self.in_dim..(i + 1) * self.in_dim];
            for ((g, xi), (dxj, wj)) in
                grow.iter_mut().zip(x).zip(dx.iter_mut().zip(row))
            {
                *g += dyi * xi;
                *dxj += dyi * wj;
            }
        }
        dx
    }
}

/// All trainable weights: the prior-conditioning MLP (3 -> H_prior ->
/// 2C), the correction/gate head (C -> H_head -> 3) and the image head
/// (C -> H_img -> 3).
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratorParams {
    pub dims: NetDims,
    pub prior_l1: Linear,
    pub prior_l2: Linear,
    pub head_l1: Linear,
    pub head_l2: Linear,
    pub img_l1: Linear,
    pub img_l2: Linear,
}

/// Gradients use the same layout as the parameters.
pub type GradientSet = CalibratorParams;

/// Initial gate logit bias: sigma(-3) ~ 0.047, so a fresh network
/// trusts the corrected prior.
pub const TAU_BIAS_INIT: f64 = -3.0;

/// Seeded parameter initialization.
///
/// A fresh network trusts the prior: the final prior-MLP layer is
/// zero-initialized so the conditioning starts exactly at the identity,
/// the residual-correction output rows start at zero so the corrected
/// prior equals the prior, and the gate logit bias sits at
/// [`TAU_BIAS_INIT`]. The gate's readout row stays randomly initialized
/// so its supervision drives the conditioning pathway from the first
/// step (the -3 bias keeps the initial gate value small either way).
/// Hidden layers draw from a symmetric fan-in-scaled band.
pub fn init_params(dims: NetDims, seed: u64) -> Result<CalibratorParams> {
    dims.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tanh_gain = 5.0 / 3.0;
    let relu_gain = std::f64::consts::SQRT_2;
    let prior_l1 = Linear::init_uniform_gain(3, dims.h_prior, tanh_gain, &mut rng);
    let prior_l2 = Linear::zeros(dims.h_prior, 2 * dims.c);
    let head_l1 =
        Linear::init_uniform_gain(dims.c, dims.h_head, relu_gain, &mut rng).with_random_bias(&mut rng);
    let mut head_l2 = Linear::init_uniform(dims.h_head, 3, &mut rng);
    for w in &mut head_l2.w[..2 * dims.h_head] {
        *w = 0.0;
    }
    head_l2.b[2] = TAU_BIAS_INIT;
    let img_l1 =
        Linear::init_uniform_gain(dims.c, dims.h_img, relu_gain, &mut rng).with_random_bias(&mut rng);
    // A non-zero output bias keeps the image branch away from the exact
    // zero vector when its hidden layer happens to be fully inactive.
    let img_l2 = Linear::init_uniform(dims.h_img, 3, &mut rng).with_random_bias(&mut rng);
    Ok(CalibratorParams { dims, prior_l1, prior_l2, head_l1, head_l2, img_l1, img_l2 })
}

impl CalibratorParams {
    /// Parameter blocks in declaration order (also the checkpoint and
    /// flattening order).
    pub fn blocks(&self) -> [&Linear; 6] {
        [
            &self.prior_l1,
            &self.prior_l2,
            &self.head_l1,
            &self.head_l2,
            &self.img_l1,
            &self.img_l2,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Linear; 6] {
        [
            &mut self.prior_l1,
            &mut self.prior_l2,
            &mut self.head_l1,
            &mut self.head_l2,
            &mut self.img_l1,
            &mut self.img_l2,
        ]
    }

    pub fn n_params(&self) -> usize {
        self.blocks().iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn zeros_like(&self) -> CalibratorParams {
        let mut z = self.clone();
        for l in z.blocks_mut() {
            l.w.iter_mut().for_each(|v| *v = 0.0);
            l.b.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    /// Flatten in declaration order: per block, weights then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in self.blocks() {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::ShapeMismatch { expected: self.n_params(), got: flat.len() });
        }
        let mut it = flat.iter();
        for l in self.blocks_mut() {
            for w in &mut l.w {
                *w = *it.next().unwrap();
            }
            for b in &mut l.b {
                *b = *it.next().unwrap();
            }
        }
        Ok(())
    }
}

/// Everything the forward pass produces.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub g_pred: UnitVec3,
    pub g_corr: UnitVec3,
    pub g_img: UnitVec3,
    pub tau: f64,
    pub delta: EulerDelta,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Intermediates retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    f: Vec<f64>,
    g_hat: UnitVec3,
    prior_pre: Vec<f64>,
    prior_hidden: Vec<f64>,
    f_tilde: Vec<f64>,
    head_pre: Vec<f64>,
    head_hidden: Vec<f64>,
    head_out: [f64; 3],
    img_pre: Vec<f64>,
    img_hidden: Vec<f64>,
    img_norm: f64,
    // Correction chain: w1 = R_x(dx) g_hat, w2 = R_y(dy) w1.
    w1: Vec3,
    w2: Vec3,
    pub output: ForwardOutput,
}

/// Upstream derivatives of a scalar loss with respect to the outputs.
/// Slots not touched by a given loss term stay zero.
#[derive(Debug, Clone, Copy)]
pub struct OutputGrads {
    pub d_g_pred: Vec3,
    pub d_g_corr: Vec3,
    pub d_g_img: Vec3,
    pub d_tau: f64,
    pub d_delta_x: f64,
    pub d_delta_y: f64,
}

impl Default for OutputGrads {
    fn default() -> Self {
        OutputGrads {
            d_g_pred: Vec3::ZERO,
            d_g_corr: Vec3::ZERO,
            d_g_img: Vec3::ZERO,
            d_tau: 0.0,
            d_delta_x: 0.0,
            d_delta_y: 0.0,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Modulate features with the prior: f_tilde = gamma .* f + beta where
/// (gamma - 1, beta) come from the prior MLP. Zero-initialized final
/// weights make this the identity at the start of training.
pub fn film_condition(
    params: &CalibratorParams,
    f: &[f64],
    g_hat: UnitVec3,
) -> Result<Vec<f64>> {
    if f.len() != params.dims.c {
        return Err(Error::ShapeMismatch { expected: params.dims.c, got: f.len() });
    }
    let (gamma, beta) = prior_gamma_beta(params, g_hat).2;
    Ok(f.iter()
        .zip(gamma.iter().zip(&beta))
        .map(|(fi, (g, b))| g * fi + b)
        .collect())
}

type GammaBeta = (Vec<f64>, Vec<f64>);

/// Returns (pre-activation, hidden, (gamma, beta)).
fn prior_gamma_beta(params: &CalibratorParams, g_hat: UnitVec3) -> (Vec<f64>, Vec<f64>, GammaBeta) {
    let c = params.dims.c;
    let input = [g_hat.x, g_hat.y, g_hat.z];
    let pre = params.prior_l1.forward(&input);
    let hidden: Vec<f64> = pre.iter().map(|&x| params.dims.prior_act.apply(x)).collect();
    let out = params.prior_l2.forward(&hidden);
    let gamma: Vec<f64> = out[..c].iter().map(|o| 1.0 + o).collect();
    let beta = out[c..].to_vec();
    (pre, hidden, (gamma, beta))
}

/// Correction/gate and image heads. The correction head consumes the
/// conditioned features; the image head sees the raw features only.
pub fn heads_forward(
    params: &CalibratorParams,
    f_tilde: &[f64],
    f: &[f64],
) -> Result<(EulerDelta, f64, UnitVec3)> {
    let c = params.dims.c;
    if f_tilde.len() != c || f.len() != c {
        return Err(Error::ShapeMismatch { expected: c, got: f_tilde.len().min(f.len()) });
    }
    let (_, _, _, delta, tau) = head_branch(params, f_tilde);
    let (_, _, raw) = img_branch(params, f);
    let g_img = normalize(raw)?;
    Ok((delta, tau, g_img))
}

fn head_branch(
    params: &CalibratorParams,
    f_tilde: &[f64],
) -> (Vec<f64>, Vec<f64>, [f64; 3], EulerDelta, f64) {
    let pre = params.head_l1.forward(f_tilde);
    let hidden: Vec<f64> = pre.iter().map(|&x| params.dims.head_act.apply(x)).collect();
    let out = params.head_l2.forward(&hidden);
    let h = [out[0], out[1], out[2]];
    let delta = EulerDelta {
        delta_x: DELTA_MAX * h[0].tanh(),
        delta_y: DELTA_MAX * h[1].tanh(),
    };
    let tau = sigmoid(h[2]);
    (pre, hidden, h, delta, tau)
}

fn img_branch(params: &CalibratorParams, f: &[f64]) -> (Vec<f64>, Vec<f64>, Vec3) {
    let pre = params.img_l1.forward(f);
    let hidden: Vec<f64> = pre.iter().map(|&x| params.dims.head_act.apply(x)).collect();
    let out = params.img_l2.forward(&hidden);
    (pre, hidden, Vec3::new(out[0], out[1], out[2]))
}

/// Rotate the prior by the residual angles, X first then Y.
pub fn apply_correction(g_hat: UnitVec3, delta: &EulerDelta) -> UnitVec3 {
    let w1 = euler_rot(Axis::X, delta.delta_x).apply(g_hat.as_vec3());
    let w2 = euler_rot(Axis::Y, delta.delta_y).apply(w1);
    normalize(w2).expect("rotations preserve norm")
}

/// Convex combination of the two branches, renormalized. Exact at the
/// endpoints: tau = 0 returns the corrected prior bitwise, tau = 1 the
/// image estimate.
pub fn fuse(tau: f64, g_img: UnitVec3, g_corr: UnitVec3) -> Result<UnitVec3> {
    if tau == 0.0 {
        return Ok(g_corr);
    }
    if tau == 1.0 {
        return Ok(g_img);
    }
    normalize(g_img.as_vec3().scale(tau) + g_corr.as_vec3().scale(1.0 - tau))
}

/// Full forward pass; the cache retains every intermediate the backward
/// pass needs.
pub fn forward(
    params: &CalibratorParams,
    f: &[f64],
    g_hat: UnitVec3,
) -> Result<(ForwardOutput, ForwardCache)> {
    let c = params.dims.c;
    if f.len() != c {
        return Err(Error::ShapeMismatch { expected: c, got: f.len() });
    }

    let (prior_pre, prior_hidden, (gamma, beta)) = prior_gamma_beta(params, g_hat);
    let f_tilde: Vec<f64> = f
        .iter()
        .zip(gamma.iter().zip(&beta))
        .map(|(fi, (g, b))| g * fi + b)
        .collect();

    let (head_pre, head_hidden, head_out, delta, tau) = head_branch(params, &f_tilde);
    let (img_pre, img_hidden, img_raw) = img_branch(params, f);
    let img_norm = img_raw.norm();
    if img_norm <= EPS_NORM {
        return Err(Error::DegenerateVector { norm: img_norm, eps: EPS_NORM });
    }
    let g_img = normalize(img_raw)?;

    let w1 = euler_rot(Axis::X, delta.delta_x).apply(g_hat.as_vec3());
    let w2 = euler_rot(Axis::Y, delta.delta_y).apply(w1);
    let g_corr = normalize(w2)?;

    let g_pred = fuse(tau, g_img, g_corr)?;

    let output = ForwardOutput { g_pred, g_corr, g_img, tau, delta, gamma, beta };
    let cache = ForwardCache {
        f: f.to_vec(),
        g_hat,
        prior_pre,
        prior_hidden,
        f_tilde,
        head_pre,
        head_hidden,
        head_out,
        img_pre,
        img_hidden,

        img_norm,
        w1,
        w2,
        output: output.clone(),
    };
    Ok((output, cache))
}

/// Jacobian-vector product of normalize at raw vector `v` with unit
/// image `n`: dv = (dy - (dy . n) n) / |v|.
fn normalize_backward(v_norm: f64, n: Vec3, dy: Vec3) -> Vec3 {
    (dy - n.scale(dy.dot(&n))).scale(1.0 / v_norm)
}

/// Exact reverse-mode gradients of a scalar loss with the given output
/// derivatives. The prior direction is sensor data: no gradient flows
/// into it.
pub fn backward(
    params: &CalibratorParams,
    cache: &ForwardCache,
    upstream: &OutputGrads,
) -> GradientSet {
    let mut grads = params.zeros_like();
    backward_into(params, cache, upstream, &mut grads);
    grads
}

/// Accumulating variant of [`backward`] for batch reductions.
pub fn backward_into(
    params: &CalibratorParams,
    cache: &ForwardCache,
    upstream: &OutputGrads,
    grads: &mut GradientSet,
) {
    let out = &cache.output;
    let c = params.dims.c;

    // Fusion: g_pred = normalize(tau g_img + (1 - tau) g_corr).
    let v_fuse = out.g_img.as_vec3().scale(out.tau)
        + out.g_corr.as_vec3().scale(1.0 - out.tau);
    let dv_fuse = normalize_backward(v_fuse.norm(), out.g_pred.as_vec3(), upstream.d_g_pred);
    let mut d_tau = upstream.d_tau
        + dv_fuse.dot(&(out.g_img.as_vec3() - out.g_corr.as_vec3()));
    let d_g_img = upstream.d_g_img + dv_fuse.scale(out.tau);
    let d_g_corr = upstream.d_g_corr + dv_fuse.scale(1.0 - out.tau);

    // Image branch: g_img = normalize(ImgHead(f)).
    let dv_img = normalize_backward(cache.img_norm, out.g_img.as_vec3(), d_g_img);
    let d_img_out = [dv_img.x, dv_img.y, dv_img.z];
    let d_img_hidden = params.img_l2.backward(
        &cache.img_hidden,
        &d_img_out,
        &mut grads.img_l2.w,
        &mut grads.img_l2.b,
    );
    let d_img_pre: Vec<f64> = d_img_hidden
        .iter()
        .zip(cache.img_pre.iter().zip(&cache.img_hidden))
        .map(|(d, (&pre, &post))| d * params.dims.head_act.derivative(pre, post))
        .collect();
    // Input gradient of the image head lands on f, which is data.
    let _ = params.img_l1.backward(
        &cache.f,
        &d_img_pre,
        &mut grads.img_l1.w,
        &mut grads.img_l1.b,
    );

    // Correction chain: g_corr = normalize(R_y(dy) R_x(dx) g_hat).
    let dw2 = normalize_backward(cache.w2.norm(), out.g_corr.as_vec3(), d_g_corr);
    let dy_angle = out.delta.delta_y;
    let dx_angle = out.delta.delta_x;
    // dR_y/dtheta applied to w1.
    let (sy, cy) = dy_angle.sin_cos();
    let dry_w1 = Vec3::new(
        -sy * cache.w1.x + cy * cache.w1.z,
        0.0,
        -cy * cache.w1.x - sy * cache.w1.z,
    );
    let mut d_delta_y = upstream.d_delta_y + dw2.dot(&dry_w1);
    let dw1 = euler_rot(Axis::Y, dy_angle).transpose().apply(dw2);
    let (sx, cx) = dx_angle.sin_cos();
    let g = cache.g_hat.as_vec3();
    let drx_g = Vec3::new(0.0, -sx * g.y - cx * g.z, cx * g.y - sx * g.z);
    let mut d_delta_x = upstream.d_delta_x + dw1.dot(&drx_g);

    // Head outputs: delta = DELTA_MAX tanh(h_12), tau = sigmoid(h_3).
    let th_x = cache.head_out[0].tanh();
    let th_y = cache.head_out[1].tanh();
    d_delta_x *= DELTA_MAX * (1.0 - th_x * th_x);
    d_delta_y *= DELTA_MAX * (1.0 - th_y * th_y);
    d_tau *= out.tau * (1.0 - out.tau);
    let d_head_out = [d_delta_x, d_delta_y, d_tau];

    let d_head_hidden = params.head_l2.backward(
        &cache.head_hidden,
        &d_head_out,
        &mut grads.head_l2.w,
        &mut grads.head_l2.b,
    );
    let d_head_pre: Vec<f64> = d_head_hidden
        .iter()
        .zip(cache.head_pre.iter().zip(&cache.head_hidden))
        .map(|(d, (&pre, &post))| d * params.dims.head_act.derivative(pre, post))
        .collect();
    let d_f_tilde = params.head_l1.backward(
        &cache.f_tilde,
        &d_head_pre,
        &mut grads.head_l1.w,
        &mut grads.head_l1.b,
    );

    // FiLM: f_tilde = gamma .* f + beta; gamma = 1 + offset.
    let mut d_prior_out = vec![0.0; 2 * c];
    for i in 0..c {
        d_prior_out[i] = d_f_tilde[i] * cache.f[i]; // d gamma-offset
        d_prior_out[c + i] = d_f_tilde[i]; // d beta
    }
    let d_prior_hidden = params.prior_l2.backward(
        &cache.prior_hidden,
        &d_prior_out,
        &mut grads.prior_l2.w,
        &mut grads.prior_l2.b,
    );
    let d_prior_pre: Vec<f64> = d_prior_hidden
        .iter()
        .zip(cache.prior_pre.iter().zip(&cache.prior_hidden))
        .map(|(d, (&pre, &post))| d * params.dims.prior_act.derivative(pre, post))
        .collect();
    // Input gradient lands on g_hat, which is sensor data.
    let g_in = [cache.g_hat.x, cache.g_hat.y, cache.g_hat.z];
    let _ = params.prior_l1.backward(
        &g_in,
        &d_prior_pre,
        &mut grads.prior_l1.w,
        &mut grads.prior_l1.b,
    );
}

// ---------------------------------------------------------------------------
// Checkpoint format

const CHECKPOINT_MAGIC: &[u8; 4] = b"GCKP";
const CHECKPOINT_VERSION: u32 = 1;

fn act_code(a: Activation) -> u32 {
    match a {
        Activation::Tanh => 0,
        Activation::Relu => 1,
    }
}

fn act_from_code(code: u32) -> Result<Activation> {
    match code {
        0 => Ok(Activation::Tanh),
        1 => Ok(Activation::Relu),
        other => Err(Error::InvalidConfig(format!("unknown activation code {other}"))),
    }
}

/// Write a versioned checkpoint: magic "GCKP", header with the dims,
/// then parameter blocks in declaration order as little-endian 64-bit
/// reals.
pub fn save_checkpoint(path: &Path, params: &CalibratorParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    for v in [
        CHECKPOINT_VERSION,
        params.dims.c as u32,
        params.dims.h_prior as u32,
        params.dims.h_head as u32,
        params.dims.h_img as u32,
        act_code(params.dims.prior_act),
        act_code(params.dims.head_act),
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for l in params.blocks() {
        for v in l.w.iter().chain(&l.b) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<CalibratorParams> {
    let malformed = |reason: &str| Error::MalformedFile {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    let mut r = BufReader::new(
        File::open(path).map_err(|_| Error::MissingFile { path: path.to_path_buf() })?,
    );
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| malformed("truncated header"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(malformed("missing GCKP magic"));
    }
    let mut u32_buf = [0u8; 4];
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
        r.read_exact(&mut u32_buf).map_err(|_| malformed("truncated header"))?;
        Ok(u32::from_le_bytes(u32_buf))
    };
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(malformed(&format!("unsupported version {version}")));
    }
    let dims = NetDims {
        c: read_u32(&mut r)? as usize,
        h_prior: read_u32(&mut r)? as usize,
        h_head: read_u32(&mut r)? as usize,
        h_img: read_u32(&mut r)? as usize,
        prior_act: act_from_code(read_u32(&mut r)?)?,
        head_act: act_from_code(read_u32(&mut r)?)?,
    };
    dims.validate()?;

    // Zero seed, then overwrite every value from the file.
    let mut params = init_params(dims, 0)?;
    let mut f64_buf = [0u8; 8];
    for l in params.blocks_mut() {
        for v in l.w.iter_mut().chain(l.b.iter_mut()) {
            r.read_exact(&mut f64_buf).map_err(|_| malformed("truncated payload"))?;
            *v = f64::from_le_bytes(f64_buf);
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(malformed("trailing bytes after payload"));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use tempfile::TempDir;

    fn unit(x: f64, y: f64, z: f64) -> UnitVec3 {
        normalize(Vec3::new(x, y, z)).unwrap()
    }

    fn small_dims() -> NetDims {
        NetDims { c: 6, h_prior: 4, h_head: 5, h_img: 5, ..NetDims::default() }
    }

    fn random_feature(c: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..c).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_params(small_dims(), 9).unwrap();
        let b = init_params(small_dims(), 9).unwrap();
        assert_eq!(a, b);
        let c = init_params(small_dims(), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn film_is_identity_at_init() {
        let params = init_params(NetDims::default(), 123).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let f = random_feature(params.dims.c, &mut rng);
            let g = unit(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(1.0..2.0),
            );
            let f_tilde = film_condition(&params, &f, g).unwrap();
            for (a, b) in f_tilde.iter().zip(&f) {
                assert_eq!(a, b, "conditioning must be exactly identity at init");
            }
        }
    }

    #[test]
    fn film_forced_weights() {
        let mut params = init_params(small_dims(), 4).unwrap();
        // Force gamma = 2 (offset 1), beta = 0 via the final bias.
        for i in 0..params.dims.c {
            params.prior_l2.b[i] = 1.0;
        }
        let f = vec![0.5, -1.0, 2.0, 0.0, 3.0, -0.25];
        let out = film_condition(&params, &f, unit(0.0, 0.0, 1.0)).unwrap();
        for (o, fi) in out.iter().zip(&f) {
            assert_abs_diff_eq!(*o, 2.0 * fi, epsilon = 1e-15);
        }
    }

    #[test]
    fn film_matches_scalar_reference() {
        let params = {
            let mut p = init_params(small_dims(), 77).unwrap();
            // Random final layer so the modulation is non-trivial.
            let mut rng = ChaCha8Rng::seed_from_u64(78);
            for w in &mut p.prior_l2.w {
                *w = rng.gen_range(-0.5..0.5);
            }
            for b in &mut p.prior_l2.b {
                *b = rng.gen_range(-0.5..0.5);
            }
            p
        };
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let f = random_feature(params.dims.c, &mut rng);
        let g = unit(0.3, -0.4, 0.866);

        // Independent scalar-loop reference.
        let c = params.dims.c;
        let mut hidden = vec![0.0; params.dims.h_prior];
        for (i, h) in hidden.iter_mut().enumerate() {
            let mut acc = params.prior_l1.b[i];
            for (j, gh) in [g.x, g.y, g.z].iter().enumerate() {
                acc += params.prior_l1.w[i * 3 + j] * gh;
            }
            *h = acc.tanh();
        }
        let mut expect = vec![0.0; c];
        for i in 0..c {
            let mut gamma = 1.0 + params.prior_l2.b[i];
            let mut beta = params.prior_l2.b[c + i];
            for (j, h) in hidden.iter().enumerate() {
                gamma += params.prior_l2.w[i * params.dims.h_prior + j] * h;
                beta += params.prior_l2.w[(c + i) * params.dims.h_prior + j] * h;
            }
            expect[i] = gamma * f[i] + beta;
        }

        let got = film_condition(&params, &f, g).unwrap();
        for (a, b) in got.iter().zip(&expect) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn head_saturation_and_midpoints() {
        let mut params = init_params(small_dims(), 5).unwrap();
        // Zero the head entirely: h = bias.
        params.head_l1.w.iter_mut().for_each(|w| *w = 0.0);
        params.head_l2.w.iter_mut().for_each(|w| *w = 0.0);
        params.head_l2.b = vec![0.0, 0.0, 0.0];
        let f = vec![0.1; params.dims.c];
        let (delta, tau, _) = heads_forward(&params, &f, &f).unwrap();
        assert_eq!(delta.delta_x, 0.0);
        assert_eq!(delta.delta_y, 0.0);
        assert_abs_diff_eq!(tau, 0.5, epsilon = 1e-15);

        // Saturated logits pin delta at the bound.
        params.head_l2.b = vec![50.0, -50.0, 30.0];
        let (delta, tau, _) = heads_forward(&params, &f, &f).unwrap();
        assert_abs_diff_eq!(delta.delta_x, DELTA_MAX, epsilon = 1e-9);
        assert_abs_diff_eq!(delta.delta_y, -DELTA_MAX, epsilon = 1e-9);
        assert!(tau > 0.999999);
    }

    #[test]
    fn tau_is_sigma_minus_three_with_zeroed_gate_weights() {
        let mut params = init_params(NetDims::default(), 31).unwrap();
        // Zero the gate's output weights; its bias stays at -3.
        let h = params.dims.h_head;
        for w in &mut params.head_l2.w[2 * h..3 * h] {
            *w = 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let f = random_feature(params.dims.c, &mut rng);
        let (out, _) = forward(&params, &f, unit(0.1, 0.2, 0.97)).unwrap();
        assert_abs_diff_eq!(out.tau, sigmoid(TAU_BIAS_INIT), epsilon = 1e-9);
        assert_abs_diff_eq!(out.tau, 0.04742587317756678, epsilon = 1e-6);
    }

    #[test]
    fn apply_correction_identity_and_x_rotation() {
        let g = unit(0.0, 0.0, 1.0);
        let same = apply_correction(g, &EulerDelta::ZERO);
        assert_eq!(same.as_vec3(), g.as_vec3());

        // R_x(45 deg) applied to (0,0,1) gives (0, -sin45, cos45).
        let out = apply_correction(g, &EulerDelta { delta_x: DELTA_MAX, delta_y: 0.0 });
        assert_abs_diff_eq!(out.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.y, -std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(out.z, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn apply_correction_matches_composed_elementals() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let g = unit(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0f64).max(0.1),
            );
            let d = EulerDelta {
                delta_x: rng.gen_range(-DELTA_MAX..DELTA_MAX),
                delta_y: rng.gen_range(-DELTA_MAX..DELTA_MAX),
            };
            let got = apply_correction(g, &d);
            let expect = euler_rot(Axis::Y, d.delta_y)
                .compose(&euler_rot(Axis::X, d.delta_x))
                .apply_unit(g);
            assert_abs_diff_eq!(got.x, expect.x, epsilon = 1e-12);
            assert_abs_diff_eq!(got.y, expect.y, epsilon = 1e-12);
            assert_abs_diff_eq!(got.z, expect.z, epsilon = 1e-12);
        }
    }

    #[test]
    fn fuse_endpoints_and_bisector() {
        let a = unit(1.0, 0.0, 0.0);
        let b = unit(0.0, 1.0, 0.0);
        assert_eq!(fuse(0.0, a, b).unwrap().as_vec3(), b.as_vec3());
        assert_eq!(fuse(1.0, a, b).unwrap().as_vec3(), a.as_vec3());
        let mid = fuse(0.5, a, b).unwrap();
        assert_abs_diff_eq!(mid.x, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(mid.y, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);

        // Antipodal cancellation is degenerate.
        assert!(fuse(0.5, a, a.flipped()).is_err());
    }

    #[test]
    fn forward_respects_init_bias() {
        let params = init_params(NetDims::default(), 44).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let f = random_feature(params.dims.c, &mut rng);
        let g = unit(0.0, 0.3, -0.95);
        let (out, _) = forward(&params, &f, g).unwrap();
        // Gate bias keeps the network prior-dominated at init.
        assert!(out.tau < 0.2, "tau at init was {}", out.tau);
        assert!(crate::geom3::angle_deg(out.g_pred, out.g_corr) < 15.0);

        // Deterministic across repeated calls.
        let (out2, _) = forward(&params, &f, g).unwrap();
        assert_eq!(out.g_pred.as_vec3(), out2.g_pred.as_vec3());
        assert_eq!(out.tau, out2.tau);
    }

    #[test]
    fn forward_output_invariants_hold() {
        let params = init_params(small_dims(), 46).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..1000 {
            let f = random_feature(params.dims.c, &mut rng);
            let g = loop {
                let v = Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                if v.norm() > 1e-3 {
                    break normalize(v).unwrap();
                }
            };
            let (out, _) = forward(&params, &f, g).unwrap();
            assert!((0.0..=1.0).contains(&out.tau));
            assert!(out.delta.delta_x.abs() <= DELTA_MAX);
            assert!(out.delta.delta_y.abs() <= DELTA_MAX);
            for v in [out.g_pred, out.g_corr, out.g_img] {
                assert_abs_diff_eq!(v.as_vec3().norm(), 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn forward_shape_mismatch() {
        let params = init_params(small_dims(), 48).unwrap();
        let f = vec![0.0; params.dims.c + 1];
        assert!(matches!(
            forward(&params, &f, unit(0.0, 0.0, 1.0)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let params = init_params(small_dims(), 49).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let f = random_feature(params.dims.c, &mut rng);
        let (_, cache) = forward(&params, &f, unit(0.2, -0.3, 0.93)).unwrap();
        let grads = backward(&params, &cache, &OutputGrads::default());
        assert!(grads.to_flat().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn checkpoint_round_trip_preserves_forward_bitwise() {
        let params = init_params(NetDims::default(), 51).unwrap();
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("model.gckp");
        save_checkpoint(&path, &params).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, params);

        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let f = random_feature(params.dims.c, &mut rng);
        let g = unit(0.6, 0.0, 0.8);
        let (a, _) = forward(&params, &f, g).unwrap();
        let (b, _) = forward(&back, &f, g).unwrap();
        assert_eq!(a.g_pred.as_vec3(), b.g_pred.as_vec3());
        assert_eq!(a.tau, b.tau);
        assert_eq!(a.delta, b.delta);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let params = init_params(small_dims(), 53).unwrap();
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("model.gckp");
        save_checkpoint(&path, &params).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::MalformedFile { .. })));

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'G';
        bytes.truncate(bytes.len() - 9);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::MalformedFile { .. })));
    }
}
