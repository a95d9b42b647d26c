//! The network: encoder, bias-free self-expression layer, mirrored decoder,
//! and the joint objective
//!
//! `‖X−X̂‖²_F + 2·Tr(X L_n X̂ᵀ) + α‖C‖_p + (β/2)‖Z−ZC‖²_F + (γ/2)‖X−XC‖²_F`
//!
//! with diag(C) = 0. X̂ = G(F(X)·C); the locality Laplacian L_n is rebuilt
//! from the current C each step but treated as a constant inside the step's
//! gradient (see the trainer).

mod conv;

pub use conv::ConvGeom;
use conv::{conv_backward_input, conv_backward_weights, conv_forward};

use crate::error::{Error, Result};
use crate::graph;
use crate::numerics::rng::{uniform_matrix, Rng};
use crate::numerics::Matrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

// ── architecture specification ────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    /// (height, width) of the kernel.
    pub kernel: (usize, usize),
    pub channels: usize,
}

/// Declared encoder architecture; the decoder is always its mirror.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderSpec {
    /// Fully connected chain d → hidden… → latent. ReLU on every layer
    /// except the input, the embedding, and (in the decoder) the output.
    Fc { hidden: Vec<usize>, latent: usize },
    /// Convolutional chain over (h, w, c) feature maps; the latent code is
    /// the flattened last feature map.
    Conv {
        layers: Vec<ConvLayerSpec>,
        #[serde(default = "default_stride")]
        stride: usize,
    },
}

fn default_stride() -> usize {
    2
}

#[derive(Debug, Clone)]
pub enum LayerDesc {
    Fc {
        in_dim: usize,
        out_dim: usize,
        act: Activation,
    },
    Conv {
        geom: ConvGeom,
        act: Activation,
    },
    /// Transposed convolution mirroring `geom`: maps the geom's output space
    /// back to its input space.
    Deconv {
        geom: ConvGeom,
        act: Activation,
    },
}

impl LayerDesc {
    fn act(&self) -> Activation {
        match self {
            LayerDesc::Fc { act, .. } | LayerDesc::Conv { act, .. } | LayerDesc::Deconv { act, .. } => *act,
        }
    }
}

/// Fully resolved architecture: per-layer descriptors for encoder and
/// decoder plus the embedding width.
#[derive(Debug, Clone)]
pub struct ModelDesc {
    pub encoder: Vec<LayerDesc>,
    pub decoder: Vec<LayerDesc>,
    pub input_dim: usize,
    pub latent_dim: usize,
}

pub fn resolve_model(
    spec: &EncoderSpec,
    input_dim: usize,
    sample_shape: Option<(usize, usize, usize)>,
) -> Result<ModelDesc> {
    match spec {
        EncoderSpec::Fc { hidden, latent } => {
            if *latent == 0 || hidden.contains(&0) || input_dim == 0 {
                return Err(Error::config("fc encoder widths must be positive"));
            }
            let mut widths = vec![input_dim];
            widths.extend_from_slice(hidden);
            widths.push(*latent);

            let encoder = fc_chain(&widths);
            let rev: Vec<usize> = widths.iter().rev().copied().collect();
            let decoder = fc_chain(&rev);
            Ok(ModelDesc {
                encoder,
                decoder,
                input_dim,
                latent_dim: *latent,
            })
        }
        EncoderSpec::Conv { layers, stride } => {
            let (h, w, c) = sample_shape.ok_or_else(|| {
                Error::config("convolutional encoder requires a dataset sample shape")
            })?;
            if h * w * c != input_dim {
                return Err(Error::config(format!(
                    "sample shape {h}x{w}x{c} does not flatten to {input_dim} features"
                )));
            }
            if layers.is_empty() || *stride == 0 {
                return Err(Error::config("conv encoder needs at least one layer and stride >= 1"));
            }
            let mut geoms = Vec::new();
            let (mut ch, mut hh, mut ww) = (c, h, w);
            for l in layers {
                if l.channels == 0 || l.kernel.0 == 0 || l.kernel.1 == 0 {
                    return Err(Error::config("conv layer kernel and channels must be positive"));
                }
                let g = ConvGeom::same(ch, hh, ww, l.channels, l.kernel.0, l.kernel.1, *stride);
                ch = g.out_c;
                hh = g.out_h;
                ww = g.out_w;
                geoms.push(g);
            }
            let latent_dim = geoms.last().unwrap().out_dim();
            let last = geoms.len() - 1;
            let encoder: Vec<LayerDesc> = geoms
                .iter()
                .enumerate()
                .map(|(i, &geom)| LayerDesc::Conv {
                    geom,
                    act: if i == last { Activation::Linear } else { Activation::Relu },
                })
                .collect();
            let decoder: Vec<LayerDesc> = geoms
                .iter()
                .rev()
                .enumerate()
                .map(|(i, &geom)| LayerDesc::Deconv {
                    geom,
                    act: if i == last { Activation::Linear } else { Activation::Relu },
                })
                .collect();
            Ok(ModelDesc {
                encoder,
                decoder,
                input_dim,
                latent_dim,
            })
        }
    }
}

fn fc_chain(widths: &[usize]) -> Vec<LayerDesc> {
    let last = widths.len() - 2;
    (0..widths.len() - 1)
        .map(|i| LayerDesc::Fc {
            in_dim: widths[i],
            out_dim: widths[i + 1],
            act: if i == last { Activation::Linear } else { Activation::Relu },
        })
        .collect()
}

// ── parameters ────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w: Matrix,
    /// One bias per output unit (fc) or per output channel (conv/deconv).
    pub b: Matrix,
}

/// All trainable tensors: encoder, self-expression matrix C, decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub encoder: Vec<LayerParams>,
    pub c: Matrix,
    pub decoder: Vec<LayerParams>,
}

/// Gradients share the parameter layout exactly.
pub type Gradients = NetworkParams;

impl NetworkParams {
    /// Number of samples the self-expression layer is bound to.
    pub fn n(&self) -> usize {
        self.c.rows()
    }

    /// Canonical tensor order: encoder (w, b)…, c, decoder (w, b)….
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for l in &self.encoder {
            out.push(&l.w);
            out.push(&l.b);
        }
        out.push(&self.c);
        for l in &self.decoder {
            out.push(&l.w);
            out.push(&l.b);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for l in &mut self.encoder {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        out.push(&mut self.c);
        for l in &mut self.decoder {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        out
    }

    pub fn zeros_like(&self) -> NetworkParams {
        let zero_layer = |l: &LayerParams| LayerParams {
            w: Matrix::zeros(l.w.rows(), l.w.cols()),
            b: Matrix::zeros(l.b.rows(), l.b.cols()),
        };
        NetworkParams {
            encoder: self.encoder.iter().map(zero_layer).collect(),
            c: Matrix::zeros(self.c.rows(), self.c.cols()),
            decoder: self.decoder.iter().map(zero_layer).collect(),
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for t in self.tensors() {
            t.check_finite("network parameters")?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical little-endian byte image of all tensors.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for t in self.tensors() {
            hasher.update(t.le_bytes());
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Glorot-uniform weights, zero biases, C near zero with an exactly zero
/// diagonal. The RNG is consumed in canonical tensor order.
pub fn init_params(desc: &ModelDesc, n: usize, rng: &mut Rng) -> NetworkParams {
    let init_layer = |d: &LayerDesc, rng: &mut Rng| {
        let (w_rows, w_cols, b_rows) = match d {
            LayerDesc::Fc { in_dim, out_dim, .. } => (*out_dim, *in_dim, *out_dim),
            LayerDesc::Conv { geom, .. } => (geom.out_c, geom.patch_dim(), geom.out_c),
            LayerDesc::Deconv { geom, .. } => (geom.out_c, geom.patch_dim(), geom.in_c),
        };
        let limit = (6.0 / (w_rows + w_cols) as f64).sqrt();
        LayerParams {
            w: uniform_matrix(rng, w_rows, w_cols, -limit, limit),
            b: Matrix::zeros(b_rows, 1),
        }
    };
    let encoder: Vec<LayerParams> = desc.encoder.iter().map(|d| init_layer(d, rng)).collect();
    let mut c = uniform_matrix(rng, n, n, -1e-4, 1e-4);
    enforce_diag_zero(&mut c);
    let decoder: Vec<LayerParams> = desc.decoder.iter().map(|d| init_layer(d, rng)).collect();
    NetworkParams { encoder, c, decoder }
}

/// Project onto the diag(C)=0 constraint; off-diagonal entries untouched.
pub fn enforce_diag_zero(c: &mut Matrix) {
    let n = c.rows().min(c.cols());
    for i in 0..n {
        c.set(i, i, 0.0);
    }
}

// ── hyperparameters ───────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PNorm {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Regularization weight on ‖C‖_p.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Weight of the latent self-expression term.
    #[serde(default = "default_unit")]
    pub beta: f64,
    /// Weight of the input-space self-expression term.
    #[serde(default = "default_unit")]
    pub gamma: f64,
    #[serde(default = "default_norm")]
    pub norm: PNorm,
    /// When false the locality Laplacian is forced to zero, leaving only
    /// plain reconstruction plus the subspace-consistency terms.
    #[serde(default = "default_true")]
    pub locality: bool,
}

fn default_alpha() -> f64 {
    1e-4
}

fn default_unit() -> f64 {
    1.0
}

fn default_norm() -> PNorm {
    PNorm::L2
}

fn default_true() -> bool {
    true
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: default_alpha(),
            beta: default_unit(),
            gamma: default_unit(),
            norm: default_norm(),
            locality: true,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(Error::config("alpha, beta, gamma must be nonnegative"));
        }
        if !(self.alpha.is_finite() && self.beta.is_finite() && self.gamma.is_finite()) {
            return Err(Error::config("hyperparameters must be finite"));
        }
        Ok(())
    }
}

/// `‖C‖_1 = Σ|c_ij|` or the squared Frobenius norm `Σ c_ij²`.
pub fn regularizer(c: &Matrix, norm: PNorm) -> f64 {
    match norm {
        PNorm::L1 => c.data().iter().map(|v| v.abs()).sum(),
        PNorm::L2 => c.frob_norm_sq(),
    }
}

// ── loss terms ────────────────────────────────────────────────────────

/// The five addends of the objective, each already weighted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    /// ‖X − X̂‖²_F
    pub reconstruction: f64,
    /// 2·Tr(X L_n X̂ᵀ)
    pub locality_trace: f64,
    /// α‖C‖_p
    pub regularizer: f64,
    /// (β/2)‖Z − ZC‖²_F
    pub subspace_latent: f64,
    /// (γ/2)‖X − XC‖²_F
    pub subspace_input: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.reconstruction
            + self.locality_trace
            + self.regularizer
            + self.subspace_latent
            + self.subspace_input
    }

    pub fn is_finite(&self) -> bool {
        self.total().is_finite()
    }

    pub fn zeros() -> LossTerms {
        LossTerms {
            reconstruction: 0.0,
            locality_trace: 0.0,
            regularizer: 0.0,
            subspace_latent: 0.0,
            subspace_input: 0.0,
        }
    }
}

// ── forward / backward ────────────────────────────────────────────────

struct LayerCache {
    input: Matrix,
    pre: Matrix,
}

pub struct Forward {
    pub z: Matrix,
    pub zc: Matrix,
    pub xhat: Matrix,
    enc: Vec<LayerCache>,
    dec: Vec<LayerCache>,
}

fn layer_forward(desc: &LayerDesc, p: &LayerParams, x: &Matrix) -> (Matrix, Matrix) {
    let mut pre = match desc {
        LayerDesc::Fc { .. } => p.w.matmul(x),
        LayerDesc::Conv { geom, .. } => conv_forward(geom, &p.w, x),
        LayerDesc::Deconv { geom, .. } => conv_backward_input(geom, &p.w, x),
    };
    add_bias(desc, &p.b, &mut pre);
    let post = match desc.act() {
        Activation::Linear => pre.clone(),
        Activation::Relu => pre.map(|v| v.max(0.0)),
    };
    (pre, post)
}

fn add_bias(desc: &LayerDesc, b: &Matrix, pre: &mut Matrix) {
    let positions = match desc {
        LayerDesc::Fc { .. } => 1,
        LayerDesc::Conv { geom, .. } => geom.positions(),
        LayerDesc::Deconv { geom, .. } => geom.in_h * geom.in_w,
    };
    let cols = pre.cols();
    for r in 0..pre.rows() {
        let bias = b.get(r / positions, 0);
        if bias == 0.0 {
            continue;
        }
        let row = pre.row_mut(r);
        for j in 0..cols {
            row[j] += bias;
        }
    }
}

fn layer_backward(
    desc: &LayerDesc,
    p: &LayerParams,
    cache: &LayerCache,
    d_post: &Matrix,
) -> (LayerParams, Matrix) {
    let d_pre = match desc.act() {
        Activation::Linear => d_post.clone(),
        Activation::Relu => d_post.zip_map(&cache.pre, |g, pre| if pre > 0.0 { g } else { 0.0 }),
    };
    let (dw, d_in) = match desc {
        LayerDesc::Fc { .. } => (
            d_pre.matmul(&cache.input.transpose()),
            p.w.transpose().matmul(&d_pre),
        ),
        LayerDesc::Conv { geom, .. } => (
            conv_backward_weights(geom, &d_pre, &cache.input),
            conv_backward_input(geom, &p.w, &d_pre),
        ),
        LayerDesc::Deconv { geom, .. } => (
            conv_backward_weights(geom, &cache.input, &d_pre),
            conv_forward(geom, &p.w, &d_pre),
        ),
    };
    let db = bias_grad(desc, &d_pre);
    (LayerParams { w: dw, b: db }, d_in)
}

fn bias_grad(desc: &LayerDesc, d_pre: &Matrix) -> Matrix {
    let positions = match desc {
        LayerDesc::Fc { .. } => 1,
        LayerDesc::Conv { geom, .. } => geom.positions(),
        LayerDesc::Deconv { geom, .. } => geom.in_h * geom.in_w,
    };
    let channels = d_pre.rows() / positions;
    let mut db = Matrix::zeros(channels, 1);
    for r in 0..d_pre.rows() {
        let c = r / positions;
        let sum: f64 = d_pre.row(r).iter().sum();
        db.set(c, 0, db.get(c, 0) + sum);
    }
    db
}

fn chain_forward(
    layers: &[LayerDesc],
    params: &[LayerParams],
    input: &Matrix,
) -> (Matrix, Vec<LayerCache>) {
    let mut caches = Vec::with_capacity(layers.len());
    let mut h = input.clone();
    for (desc, p) in layers.iter().zip(params.iter()) {
        let (pre, post) = layer_forward(desc, p, &h);
        caches.push(LayerCache { input: h, pre });
        h = post;
    }
    (h, caches)
}

fn chain_backward(
    layers: &[LayerDesc],
    params: &[LayerParams],
    caches: &[LayerCache],
    d_out: Matrix,
) -> (Vec<LayerParams>, Matrix) {
    let mut grads: Vec<Option<LayerParams>> = (0..layers.len()).map(|_| None).collect();
    let mut d = d_out;
    for i in (0..layers.len()).rev() {
        let (g, d_in) = layer_backward(&layers[i], &params[i], &caches[i], &d);
        grads[i] = Some(g);
        d = d_in;
    }
    (grads.into_iter().map(|g| g.unwrap()).collect(), d)
}

/// Full forward pass: Z = F(X), then the self-expression product ZC, then
/// X̂ = G(ZC). The batch must be exactly the n samples C is bound to.
pub fn forward(desc: &ModelDesc, params: &NetworkParams, x: &Matrix) -> Result<Forward> {
    check_input(desc, x)?;
    if x.cols() != params.n() {
        return Err(Error::contract(format!(
            "self-expression layer is bound to {} samples but the batch has {} columns",
            params.n(),
            x.cols()
        )));
    }
    let (z, enc) = chain_forward(&desc.encoder, &params.encoder, x);
    let zc = z.matmul(&params.c);
    let (xhat, dec) = chain_forward(&desc.decoder, &params.decoder, &zc);
    Ok(Forward { z, zc, xhat, enc, dec })
}

/// Encoder only; works for any batch size (used by the out-of-sample path).
pub fn encode(desc: &ModelDesc, params: &NetworkParams, x: &Matrix) -> Result<Matrix> {
    check_input(desc, x)?;
    Ok(chain_forward(&desc.encoder, &params.encoder, x).0)
}

fn check_input(desc: &ModelDesc, x: &Matrix) -> Result<()> {
    if x.rows() != desc.input_dim {
        return Err(Error::contract(format!(
            "input has {} features, model expects {}",
            x.rows(),
            desc.input_dim
        )));
    }
    Ok(())
}

/// Plain auto-encoder objective `‖X − G(F(X))‖²_F` (self-expression layer
/// skipped), with gradients; this is the pre-training loss.
pub fn reconstruction_backward(
    desc: &ModelDesc,
    params: &NetworkParams,
    x: &Matrix,
) -> Result<(f64, Gradients)> {
    check_input(desc, x)?;
    let (z, enc_caches) = chain_forward(&desc.encoder, &params.encoder, x);
    let (xhat, dec_caches) = chain_forward(&desc.decoder, &params.decoder, &z);
    let loss = x.sub(&xhat).frob_norm_sq();

    let d_xhat = xhat.sub(x).scale(2.0);
    let (dec_grads, d_z) = chain_backward(&desc.decoder, &params.decoder, &dec_caches, d_xhat);
    let (enc_grads, _) = chain_backward(&desc.encoder, &params.encoder, &enc_caches, d_z);
    Ok((
        loss,
        Gradients {
            encoder: enc_grads,
            c: Matrix::zeros(params.c.rows(), params.c.cols()),
            decoder: dec_grads,
        },
    ))
}

pub fn reconstruction_loss(desc: &ModelDesc, params: &NetworkParams, x: &Matrix) -> Result<f64> {
    check_input(desc, x)?;
    let (z, _) = chain_forward(&desc.encoder, &params.encoder, x);
    let (xhat, _) = chain_forward(&desc.decoder, &params.decoder, &z);
    Ok(x.sub(&xhat).frob_norm_sq())
}

/// Objective value with the locality Laplacian recomputed from the current C
/// (requires diag(C) = 0).
pub fn total_loss(
    desc: &ModelDesc,
    params: &NetworkParams,
    x: &Matrix,
    hp: &Hyperparams,
) -> Result<LossTerms> {
    let l_n = step_laplacian(params, hp)?;
    total_loss_fixed(desc, params, x, hp, l_n.as_ref())
}

/// The locality Laplacian for the current step, detached from C: `None`
/// when locality is disabled.
pub fn step_laplacian(params: &NetworkParams, hp: &Hyperparams) -> Result<Option<Matrix>> {
    if !hp.locality {
        return Ok(None);
    }
    Ok(Some(
        graph::similarity_from_relation(&params.c)?.normalized_laplacian,
    ))
}

/// Objective value with L_n supplied by the caller. This is the function a
/// single optimization step actually minimizes, and the one gradients are
/// checked against.
pub fn total_loss_fixed(
    desc: &ModelDesc,
    params: &NetworkParams,
    x: &Matrix,
    hp: &Hyperparams,
    l_n: Option<&Matrix>,
) -> Result<LossTerms> {
    hp.validate()?;
    let fwd = forward(desc, params, x)?;
    Ok(loss_terms_from_forward(&fwd, params, x, hp, l_n))
}

fn loss_terms_from_forward(
    fwd: &Forward,
    params: &NetworkParams,
    x: &Matrix,
    hp: &Hyperparams,
    l_n: Option<&Matrix>,
) -> LossTerms {
    let reconstruction = x.sub(&fwd.xhat).frob_norm_sq();
    let locality_trace = match l_n {
        Some(l_n) => 2.0 * x.matmul(l_n).frob_inner(&fwd.xhat),
        None => 0.0,
    };
    let regularizer_term = hp.alpha * regularizer(&params.c, hp.norm);
    let e = fwd.z.sub(&fwd.zc);
    let subspace_latent = 0.5 * hp.beta * e.frob_norm_sq();
    let r = x.sub(&x.matmul(&params.c));
    let subspace_input = 0.5 * hp.gamma * r.frob_norm_sq();
    LossTerms {
        reconstruction,
        locality_trace,
        regularizer: regularizer_term,
        subspace_latent,
        subspace_input,
    }
}

/// Loss terms plus gradients for every parameter tensor (L_n fixed). The
/// gradient of C is the unconstrained one, diagonal included; the trainer
/// projects back onto diag(C)=0 after stepping.
pub fn backward(
    desc: &ModelDesc,
    params: &NetworkParams,
    x: &Matrix,
    hp: &Hyperparams,
    l_n: Option<&Matrix>,
) -> Result<(LossTerms, Gradients)> {
    hp.validate()?;
    let fwd = forward(desc, params, x)?;
    let terms = loss_terms_from_forward(&fwd, params, x, hp, l_n);

    // d/dX̂ of ‖X−X̂‖² + 2·Tr(X L_n X̂ᵀ).
    let mut d_xhat = fwd.xhat.sub(x).scale(2.0);
    if let Some(l_n) = l_n {
        d_xhat.axpy(2.0, &x.matmul(l_n));
    }

    let (dec_grads, d_zc) = chain_backward(&desc.decoder, &params.decoder, &fwd.dec, d_xhat);

    // ZC = Z·C: split the incoming gradient between C and Z.
    let mut d_c = fwd.z.transpose().matmul(&d_zc);
    let mut d_z = d_zc.matmul(&params.c.transpose());

    // (β/2)‖Z−ZC‖²: E = Z−ZC, d/dZ = β(E − E Cᵀ), d/dC = −β ZᵀE.
    if hp.beta != 0.0 {
        let e = fwd.z.sub(&fwd.zc);
        d_z.axpy(hp.beta, &e);
        d_z.axpy(-hp.beta, &e.matmul(&params.c.transpose()));
        d_c.axpy(-hp.beta, &fwd.z.transpose().matmul(&e));
    }

    // (γ/2)‖X−XC‖²: d/dC = −γ Xᵀ(X−XC).
    if hp.gamma != 0.0 {
        let r = x.sub(&x.matmul(&params.c));
        d_c.axpy(-hp.gamma, &x.transpose().matmul(&r));
    }

    // α‖C‖_p: sign subgradient (0 at 0) for p=1, 2C for p=2.
    if hp.alpha != 0.0 {
        match hp.norm {
            PNorm::L1 => d_c.axpy(hp.alpha, &params.c.map(|v| {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })),
            PNorm::L2 => d_c.axpy(2.0 * hp.alpha, &params.c),
        }
    }

    let (enc_grads, _) = chain_backward(&desc.encoder, &params.encoder, &fwd.enc, d_z);

    Ok((
        terms,
        Gradients {
            encoder: enc_grads,
            c: d_c,
            decoder: dec_grads,
        },
    ))
}

// ── checkpoints ───────────────────────────────────────────────────────

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub spec: EncoderSpec,
    pub input_dim: usize,
    pub sample_shape: Option<(usize, usize, usize)>,
    pub hyper: Hyperparams,
    pub params: NetworkParams,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    spec: EncoderSpec,
    input_dim: usize,
    sample_shape: Option<(usize, usize, usize)>,
    hyper: Hyperparams,
    encoder_layers: usize,
    decoder_layers: usize,
}

/// Binary layout: magic "RGCK", u32 version, u32 JSON header length, the
/// header, then each tensor as u32 rows, u32 cols, and f64 little-endian
/// row-major data (the same payload layout as the matrix file format).
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let header = CheckpointHeader {
        spec: ckpt.spec.clone(),
        input_dim: ckpt.input_dim,
        sample_shape: ckpt.sample_shape,
        hyper: ckpt.hyper,
        encoder_layers: ckpt.params.encoder.len(),
        decoder_layers: ckpt.params.decoder.len(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;

    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_json);
    for t in ckpt.params.tensors() {
        buf.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        buf.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        buf.extend_from_slice(&t.le_bytes());
    }

    let name = path.display().to_string();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(&name, e))?;
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(&name, e))?;
    f.write_all(&buf).map_err(|e| Error::io(&name, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let name = path.display().to_string();
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(&name, e))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|e| Error::io(&name, e))?;

    if bytes.len() < 12 || &bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(Error::parse(&name, "not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::parse(
            &name,
            format!("checkpoint version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + header_len {
        return Err(Error::parse(&name, "truncated checkpoint header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[12..12 + header_len])
        .map_err(|e| Error::parse(&name, e.to_string()))?;

    let mut offset = 12 + header_len;
    let mut read_tensor = || -> Result<Matrix> {
        if bytes.len() < offset + 8 {
            return Err(Error::parse(&name, "truncated tensor header"));
        }
        let rows = u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[offset + 4..offset + 8].try_into().unwrap()) as usize;
        offset += 8;
        let end = offset + rows * cols * 8;
        if bytes.len() < end {
            return Err(Error::parse(&name, "truncated tensor payload"));
        }
        let data: Vec<f64> = bytes[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset = end;
        Matrix::from_vec(rows, cols, data)
    };

    let mut encoder = Vec::with_capacity(header.encoder_layers);
    for _ in 0..header.encoder_layers {
        let w = read_tensor()?;
        let b = read_tensor()?;
        encoder.push(LayerParams { w, b });
    }
    let c = read_tensor()?;
    let mut decoder = Vec::with_capacity(header.decoder_layers);
    for _ in 0..header.decoder_layers {
        let w = read_tensor()?;
        let b = read_tensor()?;
        decoder.push(LayerParams { w, b });
    }

    Ok(Checkpoint {
        spec: header.spec,
        input_dim: header.input_dim,
        sample_shape: header.sample_shape,
        hyper: header.hyper,
        params: NetworkParams { encoder, c, decoder },
    })
}
