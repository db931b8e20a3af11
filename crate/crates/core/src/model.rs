//! The variational MLP surrogate: a fully connected tanh network with a
//! diagonal Gaussian posterior per weight, sampled for training and frozen
//! to its mean for curvature analysis.

use std::io::{self, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use thiserror::Error;

use crate::diffengine::{Ctx, Jet2, Raw};

/// Flat vector of all trainable scalars, ordered per layer (weights
/// row-major, then biases). Gradients, HVPs, and eigenvectors all share
/// this coordinate system.
pub type ParamVector = Vec<f64>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("parameter length {got} does not match architecture ({want})")]
    LengthMismatch { got: usize, want: usize },
}

/// Fully connected scalar-to-scalar architecture: 1 input, `hidden_layers`
/// tanh layers of `hidden_width` units, 1 linear output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Architecture {
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture { hidden_layers: 3, hidden_width: 50 }
    }
}

impl Architecture {
    /// (fan_in, fan_out, tanh?) per layer, in parameter-layout order.
    pub fn layers(&self) -> Vec<(usize, usize, bool)> {
        let w = self.hidden_width;
        let mut out = Vec::with_capacity(self.hidden_layers + 1);
        if self.hidden_layers == 0 {
            out.push((1, 1, false));
            return out;
        }
        out.push((1, w, true));
        for _ in 1..self.hidden_layers {
            out.push((w, w, true));
        }
        out.push((w, 1, false));
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|&(m, n, _)| m * n + n).sum()
    }
}

/// Affine input map t ↦ 2t/t_max − 1 applied before the first layer; tanh
/// nets train poorly on wide raw domains. Part of the checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InputNorm {
    pub enabled: bool,
    pub t_max: f64,
}

impl InputNorm {
    pub fn for_span(t_max: f64) -> Self {
        InputNorm { enabled: true, t_max }
    }

    pub fn disabled() -> Self {
        InputNorm { enabled: false, t_max: 1.0 }
    }

    /// Mapped input and its constant slope d(t̂)/dt.
    pub fn map(&self, t: f64) -> (f64, f64) {
        if self.enabled {
            (2.0 * t / self.t_max - 1.0, 2.0 / self.t_max)
        } else {
            (t, 1.0)
        }
    }
}

/// Network output for an already-normalized graph-valued input.
pub fn net_value_from<C: Ctx>(arch: &Architecture, ctx: &mut C, params: &[C::V], x: C::V) -> C::V {
    let mut cur = vec![x];
    let mut next = Vec::with_capacity(arch.hidden_width);
    let mut off = 0;
    for (m, n, tanh) in arch.layers() {
        next.clear();
        for o in 0..n {
            let row = off + o * m;
            let mut acc = ctx.mul(params[row], cur[0]);
            for i in 1..m {
                let p = ctx.mul(params[row + i], cur[i]);
                acc = ctx.add(acc, p);
            }
            acc = ctx.add(acc, params[off + m * n + o]);
            next.push(if tanh { ctx.tanh(acc) } else { acc });
        }
        off += m * n + n;
        std::mem::swap(&mut cur, &mut next);
    }
    cur[0]
}

/// Network output under any evaluation context.
pub fn net_value<C: Ctx>(
    arch: &Architecture,
    norm: &InputNorm,
    ctx: &mut C,
    params: &[C::V],
    t: f64,
) -> C::V {
    let (tn, _) = norm.map(t);
    let x = ctx.constant(tn);
    net_value_from(arch, ctx, params, x)
}

/// Network jet for an already-seeded input jet (value normalized, d1
/// carrying the chain slope of the input map).
pub fn net_jet_from<C: Ctx>(
    arch: &Architecture,
    ctx: &mut C,
    params: &[C::V],
    x: Jet2<C::V>,
) -> Jet2<C::V> {
    let mut cur = vec![x];
    let mut next: Vec<Jet2<C::V>> = Vec::with_capacity(arch.hidden_width);
    let mut off = 0;
    for (m, n, tanh) in arch.layers() {
        next.clear();
        for o in 0..n {
            let row = off + o * m;
            let mut acc = Jet2::scale(ctx, params[row], cur[0]);
            for i in 1..m {
                let p = Jet2::scale(ctx, params[row + i], cur[i]);
                acc = Jet2::add(ctx, acc, p);
            }
            acc = Jet2::add_scalar(ctx, acc, params[off + m * n + o]);
            next.push(if tanh { Jet2::tanh(ctx, acc) } else { acc });
        }
        off += m * n + n;
        std::mem::swap(&mut cur, &mut next);
    }
    cur[0]
}

/// Network output with first and second input derivatives, under any
/// evaluation context (so the jet stays differentiable w.r.t. parameters).
pub fn net_jet<C: Ctx>(
    arch: &Architecture,
    norm: &InputNorm,
    ctx: &mut C,
    params: &[C::V],
    t: f64,
) -> Jet2<C::V> {
    let (tn, slope) = norm.map(t);
    let x = Jet2::seed(ctx, tn, slope);
    net_jet_from(arch, ctx, params, x)
}

/// Deterministic MLP evaluation at a point.
pub fn forward(arch: &Architecture, norm: &InputNorm, params: &[f64], t: f64) -> f64 {
    net_value(arch, norm, &mut Raw, params, t)
}

/// (u, du/dt, d²u/dt²) at a point, plain values.
pub fn forward_jet(arch: &Architecture, norm: &InputNorm, params: &[f64], t: f64) -> Jet2<f64> {
    net_jet(arch, norm, &mut Raw, params, t)
}

pub fn softplus(x: f64) -> f64 {
    // Safe for the rho ranges that occur here; ln(1+e^x) overflows only
    // past x ≈ 700.
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn softplus_inv(y: f64) -> f64 {
    (y.exp() - 1.0).ln()
}

pub fn softplus_prime(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Diagonal Gaussian posterior: mean `mu` and pre-scale `rho` per weight,
/// with σ = softplus(rho) > 0.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalParams {
    pub mu: ParamVector,
    pub rho: ParamVector,
}

impl VariationalParams {
    /// Xavier-style symmetric uniform means (biases zero) and a constant
    /// initial posterior scale.
    pub fn init<R: Rng>(arch: &Architecture, init_sigma: f64, rng: &mut R) -> Self {
        let p = arch.param_count();
        let mut mu = Vec::with_capacity(p);
        for (m, n, _) in arch.layers() {
            let bound = (6.0 / (m + n) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("valid bound");
            for _ in 0..m * n {
                mu.push(dist.sample(rng));
            }
            for _ in 0..n {
                mu.push(0.0);
            }
        }
        let rho = vec![softplus_inv(init_sigma); p];
        VariationalParams { mu, rho }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// The variational mean, exactly; no noise, idempotent.
    pub fn freeze(&self) -> ParamVector {
        self.mu.clone()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.rho.iter().map(|&r| softplus(r)).collect()
    }
}

/// Reparameterized draw θ = mu + softplus(rho) ⊙ ε with ε ~ N(0, I);
/// returns the noise so gradients can be chained through the draw.
pub fn sample_with_noise<R: Rng>(vp: &VariationalParams, rng: &mut R) -> (ParamVector, Vec<f64>) {
    let mut theta = Vec::with_capacity(vp.len());
    let mut eps = Vec::with_capacity(vp.len());
    for i in 0..vp.len() {
        let e: f64 = StandardNormal.sample(rng);
        eps.push(e);
        theta.push(vp.mu[i] + softplus(vp.rho[i]) * e);
    }
    (theta, eps)
}

/// Reparameterized posterior sample.
pub fn sample_params<R: Rng>(vp: &VariationalParams, rng: &mut R) -> ParamVector {
    sample_with_noise(vp, rng).0
}

/// Two-component Gaussian scale mixture, p(w) = π N(w;0,σ₁²) + (1−π) N(w;0,σ₂²).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScaleMixturePrior {
    pub sigma1: f64,
    pub sigma2: f64,
    pub pi: f64,
}

impl Default for ScaleMixturePrior {
    fn default() -> Self {
        ScaleMixturePrior { sigma1: 0.1, sigma2: 0.1, pi: 0.5 }
    }
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

impl ScaleMixturePrior {
    pub fn validate(&self) -> bool {
        self.sigma1 > 0.0 && self.sigma2 > 0.0 && (0.0..=1.0).contains(&self.pi)
    }

    pub fn log_density(&self, w: f64) -> f64 {
        let mut ctx = Raw;
        -self.neg_log_density(&mut ctx, w)
    }

    /// −log p(w) under any context. Equal component scales collapse to a
    /// single Gaussian without going through log-sum-exp.
    pub fn neg_log_density<C: Ctx>(&self, ctx: &mut C, w: C::V) -> C::V {
        let ln_comp = |ctx: &mut C, w: C::V, sigma: f64| {
            let sq = ctx.square(w);
            let c = ctx.constant(-0.5 / (sigma * sigma));
            let t = ctx.mul(sq, c);
            let shift = ctx.constant(-(sigma.ln() + LN_SQRT_2PI));
            ctx.add(t, shift)
        };
        let logp = if self.sigma1 == self.sigma2 || self.pi == 1.0 {
            if self.pi == 0.0 {
                ln_comp(ctx, w, self.sigma2)
            } else {
                ln_comp(ctx, w, self.sigma1)
            }
        } else if self.pi == 0.0 {
            ln_comp(ctx, w, self.sigma2)
        } else {
            // log(π e^a + (1−π) e^b) via the larger-primal anchor.
            let a0 = ln_comp(ctx, w, self.sigma1);
            let b0 = ln_comp(ctx, w, self.sigma2);
            let la = ctx.constant(self.pi.ln());
            let lb = ctx.constant((1.0 - self.pi).ln());
            let a = ctx.add(a0, la);
            let b = ctx.add(b0, lb);
            let (hi, lo) = if ctx.primal(a) >= ctx.primal(b) { (a, b) } else { (b, a) };
            let d = ctx.sub(lo, hi);
            let e = ctx.exp(d);
            let one = ctx.constant(1.0);
            let s = ctx.add(one, e);
            let l = ctx.ln(s);
            ctx.add(hi, l)
        };
        ctx.neg(logp)
    }

    /// −Σᵢ log p(θᵢ) over a coordinate range, plain values.
    pub fn neg_log_density_sum(&self, theta: &[f64]) -> f64 {
        theta.iter().map(|&w| -self.log_density(w)).sum()
    }
}

/// log q(θ | mu, σ) of the diagonal Gaussian posterior.
pub fn log_q(theta: &[f64], mu: &[f64], sigma: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..theta.len() {
        let d = (theta[i] - mu[i]) / sigma[i];
        acc += -sigma[i].ln() - LN_SQRT_2PI - 0.5 * d * d;
    }
    acc
}

/// Monte Carlo KL estimate (1/S) Σ_s [log q(θ_s) − log p(θ_s)], before any
/// scaling by the training loop.
pub fn kl_penalty(
    vp: &VariationalParams,
    prior: &ScaleMixturePrior,
    samples: &[ParamVector],
) -> f64 {
    let sigma = vp.sigma();
    let mut acc = 0.0;
    for s in samples {
        acc += log_q(s, &vp.mu, &sigma) - (-prior.neg_log_density_sum(s));
    }
    acc / samples.len() as f64
}

/// Serialized frozen model: architecture, input map, posterior parameters,
/// and the hash of the config that produced them. Round-trips bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub arch: Architecture,
    pub norm: InputNorm,
    pub params: VariationalParams,
    pub config_hash: String,
}

const CKPT_MAGIC: &[u8; 4] = b"BPNN";
const CKPT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let p = self.arch.param_count();
        if self.params.len() != p {
            return Err(ModelError::LengthMismatch { got: self.params.len(), want: p });
        }
        let mut w = io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(CKPT_MAGIC)?;
        w.write_all(&CKPT_VERSION.to_le_bytes())?;
        w.write_all(&(self.arch.hidden_layers as u32).to_le_bytes())?;
        w.write_all(&(self.arch.hidden_width as u32).to_le_bytes())?;
        w.write_all(&[self.norm.enabled as u8])?;
        w.write_all(&self.norm.t_max.to_le_bytes())?;
        let hash = self.config_hash.as_bytes();
        w.write_all(&(hash.len() as u32).to_le_bytes())?;
        w.write_all(hash)?;
        w.write_all(&(p as u64).to_le_bytes())?;
        for v in self.params.mu.iter().chain(self.params.rho.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, ModelError> {
        let mut r = io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CKPT_MAGIC {
            return Err(ModelError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != CKPT_VERSION {
            return Err(ModelError::BadVersion(version));
        }
        let hidden_layers = read_u32(&mut r)? as usize;
        let hidden_width = read_u32(&mut r)? as usize;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let t_max = read_f64(&mut r)?;
        let hash_len = read_u32(&mut r)? as usize;
        let mut hash = vec![0u8; hash_len];
        r.read_exact(&mut hash)?;
        let p = read_u64(&mut r)? as usize;
        let arch = Architecture { hidden_layers, hidden_width };
        if p != arch.param_count() {
            return Err(ModelError::LengthMismatch { got: p, want: arch.param_count() });
        }
        let mut mu = Vec::with_capacity(p);
        for _ in 0..p {
            mu.push(read_f64(&mut r)?);
        }
        let mut rho = Vec::with_capacity(p);
        for _ in 0..p {
            rho.push(read_f64(&mut r)?);
        }
        Ok(Checkpoint {
            arch,
            norm: InputNorm { enabled: flag[0] != 0, t_max },
            params: VariationalParams { mu, rho },
            config_hash: String::from_utf8_lossy(&hash).into_owned(),
        })
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
