//! Bayes-by-Backprop training: minimizes the expected weighted loss over
//! reparameterized posterior draws plus a scaled Monte Carlo KL term, with
//! Adam updates on (mu, rho).

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::constraints::{Constraint, ConstraintSet};
use crate::diffengine::{self, Ctx, DiffError, ScalarFn, Workspace};
use crate::model::{
    sample_with_noise, softplus_prime, ScaleMixturePrior, VariationalParams,
};
use crate::seeds::{rng_for, Stream};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite {term} loss at epoch {epoch}")]
    NonFinite { epoch: usize, term: String },
    #[error("autodiff failure at epoch {epoch} in {term}: {source}")]
    Diff { epoch: usize, term: String, source: DiffError },
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub mc_samples: usize,
    pub kl_scale: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub init_sigma: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            epochs: 2000,
            mc_samples: 5,
            kl_scale: 1e-3,
            betas: (0.9, 0.999),
            eps: 1e-8,
            init_sigma: 0.05,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lr > 0.0) {
            return Err("lr must be positive".into());
        }
        if self.mc_samples == 0 {
            return Err("mc_samples must be at least 1".into());
        }
        if !(self.init_sigma > 0.0) {
            return Err("init_sigma must be positive".into());
        }
        if !(self.kl_scale >= 0.0) {
            return Err("kl_scale must be non-negative".into());
        }
        Ok(())
    }
}

/// Standard bias-corrected Adam over one flat parameter vector.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }
}

pub fn adam_step(
    state: &mut AdamState,
    params: &mut [f64],
    grads: &[f64],
    lr: f64,
    betas: (f64, f64),
    eps: f64,
) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let (b1, b2) = betas;
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// One logged epoch: per-term λ-unweighted loss means over the MC draws,
/// the raw (unscaled) KL estimate, and the actual training objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub loss_data: f64,
    pub loss_pde: f64,
    pub loss_ic: f64,
    pub loss_bc: f64,
    pub kl: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossHistory {
    pub rows: Vec<HistoryRow>,
}

impl LossHistory {
    /// CSV export: `epoch,loss_data,loss_pde,loss_ic,loss_bc,kl,total`.
    pub fn to_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut s = String::from("epoch,loss_data,loss_pde,loss_ic,loss_bc,kl,total\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.epoch, r.loss_data, r.loss_pde, r.loss_ic, r.loss_bc, r.kl, r.total
            )
            .expect("string write");
        }
        std::fs::write(path, s)
    }
}

/// Pathwise KL integrand for one noise draw: with σ = softplus(rho) and
/// θ = mu + σ⊙ε built inside the graph, evaluates
/// log q(θ | mu, σ) − log p(θ) over params = [mu‖rho].
pub struct KlObjective<'a> {
    pub prior: ScaleMixturePrior,
    pub eps: &'a [f64],
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

impl ScalarFn for KlObjective<'_> {
    fn eval<C: Ctx>(&self, ctx: &mut C, params: &[C::V]) -> C::V {
        let p = self.eps.len();
        debug_assert_eq!(params.len(), 2 * p);
        let (mus, rhos) = params.split_at(p);
        let one = ctx.constant(1.0);
        let half = ctx.constant(0.5);
        let ln2pi = ctx.constant(LN_SQRT_2PI);
        let mut acc = ctx.constant(0.0);
        for i in 0..p {
            let e = ctx.exp(rhos[i]);
            let s1 = ctx.add(one, e);
            let sigma = ctx.ln(s1);
            let epsc = ctx.constant(self.eps[i]);
            let d = ctx.mul(sigma, epsc);
            let theta = ctx.add(mus[i], d);
            let lns = ctx.ln(sigma);
            let dsq = ctx.square(d);
            let ssq = ctx.square(sigma);
            let inv = ctx.recip(ssq);
            let ratio = ctx.mul(dsq, inv);
            let quad = ctx.mul(half, ratio);
            let t0 = ctx.add(lns, ln2pi);
            let neg_logq = ctx.add(t0, quad);
            let neg_logp = self.prior.neg_log_density(ctx, theta);
            let n0 = ctx.neg(neg_logq);
            let ki = ctx.add(n0, neg_logp);
            acc = ctx.add(acc, ki);
        }
        acc
    }
}

/// Trains the variational posterior on the given constraint set. The
/// initialization, sampling, and therefore the whole run are determined by
/// `cfg.seed`; epochs may be zero, in which case the initialization is
/// returned unchanged.
pub fn train(
    cfg: &TrainConfig,
    set: &ConstraintSet,
) -> Result<(VariationalParams, LossHistory), TrainError> {
    let mut init_rng = rng_for(cfg.seed, Stream::Init);
    let mut vp = VariationalParams::init(&set.arch, cfg.init_sigma, &mut init_rng);
    let mut rng = rng_for(cfg.seed, Stream::Train);
    let p = vp.len();
    let mut adam = AdamState::new(2 * p);
    let mut history = LossHistory::default();
    let mut kl_ws = Workspace::<f64>::new();
    let mut packed = vec![0.0; 2 * p];
    let mut grad = vec![0.0; 2 * p];
    let mut kl_grad = vec![0.0; 2 * p];

    for epoch in 0..cfg.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut term_sums = [0.0f64; 4];
        let mut kl_sum = 0.0;
        let mut total_sum = 0.0;

        for _ in 0..cfg.mc_samples {
            let (theta, noise) = sample_with_noise(&vp, &mut rng);
            let mut g_theta = vec![0.0; p];
            let mut weighted = 0.0;
            for (ti, &c) in Constraint::PHYSICAL.iter().enumerate() {
                let w = set.weights.get(c);
                let lc = if w != 0.0 {
                    let (lc, gc) = set.grad(c, &theta).map_err(|source| TrainError::Diff {
                        epoch,
                        term: c.name().into(),
                        source,
                    })?;
                    for (o, g) in g_theta.iter_mut().zip(gc.iter()) {
                        *o += w * g;
                    }
                    lc
                } else {
                    set.loss(c, &theta)
                };
                if !lc.is_finite() {
                    return Err(TrainError::NonFinite { epoch, term: c.name().into() });
                }
                term_sums[ti] += lc;
                weighted += w * lc;
            }

            // Chain the per-draw parameter gradient through θ = mu + σ⊙ε.
            for i in 0..p {
                grad[i] += g_theta[i];
                grad[p + i] += g_theta[i] * noise[i] * softplus_prime(vp.rho[i]);
            }

            if cfg.kl_scale != 0.0 {
                packed[..p].copy_from_slice(&vp.mu);
                packed[p..].copy_from_slice(&vp.rho);
                kl_grad.iter_mut().for_each(|g| *g = 0.0);
                let klfn = KlObjective { prior: set.prior, eps: &noise };
                let kl = diffengine::grad_acc(&klfn, &packed, &mut kl_ws, &mut kl_grad)
                    .map_err(|source| TrainError::Diff { epoch, term: "kl".into(), source })?;
                if !kl.is_finite() {
                    return Err(TrainError::NonFinite { epoch, term: "kl".into() });
                }
                for i in 0..2 * p {
                    grad[i] += cfg.kl_scale * kl_grad[i];
                }
                kl_sum += kl;
                weighted += cfg.kl_scale * kl;
            } else {
                let klfn = KlObjective { prior: set.prior, eps: &noise };
                packed[..p].copy_from_slice(&vp.mu);
                packed[p..].copy_from_slice(&vp.rho);
                kl_sum += diffengine::value(&klfn, &packed);
            }
            total_sum += weighted;
        }

        let inv_s = 1.0 / cfg.mc_samples as f64;
        grad.iter_mut().for_each(|g| *g *= inv_s);

        if epoch % 10 == 0 || epoch + 1 == cfg.epochs {
            history.rows.push(HistoryRow {
                epoch,
                loss_data: term_sums[0] * inv_s,
                loss_pde: term_sums[1] * inv_s,
                loss_ic: term_sums[2] * inv_s,
                loss_bc: term_sums[3] * inv_s,
                kl: kl_sum * inv_s,
                total: total_sum * inv_s,
            });
        }

        packed[..p].copy_from_slice(&vp.mu);
        packed[p..].copy_from_slice(&vp.rho);
        adam_step(&mut adam, &mut packed, &grad, cfg.lr, cfg.betas, cfg.eps);
        vp.mu.copy_from_slice(&packed[..p]);
        vp.rho.copy_from_slice(&packed[p..]);
    }
    Ok((vp, history))
}
