//! The additive terms of the negative log-posterior — data misfit, ODE
//! residual, initial condition, endpoint anchor, and prior — exposed as a
//! uniform term list the autodiff drivers can walk point by point.
//!
//! Every loss is a sum of independent per-point terms, so gradients and
//! HVPs stream one small tape per point instead of materializing one large
//! graph. Terms are partitioned into a fixed number of chunks and reduced
//! in chunk order, which keeps results bit-identical for any worker count.

use rayon::prelude::*;

use crate::diffengine::{self, Ctx, DiffError, Dual, ScalarFn, Workspace};
use crate::model::{net_jet, net_value, Architecture, InputNorm, ScaleMixturePrior};
use crate::physics::{residual_ctx, CollocationGrid, Dataset, VdpProblem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constraint {
    Data,
    Pde,
    Ic,
    Bc,
    Prior,
}

impl Constraint {
    /// The four physical terms, in the fixed summation order.
    pub const PHYSICAL: [Constraint; 4] =
        [Constraint::Data, Constraint::Pde, Constraint::Ic, Constraint::Bc];
    /// All terms of the objective, prior last.
    pub const ALL: [Constraint; 5] = [
        Constraint::Data,
        Constraint::Pde,
        Constraint::Ic,
        Constraint::Bc,
        Constraint::Prior,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Constraint::Data => "data",
            Constraint::Pde => "pde",
            Constraint::Ic => "ic",
            Constraint::Bc => "bc",
            Constraint::Prior => "prior",
        }
    }
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Constraint {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "data" => Ok(Constraint::Data),
            "pde" => Ok(Constraint::Pde),
            "ic" => Ok(Constraint::Ic),
            "bc" => Ok(Constraint::Bc),
            "prior" => Ok(Constraint::Prior),
            other => Err(format!("unknown constraint {other:?}")),
        }
    }
}

/// Loss weights λ_c for the physical terms; the prior is always unweighted.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Weights {
    pub data: f64,
    pub pde: f64,
    pub ic: f64,
    pub bc: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights { data: 1.0, pde: 1.0, ic: 1.0, bc: 1.0 }
    }
}

impl Weights {
    pub fn get(&self, c: Constraint) -> f64 {
        match c {
            Constraint::Data => self.data,
            Constraint::Pde => self.pde,
            Constraint::Ic => self.ic,
            Constraint::Bc => self.bc,
            Constraint::Prior => 1.0,
        }
    }
}

/// Everything needed to evaluate any constraint term at any parameter
/// vector. Read-only after construction; safe to share across workers.
#[derive(Clone, Debug)]
pub struct ConstraintSet {
    pub arch: Architecture,
    pub norm: InputNorm,
    pub problem: VdpProblem,
    pub dataset: Dataset,
    pub grid: CollocationGrid,
    pub prior: ScaleMixturePrior,
    pub weights: Weights,
}

/// Coordinates per prior term; the prior is coordinate-separable, so it is
/// chunked to keep individual tapes small.
const PRIOR_CHUNK: usize = 512;

/// Fixed chunk count for parallel reduction (independent of thread count).
const DRIVER_CHUNKS: usize = 64;

#[derive(Clone, Copy)]
struct Term {
    c: Constraint,
    idx: usize,
    weight: f64,
}

struct TermFn<'a> {
    set: &'a ConstraintSet,
    term: Term,
}

impl ScalarFn for TermFn<'_> {
    fn eval<C: Ctx>(&self, ctx: &mut C, params: &[C::V]) -> C::V {
        let v = self.set.eval_term(self.term.c, self.term.idx, ctx, params);
        if self.term.weight == 1.0 {
            v
        } else {
            let w = ctx.constant(self.term.weight);
            ctx.mul(v, w)
        }
    }
}

struct ResidualFn<'a> {
    set: &'a ConstraintSet,
    c: Constraint,
    idx: usize,
}

impl ScalarFn for ResidualFn<'_> {
    fn eval<C: Ctx>(&self, ctx: &mut C, params: &[C::V]) -> C::V {
        self.set.eval_residual(self.c, self.idx, ctx, params)
    }
}

impl ConstraintSet {
    pub fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    /// Number of additive terms of L_c (each term already carries its 1/N).
    pub fn n_terms(&self, c: Constraint) -> usize {
        match c {
            Constraint::Data => self.dataset.points.len(),
            Constraint::Pde => self.grid.len(),
            Constraint::Ic | Constraint::Bc => 1,
            Constraint::Prior => self.param_count().div_ceil(PRIOR_CHUNK),
        }
    }

    /// Number of scalar residuals r_i with L_c = s·Σᵢ rᵢ² (see
    /// [`ConstraintSet::gauss_newton_scale`]). Zero for the prior, which
    /// has no residual structure.
    pub fn n_residuals(&self, c: Constraint) -> usize {
        match c {
            Constraint::Data => self.dataset.points.len(),
            Constraint::Pde => self.grid.len(),
            Constraint::Ic => 2,
            Constraint::Bc => 1,
            Constraint::Prior => 0,
        }
    }

    /// The s in H_GN = s·Σᵢ ∇rᵢ∇rᵢᵀ matching each loss's normalization.
    pub fn gauss_newton_scale(&self, c: Constraint) -> f64 {
        match c {
            Constraint::Data => 2.0 / self.dataset.points.len() as f64,
            Constraint::Pde => 2.0 / self.grid.len() as f64,
            Constraint::Ic | Constraint::Bc => 2.0,
            Constraint::Prior => 0.0,
        }
    }

    fn eval_term<C: Ctx>(&self, c: Constraint, idx: usize, ctx: &mut C, params: &[C::V]) -> C::V {
        match c {
            Constraint::Data => {
                let (t, y) = self.dataset.points[idx];
                let u = net_value(&self.arch, &self.norm, ctx, params, t);
                let yc = ctx.constant(y);
                let d = ctx.sub(u, yc);
                let sq = ctx.square(d);
                let inv_n = ctx.constant(1.0 / self.dataset.points.len() as f64);
                ctx.mul(sq, inv_n)
            }
            Constraint::Pde => {
                let t = self.grid.times[idx];
                let r = residual_ctx(&self.arch, &self.norm, ctx, params, t, self.problem.mu);
                let sq = ctx.square(r);
                let inv_n = ctx.constant(1.0 / self.grid.len() as f64);
                ctx.mul(sq, inv_n)
            }
            Constraint::Ic => {
                let jet = net_jet(&self.arch, &self.norm, ctx, params, self.problem.t_span.0);
                let u0 = ctx.constant(self.problem.u0);
                let du0 = ctx.constant(self.problem.du0);
                let d0 = ctx.sub(jet.v, u0);
                let d1 = ctx.sub(jet.d1, du0);
                let s0 = ctx.square(d0);
                let s1 = ctx.square(d1);
                ctx.add(s0, s1)
            }
            Constraint::Bc => {
                let u = net_value(&self.arch, &self.norm, ctx, params, self.problem.bc_time);
                let b = ctx.constant(self.problem.bc_value);
                let d = ctx.sub(u, b);
                ctx.square(d)
            }
            Constraint::Prior => {
                let lo = idx * PRIOR_CHUNK;
                let hi = ((idx + 1) * PRIOR_CHUNK).min(params.len());
                let mut acc = self.prior.neg_log_density(ctx, params[lo]);
                for &w in &params[lo + 1..hi] {
                    let t = self.prior.neg_log_density(ctx, w);
                    acc = ctx.add(acc, t);
                }
                acc
            }
        }
    }

    fn eval_residual<C: Ctx>(
        &self,
        c: Constraint,
        idx: usize,
        ctx: &mut C,
        params: &[C::V],
    ) -> C::V {
        match c {
            Constraint::Data => {
                let (t, y) = self.dataset.points[idx];
                let u = net_value(&self.arch, &self.norm, ctx, params, t);
                let yc = ctx.constant(y);
                ctx.sub(u, yc)
            }
            Constraint::Pde => {
                let t = self.grid.times[idx];
                residual_ctx(&self.arch, &self.norm, ctx, params, t, self.problem.mu)
            }
            Constraint::Ic => {
                let jet = net_jet(&self.arch, &self.norm, ctx, params, self.problem.t_span.0);
                if idx == 0 {
                    let u0 = ctx.constant(self.problem.u0);
                    ctx.sub(jet.v, u0)
                } else {
                    let du0 = ctx.constant(self.problem.du0);
                    ctx.sub(jet.d1, du0)
                }
            }
            Constraint::Bc => {
                let u = net_value(&self.arch, &self.norm, ctx, params, self.problem.bc_time);
                let b = ctx.constant(self.problem.bc_value);
                ctx.sub(u, b)
            }
            Constraint::Prior => unreachable!("the prior has no residual rows"),
        }
    }

    fn terms_for(&self, c: Constraint) -> Vec<Term> {
        (0..self.n_terms(c)).map(|idx| Term { c, idx, weight: 1.0 }).collect()
    }

    /// All terms of U = Σ_c λ_c L_c + L_prior, weights folded into each
    /// term, in the fixed (data, pde, ic, bc, prior) ascending-t order.
    fn terms_total(&self) -> Vec<Term> {
        let mut terms = Vec::new();
        for c in Constraint::ALL {
            let w = self.weights.get(c);
            if w == 0.0 && c != Constraint::Prior {
                // A zero-weighted term contributes exactly nothing to the
                // total objective; skip its evaluation entirely.
                continue;
            }
            for idx in 0..self.n_terms(c) {
                terms.push(Term { c, idx, weight: w });
            }
        }
        terms
    }

    /// λ-unweighted L_c(θ).
    pub fn loss(&self, c: Constraint, theta: &[f64]) -> f64 {
        let terms = self.terms_for(c);
        self.value_over_terms(&terms, theta)
    }

    /// U(θ) = Σ_c λ_c L_c(θ) + L_prior(θ).
    pub fn total_loss(&self, theta: &[f64]) -> f64 {
        let terms = self.terms_total();
        self.value_over_terms(&terms, theta)
    }

    /// λ-unweighted (L_c, ∇L_c).
    pub fn grad(&self, c: Constraint, theta: &[f64]) -> Result<(f64, Vec<f64>), DiffError> {
        let terms = self.terms_for(c);
        self.grad_over_terms(&terms, theta)
    }

    /// λ-unweighted H_c·v, accumulated into a fresh vector.
    pub fn hvp(&self, c: Constraint, theta: &[f64], v: &[f64]) -> Result<Vec<f64>, DiffError> {
        let terms = self.terms_for(c);
        self.hvp_over_terms(&terms, theta, v)
    }

    /// H_tot·v computed on the monolithic objective (weights inside each
    /// point tape), not by summing per-constraint HVPs.
    pub fn total_hvp(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>, DiffError> {
        let terms = self.terms_total();
        self.hvp_over_terms(&terms, theta, v)
    }

    /// Gradient rows ∇rᵢ of the constraint's residuals, flattened n×P
    /// row-major.
    pub fn residual_rows(&self, c: Constraint, theta: &[f64]) -> Result<Vec<f64>, DiffError> {
        let p = theta.len();
        let n = self.n_residuals(c);
        let chunks = fixed_chunks(n);
        let partials: Result<Vec<Vec<f64>>, DiffError> = chunks
            .par_iter()
            .map(|range| {
                let mut ws = Workspace::<f64>::new();
                let mut rows = vec![0.0; (range.end - range.start) * p];
                for idx in range.clone() {
                    let f = ResidualFn { set: self, c, idx };
                    let out = &mut rows[(idx - range.start) * p..(idx - range.start + 1) * p];
                    diffengine::grad_acc(&f, theta, &mut ws, out)?;
                }
                Ok(rows)
            })
            .collect();
        let mut rows = Vec::with_capacity(n * p);
        for part in partials? {
            rows.extend_from_slice(&part);
        }
        Ok(rows)
    }

    /// Plain residual values rᵢ of the constraint.
    pub fn residual_values(&self, c: Constraint, theta: &[f64]) -> Vec<f64> {
        (0..self.n_residuals(c))
            .map(|idx| {
                let f = ResidualFn { set: self, c, idx };
                diffengine::value(&f, theta)
            })
            .collect()
    }

    fn value_over_terms(&self, terms: &[Term], theta: &[f64]) -> f64 {
        let chunks = fixed_chunks(terms.len());
        let partials: Vec<f64> = chunks
            .par_iter()
            .map(|range| {
                let mut acc = 0.0;
                for t in &terms[range.clone()] {
                    let f = TermFn { set: self, term: *t };
                    acc += diffengine::value(&f, theta);
                }
                acc
            })
            .collect();
        partials.iter().sum()
    }

    fn grad_over_terms(
        &self,
        terms: &[Term],
        theta: &[f64],
    ) -> Result<(f64, Vec<f64>), DiffError> {
        let p = theta.len();
        let chunks = fixed_chunks(terms.len());
        let partials: Result<Vec<(f64, Vec<f64>)>, DiffError> = chunks
            .par_iter()
            .map(|range| {
                let mut ws = Workspace::<f64>::new();
                let mut g = vec![0.0; p];
                let mut val = 0.0;
                for t in &terms[range.clone()] {
                    let f = TermFn { set: self, term: *t };
                    val += diffengine::grad_acc(&f, theta, &mut ws, &mut g)?;
                }
                Ok((val, g))
            })
            .collect();
        let mut value = 0.0;
        let mut grad = vec![0.0; p];
        for (v, g) in partials? {
            value += v;
            for (o, x) in grad.iter_mut().zip(g.iter()) {
                *o += x;
            }
        }
        Ok((value, grad))
    }

    fn hvp_over_terms(
        &self,
        terms: &[Term],
        theta: &[f64],
        v: &[f64],
    ) -> Result<Vec<f64>, DiffError> {
        let p = theta.len();
        let chunks = fixed_chunks(terms.len());
        let partials: Result<Vec<Vec<f64>>, DiffError> = chunks
            .par_iter()
            .map(|range| {
                let mut ws = Workspace::<Dual>::new();
                let mut hv = vec![0.0; p];
                for t in &terms[range.clone()] {
                    let f = TermFn { set: self, term: *t };
                    diffengine::hvp_acc(&f, theta, v, &mut ws, &mut hv)?;
                }
                Ok(hv)
            })
            .collect();
        let mut out = vec![0.0; p];
        for part in partials? {
            for (o, x) in out.iter_mut().zip(part.iter()) {
                *o += x;
            }
        }
        Ok(out)
    }
}

fn fixed_chunks(n: usize) -> Vec<std::ops::Range<usize>> {
    let k = DRIVER_CHUNKS.min(n.max(1));
    (0..k)
        .map(|j| (j * n / k)..((j + 1) * n / k))
        .filter(|r| !r.is_empty())
        .collect()
}
