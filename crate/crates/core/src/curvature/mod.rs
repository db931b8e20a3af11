//! Matrix-free symmetric operators over the frozen network: per-constraint
//! Hessian-vector products, a Gauss–Newton surrogate with cached residual
//! Jacobian rows, Lanczos eigenpairs, Tikhonov-shifted CG solves, and a
//! dense oracle for validation at small parameter counts.

mod cg;
mod dense;
mod lanczos;

pub use cg::{cg_solve, CgOutcome};
pub use dense::{build_dense, dense_eigen_by_magnitude, dense_solve_shifted, DENSE_LIMIT};
pub use lanczos::{lanczos_topk, EigenSpectrum, LanczosConfig};

use rand::Rng;
use thiserror::Error;

use crate::constraints::{Constraint, ConstraintSet};
use crate::diffengine::{self, Ctx, DiffError, ScalarFn};
use crate::linalg::axpy;
use crate::model::net_value;

#[derive(Debug, Error)]
pub enum CurvatureError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(
        "operator is not positive definite under the current shift (pᵀAp = {p_ap:.3e}); \
         increase eps or use the gauss-newton operator kind"
    )]
    Indefinite { p_ap: f64 },
    #[error("cg did not converge in {iterations} iterations (relative residual {rel_residual:.3e})")]
    CgNotConverged { iterations: usize, rel_residual: f64 },
    #[error("lanczos breakdown could not be recovered (krylov space exhausted at {dim})")]
    Breakdown { dim: usize },
    #[error("dense oracle limited to dim ≤ {limit}, got {dim}")]
    TooLargeForDense { dim: usize, limit: usize },
    #[error("the prior has no residual structure; its operator is always the exact hessian")]
    PriorHasNoGaussNewton,
}

/// A symmetric length-P → length-P map queried only through products.
pub trait LinearOp: Sync {
    fn dim(&self) -> usize;
    /// out = A·v (overwrites out).
    fn apply(&self, v: &[f64], out: &mut [f64]) -> Result<(), CurvatureError>;
    /// Structural upper bound on rank when one is known (e.g. Gauss–Newton
    /// with fewer residual rows than parameters).
    fn rank_bound(&self) -> Option<usize> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    ExactHessian,
    GaussNewton,
}

impl std::fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OperatorKind::ExactHessian => "exact-hessian",
            OperatorKind::GaussNewton => "gauss-newton",
        })
    }
}

/// What an operator measures: one constraint's λ-unweighted curvature, or
/// the full objective's.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpTarget {
    Constraint(Constraint),
    Total,
}

impl std::fmt::Display for OpTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OpTarget::Constraint(c) => f.write_str(c.name()),
            OpTarget::Total => f.write_str("total"),
        }
    }
}

/// Cached Gauss–Newton data: residual Jacobian rows (n×P, row-major) and
/// the loss-matching scale so H_GN = scale·Σᵢ ∇rᵢ∇rᵢᵀ.
struct GnRows {
    rows: Vec<f64>,
    n: usize,
    p: usize,
    scale: f64,
}

impl GnRows {
    fn build(set: &ConstraintSet, theta: &[f64], c: Constraint) -> Result<GnRows, CurvatureError> {
        if c == Constraint::Prior {
            return Err(CurvatureError::PriorHasNoGaussNewton);
        }
        let rows = set.residual_rows(c, theta)?;
        Ok(GnRows {
            n: set.n_residuals(c),
            p: theta.len(),
            scale: set.gauss_newton_scale(c),
            rows,
        })
    }

    /// out += weight·scale·Rᵀ(R v)
    fn apply_into(&self, v: &[f64], out: &mut [f64], weight: f64) {
        let mut rv = vec![0.0; self.n];
        for i in 0..self.n {
            rv[i] = crate::linalg::dot(&self.rows[i * self.p..(i + 1) * self.p], v);
        }
        for i in 0..self.n {
            axpy(weight * self.scale * rv[i], &self.rows[i * self.p..(i + 1) * self.p], out);
        }
    }
}

enum Backend {
    /// Streaming per-point HVPs on the λ-unweighted constraint loss.
    Exact(Constraint),
    /// Streaming HVP of the monolithic objective (weights inside each tape).
    ExactTotal,
    /// Cached-row Gauss–Newton for one residual constraint.
    Gn(GnRows),
    /// Σ λ_c H_c^GN plus the exact prior Hessian.
    GnTotal(Vec<(f64, GnRows)>),
}

/// Matrix-free curvature operator for one constraint or for the total
/// objective. Read-only after construction; concurrent applies are safe.
pub struct CurvatureOperator<'a> {
    set: &'a ConstraintSet,
    theta: &'a [f64],
    backend: Backend,
    pub target: OpTarget,
    pub kind: OperatorKind,
    pub tikhonov_eps: f64,
}

/// Builds the operator for `target` at the frozen parameters.
///
/// The prior term has no residual rows, so its curvature (a diagonal,
/// coordinate-separable Hessian) is applied exactly under both kinds; the
/// Gauss–Newton choice affects the four physical constraints only.
pub fn make_constraint_operator<'a>(
    set: &'a ConstraintSet,
    theta: &'a [f64],
    target: OpTarget,
    kind: OperatorKind,
    tikhonov_eps: f64,
) -> Result<CurvatureOperator<'a>, CurvatureError> {
    let backend = match (target, kind) {
        (OpTarget::Constraint(Constraint::Prior), _) => Backend::Exact(Constraint::Prior),
        (OpTarget::Constraint(c), OperatorKind::ExactHessian) => Backend::Exact(c),
        (OpTarget::Constraint(c), OperatorKind::GaussNewton) => {
            Backend::Gn(GnRows::build(set, theta, c)?)
        }
        (OpTarget::Total, OperatorKind::ExactHessian) => Backend::ExactTotal,
        (OpTarget::Total, OperatorKind::GaussNewton) => {
            let mut parts = Vec::new();
            for c in Constraint::PHYSICAL {
                let w = set.weights.get(c);
                if w != 0.0 {
                    parts.push((w, GnRows::build(set, theta, c)?));
                }
            }
            Backend::GnTotal(parts)
        }
    };
    Ok(CurvatureOperator { set, theta, backend, target, kind, tikhonov_eps })
}

impl CurvatureOperator<'_> {
    /// Tikhonov-shifted solve (H + εI)z = rhs using this operator's ε.
    pub fn solve(
        &self,
        rhs: &[f64],
        tol: f64,
        max_iters: usize,
    ) -> Result<CgOutcome, CurvatureError> {
        cg_solve(self, self.tikhonov_eps, rhs, tol, max_iters)
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.tikhonov_eps = eps;
        self
    }
}

impl LinearOp for CurvatureOperator<'_> {
    fn dim(&self) -> usize {
        self.theta.len()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) -> Result<(), CurvatureError> {
        out.iter_mut().for_each(|x| *x = 0.0);
        match &self.backend {
            Backend::Exact(c) => {
                let hv = self.set.hvp(*c, self.theta, v)?;
                out.copy_from_slice(&hv);
            }
            Backend::ExactTotal => {
                let hv = self.set.total_hvp(self.theta, v)?;
                out.copy_from_slice(&hv);
            }
            Backend::Gn(gn) => gn.apply_into(v, out, 1.0),
            Backend::GnTotal(parts) => {
                for (w, gn) in parts {
                    gn.apply_into(v, out, *w);
                }
                let prior = self.set.hvp(Constraint::Prior, self.theta, v)?;
                axpy(1.0, &prior, out);
            }
        }
        Ok(())
    }

    fn rank_bound(&self) -> Option<usize> {
        match &self.backend {
            Backend::Gn(gn) => Some(gn.n),
            _ => None,
        }
    }
}

/// ∇_θ u_θ(x) at the frozen parameters.
pub fn jacobian_output(
    set: &ConstraintSet,
    theta: &[f64],
    x: f64,
) -> Result<Vec<f64>, CurvatureError> {
    struct OutputAt<'a> {
        set: &'a ConstraintSet,
        t: f64,
    }
    impl ScalarFn for OutputAt<'_> {
        fn eval<C: Ctx>(&self, ctx: &mut C, params: &[C::V]) -> C::V {
            net_value(&self.set.arch, &self.set.norm, ctx, params, self.t)
        }
    }
    Ok(diffengine::grad(&OutputAt { set, t: x }, theta)?)
}

/// Largest-|λ| and floored smallest-|λ| estimates for one operator, used
/// by the condition-number ratio.
#[derive(Clone, Copy, Debug)]
pub struct KappaEstimate {
    pub max_abs: f64,
    pub min_abs_est: f64,
    pub eps: f64,
}

impl KappaEstimate {
    /// κ̂ = |λ|_max / max(|λ|_min-estimate, ε). Rank-deficient operators
    /// (the typical per-constraint case) therefore report |λ|_max / ε.
    pub fn kappa_hat(&self) -> f64 {
        self.max_abs / self.min_abs_est.max(self.eps)
    }
}

/// Smallest-|λ| estimate via Lanczos on the shifted-inverted operator
/// (CG-based application of (H+εI)⁻¹): min_i |λ_i + ε| − ε, clamped at 0.
///
/// Operators with a structural rank bound below the dimension have an
/// exact zero eigenvalue and short-circuit to 0. A CG failure (indefinite
/// shifted operator) also falls back to 0, i.e. to the ε floor, matching
/// the flooring convention above.
pub fn estimate_min_abs_eig<R: Rng>(
    op: &impl LinearOp,
    eps: f64,
    cg_tol: f64,
    cg_max_iters: usize,
    lanczos_iters: usize,
    rng: &mut R,
) -> Result<f64, CurvatureError> {
    if let Some(bound) = op.rank_bound() {
        if bound < op.dim() {
            return Ok(0.0);
        }
    }
    struct Inverse<'a, T: LinearOp> {
        op: &'a T,
        eps: f64,
        tol: f64,
        max_iters: usize,
    }
    impl<T: LinearOp> LinearOp for Inverse<'_, T> {
        fn dim(&self) -> usize {
            self.op.dim()
        }
        fn apply(&self, v: &[f64], out: &mut [f64]) -> Result<(), CurvatureError> {
            let sol = cg_solve(self.op, self.eps, v, self.tol, self.max_iters)?;
            out.copy_from_slice(&sol.z);
            Ok(())
        }
    }
    let inverse = Inverse { op, eps, tol: cg_tol, max_iters: cg_max_iters };
    let cfg = LanczosConfig { k: 1, max_iters: lanczos_iters, tol: 1e-6 };
    match lanczos_topk(&inverse, &cfg, rng) {
        Ok(spec) => {
            let top = spec.values.first().copied().unwrap_or(0.0).abs();
            if top <= 0.0 {
                return Ok(0.0);
            }
            Ok((1.0 / top - eps).max(0.0))
        }
        Err(CurvatureError::Indefinite { .. }) | Err(CurvatureError::CgNotConverged { .. }) => {
            Ok(0.0)
        }
        Err(e) => Err(e),
    }
}

/// Largest-|λ| of an operator (small dedicated Lanczos run), used to set
/// relative Tikhonov shifts.
pub fn estimate_max_abs_eig<R: Rng>(
    op: &impl LinearOp,
    iters: usize,
    rng: &mut R,
) -> Result<f64, CurvatureError> {
    let cfg = LanczosConfig { k: 1, max_iters: iters, tol: 1e-6 };
    let spec = lanczos_topk(op, &cfg, rng)?;
    Ok(spec.values.first().copied().unwrap_or(0.0).abs())
}
