//! Scalar automatic differentiation: a Wengert tape for reverse-mode
//! parameter gradients, second-order input jets for forward-mode time
//! derivatives, and their nesting for exact Hessian-vector products.
//!
//! Reverse mode runs over a [`Tape`] whose values are a generic [`Scalar`];
//! instantiating the tape with [`Dual`] numbers carries a forward-mode
//! tangent through the reverse pass, so one sweep yields both the gradient
//! and an exact H·v (Pearlmutter's construction, cost a small multiple of
//! one forward-backward pass). Tapes are rebuilt per evaluation and never
//! shared between workers.

mod jet;
mod scalar;
mod tape;

pub use jet::Jet2;
pub use scalar::{Dual, Scalar, Wide, WideDual};
pub use tape::{OpCode, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffError {
    /// An intermediate value overflowed or became NaN during evaluation.
    #[error("non-finite value at tape node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },
}

/// Evaluation context: the one surface loss code is written against.
///
/// Implementations either compute values directly ([`Raw`]) or record the
/// computation on a tape ([`TapeCtx`]) for later reverse sweeps. Loss and
/// network code written once against `Ctx` therefore serves plain
/// evaluation, gradients, and Hessian-vector products unchanged.
pub trait Ctx {
    type V: Copy;

    fn constant(&mut self, x: f64) -> Self::V;
    fn add(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn mul(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn neg(&mut self, a: Self::V) -> Self::V;
    fn recip(&mut self, a: Self::V) -> Self::V;
    fn tanh(&mut self, a: Self::V) -> Self::V;
    fn square(&mut self, a: Self::V) -> Self::V;
    fn exp(&mut self, a: Self::V) -> Self::V;
    fn ln(&mut self, a: Self::V) -> Self::V;

    /// Primal value, used only for branch decisions (e.g. log-sum-exp
    /// anchoring); never feeds back into recorded arithmetic.
    fn primal(&self, v: Self::V) -> f64;

    fn sub(&mut self, a: Self::V, b: Self::V) -> Self::V {
        let nb = self.neg(b);
        self.add(a, nb)
    }
}

/// Direct f64 evaluation, no recording.
pub struct Raw;

impl Ctx for Raw {
    type V = f64;

    #[inline]
    fn constant(&mut self, x: f64) -> f64 {
        x
    }
    #[inline]
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }
    #[inline]
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    #[inline]
    fn neg(&mut self, a: f64) -> f64 {
        -a
    }
    #[inline]
    fn recip(&mut self, a: f64) -> f64 {
        1.0 / a
    }
    #[inline]
    fn tanh(&mut self, a: f64) -> f64 {
        f64::tanh(a)
    }
    #[inline]
    fn square(&mut self, a: f64) -> f64 {
        a * a
    }
    #[inline]
    fn exp(&mut self, a: f64) -> f64 {
        f64::exp(a)
    }
    #[inline]
    fn ln(&mut self, a: f64) -> f64 {
        f64::ln(a)
    }
    #[inline]
    fn primal(&self, v: f64) -> f64 {
        v
    }
}

/// Recording context over a tape with scalar type `S`.
pub struct TapeCtx<'a, S: Scalar> {
    pub tape: &'a mut Tape<S>,
}

impl<'a, S: Scalar> Ctx for TapeCtx<'a, S> {
    type V = Var;

    #[inline]
    fn constant(&mut self, x: f64) -> Var {
        self.tape.constant(S::from_f64(x))
    }
    #[inline]
    fn add(&mut self, a: Var, b: Var) -> Var {
        self.tape.add(a, b)
    }
    #[inline]
    fn mul(&mut self, a: Var, b: Var) -> Var {
        self.tape.mul(a, b)
    }
    #[inline]
    fn neg(&mut self, a: Var) -> Var {
        self.tape.neg(a)
    }
    #[inline]
    fn recip(&mut self, a: Var) -> Var {
        self.tape.recip(a)
    }
    #[inline]
    fn tanh(&mut self, a: Var) -> Var {
        self.tape.tanh(a)
    }
    #[inline]
    fn square(&mut self, a: Var) -> Var {
        self.tape.square(a)
    }
    #[inline]
    fn exp(&mut self, a: Var) -> Var {
        self.tape.exp(a)
    }
    #[inline]
    fn ln(&mut self, a: Var) -> Var {
        self.tape.ln(a)
    }
    #[inline]
    fn primal(&self, v: Var) -> f64 {
        self.tape.value(v).primal()
    }
}

/// A scalar-valued function of a parameter vector, written generically so
/// the same body runs under every [`Ctx`].
pub trait ScalarFn {
    fn eval<C: Ctx>(&self, ctx: &mut C, params: &[C::V]) -> C::V;
}

/// Reusable scratch buffers for repeated gradient/HVP sweeps.
pub struct Workspace<S: Scalar> {
    pub tape: Tape<S>,
    adjoints: Vec<S>,
}

impl<S: Scalar> Default for Workspace<S> {
    fn default() -> Self {
        Workspace { tape: Tape::new(), adjoints: Vec::new() }
    }
}

impl<S: Scalar> Workspace<S> {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Plain evaluation of `f` at `at`.
pub fn value(f: &impl ScalarFn, at: &[f64]) -> f64 {
    f.eval(&mut Raw, at)
}

/// Reverse-mode gradient of `f` at `at`.
pub fn grad(f: &impl ScalarFn, at: &[f64]) -> Result<Vec<f64>, DiffError> {
    let mut ws = Workspace::<f64>::new();
    let mut out = vec![0.0; at.len()];
    grad_acc(f, at, &mut ws, &mut out)?;
    Ok(out)
}

/// Gradient sweep accumulating into `out` (`out += ∇f(at)`); reuses `ws`.
pub fn grad_acc(
    f: &impl ScalarFn,
    at: &[f64],
    ws: &mut Workspace<f64>,
    out: &mut [f64],
) -> Result<f64, DiffError> {
    debug_assert_eq!(at.len(), out.len());
    ws.tape.reset();
    let leaves = ws.tape.leaves_from(at.iter().copied());
    let root = {
        let mut ctx = TapeCtx { tape: &mut ws.tape };
        f.eval(&mut ctx, &leaves)
    };
    ws.tape.ensure_finite(root)?;
    ws.tape.reverse_into(root, &mut ws.adjoints);
    for (o, a) in out.iter_mut().zip(ws.adjoints.iter().take(at.len())) {
        *o += *a;
    }
    Ok(ws.tape.value(root))
}

/// Exact Hessian-vector product `∇²f(at)·v` via a tangent overlay on the
/// reverse pass. Not finite-differenced.
pub fn hvp(f: &impl ScalarFn, at: &[f64], v: &[f64]) -> Result<Vec<f64>, DiffError> {
    let mut ws = Workspace::<Dual>::new();
    let mut out = vec![0.0; at.len()];
    hvp_acc(f, at, v, &mut ws, &mut out)?;
    Ok(out)
}

/// HVP sweep accumulating into `out` (`out += H·v`); reuses `ws`. Returns
/// `(value, directional derivative ∇f·v)` of the evaluation.
pub fn hvp_acc(
    f: &impl ScalarFn,
    at: &[f64],
    v: &[f64],
    ws: &mut Workspace<Dual>,
    out: &mut [f64],
) -> Result<(f64, f64), DiffError> {
    debug_assert_eq!(at.len(), v.len());
    debug_assert_eq!(at.len(), out.len());
    ws.tape.reset();
    let leaves = ws
        .tape
        .leaves_from(at.iter().zip(v.iter()).map(|(&a, &t)| Dual::new(a, t)));
    let root = {
        let mut ctx = TapeCtx { tape: &mut ws.tape };
        f.eval(&mut ctx, &leaves)
    };
    ws.tape.ensure_finite(root)?;
    ws.tape.reverse_into(root, &mut ws.adjoints);
    for (o, a) in out.iter_mut().zip(ws.adjoints.iter().take(at.len())) {
        *o += a.tangent();
    }
    let r = ws.tape.value(root);
    Ok((r.primal(), r.tangent()))
}

/// Lane-batched gradient sweep: parameters are broadcast across `L` lanes,
/// per-lane inputs enter through extra leaves appended after the parameter
/// leaves, and each lane's root is seeded with adjoint one. Accumulates the
/// lane-summed parameter gradient into `out` and returns the lane-summed
/// root value.
pub fn grad_acc_wide<const L: usize>(
    f: &impl ScalarFn,
    at: &[f64],
    extras: &[[f64; L]],
    ws: &mut Workspace<Wide<L>>,
    out: &mut [f64],
) -> Result<f64, DiffError> {
    debug_assert_eq!(at.len(), out.len());
    ws.tape.reset();
    let leaves = ws.tape.leaves_from(
        at.iter()
            .map(|&a| Wide::splat(a))
            .chain(extras.iter().map(|&e| Wide::from_lanes(e))),
    );
    let root = {
        let mut ctx = TapeCtx { tape: &mut ws.tape };
        f.eval(&mut ctx, &leaves)
    };
    ws.tape.ensure_finite(root)?;
    ws.tape.reverse_into(root, &mut ws.adjoints);
    for (o, a) in out.iter_mut().zip(ws.adjoints.iter().take(at.len())) {
        *o += a.reduce();
    }
    Ok(ws.tape.value(root).reduce())
}

/// Lane-batched HVP sweep (see [`grad_acc_wide`]): tangents ride the lanes,
/// extra leaves carry zero tangent. Accumulates the lane-summed H·v.
pub fn hvp_acc_wide<const L: usize>(
    f: &impl ScalarFn,
    at: &[f64],
    v: &[f64],
    extras: &[[f64; L]],
    ws: &mut Workspace<WideDual<L>>,
    out: &mut [f64],
) -> Result<f64, DiffError> {
    debug_assert_eq!(at.len(), v.len());
    debug_assert_eq!(at.len(), out.len());
    ws.tape.reset();
    let leaves = ws.tape.leaves_from(
        at.iter()
            .zip(v.iter())
            .map(|(&a, &t)| WideDual::new(Wide::splat(a), Wide::splat(t)))
            .chain(
                extras
                    .iter()
                    .map(|&e| WideDual::new(Wide::from_lanes(e), Wide::splat(0.0))),
            ),
    );
    let root = {
        let mut ctx = TapeCtx { tape: &mut ws.tape };
        f.eval(&mut ctx, &leaves)
    };
    ws.tape.ensure_finite(root)?;
    ws.tape.reverse_into(root, &mut ws.adjoints);
    for (o, a) in out.iter_mut().zip(ws.adjoints.iter().take(at.len())) {
        *o += a.t.reduce();
    }
    Ok(ws.tape.value(root).v.reduce())
}

/// Gradient and HVP in one sweep (the dual reverse pass produces both).
pub fn grad_and_hvp(
    f: &impl ScalarFn,
    at: &[f64],
    v: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), DiffError> {
    let mut ws = Workspace::<Dual>::new();
    ws.tape.reset();
    let leaves = ws
        .tape
        .leaves_from(at.iter().zip(v.iter()).map(|(&a, &t)| Dual::new(a, t)));
    let root = {
        let mut ctx = TapeCtx { tape: &mut ws.tape };
        f.eval(&mut ctx, &leaves)
    };
    ws.tape.ensure_finite(root)?;
    ws.tape.reverse_into(root, &mut ws.adjoints);
    let mut g = Vec::with_capacity(at.len());
    let mut hv = Vec::with_capacity(at.len());
    for a in ws.adjoints.iter().take(at.len()) {
        g.push(a.primal());
        hv.push(a.tangent());
    }
    Ok((g, hv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    struct Quadratic {
        diag: Vec<f64>,
    }

    impl ScalarFn for Quadratic {
        // f(θ) = ½ Σ d_i θ_i²
        fn eval<C: Ctx>(&self, ctx: &mut C, params: &[C::V]) -> C::V {
            let half = ctx.constant(0.5);
            let mut acc = ctx.constant(0.0);
            for (i, &p) in params.iter().enumerate() {
                let d = ctx.constant(self.diag[i]);
                let sq = ctx.square(p);
                let term = ctx.mul(d, sq);
                acc = ctx.add(acc, term);
            }
            ctx.mul(half, acc)
        }
    }

    struct CrossTerm;

    impl ScalarFn for CrossTerm {
        fn eval<C: Ctx>(&self, ctx: &mut C, params: &[C::V]) -> C::V {
            ctx.mul(params[0], params[1])
        }
    }

    struct TanhOfFirst;

    impl ScalarFn for TanhOfFirst {
        fn eval<C: Ctx>(&self, ctx: &mut C, params: &[C::V]) -> C::V {
            ctx.tanh(params[0])
        }
    }

    struct SquareOfFirst;

    impl ScalarFn for SquareOfFirst {
        fn eval<C: Ctx>(&self, ctx: &mut C, params: &[C::V]) -> C::V {
            ctx.square(params[0])
        }
    }

    #[test]
    fn grad_of_square_is_doubling() {
        // loss(θ)=θ₀², at=(3) → (6)
        let g = grad(&SquareOfFirst, &[3.0]).unwrap();
        assert_relative_eq!(g[0], 6.0, max_relative = 1e-15);
    }

    #[test]
    fn grad_of_tanh_at_zero_is_one() {
        let g = grad(&TanhOfFirst, &[0.0]).unwrap();
        assert_relative_eq!(g[0], 1.0, max_relative = 1e-15);
    }

    #[test]
    fn hvp_of_quadratic_form_is_diagonal_action() {
        // loss(θ)=½θᵀAθ with A=diag(2,5), v=(1,1) → (2,5)
        let f = Quadratic { diag: vec![2.0, 5.0] };
        let hv = hvp(&f, &[0.3, -0.7], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(hv[0], 2.0, max_relative = 1e-14);
        assert_relative_eq!(hv[1], 5.0, max_relative = 1e-14);
    }

    #[test]
    fn hvp_of_cross_term_swaps_components() {
        // loss(θ)=θ₀θ₁, v=(1,0) → (0,1)
        let hv = hvp(&CrossTerm, &[2.0, 3.0], &[1.0, 0.0]).unwrap();
        assert_relative_eq!(hv[0], 0.0);
        assert_relative_eq!(hv[1], 1.0, max_relative = 1e-15);
    }

    #[test]
    fn nonfinite_intermediate_is_reported_with_node() {
        struct Inv;
        impl ScalarFn for Inv {
            fn eval<C: Ctx>(&self, ctx: &mut C, params: &[C::V]) -> C::V {
                ctx.recip(params[0])
            }
        }
        let err = grad(&Inv, &[0.0]).unwrap_err();
        match err {
            DiffError::NonFinite { op, .. } => assert_eq!(op, "recip"),
        }
    }

    #[test]
    fn grad_and_hvp_agree_with_separate_sweeps() {
        let f = Quadratic { diag: vec![1.0, 4.0, 9.0] };
        let at = [0.2, -1.1, 0.5];
        let v = [1.0, 2.0, -1.0];
        let (g, hv) = grad_and_hvp(&f, &at, &v).unwrap();
        let g2 = grad(&f, &at).unwrap();
        let hv2 = hvp(&f, &at, &v).unwrap();
        assert_eq!(g, g2);
        assert_eq!(hv, hv2);
    }
}
