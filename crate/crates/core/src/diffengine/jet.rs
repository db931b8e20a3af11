//! Second-order input jets: value plus first and second derivatives with
//! respect to one scalar input, propagated by exact Taylor rules.
//!
//! The components are context values, so a jet evaluated under a recording
//! context stays differentiable with respect to the parameters — this is
//! what lets gradients and HVPs flow through du/dt and d²u/dt².

use super::Ctx;

#[derive(Clone, Copy, Debug)]
pub struct Jet2<V: Copy> {
    /// u
    pub v: V,
    /// du/dt
    pub d1: V,
    /// d²u/dt²
    pub d2: V,
}

impl<V: Copy> Jet2<V> {
    /// Seed the input variable: value `t`, slope `dt` (the chain factor for
    /// any affine reparameterization of the raw input), curvature zero.
    pub fn seed<C: Ctx<V = V>>(ctx: &mut C, t: f64, dt: f64) -> Self {
        Jet2 { v: ctx.constant(t), d1: ctx.constant(dt), d2: ctx.constant(0.0) }
    }

    /// A quantity with no input dependence.
    pub fn constant<C: Ctx<V = V>>(ctx: &mut C, x: f64) -> Self {
        let zero = ctx.constant(0.0);
        Jet2 { v: ctx.constant(x), d1: zero, d2: zero }
    }

    pub fn add<C: Ctx<V = V>>(ctx: &mut C, a: Self, b: Self) -> Self {
        Jet2 { v: ctx.add(a.v, b.v), d1: ctx.add(a.d1, b.d1), d2: ctx.add(a.d2, b.d2) }
    }

    /// Add an input-independent scalar: only the value slot moves.
    pub fn add_scalar<C: Ctx<V = V>>(ctx: &mut C, a: Self, s: V) -> Self {
        Jet2 { v: ctx.add(a.v, s), d1: a.d1, d2: a.d2 }
    }

    /// Scale by an input-independent scalar (e.g. a network weight).
    pub fn scale<C: Ctx<V = V>>(ctx: &mut C, s: V, a: Self) -> Self {
        Jet2 { v: ctx.mul(s, a.v), d1: ctx.mul(s, a.d1), d2: ctx.mul(s, a.d2) }
    }

    pub fn neg<C: Ctx<V = V>>(ctx: &mut C, a: Self) -> Self {
        Jet2 { v: ctx.neg(a.v), d1: ctx.neg(a.d1), d2: ctx.neg(a.d2) }
    }

    /// Full product rule: (ab)'' = a''b + 2a'b' + ab''.
    pub fn mul<C: Ctx<V = V>>(ctx: &mut C, a: Self, b: Self) -> Self {
        let v = ctx.mul(a.v, b.v);
        let d1a = ctx.mul(a.d1, b.v);
        let d1b = ctx.mul(a.v, b.d1);
        let d1 = ctx.add(d1a, d1b);
        let t1 = ctx.mul(a.d2, b.v);
        let cross = ctx.mul(a.d1, b.d1);
        let cross2 = ctx.add(cross, cross);
        let t3 = ctx.mul(a.v, b.d2);
        let t12 = ctx.add(t1, cross2);
        let d2 = ctx.add(t12, t3);
        Jet2 { v, d1, d2 }
    }

    /// (a²)'' = 2(a'² + a a'').
    pub fn square<C: Ctx<V = V>>(ctx: &mut C, a: Self) -> Self {
        let v = ctx.square(a.v);
        let q = ctx.mul(a.v, a.d1);
        let d1 = ctx.add(q, q);
        let s1 = ctx.square(a.d1);
        let s2 = ctx.mul(a.v, a.d2);
        let s = ctx.add(s1, s2);
        let d2 = ctx.add(s, s);
        Jet2 { v, d1, d2 }
    }

    /// tanh with y' = s·u', y'' = s·u'' − 2y·u'·(s·u'), where s = 1 − y².
    pub fn tanh<C: Ctx<V = V>>(ctx: &mut C, a: Self) -> Self {
        let y = ctx.tanh(a.v);
        let y2 = ctx.square(y);
        let ny2 = ctx.neg(y2);
        let one = ctx.constant(1.0);
        let s = ctx.add(one, ny2);
        let d1 = ctx.mul(s, a.d1);
        let t1 = ctx.mul(s, a.d2);
        let q = ctx.mul(a.d1, d1);
        let yq = ctx.mul(y, q);
        let yq2 = ctx.add(yq, yq);
        let nyq2 = ctx.neg(yq2);
        let d2 = ctx.add(t1, nyq2);
        Jet2 { v: y, d1, d2 }
    }
}
