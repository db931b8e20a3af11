//! Tape value types: plain `f64` and first-order dual numbers.

/// Arithmetic a tape value must support. All computation is 64-bit; the
/// curvature analysis is too ill-conditioned for f32.
pub trait Scalar: Copy + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn zero() -> Self;
    fn one() -> Self;
    /// Value component (tangent stripped, if any).
    fn primal(self) -> f64;
    fn is_finite(self) -> bool;
    fn is_zero(self) -> bool;

    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
    fn neg(self) -> Self;
    fn recip(self) -> Self;
    fn tanh(self) -> Self;
    fn square(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
}

impl Scalar for f64 {
    #[inline(always)]
    fn from_f64(x: f64) -> f64 {
        x
    }
    #[inline(always)]
    fn zero() -> f64 {
        0.0
    }
    #[inline(always)]
    fn one() -> f64 {
        1.0
    }
    #[inline(always)]
    fn primal(self) -> f64 {
        self
    }
    #[inline(always)]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    #[inline(always)]
    fn is_zero(self) -> bool {
        self == 0.0
    }
    #[inline(always)]
    fn add(self, o: f64) -> f64 {
        self + o
    }
    #[inline(always)]
    fn sub(self, o: f64) -> f64 {
        self - o
    }
    #[inline(always)]
    fn mul(self, o: f64) -> f64 {
        self * o
    }
    #[inline(always)]
    fn neg(self) -> f64 {
        -self
    }
    #[inline(always)]
    fn recip(self) -> f64 {
        1.0 / self
    }
    #[inline(always)]
    fn tanh(self) -> f64 {
        f64::tanh(self)
    }
    #[inline(always)]
    fn square(self) -> f64 {
        self * self
    }
    #[inline(always)]
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    #[inline(always)]
    fn ln(self) -> f64 {
        f64::ln(self)
    }
}

/// Value plus directional tangent. Running the tape over `Dual` carries a
/// forward-mode derivative along a fixed parameter direction through both
/// the forward and reverse sweeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    v: f64,
    t: f64,
}

impl Dual {
    #[inline(always)]
    pub fn new(v: f64, t: f64) -> Self {
        Dual { v, t }
    }
    #[inline(always)]
    pub fn tangent(self) -> f64 {
        self.t
    }
}

impl Scalar for Dual {
    #[inline(always)]
    fn from_f64(x: f64) -> Dual {
        Dual { v: x, t: 0.0 }
    }
    #[inline(always)]
    fn zero() -> Dual {
        Dual { v: 0.0, t: 0.0 }
    }
    #[inline(always)]
    fn one() -> Dual {
        Dual { v: 1.0, t: 0.0 }
    }
    #[inline(always)]
    fn primal(self) -> f64 {
        self.v
    }
    #[inline(always)]
    fn is_finite(self) -> bool {
        self.v.is_finite() && self.t.is_finite()
    }
    #[inline(always)]
    fn is_zero(self) -> bool {
        self.v == 0.0 && self.t == 0.0
    }
    #[inline(always)]
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, t: self.t + o.t }
    }
    #[inline(always)]
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, t: self.t - o.t }
    }
    #[inline(always)]
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self.v * o.v, t: self.t * o.v + self.v * o.t }
    }
    #[inline(always)]
    fn neg(self) -> Dual {
        Dual { v: -self.v, t: -self.t }
    }
    #[inline(always)]
    fn recip(self) -> Dual {
        let r = 1.0 / self.v;
        Dual { v: r, t: -self.t * r * r }
    }
    #[inline(always)]
    fn tanh(self) -> Dual {
        let y = f64::tanh(self.v);
        Dual { v: y, t: self.t * (1.0 - y * y) }
    }
    #[inline(always)]
    fn square(self) -> Dual {
        Dual { v: self.v * self.v, t: 2.0 * self.v * self.t }
    }
    #[inline(always)]
    fn exp(self) -> Dual {
        let e = f64::exp(self.v);
        Dual { v: e, t: self.t * e }
    }
    #[inline(always)]
    fn ln(self) -> Dual {
        Dual { v: f64::ln(self.v), t: self.t / self.v }
    }
}

/// Fixed-width lane bundle: one tape evaluation carries `L` independent
/// grid points, with parameters broadcast and per-point inputs entering
/// through dedicated leaves. Arithmetic is elementwise; the drivers reduce
/// lane results in lane order, so results stay deterministic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wide<const L: usize>(pub [f64; L]);

impl<const L: usize> Wide<L> {
    #[inline(always)]
    pub fn splat(x: f64) -> Self {
        Wide([x; L])
    }
    #[inline(always)]
    pub fn from_lanes(l: [f64; L]) -> Self {
        Wide(l)
    }
    /// Lane sum, left to right.
    #[inline(always)]
    pub fn reduce(self) -> f64 {
        self.0.iter().sum()
    }
    #[inline(always)]
    fn map(self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = [0.0; L];
        for i in 0..L {
            out[i] = f(self.0[i]);
        }
        Wide(out)
    }
    #[inline(always)]
    fn zip(self, o: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = [0.0; L];
        for i in 0..L {
            out[i] = f(self.0[i], o.0[i]);
        }
        Wide(out)
    }
}

impl<const L: usize> Scalar for Wide<L> {
    #[inline(always)]
    fn from_f64(x: f64) -> Self {
        Wide::splat(x)
    }
    #[inline(always)]
    fn zero() -> Self {
        Wide::splat(0.0)
    }
    #[inline(always)]
    fn one() -> Self {
        Wide::splat(1.0)
    }
    #[inline(always)]
    fn primal(self) -> f64 {
        self.0[0]
    }
    #[inline(always)]
    fn is_finite(self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
    #[inline(always)]
    fn is_zero(self) -> bool {
        self.0.iter().all(|x| *x == 0.0)
    }
    #[inline(always)]
    fn add(self, o: Self) -> Self {
        self.zip(o, |a, b| a + b)
    }
    #[inline(always)]
    fn sub(self, o: Self) -> Self {
        self.zip(o, |a, b| a - b)
    }
    #[inline(always)]
    fn mul(self, o: Self) -> Self {
        self.zip(o, |a, b| a * b)
    }
    #[inline(always)]
    fn neg(self) -> Self {
        self.map(|a| -a)
    }
    #[inline(always)]
    fn recip(self) -> Self {
        self.map(|a| 1.0 / a)
    }
    #[inline(always)]
    fn tanh(self) -> Self {
        self.map(f64::tanh)
    }
    #[inline(always)]
    fn square(self) -> Self {
        self.zip(self, |a, b| a * b)
    }
    #[inline(always)]
    fn exp(self) -> Self {
        self.map(f64::exp)
    }
    #[inline(always)]
    fn ln(self) -> Self {
        self.map(f64::ln)
    }
}

/// Lane bundle of dual numbers: wide values plus wide tangents, for lane-
/// batched Hessian-vector products.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WideDual<const L: usize> {
    pub v: Wide<L>,
    pub t: Wide<L>,
}

impl<const L: usize> WideDual<L> {
    #[inline(always)]
    pub fn new(v: Wide<L>, t: Wide<L>) -> Self {
        WideDual { v, t }
    }
}

impl<const L: usize> Scalar for WideDual<L> {
    #[inline(always)]
    fn from_f64(x: f64) -> Self {
        WideDual { v: Wide::splat(x), t: Wide::splat(0.0) }
    }
    #[inline(always)]
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    #[inline(always)]
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    #[inline(always)]
    fn primal(self) -> f64 {
        self.v.0[0]
    }
    #[inline(always)]
    fn is_finite(self) -> bool {
        self.v.is_finite() && self.t.is_finite()
    }
    #[inline(always)]
    fn is_zero(self) -> bool {
        self.v.is_zero() && self.t.is_zero()
    }
    #[inline(always)]
    fn add(self, o: Self) -> Self {
        WideDual { v: self.v.add(o.v), t: self.t.add(o.t) }
    }
    #[inline(always)]
    fn sub(self, o: Self) -> Self {
        WideDual { v: self.v.sub(o.v), t: self.t.sub(o.t) }
    }
    #[inline(always)]
    fn mul(self, o: Self) -> Self {
        WideDual { v: self.v.mul(o.v), t: self.t.mul(o.v).add(self.v.mul(o.t)) }
    }
    #[inline(always)]
    fn neg(self) -> Self {
        WideDual { v: self.v.neg(), t: self.t.neg() }
    }
    #[inline(always)]
    fn recip(self) -> Self {
        let r = self.v.recip();
        WideDual { v: r, t: self.t.mul(r.square()).neg() }
    }
    #[inline(always)]
    fn tanh(self) -> Self {
        let y = self.v.tanh();
        let s = Wide::splat(1.0).sub(y.square());
        WideDual { v: y, t: self.t.mul(s) }
    }
    #[inline(always)]
    fn square(self) -> Self {
        WideDual { v: self.v.square(), t: self.v.mul(self.t).add(self.v.mul(self.t)) }
    }
    #[inline(always)]
    fn exp(self) -> Self {
        let e = self.v.exp();
        WideDual { v: e, t: self.t.mul(e) }
    }
    #[inline(always)]
    fn ln(self) -> Self {
        WideDual { v: self.v.ln(), t: self.t.mul(self.v.recip()) }
    }
}
