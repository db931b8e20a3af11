//! Append-only operation tape. Construction is the forward pass: each
//! pushed node eagerly computes its value, so the node list is always
//! topologically ordered and value-aligned.

use super::scalar::Scalar;
use super::DiffError;

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(u32);

impl Var {
    #[inline(always)]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum OpCode {
    Leaf,
    Const,
    Add,
    Mul,
    Neg,
    Recip,
    Tanh,
    Square,
    Exp,
    Ln,
}

impl OpCode {
    pub fn name(self) -> &'static str {
        match self {
            OpCode::Leaf => "leaf",
            OpCode::Const => "const",
            OpCode::Add => "add",
            OpCode::Mul => "mul",
            OpCode::Neg => "neg",
            OpCode::Recip => "recip",
            OpCode::Tanh => "tanh",
            OpCode::Square => "square",
            OpCode::Exp => "exp",
            OpCode::Ln => "ln",
        }
    }
}

#[derive(Clone, Copy)]
struct Node {
    a: u32,
    b: u32,
    op: OpCode,
}

/// Single-use Wengert tape over scalar type `S`.
///
/// Leaves must be registered first (once, via [`Tape::leaves_from`] or
/// [`Tape::leaves_into`]); every later operand index is checked at push
/// time, which keeps the reverse sweep free to use unchecked loads.
pub struct Tape<S> {
    nodes: Vec<Node>,
    values: Vec<S>,
    n_leaves: u32,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Tape { nodes: Vec::new(), values: Vec::new(), n_leaves: 0 }
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drop all nodes, keeping allocations for reuse.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.values.clear();
        self.n_leaves = 0;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves as usize
    }

    #[inline(always)]
    pub fn value(&self, v: Var) -> S {
        self.values[v.index()]
    }

    /// Register leaves (the differentiation targets). Must be the first
    /// nodes on the tape.
    pub fn leaves_from<I: IntoIterator<Item = S>>(&mut self, vals: I) -> Vec<Var> {
        let mut out = Vec::new();
        self.leaves_into(vals, &mut out);
        out
    }

    /// Allocation-free variant of [`Tape::leaves_from`].
    pub fn leaves_into<I: IntoIterator<Item = S>>(&mut self, vals: I, out: &mut Vec<Var>) {
        assert!(self.nodes.is_empty(), "leaves must be registered on an empty tape");
        out.clear();
        for v in vals {
            let id = self.nodes.len() as u32;
            self.nodes.push(Node { a: 0, b: 0, op: OpCode::Leaf });
            self.values.push(v);
            out.push(Var(id));
        }
        self.n_leaves = self.nodes.len() as u32;
    }

    #[inline(always)]
    fn push(&mut self, op: OpCode, a: u32, b: u32, val: S) -> Var {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node { a, b, op });
        self.values.push(val);
        Var(id)
    }

    #[inline(always)]
    fn operand(&self, v: Var) -> (u32, S) {
        let i = v.index();
        // Indexing asserts the operand exists; together with append-only
        // construction this guarantees operands precede their node.
        (v.0, self.values[i])
    }

    pub fn constant(&mut self, x: S) -> Var {
        self.push(OpCode::Const, 0, 0, x)
    }

    #[inline(always)]
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ia, va) = self.operand(a);
        let (ib, vb) = self.operand(b);
        self.push(OpCode::Add, ia, ib, va.add(vb))
    }

    #[inline(always)]
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ia, va) = self.operand(a);
        let (ib, vb) = self.operand(b);
        self.push(OpCode::Mul, ia, ib, va.mul(vb))
    }

    #[inline(always)]
    pub fn neg(&mut self, a: Var) -> Var {
        let (ia, va) = self.operand(a);
        self.push(OpCode::Neg, ia, 0, va.neg())
    }

    #[inline(always)]
    pub fn recip(&mut self, a: Var) -> Var {
        let (ia, va) = self.operand(a);
        self.push(OpCode::Recip, ia, 0, va.recip())
    }

    #[inline(always)]
    pub fn tanh(&mut self, a: Var) -> Var {
        let (ia, va) = self.operand(a);
        self.push(OpCode::Tanh, ia, 0, va.tanh())
    }

    #[inline(always)]
    pub fn square(&mut self, a: Var) -> Var {
        let (ia, va) = self.operand(a);
        self.push(OpCode::Square, ia, 0, va.square())
    }

    #[inline(always)]
    pub fn exp(&mut self, a: Var) -> Var {
        let (ia, va) = self.operand(a);
        self.push(OpCode::Exp, ia, 0, va.exp())
    }

    #[inline(always)]
    pub fn ln(&mut self, a: Var) -> Var {
        let (ia, va) = self.operand(a);
        self.push(OpCode::Ln, ia, 0, va.ln())
    }

    /// Fail with a located diagnostic if the root value is non-finite.
    ///
    /// Only the root is checked on the fast path; when it is non-finite the
    /// tape is scanned to name the first offending node.
    pub fn ensure_finite(&self, root: Var) -> Result<(), DiffError> {
        if self.value(root).is_finite() {
            return Ok(());
        }
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(DiffError::NonFinite { node: i, op: self.nodes[i].op.name() });
            }
        }
        Err(DiffError::NonFinite { node: root.index(), op: self.nodes[root.index()].op.name() })
    }

    /// Reverse sweep: fills `adj` with ∂root/∂node for every node. Leaf
    /// adjoints occupy the first `n_leaves` slots.
    pub fn reverse_into(&self, root: Var, adj: &mut Vec<S>) {
        let n = self.nodes.len();
        adj.clear();
        adj.resize(n, S::zero());
        adj[root.index()] = S::one();
        let nodes = &self.nodes[..n];
        let values = &self.values[..n];
        let adjs = &mut adj[..n];
        for i in (self.n_leaves as usize..n).rev() {
            // SAFETY: indices were bounds-checked against the live tape at
            // push time and the tape is append-only, so a, b < i < n.
            unsafe {
                let w = *adjs.get_unchecked(i);
                if w.is_zero() {
                    continue;
                }
                let node = nodes.get_unchecked(i);
                let a = node.a as usize;
                match node.op {
                    OpCode::Add => {
                        let b = node.b as usize;
                        let pa = adjs.get_unchecked_mut(a);
                        *pa = pa.add(w);
                        let pb = adjs.get_unchecked_mut(b);
                        *pb = pb.add(w);
                    }
                    OpCode::Mul => {
                        let b = node.b as usize;
                        let va = *values.get_unchecked(a);
                        let vb = *values.get_unchecked(b);
                        let pa = adjs.get_unchecked_mut(a);
                        *pa = pa.add(w.mul(vb));
                        let pb = adjs.get_unchecked_mut(b);
                        *pb = pb.add(w.mul(va));
                    }
                    OpCode::Neg => {
                        let pa = adjs.get_unchecked_mut(a);
                        *pa = pa.sub(w);
                    }
                    OpCode::Recip => {
                        // y = 1/x ⇒ dy/dx = -y²
                        let y = *values.get_unchecked(i);
                        let pa = adjs.get_unchecked_mut(a);
                        *pa = pa.sub(w.mul(y.square()));
                    }
                    OpCode::Tanh => {
                        // dy/dx = 1 - y²
                        let y = *values.get_unchecked(i);
                        let pa = adjs.get_unchecked_mut(a);
                        *pa = pa.add(w.mul(S::one().sub(y.square())));
                    }
                    OpCode::Square => {
                        let x = *values.get_unchecked(a);
                        let pa = adjs.get_unchecked_mut(a);
                        *pa = pa.add(w.mul(x.add(x)));
                    }
                    OpCode::Exp => {
                        let y = *values.get_unchecked(i);
                        let pa = adjs.get_unchecked_mut(a);
                        *pa = pa.add(w.mul(y));
                    }
                    OpCode::Ln => {
                        let x = *values.get_unchecked(a);
                        let pa = adjs.get_unchecked_mut(a);
                        *pa = pa.add(w.mul(x.recip()));
                    }
                    OpCode::Leaf | OpCode::Const => {}
                }
            }
        }
    }

    /// Recompute every node value from the recorded operations, in place.
    /// With unchanged leaf and constant values the result is bit-identical
    /// to the original forward pass.
    pub fn replay(&mut self) {
        for i in self.n_leaves as usize..self.nodes.len() {
            let Node { a, b, op } = self.nodes[i];
            let va = self.values[a as usize];
            self.values[i] = match op {
                OpCode::Leaf | OpCode::Const => continue,
                OpCode::Add => va.add(self.values[b as usize]),
                OpCode::Mul => va.mul(self.values[b as usize]),
                OpCode::Neg => va.neg(),
                OpCode::Recip => va.recip(),
                OpCode::Tanh => va.tanh(),
                OpCode::Square => va.square(),
                OpCode::Exp => va.exp(),
                OpCode::Ln => va.ln(),
            };
        }
    }
}
