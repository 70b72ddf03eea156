//! Scalar reverse-mode differentiation.
//!
//! Model code is written once against [`Graph`]. Two backends implement it:
//! [`Tape`] records every operation so that [`Tape::backward`] can pull
//! adjoints back to the parameter leaves, and [`ValueGraph`] evaluates the
//! same expression directly on numbers for inference.
//!
//! Tapes are define-by-run: a fresh tape (or a [`Tape::reset`] one) is built
//! for every forward pass. Operands always precede their consumers, so the
//! node order is a topological order and the reverse sweep needs no sorting.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, softplus, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Constant,
    Parameter,
    Add,
    Sub,
    Mul,
    Div,
    PowInt,
    Exp,
    Sin,
    Cos,
    Tanh,
    Relu,
    Softplus,
    Max,
    Abs,
}

impl OpKind {
    pub const ALL: [OpKind; 15] = [
        OpKind::Constant,
        OpKind::Parameter,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Div,
        OpKind::PowInt,
        OpKind::Exp,
        OpKind::Sin,
        OpKind::Cos,
        OpKind::Tanh,
        OpKind::Relu,
        OpKind::Softplus,
        OpKind::Max,
        OpKind::Abs,
    ];

    /// Number of node operands; leaves have none and `PowInt` carries its
    /// exponent out of band.
    pub fn arity(self) -> usize {
        match self {
            OpKind::Constant | OpKind::Parameter => 0,
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div | OpKind::Max => 2,
            _ => 1,
        }
    }

    fn eval_unary<T: Scalar>(self, a: T) -> T {
        match self {
            OpKind::Exp => a.exp(),
            OpKind::Sin => a.sin(),
            OpKind::Cos => a.cos(),
            OpKind::Tanh => a.tanh(),
            OpKind::Relu => a.max(T::zero()),
            OpKind::Softplus => softplus(a),
            OpKind::Abs => a.abs(),
            _ => unreachable!("{self:?} is not unary"),
        }
    }

    fn eval_binary<T: Scalar>(self, a: T, b: T) -> T {
        match self {
            OpKind::Add => a + b,
            OpKind::Sub => a - b,
            OpKind::Mul => a * b,
            OpKind::Div => a / b,
            OpKind::Max => {
                if a >= b {
                    a
                } else {
                    b
                }
            }
            _ => unreachable!("{self:?} is not binary"),
        }
    }
}

/// Index of a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One recorded operation.
#[derive(Clone, Copy, Debug)]
pub struct TapeNode<T> {
    op: OpKind,
    // operand ids; for `Parameter` `a` is the parameter index, for `PowInt` `b` is the exponent
    a: u32,
    b: u32,
    value: T,
}

impl<T: Scalar> TapeNode<T> {
    pub fn op_kind(&self) -> OpKind {
        self.op
    }

    pub fn value(&self) -> T {
        self.value
    }

    pub fn operands(&self) -> Vec<NodeId> {
        match self.op.arity() {
            0 => vec![],
            1 => vec![NodeId(self.a)],
            _ => vec![NodeId(self.a), NodeId(self.b)],
        }
    }

    /// Parameter index for `Parameter` nodes.
    pub fn param_index(&self) -> Option<usize> {
        (self.op == OpKind::Parameter).then_some(self.a as usize)
    }
}

/// Partial derivatives of a root with respect to every parameter leaf,
/// indexed by parameter id. Parameters the root does not depend on hold 0.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMap<T> {
    grads: Vec<T>,
}

impl<T: Scalar> GradientMap<T> {
    pub fn get(&self, param: usize) -> T {
        self.grads[param]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.grads
    }

    pub fn into_vec(self) -> Vec<T> {
        self.grads
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// Define-by-run operation log.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<TapeNode<T>>,
    params: usize,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: 0,
        }
    }

    /// A tape whose first `params.len()` nodes are the parameter leaves, so
    /// that parameter `i` is node `i`.
    pub fn with_params(params: &[T]) -> Self {
        let mut tape = Tape::new();
        tape.reset(params);
        tape
    }

    /// Clears the tape and reloads parameter leaves, keeping the allocation.
    pub fn reset(&mut self, params: &[T]) {
        self.nodes.clear();
        self.params = 0;
        self.nodes.reserve(params.len());
        for &p in params {
            self.push_param(p);
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.params
    }

    pub fn node(&self, id: NodeId) -> &TapeNode<T> {
        &self.nodes[id.index()]
    }

    pub fn value(&self, id: NodeId) -> T {
        self.nodes[id.index()].value
    }

    fn push(&mut self, op: OpKind, a: u32, b: u32, value: T) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFiniteValue { op });
        }
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(TapeNode { op, a, b, value });
        Ok(id)
    }

    fn push_param(&mut self, v: T) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(TapeNode {
            op: OpKind::Parameter,
            a: self.params as u32,
            b: 0,
            value: v,
        });
        self.params += 1;
        id
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.index() < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::UnknownOperand {
                id: id.index(),
                len: self.nodes.len(),
            })
        }
    }

    /// Appends a new parameter leaf and returns it.
    pub fn parameter(&mut self, v: T) -> Result<NodeId> {
        if !v.is_finite() {
            return Err(Error::NonFiniteValue {
                op: OpKind::Parameter,
            });
        }
        Ok(self.push_param(v))
    }

    pub fn constant(&mut self, v: T) -> Result<NodeId> {
        self.push(OpKind::Constant, 0, 0, v)
    }

    /// Records `op` applied to `operands` and computes its forward value.
    pub fn record(&mut self, op: OpKind, operands: &[NodeId]) -> Result<NodeId> {
        let expected = if op == OpKind::PowInt { 1 } else { op.arity() };
        if operands.len() != expected || expected == 0 {
            return Err(Error::Arity {
                op,
                expected,
                got: operands.len(),
            });
        }
        for &id in operands {
            self.check(id)?;
        }
        match op {
            OpKind::PowInt => Err(Error::Arity {
                op,
                expected: 1,
                got: 0,
            }),
            _ if expected == 1 => {
                let a = operands[0];
                let v = op.eval_unary(self.value(a));
                self.push(op, a.0, 0, v)
            }
            _ => {
                let (a, b) = (operands[0], operands[1]);
                let v = op.eval_binary(self.value(a), self.value(b));
                self.push(op, a.0, b.0, v)
            }
        }
    }

    /// `a^n` for a non-negative integer exponent.
    pub fn pow_int(&mut self, a: NodeId, n: u32) -> Result<NodeId> {
        self.check(a)?;
        let v = self.value(a).powi(n as i32);
        self.push(OpKind::PowInt, a.0, n, v)
    }

    /// d root / d parameter for every parameter leaf on the tape.
    pub fn backward(&self, root: NodeId) -> Result<GradientMap<T>> {
        let mut adjoint = Vec::new();
        let mut grads = vec![T::zero(); self.params];
        self.backward_into(root, T::one(), &mut adjoint, &mut grads)?;
        Ok(GradientMap { grads })
    }

    /// Adds `seed * d root / d param` into `grads`. `adjoint` is scratch space
    /// reused between calls. The tape itself is not modified.
    pub fn backward_into(
        &self,
        root: NodeId,
        seed: T,
        adjoint: &mut Vec<T>,
        grads: &mut [T],
    ) -> Result<()> {
        self.check(root)?;
        assert!(grads.len() >= self.params, "gradient buffer too short");
        let end = root.index() + 1;
        adjoint.clear();
        adjoint.resize(end, T::zero());
        adjoint[root.index()] = seed;

        for i in (0..end).rev() {
            let g = adjoint[i];
            if g == T::zero() {
                continue;
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient { node: i });
            }
            let node = self.nodes[i];
            let (a, b) = (node.a as usize, node.b as usize);
            match node.op {
                OpKind::Constant => {}
                OpKind::Parameter => grads[a] = grads[a] + g,
                OpKind::Add => {
                    adjoint[a] = adjoint[a] + g;
                    adjoint[b] = adjoint[b] + g;
                }
                OpKind::Sub => {
                    adjoint[a] = adjoint[a] + g;
                    adjoint[b] = adjoint[b] - g;
                }
                OpKind::Mul => {
                    let (va, vb) = (self.nodes[a].value, self.nodes[b].value);
                    adjoint[a] = adjoint[a] + g * vb;
                    adjoint[b] = adjoint[b] + g * va;
                }
                OpKind::Div => {
                    let vb = self.nodes[b].value;
                    adjoint[a] = adjoint[a] + g / vb;
                    adjoint[b] = adjoint[b] - g * node.value / vb;
                }
                OpKind::PowInt => {
                    if b > 0 {
                        let va = self.nodes[a].value;
                        let d = T::of(b as f64) * va.powi(b as i32 - 1);
                        adjoint[a] = adjoint[a] + g * d;
                    }
                }
                OpKind::Exp => adjoint[a] = adjoint[a] + g * node.value,
                OpKind::Sin => adjoint[a] = adjoint[a] + g * self.nodes[a].value.cos(),
                OpKind::Cos => adjoint[a] = adjoint[a] - g * self.nodes[a].value.sin(),
                OpKind::Tanh => adjoint[a] = adjoint[a] + g * (T::one() - node.value * node.value),
                OpKind::Relu => {
                    if self.nodes[a].value > T::zero() {
                        adjoint[a] = adjoint[a] + g;
                    }
                }
                OpKind::Softplus => adjoint[a] = adjoint[a] + g * sigmoid(self.nodes[a].value),
                OpKind::Max => {
                    if self.nodes[a].value >= self.nodes[b].value {
                        adjoint[a] = adjoint[a] + g;
                    } else {
                        adjoint[b] = adjoint[b] + g;
                    }
                }
                OpKind::Abs => {
                    let va = self.nodes[a].value;
                    if va > T::zero() {
                        adjoint[a] = adjoint[a] + g;
                    } else if va < T::zero() {
                        adjoint[a] = adjoint[a] - g;
                    }
                }
            }
        }
        if let Some(i) = adjoint.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { node: i });
        }
        Ok(())
    }
}

/// Expression builder shared by the recording tape and plain evaluation.
pub trait Graph<T: Scalar> {
    type Var: Copy;

    fn constant(&mut self, v: T) -> Result<Self::Var>;
    /// Parameter leaf `index` of the model's flat parameter vector.
    fn param(&mut self, index: usize) -> Self::Var;
    fn value(&self, v: Self::Var) -> T;
    fn unary(&mut self, op: OpKind, a: Self::Var) -> Result<Self::Var>;
    fn binary(&mut self, op: OpKind, a: Self::Var, b: Self::Var) -> Result<Self::Var>;
    fn pow_int(&mut self, a: Self::Var, n: u32) -> Result<Self::Var>;

    fn add(&mut self, a: Self::Var, b: Self::Var) -> Result<Self::Var> {
        self.binary(OpKind::Add, a, b)
    }
    fn sub(&mut self, a: Self::Var, b: Self::Var) -> Result<Self::Var> {
        self.binary(OpKind::Sub, a, b)
    }
    fn mul(&mut self, a: Self::Var, b: Self::Var) -> Result<Self::Var> {
        self.binary(OpKind::Mul, a, b)
    }
    fn div(&mut self, a: Self::Var, b: Self::Var) -> Result<Self::Var> {
        self.binary(OpKind::Div, a, b)
    }
    fn max(&mut self, a: Self::Var, b: Self::Var) -> Result<Self::Var> {
        self.binary(OpKind::Max, a, b)
    }
    fn exp(&mut self, a: Self::Var) -> Result<Self::Var> {
        self.unary(OpKind::Exp, a)
    }
    fn sin(&mut self, a: Self::Var) -> Result<Self::Var> {
        self.unary(OpKind::Sin, a)
    }
    fn cos(&mut self, a: Self::Var) -> Result<Self::Var> {
        self.unary(OpKind::Cos, a)
    }
    fn tanh(&mut self, a: Self::Var) -> Result<Self::Var> {
        self.unary(OpKind::Tanh, a)
    }
    fn relu(&mut self, a: Self::Var) -> Result<Self::Var> {
        self.unary(OpKind::Relu, a)
    }
    fn softplus(&mut self, a: Self::Var) -> Result<Self::Var> {
        self.unary(OpKind::Softplus, a)
    }
    fn abs(&mut self, a: Self::Var) -> Result<Self::Var> {
        self.unary(OpKind::Abs, a)
    }

    /// Lifts an input vector to graph constants.
    fn inputs(&mut self, x: &[T]) -> Result<Vec<Self::Var>> {
        x.iter().map(|&v| self.constant(v)).collect()
    }

    /// `sum_i param[offset + i] * x[i]`.
    fn dot(&mut self, offset: usize, x: &[Self::Var]) -> Result<Self::Var> {
        let mut acc: Option<Self::Var> = None;
        for (i, &xi) in x.iter().enumerate() {
            let w = self.param(offset + i);
            let term = self.mul(w, xi)?;
            acc = Some(match acc {
                None => term,
                Some(s) => self.add(s, term)?,
            });
        }
        match acc {
            Some(s) => Ok(s),
            None => self.constant(T::zero()),
        }
    }

    /// `w . x + c` with `w` at `w_offset` and the scalar bias at `c_offset`.
    fn affine(&mut self, w_offset: usize, c_offset: usize, x: &[Self::Var]) -> Result<Self::Var> {
        let c = self.param(c_offset);
        if x.is_empty() {
            return Ok(c);
        }
        let s = self.dot(w_offset, x)?;
        self.add(s, c)
    }

    /// Horner evaluation of `sum_k coef[k] z^k` with coefficients
    /// `param[offset..=offset + degree]`.
    fn horner(&mut self, offset: usize, degree: usize, z: Self::Var) -> Result<Self::Var> {
        let mut acc = self.param(offset + degree);
        for k in (0..degree).rev() {
            let t = self.mul(acc, z)?;
            let c = self.param(offset + k);
            acc = self.add(t, c)?;
        }
        Ok(acc)
    }

    /// Sign-preserving magnitude floor: `sign(v) * max(|v|, eps)`, with
    /// `sign(0) = +1`. The clamped branch is a constant, so its subgradient
    /// is zero.
    fn clamp_magnitude(&mut self, v: Self::Var, eps: T) -> Result<Self::Var> {
        let floor = self.constant(eps)?;
        if self.value(v) >= T::zero() {
            self.max(v, floor)
        } else {
            let zero = self.constant(T::zero())?;
            let neg = self.sub(zero, v)?;
            let m = self.max(neg, floor)?;
            self.sub(zero, m)
        }
    }
}

impl<T: Scalar> Graph<T> for Tape<T> {
    type Var = NodeId;

    fn constant(&mut self, v: T) -> Result<NodeId> {
        Tape::constant(self, v)
    }

    fn param(&mut self, index: usize) -> NodeId {
        debug_assert!(index < self.params);
        NodeId(index as u32)
    }

    fn value(&self, v: NodeId) -> T {
        Tape::value(self, v)
    }

    fn unary(&mut self, op: OpKind, a: NodeId) -> Result<NodeId> {
        let v = op.eval_unary(self.nodes[a.index()].value);
        self.push(op, a.0, 0, v)
    }

    fn binary(&mut self, op: OpKind, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = op.eval_binary(self.nodes[a.index()].value, self.nodes[b.index()].value);
        self.push(op, a.0, b.0, v)
    }

    fn pow_int(&mut self, a: NodeId, n: u32) -> Result<NodeId> {
        Tape::pow_int(self, a, n)
    }
}

/// Plain forward evaluation over a parameter slice.
#[derive(Clone, Copy, Debug)]
pub struct ValueGraph<'a, T> {
    params: &'a [T],
}

impl<'a, T: Scalar> ValueGraph<'a, T> {
    pub fn new(params: &'a [T]) -> Self {
        ValueGraph { params }
    }
}

#[inline]
fn finite<T: Scalar>(v: T, op: OpKind) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteValue { op })
    }
}

impl<T: Scalar> Graph<T> for ValueGraph<'_, T> {
    type Var = T;

    fn constant(&mut self, v: T) -> Result<T> {
        finite(v, OpKind::Constant)
    }

    #[inline]
    fn param(&mut self, index: usize) -> T {
        self.params[index]
    }

    #[inline]
    fn value(&self, v: T) -> T {
        v
    }

    #[inline]
    fn unary(&mut self, op: OpKind, a: T) -> Result<T> {
        finite(op.eval_unary(a), op)
    }

    #[inline]
    fn binary(&mut self, op: OpKind, a: T, b: T) -> Result<T> {
        finite(op.eval_binary(a, b), op)
    }

    #[inline]
    fn pow_int(&mut self, a: T, n: u32) -> Result<T> {
        finite(a.powi(n as i32), OpKind::PowInt)
    }

    fn dot(&mut self, offset: usize, x: &[T]) -> Result<T> {
        let w = &self.params[offset..offset + x.len()];
        let s = w.iter().zip(x).fold(T::zero(), |acc, (&w, &x)| acc + w * x);
        finite(s, OpKind::Add)
    }

    fn horner(&mut self, offset: usize, degree: usize, z: T) -> Result<T> {
        let c = &self.params[offset..=offset + degree];
        let v = c.iter().rev().fold(T::zero(), |acc, &c| acc * z + c);
        finite(v, OpKind::Add)
    }
}

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Clone, Debug)]
pub struct GradientCheck {
    pub probed: Vec<usize>,
    /// `|backward - fd| / max(1, |fd|)` per probed parameter.
    pub relative_errors: Vec<f64>,
    pub max_relative_error: f64,
    pub failing: Vec<usize>,
}

impl GradientCheck {
    pub fn passed(&self) -> bool {
        self.failing.is_empty()
    }
}

/// Compares [`Tape::backward`] against central finite differences of the
/// scalar produced by `forward` on `probes` randomly chosen parameters.
///
/// `forward` receives a tape preloaded with the parameter leaves. Forward
/// failures during probing are reported as failing parameters.
pub fn check_gradient<F>(
    forward: F,
    params: &[f64],
    probes: usize,
    step: f64,
    tolerance: f64,
    seed: u64,
) -> GradientCheck
where
    F: Fn(&mut Tape<f64>) -> Result<NodeId>,
{
    assert!(step > 0.0 && tolerance > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probed = sample(&mut rng, params.len(), probes.min(params.len())).into_vec();
    probed.sort_unstable();

    let eval = |p: &[f64]| -> Option<f64> {
        let mut tape = Tape::with_params(p);
        forward(&mut tape).ok().map(|root| tape.value(root))
    };
    let grads = {
        let mut tape = Tape::with_params(params);
        forward(&mut tape).and_then(|root| tape.backward(root)).ok()
    };

    let mut relative_errors = Vec::with_capacity(probed.len());
    let mut failing = Vec::new();
    let mut work = params.to_vec();
    for &i in &probed {
        work[i] = params[i] + step;
        let up = eval(&work);
        work[i] = params[i] - step;
        let down = eval(&work);
        work[i] = params[i];
        let err = match (&grads, up, down) {
            (Some(g), Some(u), Some(d)) => {
                let fd = (u - d) / (2.0 * step);
                (g.get(i) - fd).abs() / fd.abs().max(1.0)
            }
            _ => f64::INFINITY,
        };
        if !(err < tolerance) {
            failing.push(i);
        }
        relative_errors.push(err);
    }
    let max_relative_error = relative_errors.iter().cloned().fold(0.0, f64::max);
    GradientCheck {
        probed,
        relative_errors,
        max_relative_error,
        failing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn square_forward_and_backward() {
        let mut t = Tape::new();
        let x = t.parameter(3.0).unwrap();
        let y = t.record(OpKind::Mul, &[x, x]).unwrap();
        assert_eq!(t.value(y), 9.0);
        assert_eq!(t.backward(y).unwrap().get(0), 6.0);
    }

    #[test]
    fn softplus_at_zero() {
        let mut t = Tape::new();
        let x = t.parameter(0.0).unwrap();
        let y = t.record(OpKind::Softplus, &[x]).unwrap();
        assert!((t.value(y) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(t.backward(y).unwrap().get(0), 0.5);
    }

    #[test]
    fn quotient_gradient() {
        let mut t = Tape::new();
        let p = t.parameter(1.0).unwrap();
        let q = t.parameter(2.0).unwrap();
        let r = t.record(OpKind::Div, &[p, q]).unwrap();
        assert_eq!(t.value(r), 0.5);
        let g = t.backward(r).unwrap();
        assert_eq!(g.get(0), 0.5);
        assert_eq!(g.get(1), -0.25);
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let mut t = Tape::new();
        let p = t.parameter(1.0).unwrap();
        let q = t.constant(0.0).unwrap();
        assert!(matches!(
            t.record(OpKind::Div, &[p, q]),
            Err(Error::NonFiniteValue { op: OpKind::Div })
        ));
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn unknown_operand_and_arity() {
        let mut t: Tape<f64> = Tape::new();
        let x = t.parameter(1.0).unwrap();
        assert!(matches!(
            t.record(OpKind::Exp, &[NodeId(5)]),
            Err(Error::UnknownOperand { id: 5, len: 1 })
        ));
        assert!(matches!(
            t.record(OpKind::Add, &[x]),
            Err(Error::Arity { .. })
        ));
    }

    #[test]
    fn unreachable_parameters_have_zero_gradient() {
        let mut t = Tape::with_params(&[1.0, 2.0, 3.0]);
        let y = t.record(OpKind::Exp, &[NodeId(1)]).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(0), 0.0);
        assert_eq!(g.get(2), 0.0);
        assert!((g.get(1) - 2f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn relu_and_abs_subgradients_at_zero() {
        let mut t = Tape::new();
        let x = t.parameter(0.0).unwrap();
        let r = t.record(OpKind::Relu, &[x]).unwrap();
        let a = t.record(OpKind::Abs, &[x]).unwrap();
        assert_eq!(t.backward(r).unwrap().get(0), 0.0);
        assert_eq!(t.backward(a).unwrap().get(0), 0.0);
    }

    #[test]
    fn pow_int_zero_exponent() {
        let mut t = Tape::new();
        let x = t.parameter(0.0).unwrap();
        let y = t.pow_int(x, 0).unwrap();
        assert_eq!(t.value(y), 1.0);
        assert_eq!(t.backward(y).unwrap().get(0), 0.0);
    }

    #[test]
    fn backward_is_repeatable() {
        let mut t = Tape::with_params(&[0.3, -1.2]);
        let (a, b) = (NodeId(0), NodeId(1));
        let m = t.record(OpKind::Mul, &[a, b]).unwrap();
        let s = t.record(OpKind::Sin, &[m]).unwrap();
        let y = t.record(OpKind::Div, &[s, b]).unwrap();
        let g1 = t.backward(y).unwrap();
        let g2 = t.backward(y).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(t.value(y), (0.3f64 * -1.2).sin() / -1.2);
    }

    #[test]
    fn non_finite_adjoint_is_reported() {
        // d/dx of x / tiny with a huge upstream seed overflows
        let mut t = Tape::new();
        let x = t.parameter(1.0).unwrap();
        let c = t.constant(1e-300).unwrap();
        let y = t.record(OpKind::Div, &[x, c]).unwrap();
        let mut adj = Vec::new();
        let mut g = vec![0.0];
        assert!(matches!(
            t.backward_into(y, 1e300, &mut adj, &mut g),
            Err(Error::NonFiniteGradient { .. })
        ));
    }

    #[test]
    fn value_graph_matches_tape() {
        fn expr<G: Graph<f64>>(g: &mut G) -> Result<G::Var> {
            let x = g.inputs(&[0.7, -0.4])?;
            let z = g.affine(0, 2, &x)?;
            let h = g.horner(3, 3, z)?;
            let t = g.tanh(h)?;
            g.clamp_magnitude(t, 1e-6)
        }
        let params = [0.5, -1.5, 0.1, 1.0, 0.2, -0.3, 0.05];
        let mut tape = Tape::with_params(&params);
        let root = expr(&mut tape).unwrap();
        let mut vg = ValueGraph::new(&params);
        let v = expr(&mut vg).unwrap();
        assert!((tape.value(root) - v).abs() < 1e-15);
    }

    #[test]
    fn clamp_floors_small_magnitudes_with_sign() {
        let mut vg = ValueGraph::new(&[]);
        assert_eq!(vg.clamp_magnitude(1e-9, 1e-6).unwrap(), 1e-6);
        assert_eq!(vg.clamp_magnitude(-1e-9, 1e-6).unwrap(), -1e-6);
        assert_eq!(vg.clamp_magnitude(0.0, 1e-6).unwrap(), 1e-6);
        assert_eq!(vg.clamp_magnitude(-2.0, 1e-6).unwrap(), -2.0);
    }

    #[test]
    fn gradient_check_on_linear_model() {
        // y = w * x + b at w = 2, x = 1
        let report = check_gradient(
            |t| {
                let x = t.constant(1.0)?;
                let wx = t.record(OpKind::Mul, &[NodeId(0), x])?;
                t.record(OpKind::Add, &[wx, NodeId(1)])
            },
            &[2.0, 0.5],
            2,
            1e-4,
            1e-9,
            0,
        );
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.probed, vec![0, 1]);
    }

    fn unary_case(op: OpKind, x: f64) -> (f64, f64) {
        let mut t = Tape::with_params(&[x]);
        let y = t.record(op, &[NodeId(0)]).unwrap();
        let g = t.backward(y).unwrap().get(0);
        let h = 1e-4;
        let f = |v: f64| {
            let mut t = Tape::with_params(&[v]);
            let y = t.record(op, &[NodeId(0)]).unwrap();
            t.value(y)
        };
        (g, (f(x + h) - f(x - h)) / (2.0 * h))
    }

    fn binary_case(op: OpKind, a: f64, b: f64) -> [(f64, f64); 2] {
        let f = |a: f64, b: f64| {
            let mut t = Tape::with_params(&[a, b]);
            let y = t.record(op, &[NodeId(0), NodeId(1)]).unwrap();
            t.value(y)
        };
        let mut t = Tape::with_params(&[a, b]);
        let y = t.record(op, &[NodeId(0), NodeId(1)]).unwrap();
        let g = t.backward(y).unwrap();
        let h = 1e-4;
        [
            (g.get(0), (f(a + h, b) - f(a - h, b)) / (2.0 * h)),
            (g.get(1), (f(a, b + h) - f(a, b - h)) / (2.0 * h)),
        ]
    }

    fn rel(pair: (f64, f64)) -> f64 {
        (pair.0 - pair.1).abs() / pair.1.abs().max(1.0)
    }

    const KINK_MARGIN: f64 = 1e-3;

    proptest! {
        #[test]
        fn smooth_unary_ops_match_finite_differences(x in -2.0f64..2.0) {
            for op in [OpKind::Exp, OpKind::Sin, OpKind::Cos, OpKind::Tanh, OpKind::Softplus] {
                prop_assert!(rel(unary_case(op, x)) < 1e-5, "{:?} at {}", op, x);
            }
        }

        #[test]
        fn kinked_unary_ops_match_away_from_zero(x in -2.0f64..2.0) {
            prop_assume!(x.abs() > KINK_MARGIN);
            for op in [OpKind::Relu, OpKind::Abs] {
                prop_assert!(rel(unary_case(op, x)) < 1e-5, "{:?} at {}", op, x);
            }
        }

        #[test]
        fn binary_ops_match_finite_differences(a in -2.0f64..2.0, b in -2.0f64..2.0) {
            for op in [OpKind::Add, OpKind::Sub, OpKind::Mul] {
                for pair in binary_case(op, a, b) {
                    prop_assert!(rel(pair) < 1e-5, "{:?}", op);
                }
            }
            if (a - b).abs() > KINK_MARGIN {
                for pair in binary_case(OpKind::Max, a, b) {
                    prop_assert!(rel(pair) < 1e-5);
                }
            }
            // keep the quotient away from its pole so the O(h^2) term stays small
            if b.abs() > 0.5 {
                for pair in binary_case(OpKind::Div, a, b) {
                    prop_assert!(rel(pair) < 1e-5, "div {} {}", a, b);
                }
            }
        }

        #[test]
        fn pow_int_matches_finite_differences(x in -2.0f64..2.0, n in 0u32..6) {
            let f = |v: f64| {
                let mut t = Tape::with_params(&[v]);
                let y = t.pow_int(NodeId(0), n).unwrap();
                t.value(y)
            };
            let mut t = Tape::with_params(&[x]);
            let y = t.pow_int(NodeId(0), n).unwrap();
            let g = t.backward(y).unwrap().get(0);
            let fd = (f(x + 1e-4) - f(x - 1e-4)) / 2e-4;
            prop_assert!(rel((g, fd)) < 1e-5);
        }

        #[test]
        fn adjoints_are_linear_over_add(a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let build = |which: u8| {
                let mut t = Tape::with_params(&[a, b]);
                let (pa, pb) = (NodeId(0), NodeId(1));
                let left = t.record(OpKind::Mul, &[pa, pb]).unwrap();
                let left = t.record(OpKind::Sin, &[left]).unwrap();
                let right = t.record(OpKind::Exp, &[pb]).unwrap();
                let right = t.record(OpKind::Mul, &[right, pa]).unwrap();
                let root = match which {
                    0 => left,
                    1 => right,
                    _ => t.record(OpKind::Add, &[left, right]).unwrap(),
                };
                t.backward(root).unwrap()
            };
            let (l, r, s) = (build(0), build(1), build(2));
            for i in 0..2 {
                let sum = l.get(i) + r.get(i);
                prop_assert!((s.get(i) - sum).abs() <= 1e-12 * sum.abs().max(1.0));
            }
        }
    }
}
