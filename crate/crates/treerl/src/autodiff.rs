//! Scalar reverse-mode automatic differentiation on a Wengert tape.
//!
//! The tape records one node per scalar operation. Local partial
//! derivatives are computed at record time, so the backward pass is a
//! single reverse sweep that touches each node exactly once. Constants
//! (input features, advantages, clip bounds) enter through the `*_const`
//! variants and never allocate tape nodes of their own.
//!
//! Parameters live outside the tape as plain `f64` values: each training
//! step clears the tape and re-registers them as leaves, which keeps the
//! tape size bounded by one minibatch.

use crate::error::{Error, Result};

/// Handle to a tape node. Only valid for the tape generation it was
/// created in; using a stale or foreign `Var` panics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    index: u32,
    tape_id: u64,
}

/// Operation kinds recorded on the tape. The `*C` variants take one tape
/// operand and one constant (stored in the node's `aux` slot).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Sigmoid,
    Max,
    Min,
    AddC,
    SubC,
    /// aux - x
    CSub,
    MulC,
    MaxC,
    MinC,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    op: Op,
    a: u32,
    b: u32,
    /// d value / d parent a, fixed at record time.
    pa: f64,
    /// d value / d parent b.
    pb: f64,
    /// Constant operand for the `*C` ops.
    aux: f64,
    value: f64,
}

/// Append-only record of scalar operations.
pub struct Tape {
    nodes: Vec<Node>,
    generation: u64,
}

static TAPE_COUNTER: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        let generation = TAPE_COUNTER.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        Tape {
            nodes: Vec::new(),
            generation,
        }
    }

    /// Drops all recorded nodes but keeps the allocation. Vars from before
    /// the clear are invalidated.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.generation = TAPE_COUNTER.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> f64 {
        self.check(v);
        self.nodes[v.index as usize].value
    }

    fn check(&self, v: Var) {
        assert_eq!(
            v.tape_id, self.generation,
            "Var used on a different tape or after clear()"
        );
        debug_assert!((v.index as usize) < self.nodes.len());
    }

    fn push(&mut self, node: Node) -> Var {
        let index = self.nodes.len() as u32;
        self.nodes.push(node);
        Var {
            index,
            tape_id: self.generation,
        }
    }

    /// Registers an independent input value.
    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(Node {
            op: Op::Leaf,
            a: 0,
            b: 0,
            pa: 0.0,
            pb: 0.0,
            aux: 0.0,
            value,
        })
    }

    /// Registers a slice of values as leaves, in order.
    pub fn leaves(&mut self, values: &[f64]) -> Vec<Var> {
        values.iter().map(|&v| self.leaf(v)).collect()
    }

    fn binary(&mut self, op: Op, x: Var, y: Var, value: f64, pa: f64, pb: f64) -> Var {
        self.check(x);
        self.check(y);
        self.push(Node {
            op,
            a: x.index,
            b: y.index,
            pa,
            pb,
            aux: 0.0,
            value,
        })
    }

    fn unary(&mut self, op: Op, x: Var, value: f64, pa: f64, aux: f64) -> Var {
        self.check(x);
        self.push(Node {
            op,
            a: x.index,
            b: u32::MAX,
            pa,
            pb: 0.0,
            aux,
            value,
        })
    }

    pub fn add(&mut self, x: Var, y: Var) -> Var {
        let v = self.value(x) + self.value(y);
        self.binary(Op::Add, x, y, v, 1.0, 1.0)
    }

    pub fn sub(&mut self, x: Var, y: Var) -> Var {
        let v = self.value(x) - self.value(y);
        self.binary(Op::Sub, x, y, v, 1.0, -1.0)
    }

    pub fn mul(&mut self, x: Var, y: Var) -> Var {
        let (xv, yv) = (self.value(x), self.value(y));
        self.binary(Op::Mul, x, y, xv * yv, yv, xv)
    }

    pub fn div(&mut self, x: Var, y: Var) -> Result<Var> {
        let (xv, yv) = (self.value(x), self.value(y));
        if yv == 0.0 {
            return Err(Error::NumericDomain("division by zero".into()));
        }
        Ok(self.binary(Op::Div, x, y, xv / yv, 1.0 / yv, -xv / (yv * yv)))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        let v = -self.value(x);
        self.unary(Op::Neg, x, v, -1.0, 0.0)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v = self.value(x).exp();
        self.unary(Op::Exp, x, v, v, 0.0)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv <= 0.0 {
            return Err(Error::NumericDomain(format!(
                "log of non-positive value {xv}"
            )));
        }
        Ok(self.unary(Op::Log, x, xv.ln(), 1.0 / xv, 0.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = stable_sigmoid(self.value(x));
        self.unary(Op::Sigmoid, x, v, v * (1.0 - v), 0.0)
    }

    /// max(x, y); ties route the gradient to the first operand.
    pub fn max(&mut self, x: Var, y: Var) -> Var {
        let (xv, yv) = (self.value(x), self.value(y));
        let take_x = xv >= yv;
        let v = if take_x { xv } else { yv };
        self.binary(
            Op::Max,
            x,
            y,
            v,
            if take_x { 1.0 } else { 0.0 },
            if take_x { 0.0 } else { 1.0 },
        )
    }

    /// min(x, y); ties route the gradient to the first operand.
    pub fn min(&mut self, x: Var, y: Var) -> Var {
        let (xv, yv) = (self.value(x), self.value(y));
        let take_x = xv <= yv;
        let v = if take_x { xv } else { yv };
        self.binary(
            Op::Min,
            x,
            y,
            v,
            if take_x { 1.0 } else { 0.0 },
            if take_x { 0.0 } else { 1.0 },
        )
    }

    pub fn add_const(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x) + c;
        self.unary(Op::AddC, x, v, 1.0, c)
    }

    pub fn sub_const(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x) - c;
        self.unary(Op::SubC, x, v, 1.0, c)
    }

    /// c - x.
    pub fn const_sub(&mut self, c: f64, x: Var) -> Var {
        let v = c - self.value(x);
        self.unary(Op::CSub, x, v, -1.0, c)
    }

    pub fn mul_const(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x) * c;
        self.unary(Op::MulC, x, v, c, c)
    }

    pub fn max_const(&mut self, x: Var, c: f64) -> Var {
        let xv = self.value(x);
        let take_x = xv >= c;
        self.unary(
            Op::MaxC,
            x,
            if take_x { xv } else { c },
            if take_x { 1.0 } else { 0.0 },
            c,
        )
    }

    pub fn min_const(&mut self, x: Var, c: f64) -> Var {
        let xv = self.value(x);
        let take_x = xv <= c;
        self.unary(
            Op::MinC,
            x,
            if take_x { xv } else { c },
            if take_x { 1.0 } else { 0.0 },
            c,
        )
    }

    /// tanh composed from the sigmoid op: tanh(x) = 2 sigmoid(2x) - 1.
    pub fn tanh(&mut self, x: Var) -> Var {
        let two_x = self.mul_const(x, 2.0);
        let s = self.sigmoid(two_x);
        let two_s = self.mul_const(s, 2.0);
        self.sub_const(two_s, 1.0)
    }

    /// Sum of a slice of vars (0 is an error-free empty sum only if the
    /// slice is non-empty; callers never sum nothing).
    pub fn sum(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty(), "sum of empty slice");
        let mut acc = vars[0];
        for &v in &vars[1..] {
            acc = self.add(acc, v);
        }
        acc
    }

    /// w . x with `x` constant and no bias term.
    pub fn weighted_sum_const(&mut self, weights: &[Var], x: &[f64]) -> Var {
        debug_assert_eq!(weights.len(), x.len());
        debug_assert!(!weights.is_empty());
        let mut acc = self.mul_const(weights[0], x[0]);
        for (&w, &xi) in weights[1..].iter().zip(&x[1..]) {
            let term = self.mul_const(w, xi);
            acc = self.add(acc, term);
        }
        acc
    }

    /// w . x + bias, with `x` constant.
    pub fn dot_const(&mut self, weights: &[Var], x: &[f64], bias: Var) -> Var {
        debug_assert_eq!(weights.len(), x.len());
        let mut acc = bias;
        for (&w, &xi) in weights.iter().zip(x) {
            let term = self.mul_const(w, xi);
            acc = self.add(acc, term);
        }
        acc
    }

    /// w . f + bias, with `f` on the tape.
    pub fn dot(&mut self, weights: &[Var], f: &[Var], bias: Var) -> Var {
        debug_assert_eq!(weights.len(), f.len());
        let mut acc = bias;
        for (&w, &fi) in weights.iter().zip(f) {
            let term = self.mul(w, fi);
            acc = self.add(acc, term);
        }
        acc
    }

    /// Numerically-stable softmax over tape values.
    pub fn softmax(&mut self, logits: &[Var]) -> Result<Vec<Var>> {
        assert!(!logits.is_empty());
        let mut m = logits[0];
        for &l in &logits[1..] {
            m = self.max(m, l);
        }
        let exps: Vec<Var> = logits
            .iter()
            .map(|&l| {
                let shifted = self.sub(l, m);
                self.exp(shifted)
            })
            .collect();
        let denom = self.sum(&exps);
        exps.into_iter().map(|e| self.div(e, denom)).collect()
    }

    /// Gradient of `root` with respect to every node, as one reverse sweep.
    pub fn backward(&self, root: Var) -> Gradients {
        self.check(root);
        let mut adjoints = vec![0.0f64; self.nodes.len()];
        adjoints[root.index as usize] = 1.0;
        for i in (0..=root.index as usize).rev() {
            let g = adjoints[i];
            if g == 0.0 {
                continue;
            }
            let n = &self.nodes[i];
            match n.op {
                Op::Leaf => {}
                Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Max | Op::Min => {
                    adjoints[n.a as usize] += g * n.pa;
                    adjoints[n.b as usize] += g * n.pb;
                }
                _ => {
                    adjoints[n.a as usize] += g * n.pa;
                }
            }
        }
        Gradients {
            adjoints,
            tape_id: self.generation,
        }
    }

    /// Recomputes every node value from the leaves. Used to audit that the
    /// stored forward values are reproducible from the recorded operations.
    pub fn replay_values(&self) -> Vec<f64> {
        let mut vals = vec![0.0f64; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            let a = || vals[n.a as usize];
            let b = || vals[n.b as usize];
            vals[i] = match n.op {
                Op::Leaf => n.value,
                Op::Add => a() + b(),
                Op::Sub => a() - b(),
                Op::Mul => a() * b(),
                Op::Div => a() / b(),
                Op::Neg => -a(),
                Op::Exp => a().exp(),
                Op::Log => a().ln(),
                Op::Sigmoid => stable_sigmoid(a()),
                Op::Max => a().max(b()),
                Op::Min => a().min(b()),
                Op::AddC => a() + n.aux,
                Op::SubC => a() - n.aux,
                Op::CSub => n.aux - a(),
                Op::MulC => a() * n.aux,
                Op::MaxC => a().max(n.aux),
                Op::MinC => a().min(n.aux),
            };
        }
        vals
    }

    pub fn stored_values(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.value).collect()
    }
}

/// Adjoints produced by [`Tape::backward`]. Nodes not reachable from the
/// root keep gradient 0.
pub struct Gradients {
    adjoints: Vec<f64>,
    tape_id: u64,
}

impl Gradients {
    pub fn get(&self, v: Var) -> f64 {
        assert_eq!(v.tape_id, self.tape_id, "Var from a different tape");
        self.adjoints[v.index as usize]
    }

    /// Gradients for a slice of vars (typically the parameter leaves).
    pub fn collect(&self, vars: &[Var]) -> Vec<f64> {
        vars.iter().map(|&v| self.get(v)).collect()
    }

    /// Accumulate gradients for `vars` into `out` (out[i] += grad(vars[i])).
    pub fn accumulate(&self, vars: &[Var], out: &mut [f64]) {
        debug_assert_eq!(vars.len(), out.len());
        for (o, &v) in out.iter_mut().zip(vars) {
            *o += self.get(v);
        }
    }
}

/// Sigmoid in the branch form: never evaluates exp on a positive argument.
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Adam optimizer state (first/second moment buffers and step counter).
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// One Adam update with bias correction. `params` is modified in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                what: "adam step".into(),
                expected: self.m.len(),
                got: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grads.len()
                },
            });
        }
        assert!(lr > 0.0, "learning rate must be positive");
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grads[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_at_zero() {
        let mut t = Tape::new();
        let x = t.leaf(0.0);
        let s = t.sigmoid(x);
        assert_eq!(t.value(s), 0.5);
    }

    #[test]
    fn add_values() {
        let mut t = Tape::new();
        let a = t.leaf(2.0);
        let b = t.leaf(3.0);
        let c = t.add(a, b);
        assert_eq!(t.value(c), 5.0);
    }

    #[test]
    fn log_exp_inverse() {
        let mut t = Tape::new();
        let x = t.leaf(1.7);
        let e = t.exp(x);
        let l = t.log(e).unwrap();
        assert!((t.value(l) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn log_domain_error() {
        let mut t = Tape::new();
        let x = t.leaf(-1.0);
        assert!(matches!(t.log(x), Err(Error::NumericDomain(_))));
        let z = t.leaf(0.0);
        assert!(t.log(z).is_err());
    }

    #[test]
    fn div_by_zero_error() {
        let mut t = Tape::new();
        let a = t.leaf(1.0);
        let b = t.leaf(0.0);
        assert!(matches!(t.div(a, b), Err(Error::NumericDomain(_))));
    }

    #[test]
    fn product_rule() {
        let mut t = Tape::new();
        let x = t.leaf(3.0);
        let y = t.leaf(4.0);
        let p = t.mul(x, y);
        let g = t.backward(p);
        assert_eq!(g.get(x), 4.0);
        assert_eq!(g.get(y), 3.0);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut t = Tape::new();
        let x = t.leaf(0.0);
        let s = t.sigmoid(x);
        let g = t.backward(s);
        assert_eq!(g.get(x), 0.25);
    }

    #[test]
    fn unreachable_nodes_get_zero() {
        let mut t = Tape::new();
        let x = t.leaf(3.0);
        let y = t.leaf(4.0);
        let _lonely = t.mul(y, y);
        let r = t.mul_const(x, 2.0);
        let g = t.backward(r);
        assert_eq!(g.get(x), 2.0);
        assert_eq!(g.get(y), 0.0);
    }

    #[test]
    fn replay_reproduces_forward_values() {
        let mut t = Tape::new();
        let x = t.leaf(0.37);
        let y = t.leaf(-1.2);
        let s = t.sigmoid(x);
        let m = t.mul(s, y);
        let e = t.exp(m);
        let d = t.div(e, s).unwrap();
        let c = t.min_const(d, 10.0);
        let f = t.max(c, y);
        let _ = t.log(e).unwrap();
        let _ = f;
        assert_eq!(t.replay_values(), t.stored_values());
    }

    // A doubling chain of depth 60 has 2^60 root-to-leaf paths; finishing
    // at all demonstrates the backward pass visits each node once.
    #[test]
    fn backward_is_single_pass() {
        let mut t = Tape::new();
        let x = t.leaf(1.0);
        let mut y = x;
        for _ in 0..60 {
            y = t.add(y, y);
        }
        let g = t.backward(y);
        assert_eq!(g.get(x), 2f64.powi(60));
    }

    #[test]
    fn max_min_tie_takes_first() {
        let mut t = Tape::new();
        let a = t.leaf(1.0);
        let b = t.leaf(1.0);
        let m = t.max(a, b);
        let g = t.backward(m);
        assert_eq!(g.get(a), 1.0);
        assert_eq!(g.get(b), 0.0);
    }

    #[test]
    fn clear_invalidates_vars() {
        let mut t = Tape::new();
        let x = t.leaf(1.0);
        t.clear();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| t.value(x)));
        assert!(result.is_err());
    }

    #[test]
    fn adam_zero_grad_keeps_params() {
        let mut adam = AdamState::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        let before = p.clone();
        for _ in 0..5 {
            adam.step(&mut p, &[0.0, 0.0, 0.0], 0.1).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_is_minus_lr() {
        let mut adam = AdamState::new(1);
        let mut p = vec![0.0];
        adam.step(&mut p, &[1.0], 0.05).unwrap();
        // m_hat / (sqrt(v_hat) + eps) = 1 / (1 + 1e-8)
        assert!((p[0] + 0.05).abs() < 1e-8);
    }

    #[test]
    fn adam_quadratic_descent_is_monotone() {
        let mut adam = AdamState::new(1);
        let mut w = vec![1.0f64];
        let mut prev = w[0].abs();
        for _ in 0..10 {
            let g = 2.0 * w[0];
            adam.step(&mut w, &[g], 0.1).unwrap();
            assert!(w[0].abs() < prev, "|w| should shrink every step");
            prev = w[0].abs();
        }
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut adam = AdamState::new(2);
        let mut p = vec![0.0];
        assert!(matches!(
            adam.step(&mut p, &[1.0], 0.1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn central_diff(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-5;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn gradients_match_finite_differences_on_composite() {
        // f(x) = sigmoid(x) * exp(-x) + log(1 + x^2 via max trick)
        let eval = |x: f64| {
            stable_sigmoid(x) * (-x).exp() + (1.0 + x * x).ln() + x.max(0.3) - x.min(-0.2)
        };
        for &x0 in &[-1.3, -0.35, 0.0, 0.45, 2.1] {
            let mut t = Tape::new();
            let x = t.leaf(x0);
            let s = t.sigmoid(x);
            let nx = t.neg(x);
            let e = t.exp(nx);
            let a = t.mul(s, e);
            let x2 = t.mul(x, x);
            let one_px2 = t.add_const(x2, 1.0);
            let l = t.log(one_px2).unwrap();
            let mx = t.max_const(x, 0.3);
            let mn = t.min_const(x, -0.2);
            let part = t.add(a, l);
            let part2 = t.add(part, mx);
            let y = t.sub(part2, mn);
            assert!((t.value(y) - eval(x0)).abs() < 1e-12);
            let g = t.backward(y);
            let fd = central_diff(eval, x0);
            let ad = g.get(x);
            assert!(
                (ad - fd).abs() <= 1e-4 * ad.abs().max(fd.abs()).max(1.0),
                "x={x0}: ad={ad} fd={fd}"
            );
        }
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients_on_dyadic_inputs() {
        // Dyadic values keep every intermediate exactly representable, so
        // the linearity identity holds with zero tolerance.
        let mut t = Tape::new();
        let x = t.leaf(0.5);
        let y = t.leaf(2.0);
        let f = {
            let a = t.mul(x, y);
            t.add(a, x)
        };
        let g = {
            let b = t.mul(y, y);
            t.sub(b, x)
        };
        let fg = t.add(f, g);
        let grad_f = t.backward(f);
        let grad_g = t.backward(g);
        let grad_fg = t.backward(fg);
        assert_eq!(grad_fg.get(x), grad_f.get(x) + grad_g.get(x));
        assert_eq!(grad_fg.get(y), grad_f.get(y) + grad_g.get(y));
    }
}
