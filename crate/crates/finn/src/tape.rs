//! Reverse-mode tape over scalar operations.
//!
//! Every arithmetic step on a [`Var`] appends one node holding the
//! local partials of that step. A reverse sweep then accumulates exact
//! adjoints for every node, in particular for the parameter leaves the
//! trainer registered up front.
//!
//! One tape per evaluation thread; values recorded on a tape must not
//! outlive it (enforced by the `'t` lifetime on [`Var`]).

use crate::multidual::AdScalar;
use crate::scalar::Real;
use std::cell::RefCell;
use std::ops::{Add, Mul, Neg, Sub};

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node<T> {
    parents: [u32; 2],
    partials: [T; 2],
}

/// Append-only record of scalar operations.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// A scalar recorded on a [`Tape`]. Carries its primal value; the
/// derivative bookkeeping lives on the tape.
#[derive(Clone, Copy)]
pub struct Var<'t, T: Real> {
    tape: &'t Tape<T>,
    index: u32,
    value: T,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        let tape = Tape {
            nodes: RefCell::new(Vec::new()),
        };
        // node 0 is a shared constant zero, handed out by `Var::zero_like`
        tape.push(NONE, T::zero(), NONE, T::zero());
        tape
    }

    /// Drop all recorded nodes (keeps capacity). Requires exclusive
    /// access, so no `Var` from the previous recording can survive.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
        self.push(NONE, T::zero(), NONE, T::zero());
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        false // node 0 always exists
    }

    fn push(&self, p0: u32, w0: T, p1: u32, w1: T) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let index = u32::try_from(nodes.len()).expect("tape overflow");
        nodes.push(Node {
            parents: [p0, p1],
            partials: [w0, w1],
        });
        index
    }

    /// Record a leaf. Used both for constants and for parameter slots;
    /// the caller keeps the returned `Var` to look its gradient up later.
    pub fn leaf(&self, value: T) -> Var<'_, T> {
        let index = self.push(NONE, T::zero(), NONE, T::zero());
        Var {
            tape: self,
            index,
            value,
        }
    }

    /// Reverse sweep from `output`, which must be a scalar recorded on
    /// this tape. Returns the adjoint of every node up to `output`.
    ///
    /// # Panics
    ///
    /// Panics if `output` was recorded on a different tape.
    pub fn backward(&self, output: Var<'_, T>) -> Adjoints<T> {
        assert!(
            std::ptr::eq(self, output.tape),
            "output node is not on this tape"
        );
        let nodes = self.nodes.borrow();
        let out = output.index as usize;
        let mut adj = vec![T::zero(); out + 1];
        adj[out] = T::one();
        for i in (0..=out).rev() {
            let a = adj[i];
            if a == T::zero() {
                continue;
            }
            let node = nodes[i];
            for k in 0..2 {
                if node.parents[k] != NONE {
                    adj[node.parents[k] as usize] =
                        adj[node.parents[k] as usize] + a * node.partials[k];
                }
            }
        }
        Adjoints(adj)
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Result of a reverse sweep: adjoint per tape node.
pub struct Adjoints<T>(Vec<T>);

impl<T: Real> Adjoints<T> {
    /// Adjoint of `v`, i.e. `d output / d v`. Zero for nodes recorded
    /// after the output.
    pub fn wrt(&self, v: Var<'_, T>) -> T {
        self.0.get(v.index as usize).copied().unwrap_or(T::zero())
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn value(self) -> T {
        self.value
    }

    pub fn index(self) -> usize {
        self.index as usize
    }

    fn unary(self, value: T, partial: T) -> Self {
        let index = self.tape.push(self.index, partial, NONE, T::zero());
        Var {
            tape: self.tape,
            index,
            value,
        }
    }

    fn binary(self, rhs: Self, value: T, pl: T, pr: T) -> Self {
        debug_assert!(std::ptr::eq(self.tape, rhs.tape), "vars from two tapes");
        let index = self.tape.push(self.index, pl, rhs.index, pr);
        Var {
            tape: self.tape,
            index,
            value,
        }
    }

    pub fn recip(self) -> Self {
        let r = T::one() / self.value;
        self.unary(r, -r * r)
    }

    pub fn ln(self) -> Self {
        self.unary(self.value.ln(), T::one() / self.value)
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(e, e)
    }

    /// `max(self, c)` with gradient 0 on the clamped branch and at the tie.
    pub fn max_const(self, c: T) -> Self {
        if self.value > c {
            self.unary(self.value, T::one())
        } else {
            self.unary(c, T::zero())
        }
    }

    pub fn add_const(self, c: T) -> Self {
        self.unary(self.value + c, T::one())
    }

    pub fn mul_const(self, c: T) -> Self {
        self.unary(self.value * c, c)
    }
}

impl<'t, T: Real> Add for Var<'t, T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, self.value + rhs.value, T::one(), T::one())
    }
}

impl<'t, T: Real> Sub for Var<'t, T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, self.value - rhs.value, T::one(), -T::one())
    }
}

impl<'t, T: Real> Mul for Var<'t, T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t, T: Real> Neg for Var<'t, T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.value, -T::one())
    }
}

impl<'t, T: Real> AdScalar for Var<'t, T> {
    type Real = T;
    type Ctx = &'t Tape<T>;

    fn constant(tape: &'t Tape<T>, value: T) -> Self {
        tape.leaf(value)
    }

    fn value(self) -> T {
        self.value
    }

    fn zero_like(self) -> Self {
        Var {
            tape: self.tape,
            index: 0,
            value: T::zero(),
        }
    }

    fn chain(self, value: T, deriv: T) -> Self {
        self.unary(value, deriv)
    }

    // |x| with the subgradient at 0 fixed to +1
    fn abs_subgrad(self) -> Self {
        let sign = if self.value < T::zero() {
            -T::one()
        } else {
            T::one()
        };
        self.unary(num_traits::Float::abs(self.value), sign)
    }

    fn reciprocal(self) -> Self {
        Var::recip(self)
    }

    fn max_at_least(self, c: T) -> Self {
        self.max_const(c)
    }
}
