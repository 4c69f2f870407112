//! Definite integrals over boxes and fixed-integral constraints.
//!
//! Evaluating the antiderivative at a point gives the mass from minus
//! infinity up to that point, so the definite integral over a box is
//! the signed sum of F over the 2^n vertices: each vertex taking k
//! lower bounds contributes with sign (-1)^k.
//!
//! A constraint rescales the raw network: with `s = eps / F|_D`
//! (equality) or `s = eps / max(F|_D, eps)` (inequality), the scaled
//! integrand `s * f` integrates to exactly `eps` (resp. at most `eps`)
//! for *any* parameter values — the constraint holds by construction
//! at every training step, and the scalar commutes with every
//! derivative, so scaling F and scaling f are the same thing.

use crate::multidual::{AdScalar, Mask};
use crate::network::Network;
use crate::scalar::Real;
use crate::tape::Tape;
use serde::{Deserialize, Serialize};

/// Axis-aligned integration box.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Real> Domain<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> crate::Result<Self> {
        if lower.len() != upper.len() {
            return Err(crate::Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        // 2^n vertex enumeration guard
        if lower.len() > 20 {
            return Err(crate::Error::BoxTooLarge(lower.len()));
        }
        for (i, (&a, &b)) in lower.iter().zip(&upper).enumerate() {
            if !(a < b) {
                return Err(crate::Error::InvalidBox {
                    index: i,
                    lower: a.to_f64().unwrap_or(f64::NAN),
                    upper: b.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Domain { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn interval(&self, dim: usize) -> (T, T) {
        (self.lower[dim], self.upper[dim])
    }

    pub fn volume(&self) -> T {
        self.lower
            .iter()
            .zip(&self.upper)
            .fold(T::one(), |acc, (&a, &b)| acc * (b - a))
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&a, &b))| v >= a && v <= b)
    }

    /// Vertex for a bitmask: bit i set picks the lower bound in dim i.
    pub fn vertex(&self, mask: Mask) -> Vec<T> {
        (0..self.dim())
            .map(|i| {
                if mask & (1 << i) != 0 {
                    self.lower[i]
                } else {
                    self.upper[i]
                }
            })
            .collect()
    }
}

/// Signed vertex sum of an arbitrary antiderivative handle. Vertices
/// are visited in ascending bitmask order so the float summation is
/// reproducible.
pub fn box_integral_fn<T: Real>(f: &dyn Fn(&[T]) -> T, domain: &Domain<T>) -> T {
    let mut total = T::zero();
    for mask in 0..(1usize << domain.dim()) {
        let v = f(&domain.vertex(mask));
        if mask.count_ones() % 2 == 0 {
            total = total + v;
        } else {
            total = total - v;
        }
    }
    total
}

/// Definite integral of the network's integrand over the box,
/// evaluated analytically from 2^n plain forward passes.
pub fn box_integral<T: Real>(net: &Network<T>, domain: &Domain<T>) -> T {
    box_integral_fn(&|x| net.antiderivative(x), domain)
}

/// Tape-friendly variant with externally supplied parameter scalars.
pub fn box_integral_with<T: Real, S: AdScalar<Real = T>>(
    net: &Network<T>,
    params: &[S],
    domain: &Domain<T>,
    ctx: S::Ctx,
) -> S {
    let mut total: Option<S> = None;
    for mask in 0..(1usize << domain.dim()) {
        let v = net.eval_with(params, &domain.vertex(mask), 0, ctx).extract(0);
        total = Some(match (total, mask.count_ones() % 2 == 0) {
            (None, true) => v,
            (None, false) => -v,
            (Some(acc), true) => acc + v,
            (Some(acc), false) => acc - v,
        });
    }
    total.expect("at least one vertex")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    None,
    Equality,
    Inequality,
}

/// Fixed-integral constraint over a box.
#[derive(Debug, Clone)]
pub struct Constraint<T> {
    pub kind: ConstraintKind,
    pub epsilon: T,
    pub domain: Domain<T>,
}

impl<T: Real> Constraint<T> {
    pub fn none(domain: Domain<T>) -> Self {
        Constraint {
            kind: ConstraintKind::None,
            epsilon: T::zero(),
            domain,
        }
    }

    pub fn equality(epsilon: T, domain: Domain<T>) -> Self {
        Constraint {
            kind: ConstraintKind::Equality,
            epsilon,
            domain,
        }
    }

    pub fn inequality(epsilon: T, domain: Domain<T>) -> Self {
        Constraint {
            kind: ConstraintKind::Inequality,
            epsilon,
            domain,
        }
    }
}

const DEGENERATE_NORMALISER: f64 = 1e-9;

/// A network together with its integral constraint. All evaluation
/// goes through the rescaled antiderivative.
#[derive(Debug, Clone)]
pub struct ConstrainedModel<T> {
    net: Network<T>,
    constraint: Constraint<T>,
}

impl<T: Real> ConstrainedModel<T> {
    pub fn new(net: Network<T>, constraint: Constraint<T>) -> crate::Result<Self> {
        if constraint.domain.dim() != net.input_dim() {
            return Err(crate::Error::DimensionMismatch {
                expected: net.input_dim(),
                got: constraint.domain.dim(),
            });
        }
        if constraint.kind == ConstraintKind::Inequality {
            if !(constraint.epsilon > T::zero()) {
                return Err(crate::Error::NonPositiveBound(
                    constraint.epsilon.to_f64().unwrap_or(f64::NAN),
                ));
            }
            if !net.is_positive() {
                return Err(crate::Error::InequalityNeedsPositivity);
            }
        }
        Ok(ConstrainedModel { net, constraint })
    }

    pub fn net(&self) -> &Network<T> {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Network<T> {
        &mut self.net
    }

    pub fn constraint(&self) -> &Constraint<T> {
        &self.constraint
    }

    pub fn domain(&self) -> &Domain<T> {
        &self.constraint.domain
    }

    /// The rescaling factor, differentiable through the vertex
    /// evaluations; `None` when the model is unconstrained.
    ///
    /// Equality constraints fail when the raw integral collapses below
    /// 1e-9 in magnitude: the normaliser would blow up.
    pub fn scale_with<S: AdScalar<Real = T>>(
        &self,
        params: &[S],
        ctx: S::Ctx,
    ) -> crate::Result<Option<S>> {
        let eps = self.constraint.epsilon;
        match self.constraint.kind {
            ConstraintKind::None => Ok(None),
            ConstraintKind::Equality => {
                let raw = box_integral_with(&self.net, params, &self.constraint.domain, ctx);
                if num_traits::Float::abs(raw.value()) < T::of(DEGENERATE_NORMALISER) {
                    return Err(crate::Error::DegenerateNormaliser(
                        raw.value().to_f64().unwrap_or(f64::NAN),
                    ));
                }
                Ok(Some(raw.reciprocal().mul_real(eps)))
            }
            ConstraintKind::Inequality => {
                let raw = box_integral_with(&self.net, params, &self.constraint.domain, ctx);
                // rescale only when the raw mass exceeds the bound;
                // positivity keeps the raw integral nonnegative
                Ok(Some(raw.max_at_least(eps).reciprocal().mul_real(eps)))
            }
        }
    }

    /// Plain scale factor (1 for unconstrained models).
    pub fn scale_factor(&self) -> crate::Result<T> {
        Ok(self
            .scale_with::<T>(self.net.params(), ())?
            .unwrap_or_else(T::one))
    }

    /// `f(x)` of the constrained model: the raw mixed partial times
    /// the scale factor.
    pub fn integrand(&self, x: &[T]) -> crate::Result<T> {
        let s = self.scale_factor()?;
        Ok(s * self.net.integrand(x))
    }

    /// `F(x)` of the constrained model.
    pub fn antiderivative(&self, x: &[T]) -> crate::Result<T> {
        let s = self.scale_factor()?;
        Ok(s * self.net.antiderivative(x))
    }

    /// Mixed partial over a subset of dims, rescaled.
    pub fn partial(&self, x: &[T], subset: Mask) -> crate::Result<T> {
        let s = self.scale_factor()?;
        Ok(s * self.net.partial(x, subset))
    }

    /// Definite integral of the constrained integrand over the
    /// constraint box: exactly `eps` for equality models.
    pub fn constrained_integral(&self) -> crate::Result<T> {
        let s = self.scale_factor()?;
        Ok(s * box_integral(&self.net, &self.constraint.domain))
    }

    /// How far the model is from its constraint (0 when unconstrained;
    /// for inequalities only the excess counts).
    pub fn constraint_residual(&self) -> crate::Result<T> {
        let eps = self.constraint.epsilon;
        match self.constraint.kind {
            ConstraintKind::None => Ok(T::zero()),
            ConstraintKind::Equality => {
                Ok(num_traits::Float::abs(self.constrained_integral()? - eps))
            }
            ConstraintKind::Inequality => {
                Ok((self.constrained_integral()? - eps).max(T::zero()))
            }
        }
    }

    /// Value and parameter gradient of the constrained integrand at a
    /// point, including the gradient path through the scale factor.
    pub fn integrand_grad(&self, x: &[T]) -> crate::Result<(T, Vec<T>)> {
        let tape = Tape::new();
        let pvars: Vec<_> = self.net.params().iter().map(|&p| tape.leaf(p)).collect();
        let s = self.scale_with(&pvars, &tape)?;
        let f = self
            .net
            .eval_with(&pvars, x, crate::multidual::full_mask(self.net.input_dim()), &tape)
            .mixed();
        let out = match s {
            Some(s) => s * f,
            None => f,
        };
        let adj = tape.backward(out);
        Ok((out.value(), pvars.iter().map(|&v| adj.wrt(v)).collect()))
    }
}
