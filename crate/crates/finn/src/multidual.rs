//! Truncated multivariate dual numbers: one differentiation order per
//! tracked variable.
//!
//! A [`MultiDual`] over n variables carries 2^n coefficients, one per
//! subset S of the variables; the coefficient at S is the exact mixed
//! partial of the represented quantity over the variables in S. The
//! algebra is the quotient ring with eps_i^2 = 0, so products follow
//! the subset convolution
//!
//! ```text
//! c_S(u * v) = sum over T subset of S of c_T(u) * c_{S\T}(v)
//! ```
//!
//! and elementwise functions follow Faa di Bruno over set partitions.
//! Coefficients are any [`AdScalar`] — plain floats for evaluation, or
//! tape variables when parameter gradients are needed.

use crate::scalar::Real;
use arrayvec::ArrayVec;
use num_traits::One;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

/// Build-time cap on the number of tracked variables.
pub const MAX_VARS: usize = 4;
/// Coefficient storage bound, `2^MAX_VARS`.
pub const MAX_COEFFS: usize = 1 << MAX_VARS;

/// Variable subset encoded as a bitmask (bit i = variable i).
pub type Mask = usize;

/// Full subset `{0..n-1}` for `n` tracked variables.
pub fn full_mask(n: usize) -> Mask {
    (1 << n) - 1
}

/// Scalar the multidual coefficients are made of: either a plain float
/// or a tape-recorded [`crate::tape::Var`].
pub trait AdScalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    type Real: Real;
    /// Whatever is needed to mint new scalars (`()` for plain floats,
    /// the tape for recorded ones).
    type Ctx: Copy;

    fn constant(ctx: Self::Ctx, value: Self::Real) -> Self;
    fn value(self) -> Self::Real;
    /// A zero with the same provenance as `self` (no tape growth).
    fn zero_like(self) -> Self;
    /// Apply a unary function with known value and first derivative at
    /// the current point. This is how activation values enter the tape.
    fn chain(self, value: Self::Real, deriv: Self::Real) -> Self;
    /// Absolute value; the subgradient at 0 is +1.
    fn abs_subgrad(self) -> Self;
    fn reciprocal(self) -> Self;
    /// `max(self, c)`; the clamped branch carries zero gradient.
    fn max_at_least(self, c: Self::Real) -> Self;

    /// Multiply by a plain constant.
    fn mul_real(self, c: Self::Real) -> Self {
        let v = self.value();
        self.chain(v * c, c)
    }
}

macro_rules! impl_plain_scalar {
    ($($t:ty)*) => {$(
        impl AdScalar for $t {
            type Real = $t;
            type Ctx = ();

            fn constant(_ctx: (), value: $t) -> Self {
                value
            }
            fn value(self) -> $t {
                self
            }
            fn zero_like(self) -> Self {
                0.0
            }
            fn chain(self, value: $t, _deriv: $t) -> Self {
                value
            }
            fn abs_subgrad(self) -> Self {
                num_traits::Float::abs(self)
            }
            fn reciprocal(self) -> Self {
                1.0 / self
            }
            fn max_at_least(self, c: $t) -> Self {
                if self > c {
                    self
                } else {
                    c
                }
            }
        }
    )*};
}

impl_plain_scalar!(f32 f64);

/// All partitions of every subset mask below [`MAX_COEFFS`] into
/// nonempty blocks, built once per process.
fn partition_table() -> &'static [Vec<Vec<Mask>>] {
    static TABLE: OnceLock<Vec<Vec<Vec<Mask>>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..MAX_COEFFS).map(enumerate_partitions).collect())
}

/// Partitions of `mask` into nonempty blocks. The block containing the
/// lowest set bit is chosen first, which makes each partition appear
/// exactly once and in a fixed order.
fn enumerate_partitions(mask: Mask) -> Vec<Vec<Mask>> {
    if mask == 0 {
        return vec![vec![]];
    }
    let low = mask & mask.wrapping_neg();
    let rest = mask ^ low;
    let mut out = Vec::new();
    // submasks of `rest`, descending
    let mut sub = rest;
    loop {
        let block = low | sub;
        for tail in enumerate_partitions(mask ^ block) {
            let mut partition = Vec::with_capacity(tail.len() + 1);
            partition.push(block);
            partition.extend(tail);
            out.push(partition);
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & rest;
    }
    out
}

/// Multivariate first-order-per-variable dual number.
#[derive(Clone, Debug)]
pub struct MultiDual<S> {
    vars: u8,
    coeffs: ArrayVec<S, MAX_COEFFS>,
}

impl<S: AdScalar> MultiDual<S> {
    /// Lift a real into the algebra: a constant when `var` is `None`,
    /// the seeded variable `var` otherwise.
    pub fn lift(
        ctx: S::Ctx,
        n: usize,
        value: S::Real,
        var: Option<usize>,
    ) -> crate::Result<Self> {
        if n > MAX_VARS {
            return Err(crate::Error::TooManyVariables(n));
        }
        if let Some(i) = var {
            if i >= n {
                return Err(crate::Error::DimensionMismatch { expected: n, got: i });
            }
        }
        let c0 = S::constant(ctx, value);
        let mut coeffs = ArrayVec::new();
        coeffs.push(c0);
        for mask in 1..(1usize << n) {
            let c = match var {
                Some(i) if mask == 1 << i => S::constant(ctx, S::Real::one()),
                _ => c0.zero_like(),
            };
            coeffs.push(c);
        }
        Ok(MultiDual {
            vars: n as u8,
            coeffs,
        })
    }

    pub fn constant(ctx: S::Ctx, n: usize, value: S::Real) -> Self {
        Self::lift(ctx, n, value, None).expect("n within cap")
    }

    pub fn variable(ctx: S::Ctx, n: usize, index: usize, value: S::Real) -> crate::Result<Self> {
        Self::lift(ctx, n, value, Some(index))
    }

    /// Build from raw coefficients (length must be a power of two).
    pub fn from_coeffs(coeffs: &[S]) -> Self {
        let n = coeffs.len().trailing_zeros() as usize;
        assert_eq!(1 << n, coeffs.len(), "coefficient count must be 2^n");
        assert!(n <= MAX_VARS, "variable count above cap");
        MultiDual {
            vars: n as u8,
            coeffs: coeffs.iter().copied().collect(),
        }
    }

    /// Number of tracked variables.
    pub fn vars(&self) -> usize {
        self.vars as usize
    }

    /// Coefficient for the variable subset `mask`, i.e. the mixed
    /// partial over exactly those variables.
    pub fn extract(&self, mask: Mask) -> S {
        assert!(
            mask < self.coeffs.len(),
            "subset {mask:#b} out of range for {} variables",
            self.vars
        );
        self.coeffs[mask]
    }

    /// Plain value (empty-subset coefficient).
    pub fn value(&self) -> S::Real {
        self.coeffs[0].value()
    }

    /// The full mixed partial over every tracked variable.
    pub fn mixed(&self) -> S {
        self.coeffs[self.coeffs.len() - 1]
    }

    fn check_arity(&self, other: &Self) {
        assert_eq!(
            self.vars, other.vars,
            "multidual arity mismatch: {} vs {}",
            self.vars, other.vars
        );
    }

    /// Coefficientwise scale by a scalar (exact for quantities that do
    /// not depend on the tracked variables).
    pub fn scale(&self, s: S) -> Self {
        MultiDual {
            vars: self.vars,
            coeffs: self.coeffs.iter().map(|&c| c * s).collect(),
        }
    }

    /// Add a scalar to the value component only.
    pub fn add_scalar(&self, s: S) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = out.coeffs[0] + s;
        out
    }

    /// Apply an elementwise function given its derivative values
    /// `derivs[k] = f^(k)(value)` for `k = 0..=n`. Coefficients follow
    /// Faa di Bruno over the subset-partition lattice.
    ///
    /// # Panics
    ///
    /// Panics if fewer than `n + 1` derivatives are supplied.
    pub fn apply_unary(&self, derivs: &[S]) -> Self {
        let n = self.vars as usize;
        assert!(
            derivs.len() > n,
            "need {} derivative orders, got {}",
            n + 1,
            derivs.len()
        );
        let mut coeffs: ArrayVec<S, MAX_COEFFS> = ArrayVec::new();
        coeffs.push(derivs[0]);
        for mask in 1..self.coeffs.len() {
            let mut acc: Option<S> = None;
            for partition in &partition_table()[mask] {
                let mut term = derivs[partition.len()];
                for &block in partition {
                    term = term * self.coeffs[block];
                }
                acc = Some(match acc {
                    Some(a) => a + term,
                    None => term,
                });
            }
            coeffs.push(acc.expect("nonempty mask has partitions"));
        }
        MultiDual {
            vars: self.vars,
            coeffs,
        }
    }
}

impl<S: AdScalar> Add for MultiDual<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.check_arity(&rhs);
        MultiDual {
            vars: self.vars,
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }
}

impl<S: AdScalar> Sub for MultiDual<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.check_arity(&rhs);
        MultiDual {
            vars: self.vars,
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }
}

impl<S: AdScalar> Neg for MultiDual<S> {
    type Output = Self;
    fn neg(self) -> Self {
        MultiDual {
            vars: self.vars,
            coeffs: self.coeffs.iter().map(|&a| -a).collect(),
        }
    }
}

impl<S: AdScalar> Mul for MultiDual<S> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.check_arity(&rhs);
        let mut coeffs: ArrayVec<S, MAX_COEFFS> = ArrayVec::new();
        for mask in 0..self.coeffs.len() {
            // descending submask walk, starting at T = mask
            let mut term = self.coeffs[mask] * rhs.coeffs[0];
            let mut t = (mask.wrapping_sub(1)) & mask;
            if mask != 0 {
                loop {
                    term = term + self.coeffs[t] * rhs.coeffs[mask ^ t];
                    if t == 0 {
                        break;
                    }
                    t = (t - 1) & mask;
                }
            }
            coeffs.push(term);
        }
        MultiDual {
            vars: self.vars,
            coeffs,
        }
    }
}
