//! The monotone activation family and its derivative ladder.
//!
//! `I_k` is the k-fold antiderivative of `Phi(x) = (erf(x) + 1) / 2`
//! that vanishes at minus infinity. Every `I_k` has the closed form
//!
//! ```text
//! I_k(x) = p_k(x) * Phi(x) + q_k(x) * g(x),    g(x) = e^{-x^2} / sqrt(pi)
//! ```
//!
//! with polynomial tables built once from the recurrence
//!
//! ```text
//! p_k = (x p_{k-1} + p_{k-2} / 2) / k,   q_k likewise,
//! p_0 = 1, q_0 = 0, p_{-1} = 0, q_{-1} = 1.
//! ```
//!
//! Differentiating the closed form confirms `I_k' = I_{k-1}` term by
//! term; the tests additionally gate the tables against a quadrature
//! oracle rather than trusting the algebra. The hidden-layer
//! activation for an n-input network is `sigma_n = I_{n-1}`, whose
//! derivatives down to order n are all strictly positive. Order n+1
//! (that is `I_{-2} = g' = -2x g`) is also tabulated: parameter
//! gradients need one derivative beyond the tracked order.
//!
//! Coefficients are built in exact rational arithmetic and converted
//! to floats once, so higher-order tables do not accumulate drift.

use crate::scalar::Real;
use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::ToPrimitive;
use std::sync::OnceLock;

type Q = Ratio<BigInt>;

/// Closed-form tables for `I_k`, `-2 <= k <= max_k`.
#[derive(Debug, Clone)]
pub struct IterErfTable<T> {
    max_k: isize,
    // index k + 2; coefficients ascending
    p: Vec<Vec<T>>,
    q: Vec<Vec<T>>,
}

fn ratio(num: i64, den: i64) -> Q {
    Ratio::new(BigInt::from(num), BigInt::from(den))
}

fn poly_shift_x(p: &[Q]) -> Vec<Q> {
    let mut out = Vec::with_capacity(p.len() + 1);
    out.push(ratio(0, 1));
    out.extend_from_slice(p);
    out
}

fn poly_add(a: &[Q], b: &[Q]) -> Vec<Q> {
    let mut out = vec![ratio(0, 1); a.len().max(b.len())];
    for (i, c) in a.iter().enumerate() {
        out[i] += c;
    }
    for (i, c) in b.iter().enumerate() {
        out[i] += c;
    }
    out
}

fn poly_scale(p: &[Q], s: &Q) -> Vec<Q> {
    p.iter().map(|c| c * s).collect()
}

fn poly_trim(mut p: Vec<Q>) -> Vec<Q> {
    while p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
    p
}

use num_traits::Zero;

impl<T: Real> IterErfTable<T> {
    /// Build tables through antiderivative order `max_k`.
    pub fn build(max_k: usize) -> Self {
        let mut p: Vec<Vec<Q>> = vec![
            vec![],                        // k = -2: I_{-2} = g' has no Phi part
            vec![],                        // k = -1: I_{-1} = g
            vec![ratio(1, 1)],             // k =  0: I_0 = Phi
        ];
        let mut q: Vec<Vec<Q>> = vec![
            vec![ratio(0, 1), ratio(-2, 1)], // g' = -2x g
            vec![ratio(1, 1)],
            vec![],
        ];
        for k in 1..=max_k {
            let prev = &p[k + 1];
            let prev2 = &p[k];
            let pk = poly_scale(
                &poly_add(&poly_shift_x(prev), &poly_scale(prev2, &ratio(1, 2))),
                &ratio(1, k as i64),
            );
            p.push(poly_trim(pk));
            let prev = &q[k + 1];
            let prev2 = &q[k];
            let qk = poly_scale(
                &poly_add(&poly_shift_x(prev), &poly_scale(prev2, &ratio(1, 2))),
                &ratio(1, k as i64),
            );
            q.push(poly_trim(qk));
        }
        let to_float = |polys: Vec<Vec<Q>>| -> Vec<Vec<T>> {
            polys
                .into_iter()
                .map(|poly| {
                    poly.iter()
                        .map(|c| T::of(c.to_f64().expect("rational fits f64")))
                        .collect()
                })
                .collect()
        };
        IterErfTable {
            max_k: max_k as isize,
            p: to_float(p),
            q: to_float(q),
        }
    }

    pub fn max_k(&self) -> isize {
        self.max_k
    }

    /// Polynomial coefficients `(p_k, q_k)`, ascending powers.
    pub fn poly_coeffs(&self, k: isize) -> (&[T], &[T]) {
        let i = self.index(k);
        (&self.p[i], &self.q[i])
    }

    fn index(&self, k: isize) -> usize {
        assert!(
            (-2..=self.max_k).contains(&k),
            "order {k} outside table range -2..={}",
            self.max_k
        );
        (k + 2) as usize
    }

    /// Evaluate `I_k(x)`.
    pub fn eval(&self, k: isize, x: T) -> T {
        let i = self.index(k);
        // erfc keeps the left tail exact where erf rounds to -1
        let phi = (-x).erfc() * T::of(0.5);
        let mut out = horner(&self.p[i], x) * phi;
        // e^{-x^2} underflows to exact zero past |x| ~ 38; skipping the
        // term avoids inf * 0 when the polynomial factor overflows
        if num_traits::Float::abs(x) < T::of(38.0) {
            let g = (-x * x).exp() * T::of(0.5) * T::FRAC_2_SQRT_PI();
            out = out + horner(&self.q[i], x) * g;
        }
        // the two terms cancel in the far left tail; once subnormal
        // rounding flips the sign, floor the antiderivatives at zero
        if k >= 0 && x < T::of(-6.0) && out < T::zero() {
            return T::zero();
        }
        out
    }

    /// The derivative ladder of `sigma_n`: `[sigma_n(x), sigma_n'(x),
    /// ..., sigma_n^{(max_order)}(x)]`. Every entry is strictly
    /// positive for `max_order <= n`.
    pub fn act_derivs(&self, n: usize, x: T, max_order: usize) -> Vec<T> {
        assert!(n >= 1, "activation order starts at 1");
        assert!(
            max_order <= n,
            "derivative order {max_order} above activation order {n}"
        );
        (0..=max_order as isize)
            .map(|j| self.eval(n as isize - 1 - j, x))
            .collect()
    }
}

fn horner<T: Real>(coeffs: &[T], x: T) -> T {
    coeffs
        .iter()
        .rev()
        .fold(T::zero(), |acc, &c| acc * x + c)
}

/// `tanh` and its derivatives through `max_order`, for the plain
/// (unconstrained) layers. `d^j tanh / dx^j` is a polynomial in
/// `t = tanh(x)`; the integer coefficient tables are built once.
pub fn tanh_derivs<T: Real>(x: T, max_order: usize) -> Vec<T> {
    const MAX_ORDER: usize = 12;
    static POLYS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    let polys = POLYS.get_or_init(|| {
        let mut polys: Vec<Vec<f64>> = vec![vec![0.0, 1.0]]; // tanh itself
        for j in 0..MAX_ORDER {
            let d: Vec<f64> = polys[j]
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| i as f64 * c)
                .collect();
            // multiply by (1 - t^2)
            let mut next = vec![0.0; d.len() + 2];
            for (i, c) in d.iter().enumerate() {
                next[i] += c;
                next[i + 2] -= c;
            }
            while next.last() == Some(&0.0) {
                next.pop();
            }
            polys.push(next);
        }
        polys
    });
    assert!(max_order <= MAX_ORDER, "tanh derivatives capped at {MAX_ORDER}");
    let t = x.tanh();
    (0..=max_order)
        .map(|j| {
            polys[j]
                .iter()
                .rev()
                .fold(T::zero(), |acc, &c| acc * t + T::of(c))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integral::Domain;
    use crate::oracles::quad_integral;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const INV_SQRT_PI: f64 = 0.5641895835477563; // 1/sqrt(pi)

    #[test]
    fn base_case_tables() {
        let t = IterErfTable::<f64>::build(1);
        assert_eq!(t.poly_coeffs(0), (&[1.0][..], &[][..]));
        assert_eq!(t.poly_coeffs(-1), (&[][..], &[1.0][..]));
        // I_1 = x Phi + g/2
        assert_eq!(t.poly_coeffs(1), (&[0.0, 1.0][..], &[0.5][..]));
    }

    #[test]
    fn higher_tables_match_hand_derivation() {
        // differentiating the closed forms by hand:
        //   I_2 = (x^2/2 + 1/4) Phi + (x/4) g
        //   I_3 = (x^3/6 + x/4) Phi + (x^2/12 + 1/12) g
        let t = IterErfTable::<f64>::build(3);
        assert_eq!(t.poly_coeffs(2), (&[0.25, 0.0, 0.5][..], &[0.0, 0.25][..]));
        let (p3, q3) = t.poly_coeffs(3);
        assert_eq!(p3, &[0.0, 0.25, 0.0, 1.0 / 6.0][..]);
        assert_eq!(q3, &[1.0 / 12.0, 0.0, 1.0 / 12.0][..]);
    }

    #[test]
    fn values_at_zero() {
        let t = IterErfTable::<f64>::build(3);
        assert_eq!(t.eval(0, 0.0), 0.5);
        assert!((t.eval(-1, 0.0) - INV_SQRT_PI).abs() < 1e-15);
        // I_1(0) = 1/(2 sqrt(pi))
        assert!((t.eval(1, 0.0) - 0.5 * INV_SQRT_PI).abs() < 1e-14);
        assert!((t.eval(2, 0.0) - 0.125).abs() < 1e-15);
        assert!((t.eval(3, 0.0) - INV_SQRT_PI / 12.0).abs() < 1e-15);
    }

    #[test]
    fn spot_values_away_from_zero() {
        // frozen against 30-digit quadrature of the defining integrals
        let t = IterErfTable::<f64>::build(2);
        assert!((t.eval(1, 1.0) - 1.0251272708300061).abs() < 1e-13);
        assert!((t.eval(2, 1.0) - 0.7429012345337174).abs() < 1e-13);
        assert!((t.eval(2, -1.0) - 0.007098765466282586).abs() < 1e-14);
    }

    #[test]
    fn derivative_chain_by_finite_differences() {
        let t = IterErfTable::<f64>::build(5);
        let h = 1e-5;
        for k in 1..=5 {
            for i in 0..=24 {
                let x = -6.0 + 0.5 * i as f64;
                let fd = (t.eval(k, x + h) - t.eval(k, x - h)) / (2.0 * h);
                let want = t.eval(k - 1, x);
                let tol = 1e-6 * want.abs().max(1e-9);
                assert!(
                    (fd - want).abs() < tol.max(1e-10),
                    "k={k} x={x}: fd {fd} vs {want}"
                );
            }
        }
    }

    #[test]
    fn quadrature_reproduces_each_order() {
        // integrating I_{k-1} over [-8, x] must give I_k(x) - I_k(-8)
        let t = IterErfTable::<f64>::build(4);
        for k in 1..=4isize {
            for &x in &[-2.0, 0.5, 3.0] {
                let domain = Domain::new(vec![-8.0], vec![x]).unwrap();
                let q = quad_integral(&|p: &[f64]| t.eval(k - 1, p[0]), &domain, 1e-9)
                    .unwrap()
                    .value;
                let want = t.eval(k, x) - t.eval(k, -8.0);
                assert!((q - want).abs() < 1e-6, "k={k} x={x}: {q} vs {want}");
            }
        }
    }

    #[test]
    fn strictly_positive_everywhere() {
        let t = IterErfTable::<f64>::build(5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100_000 {
            let x: f64 = rng.gen_range(-20.0..20.0);
            for k in -1..=5 {
                let v = t.eval(k, x);
                assert!(v > 0.0, "I_{k}({x}) = {v}");
            }
        }
    }

    #[test]
    fn vanishes_toward_minus_infinity() {
        let t = IterErfTable::<f64>::build(5);
        for k in 0..=5 {
            assert!(t.eval(k, -10.0) < 1e-12);
        }
        assert_eq!(t.eval(0, -40.0), 0.0);
    }

    #[test]
    fn finite_at_large_arguments() {
        let t = IterErfTable::<f64>::build(5);
        for k in -2..=5 {
            assert!(t.eval(k, 1e6).is_finite());
            assert!(t.eval(k, -1e6).is_finite());
        }
        // far field follows the leading monomial x^k / k!
        assert!((t.eval(2, 1e6) - 5e11).abs() / 5e11 < 1e-5);
    }

    #[test]
    fn derivative_ladder_is_the_index_shift() {
        let t = IterErfTable::<f64>::build(3);
        // n = 1: sigma_1 = I_0 = (erf + 1)/2
        let d = t.act_derivs(1, 0.7, 1);
        assert_eq!(d[0], t.eval(0, 0.7));
        assert_eq!(d[1], t.eval(-1, 0.7));
        use crate::scalar::Real as _;
        assert!((d[0] - (0.7f64.erf() + 1.0) / 2.0).abs() < 1e-15);

        // n = 2: sigma_2 = I_1, softplus-like, derivative I_0
        let d = t.act_derivs(2, -0.3, 2);
        assert_eq!(d[0], t.eval(1, -0.3));
        assert_eq!(d[1], t.eval(0, -0.3));

        // n = 3 at x = 0
        let d = t.act_derivs(3, 0.0, 3);
        assert!((d[0] - 0.125).abs() < 1e-15);
        assert!((d[1] - 0.5 * INV_SQRT_PI).abs() < 1e-14);
        assert_eq!(d[2], 0.5);
        assert!((d[3] - INV_SQRT_PI).abs() < 1e-15);
    }

    #[test]
    #[should_panic(expected = "outside table range")]
    fn order_out_of_range_panics() {
        let t = IterErfTable::<f64>::build(2);
        t.eval(3, 0.0);
    }

    #[test]
    fn sigma_two_resembles_softplus() {
        // same asymptotes: -> 0 on the left, -> x + const slope 1 on the right
        let t = IterErfTable::<f64>::build(1);
        assert!(t.eval(1, -6.0) < 1e-8);
        let slope = (t.eval(1, 8.0) - t.eval(1, 6.0)) / 2.0;
        assert!((slope - 1.0).abs() < 1e-9);
    }

    #[test]
    fn f32_table_agrees_with_f64() {
        let t32 = IterErfTable::<f32>::build(2);
        let t64 = IterErfTable::<f64>::build(2);
        for i in -10..=10 {
            let x = i as f64 * 0.5;
            for k in -1..=2 {
                let a = t32.eval(k, x as f32) as f64;
                let b = t64.eval(k, x);
                assert!((a - b).abs() < 1e-5 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn tanh_ladder_matches_finite_differences() {
        let h = 1e-5;
        for &x in &[-1.3, -0.2, 0.0, 0.4, 2.1] {
            let d = tanh_derivs::<f64>(x, 4);
            assert!((d[0] - x.tanh()).abs() < 1e-15);
            for j in 1..=4 {
                let fd = (tanh_derivs::<f64>(x + h, j - 1)[j - 1]
                    - tanh_derivs::<f64>(x - h, j - 1)[j - 1])
                    / (2.0 * h);
                assert!(
                    (d[j] - fd).abs() < 1e-6 * d[j].abs().max(1.0),
                    "order {j} at {x}: {} vs fd {fd}",
                    d[j]
                );
            }
        }
    }
}
