//! Independent verification machinery: quadrature, finite differences
//! and sampling statistics.
//!
//! Everything here is test/acceptance tooling. None of it touches the
//! multidual or activation closed forms — integrands are evaluated
//! through plain function handles, so these estimates stay independent
//! of the code paths they check.

use crate::integral::Domain;
use crate::multidual::Mask;
use crate::scalar::Real;

/// Result of a quadrature: Simpson estimates carry no spread, the
/// Monte Carlo fallback reports a standard error.
#[derive(Debug, Clone, Copy)]
pub struct QuadEstimate<T> {
    pub value: T,
    pub stderr: Option<T>,
}

const SIMPSON_MAX_DEPTH: usize = 12;
const MC_SAMPLES: usize = 32768;

/// Definite integral of `f` over an axis-aligned box.
///
/// Up to three dimensions this is tensorised adaptive Simpson with
/// absolute tolerance roughly `tol`; above that it falls back to a
/// Halton-sequence Monte Carlo estimate with a reported standard
/// error. Fails on the first non-finite integrand sample.
pub fn quad_integral<T: Real>(
    f: &dyn Fn(&[T]) -> T,
    domain: &Domain<T>,
    tol: T,
) -> crate::Result<QuadEstimate<T>> {
    if domain.dim() <= 3 {
        let mut point = vec![T::zero(); domain.dim()];
        let value = nested_simpson(f, domain, 0, &mut point, tol)?;
        Ok(QuadEstimate {
            value,
            stderr: None,
        })
    } else {
        halton_mc(f, domain)
    }
}

fn nested_simpson<T: Real>(
    f: &dyn Fn(&[T]) -> T,
    domain: &Domain<T>,
    dim: usize,
    point: &mut Vec<T>,
    tol: T,
) -> crate::Result<T> {
    let (a, b) = domain.interval(dim);
    // tighter tolerance for inner integrals: their error is amplified
    // by the outer interval width
    let inner_tol = tol * T::of(0.1) / (b - a);
    let mut eval = |x: T, point: &mut Vec<T>| -> crate::Result<T> {
        point[dim] = x;
        if dim + 1 == domain.dim() {
            let v = f(point);
            if !v.is_finite() {
                return Err(crate::Error::NonFiniteSample(
                    point.iter().map(|&c| c.to_f64().unwrap_or(f64::NAN)).collect(),
                ));
            }
            Ok(v)
        } else {
            nested_simpson(f, domain, dim + 1, point, inner_tol)
        }
    };

    let m = (a + b) * T::of(0.5);
    let fa = eval(a, point)?;
    let fm = eval(m, point)?;
    let fb = eval(b, point)?;
    let whole = (b - a) / T::of(6.0) * (fa + T::of(4.0) * fm + fb);
    adaptive_step(
        &mut eval,
        point,
        a,
        fa,
        m,
        fm,
        b,
        fb,
        whole,
        tol,
        SIMPSON_MAX_DEPTH,
    )
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<T: Real>(
    eval: &mut dyn FnMut(T, &mut Vec<T>) -> crate::Result<T>,
    point: &mut Vec<T>,
    a: T,
    fa: T,
    m: T,
    fm: T,
    b: T,
    fb: T,
    whole: T,
    tol: T,
    depth: usize,
) -> crate::Result<T> {
    let lm = (a + m) * T::of(0.5);
    let rm = (m + b) * T::of(0.5);
    let flm = eval(lm, point)?;
    let frm = eval(rm, point)?;
    let six = T::of(6.0);
    let four = T::of(4.0);
    let left = (m - a) / six * (fa + four * flm + fm);
    let right = (b - m) / six * (fm + four * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || num_traits::Float::abs(delta) <= T::of(15.0) * tol {
        // Richardson extrapolation
        Ok(left + right + delta / T::of(15.0))
    } else {
        let half = tol * T::of(0.5);
        let l = adaptive_step(eval, point, a, fa, lm, flm, m, fm, left, half, depth - 1)?;
        let r = adaptive_step(eval, point, m, fm, rm, frm, b, fb, right, half, depth - 1)?;
        Ok(l + r)
    }
}

/// Radical-inverse Halton point, dimension by prime base.
pub(crate) fn halton<T: Real>(index: usize, base: usize) -> T {
    let b = T::of(base as f64);
    let mut f = T::one() / b;
    let mut r = T::zero();
    let mut i = index;
    while i > 0 {
        r = r + f * T::of((i % base) as f64);
        i /= base;
        f = f / b;
    }
    r
}

fn halton_mc<T: Real>(f: &dyn Fn(&[T]) -> T, domain: &Domain<T>) -> crate::Result<QuadEstimate<T>> {
    const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    let n = domain.dim();
    assert!(n <= PRIMES.len(), "Monte Carlo fallback capped at 8 dims");
    let vol = domain.volume();
    let mut sum = T::zero();
    let mut sum_sq = T::zero();
    let mut point = vec![T::zero(); n];
    for i in 0..MC_SAMPLES {
        for (d, p) in point.iter_mut().enumerate() {
            let (a, b) = domain.interval(d);
            // index offset 1: halton(0, base) is always 0
            *p = a + (b - a) * halton(i + 1, PRIMES[d]);
        }
        let v = f(&point);
        if !v.is_finite() {
            return Err(crate::Error::NonFiniteSample(
                point.iter().map(|&c| c.to_f64().unwrap_or(f64::NAN)).collect(),
            ));
        }
        sum = sum + v;
        sum_sq = sum_sq + v * v;
    }
    let m = T::of(MC_SAMPLES as f64);
    let mean = sum / m;
    let var = (sum_sq / m - mean * mean).max(T::zero());
    Ok(QuadEstimate {
        value: vol * mean,
        stderr: Some(vol * (var / m).sqrt()),
    })
}

/// Nested central finite differences: the mixed partial of `f` over
/// the variables in `mask`, step `h` per variable. Error is O(h^2) in
/// every direction.
pub fn fd_mixed_partial<T: Real>(f: &dyn Fn(&[T]) -> T, x: &[T], mask: Mask, h: T) -> T {
    assert!(h > T::zero(), "step must be positive");
    match (0..x.len()).rev().find(|i| mask & (1 << i) != 0) {
        None => f(x),
        Some(dim) => {
            let rest = mask & !(1 << dim);
            let mut fwd = x.to_vec();
            fwd[dim] = fwd[dim] + h;
            let mut bwd = x.to_vec();
            bwd[dim] = bwd[dim] - h;
            let two = T::of(2.0);
            (fd_mixed_partial(f, &fwd, rest, h) - fd_mixed_partial(f, &bwd, rest, h)) / (two * h)
        }
    }
}

/// Kolmogorov–Smirnov statistic: sup distance between the empirical
/// CDF of `samples` and the reference `cdf`.
///
/// # Panics
///
/// Panics with fewer than 100 samples; the statistic is meaningless at
/// tiny sample sizes.
pub fn ks_statistic<T: Real>(samples: &[T], cdf: &dyn Fn(T) -> T) -> T {
    assert!(samples.len() >= 100, "need at least 100 samples");
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    let m = T::of(sorted.len() as f64);
    let mut d = T::zero();
    for (i, &x) in sorted.iter().enumerate() {
        let c = cdf(x);
        let hi = T::of((i + 1) as f64) / m - c;
        let lo = c - T::of(i as f64) / m;
        d = d.max(hi).max(lo);
    }
    d
}
