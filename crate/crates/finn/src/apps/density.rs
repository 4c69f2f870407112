//! Probability-density estimation and inverse-CDF sampling.
//!
//! A density model is a positivity network under an equality
//! constraint with target 1: the constrained integrand is the PDF and
//! the constrained antiderivative plays the role of the CDF. Sampling
//! inverts one conditional CDF per dimension by bisection — the
//! conditionals are exact (mixed partials of corner sums of F), and
//! monotone by the positivity construction, so bisection always
//! converges.

use crate::integral::{Constraint, ConstraintKind, ConstrainedModel, Domain};
use crate::network::{ArchSpec, Network};
use crate::training::{train, Dataset, TrainConfig, TrainHistory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BISECT_TOL: f64 = 1e-10;
const FLAT_CONDITIONAL: f64 = 1e-12;

/// Fit a density: positivity on, integral pinned to 1 over the domain.
pub fn fit_density(
    data: &Dataset<f64>,
    domain: &Domain<f64>,
    hidden: &[usize],
    cfg: &TrainConfig<f64>,
) -> crate::Result<(ConstrainedModel<f64>, TrainHistory<f64>)> {
    let arch = ArchSpec {
        input_dim: domain.dim(),
        hidden: hidden.to_vec(),
        positive: true,
    };
    let net = Network::init(&arch, cfg.seed)?;
    let mut model = ConstrainedModel::new(net, Constraint::equality(1.0, domain.clone()))?;
    let history = train(&mut model, data, cfg)?;
    Ok((model, history))
}

/// The model's CDF along one dimension, marginalised over the
/// trailing dims and conditioned on fixed leading coordinates.
///
/// `G(t)` sums F with signs over the corners of the trailing dims,
/// then takes the mixed partial over the leading dims; the conditional
/// CDF is `(G(t) - G(a)) / (G(b) - G(a))`.
fn conditional_cdf_parts(
    net: &Network<f64>,
    domain: &Domain<f64>,
    prefix: &[f64],
    t: f64,
) -> f64 {
    let dim = prefix.len();
    let n = domain.dim();
    let tracked = (1usize << dim) - 1;
    let trailing = n - dim - 1;
    let mut g = 0.0;
    let mut point = vec![0.0; n];
    point[..dim].copy_from_slice(prefix);
    point[dim] = t;
    for corner in 0..(1usize << trailing) {
        for j in 0..trailing {
            let (a, b) = domain.interval(dim + 1 + j);
            point[dim + 1 + j] = if corner & (1 << j) != 0 { a } else { b };
        }
        let v = net.partial(&point, tracked);
        if corner.count_ones() % 2 == 0 {
            g += v;
        } else {
            g -= v;
        }
    }
    g
}

/// Draw points from a fitted density by dimension-wise inverse-CDF
/// bisection.
pub fn sample_density(
    model: &ConstrainedModel<f64>,
    count: usize,
    seed: u64,
) -> crate::Result<Vec<Vec<f64>>> {
    if model.constraint().kind != ConstraintKind::Equality || !model.net().is_positive() {
        return Err(crate::Error::InvalidConfig(
            "sampling requires a positivity model with an equality constraint".into(),
        ));
    }
    let net = model.net();
    let domain = model.domain();
    let n = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let mut point = Vec::with_capacity(n);
        for dim in 0..n {
            let (a, b) = domain.interval(dim);
            let g_a = conditional_cdf_parts(net, domain, &point, a);
            let g_b = conditional_cdf_parts(net, domain, &point, b);
            let den = g_b - g_a;
            if den < FLAT_CONDITIONAL {
                return Err(crate::Error::DegenerateDensity(den, dim));
            }
            let target: f64 = rng.gen_range(0.0..1.0);
            let (mut lo, mut hi) = (a, b);
            let mut mid = 0.5 * (a + b);
            for _ in 0..200 {
                mid = 0.5 * (lo + hi);
                let c = (conditional_cdf_parts(net, domain, &point, mid) - g_a) / den;
                if (c - target).abs() <= BISECT_TOL {
                    break;
                }
                if c < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            point.push(mid);
        }
        samples.push(point);
    }
    Ok(samples)
}

/// CDF of a one-dimensional density model, normalised over its domain.
pub fn learned_cdf_1d(model: &ConstrainedModel<f64>, x: f64) -> crate::Result<f64> {
    let domain = model.domain();
    let (a, b) = domain.interval(0);
    let net = model.net();
    let fa = net.antiderivative(&[a]);
    let span = net.antiderivative(&[b]) - fa;
    if span < FLAT_CONDITIONAL {
        return Err(crate::Error::DegenerateDensity(span, 0));
    }
    Ok(((net.antiderivative(&[x.clamp(a, b)]) - fa) / span).clamp(0.0, 1.0))
}
