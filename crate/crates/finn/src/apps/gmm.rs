//! Gaussian-mixture ground truth and the fixed-volume experiment:
//! fit the same two-mode surface under integral constraints below, at,
//! and above its true volume.

use crate::integral::{Constraint, ConstrainedModel, Domain};
use crate::network::{ArchSpec, Network};
use crate::scalar::Real as _;
use crate::training::{train, Dataset, TrainConfig, TrainHistory};
use serde::Serialize;

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone)]
pub struct GmmSpec {
    pub means: Vec<Vec<f64>>,
    pub sigmas: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (-z / std::f64::consts::SQRT_2).erfc()
}

impl GmmSpec {
    /// The two-mode surface used throughout: modes at (-1.2, -1.2) and
    /// (1.2, 1.2), per-dim sigma 0.6, weights scaled so the mass over
    /// `domain` is exactly `volume`.
    pub fn two_modes(domain: &Domain<f64>, volume: f64) -> Self {
        let spec = GmmSpec {
            means: vec![vec![-1.2, -1.2], vec![1.2, 1.2]],
            sigmas: vec![vec![0.6, 0.6], vec![0.6, 0.6]],
            weights: vec![1.0, 1.0],
        };
        spec.normalised_to(volume, domain)
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        let norm = (2.0 * std::f64::consts::PI).sqrt();
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.sigmas))
            .map(|(&w, (mu, sigma))| {
                let mut p = w;
                for d in 0..x.len() {
                    let z = (x[d] - mu[d]) / sigma[d];
                    p *= (-0.5 * z * z).exp() / (norm * sigma[d]);
                }
                p
            })
            .sum()
    }

    /// Exact mass over a box (product of per-dim normal CDF spans).
    pub fn box_mass(&self, domain: &Domain<f64>) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.sigmas))
            .map(|(&w, (mu, sigma))| {
                let mut m = w;
                for d in 0..domain.dim() {
                    let (a, b) = domain.interval(d);
                    m *= normal_cdf((b - mu[d]) / sigma[d]) - normal_cdf((a - mu[d]) / sigma[d]);
                }
                m
            })
            .sum()
    }

    /// Rescale the weights so the box mass equals `volume` exactly.
    pub fn normalised_to(mut self, volume: f64, domain: &Domain<f64>) -> Self {
        let current = self.box_mass(domain);
        for w in &mut self.weights {
            *w *= volume / current;
        }
        self
    }

    /// Full-line CDF for one-dimensional mixtures.
    pub fn cdf_1d(&self, x: f64) -> f64 {
        assert_eq!(self.dim(), 1);
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.sigmas))
            .map(|(&w, (mu, sigma))| w * normal_cdf((x - mu[0]) / sigma[0]))
            .sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VolumeReport {
    pub epsilon: f64,
    pub grid_mse: f64,
    pub constraint_residual: f64,
    pub min_f: f64,
    pub final_loss: f64,
}

pub struct VolumeRun {
    pub report: VolumeReport,
    pub model: ConstrainedModel<f64>,
    pub history: TrainHistory<f64>,
}

/// Midpoint grid over the domain, `per_dim` cells per axis.
pub fn grid_points(domain: &Domain<f64>, per_dim: usize) -> Vec<Vec<f64>> {
    let n = domain.dim();
    let total = per_dim.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            (0..n)
                .map(|d| {
                    let cell = idx % per_dim;
                    idx /= per_dim;
                    let (a, b) = domain.interval(d);
                    a + (b - a) * (cell as f64 + 0.5) / per_dim as f64
                })
                .collect()
        })
        .collect()
}

/// Mean squared error of the constrained integrand against the ground
/// truth over a midpoint grid.
pub fn grid_mse(
    model: &ConstrainedModel<f64>,
    truth: &dyn Fn(&[f64]) -> f64,
    per_dim: usize,
) -> crate::Result<f64> {
    let s = model.scale_factor()?;
    let points = grid_points(model.domain(), per_dim);
    let mut acc = 0.0;
    for p in &points {
        let d = s * model.net().integrand(p) - truth(p);
        acc += d * d;
    }
    Ok(acc / points.len() as f64)
}

/// Train one constrained fit per epsilon against the mixture surface.
pub fn volume_experiment(
    spec: &GmmSpec,
    domain: &Domain<f64>,
    eps_list: &[f64],
    hidden: &[usize],
    cfg: &TrainConfig<f64>,
) -> crate::Result<Vec<VolumeRun>> {
    let mut runs = Vec::new();
    for (i, &epsilon) in eps_list.iter().enumerate() {
        let arch = ArchSpec {
            input_dim: domain.dim(),
            hidden: hidden.to_vec(),
            positive: true,
        };
        let net = Network::init(&arch, cfg.seed.wrapping_add(i as u64))?;
        let mut model =
            ConstrainedModel::new(net, Constraint::equality(epsilon, domain.clone()))?;
        let target = spec.clone();
        let data = Dataset::from_fn(move |x: &[f64]| target.pdf(x), domain.clone());
        let history = train(&mut model, &data, cfg)?;

        let target = spec.clone();
        let mse = grid_mse(&model, &|x| target.pdf(x), 40)?;
        let s = model.scale_factor()?;
        let min_f = grid_points(domain, 40)
            .iter()
            .map(|p| s * model.net().integrand(p))
            .fold(f64::INFINITY, f64::min);
        runs.push(VolumeRun {
            report: VolumeReport {
                epsilon,
                grid_mse: mse,
                constraint_residual: model.constraint_residual()?,
                min_f,
                final_loss: history.final_loss(),
            },
            model,
            history,
        });
    }
    Ok(runs)
}

/// Rows for `surface.csv`: grid coordinates, fitted f, ground truth.
pub fn surface_rows(
    model: &ConstrainedModel<f64>,
    truth: &dyn Fn(&[f64]) -> f64,
    per_dim: usize,
) -> crate::Result<(String, Vec<Vec<f64>>)> {
    let s = model.scale_factor()?;
    let n = model.domain().dim();
    let header = (0..n)
        .map(|d| format!("x{d}"))
        .chain(["f".into(), "ground_truth".into()])
        .collect::<Vec<_>>()
        .join(",");
    let rows = grid_points(model.domain(), per_dim)
        .into_iter()
        .map(|p| {
            let f = s * model.net().integrand(&p);
            let gt = truth(&p);
            let mut row = p;
            row.push(f);
            row.push(gt);
            row
        })
        .collect();
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::quad_integral;

    fn test_domain() -> Domain<f64> {
        Domain::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap()
    }

    #[test]
    fn two_mode_spec_has_exact_volume() {
        let domain = test_domain();
        let spec = GmmSpec::two_modes(&domain, 2.0);
        assert!((spec.box_mass(&domain) - 2.0).abs() < 1e-14);
        // quadrature agrees with the analytic mass
        let q = quad_integral(&|x: &[f64]| spec.pdf(x), &domain, 1e-7).unwrap();
        assert!((q.value - 2.0).abs() < 1e-6, "quadrature {}", q.value);
    }

    #[test]
    fn pdf_peaks_at_the_modes() {
        let domain = test_domain();
        let spec = GmmSpec::two_modes(&domain, 2.0);
        let at_mode = spec.pdf(&[1.2, 1.2]);
        let off_mode = spec.pdf(&[0.0, 0.0]);
        assert!(at_mode > 4.0 * off_mode);
        // symmetric modes
        assert!((at_mode - spec.pdf(&[-1.2, -1.2])).abs() < 1e-12);
    }

    #[test]
    fn cdf_1d_matches_quadrature() {
        let spec = GmmSpec {
            means: vec![vec![-1.0], vec![1.0]],
            sigmas: vec![vec![0.4], vec![0.5]],
            weights: vec![0.5, 0.5],
        };
        for &x in &[-1.5, 0.0, 0.8] {
            let d = Domain::new(vec![-9.0], vec![x]).unwrap();
            let q = quad_integral(&|p: &[f64]| spec.pdf(p), &d, 1e-9).unwrap();
            assert!((spec.cdf_1d(x) - q.value).abs() < 1e-6);
        }
    }

    #[test]
    fn grid_points_cover_the_box() {
        let domain = Domain::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let pts = grid_points(&domain, 4);
        assert_eq!(pts.len(), 16);
        assert!(pts.iter().all(|p| domain.contains(p)));
        assert_eq!(pts[0], vec![0.125, 0.25]);
    }
}
