//! First-order fitting of constrained models.
//!
//! The loss lands directly on the learned function f (the mixed
//! partial), never on the antiderivative the network actually
//! parametrises: `L = E[(y - f(x))^2]`. Gradients flow through the
//! scale factor's vertex evaluations as well, so constrained training
//! moves on the constraint manifold — the fixed-integral property
//! holds at every step by construction, not at convergence.

use crate::integral::{ConstrainedModel, Domain};
use crate::multidual::{full_mask, AdScalar};
use crate::scalar::Real;
use crate::tape::{Tape, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimiserKind<T> {
    Sgd,
    Adam { beta1: T, beta2: T, delta: T },
}

#[derive(Debug, Clone)]
pub struct TrainConfig<T> {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: T,
    pub optimiser: OptimiserKind<T>,
    pub seed: u64,
    pub log_every: usize,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_size: 128,
            learning_rate: T::of(1e-3),
            optimiser: OptimiserKind::Adam {
                beta1: T::of(0.9),
                beta2: T::of(0.999),
                delta: T::of(1e-8),
            },
            seed: 0,
            log_every: 100,
        }
    }
}

/// Training data: either a stored set or a ground-truth function with
/// a uniform sampler over its domain (fresh points every batch).
#[derive(Clone)]
pub enum Dataset<T> {
    Fixed(Vec<(Vec<T>, T)>),
    Generator {
        target: Arc<dyn Fn(&[T]) -> T + Send + Sync>,
        domain: Domain<T>,
    },
}

impl<T: Real> Dataset<T> {
    pub fn from_fn(
        target: impl Fn(&[T]) -> T + Send + Sync + 'static,
        domain: Domain<T>,
    ) -> Self {
        Dataset::Generator {
            target: Arc::new(target),
            domain,
        }
    }

    /// Draw a batch. A fixed set no larger than the batch size is used
    /// whole (full-batch training); otherwise points are drawn with
    /// replacement.
    pub fn sample_batch(&self, rng: &mut ChaCha8Rng, size: usize) -> Vec<(Vec<T>, T)> {
        match self {
            Dataset::Fixed(points) => {
                if points.len() <= size {
                    points.clone()
                } else {
                    (0..size)
                        .map(|_| points[rng.gen_range(0..points.len())].clone())
                        .collect()
                }
            }
            Dataset::Generator { target, domain } => (0..size)
                .map(|_| {
                    let x: Vec<T> = (0..domain.dim())
                        .map(|d| {
                            let (a, b) = domain.interval(d);
                            let u: f64 = rng.gen_range(0.0..1.0);
                            a + (b - a) * T::of(u)
                        })
                        .collect();
                    let y = target(&x);
                    (x, y)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LogRow<T> {
    pub step: usize,
    pub loss: T,
    pub constraint_residual: T,
    pub min_f_probe: T,
}

#[derive(Debug, Clone)]
pub struct TrainHistory<T> {
    pub rows: Vec<LogRow<T>>,
}

impl<T> Default for TrainHistory<T> {
    fn default() -> Self {
        TrainHistory { rows: Vec::new() }
    }
}

impl<T: Real> TrainHistory<T> {
    pub fn final_loss(&self) -> T {
        self.rows.last().map(|r| r.loss).expect("nonempty history")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,loss,constraint_residual,min_f_probe")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{}",
                r.step, r.loss, r.constraint_residual, r.min_f_probe
            )?;
        }
        Ok(())
    }
}

struct Optimiser<T> {
    kind: OptimiserKind<T>,
    lr: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Optimiser<T> {
    fn new(cfg: &TrainConfig<T>, dim: usize) -> Self {
        Optimiser {
            kind: cfg.optimiser,
            lr: cfg.learning_rate,
            m: vec![T::zero(); dim],
            v: vec![T::zero(); dim],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [T], grads: &[T]) {
        match self.kind {
            OptimiserKind::Sgd => {
                for (p, &g) in params.iter_mut().zip(grads) {
                    *p = *p - self.lr * g;
                }
            }
            OptimiserKind::Adam { beta1, beta2, delta } => {
                self.t += 1;
                let c1 = T::one() - beta1.powi(self.t);
                let c2 = T::one() - beta2.powi(self.t);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = beta1 * self.m[i] + (T::one() - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (T::one() - beta2) * g * g;
                    let mhat = self.m[i] / c1;
                    let vhat = self.v[i] / c2;
                    params[i] = params[i] - self.lr * mhat / (vhat.sqrt() + delta);
                }
            }
        }
    }
}

fn l2_norm<T: Real>(v: &[T]) -> f64 {
    v.iter()
        .fold(T::zero(), |acc, &x| acc + x * x)
        .sqrt()
        .to_f64()
        .unwrap_or(f64::NAN)
}

/// Generic optimisation driver: per step, record a loss on a fresh
/// tape over the current parameters, sweep gradients, update. The
/// probe callback turns (step, loss, params) into the two extra
/// history columns. Logs step 0, every `log_every`-th step (loss
/// before the update), and one final row after the last update.
pub fn optimise<T: Real>(
    params: &mut [T],
    cfg: &TrainConfig<T>,
    mut loss_fn: impl for<'t> FnMut(
        &'t Tape<T>,
        &[Var<'t, T>],
        &mut ChaCha8Rng,
        usize,
    ) -> crate::Result<Var<'t, T>>,
    mut probe: impl FnMut(&[T]) -> (T, T),
) -> crate::Result<TrainHistory<T>> {
    if cfg.batch_size == 0 {
        return Err(crate::Error::InvalidConfig("batch_size must be >= 1".into()));
    }
    let log_every = cfg.log_every.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimiser::new(cfg, params.len());
    let mut history = TrainHistory::default();
    let mut tape = Tape::new();
    let mut grads = vec![T::zero(); params.len()];

    for step in 0..=cfg.steps {
        tape.clear();
        let pvars: Vec<Var<'_, T>> = params.iter().map(|&p| tape.leaf(p)).collect();
        let loss = loss_fn(&tape, &pvars, &mut rng, step)?;
        let loss_val = loss.value();
        if !loss_val.is_finite() {
            return Err(crate::Error::NonFiniteLoss {
                step,
                param_norm: l2_norm(params),
            });
        }
        let last = step == cfg.steps;
        if step % log_every == 0 || last {
            let (constraint_residual, min_f_probe) = probe(params);
            history.rows.push(LogRow {
                step,
                loss: loss_val,
                constraint_residual,
                min_f_probe,
            });
        }
        if last {
            break;
        }
        let adj = tape.backward(loss);
        for (g, v) in grads.iter_mut().zip(&pvars) {
            *g = adj.wrt(*v);
        }
        opt.step(params, &grads);
    }
    Ok(history)
}

/// Record the mean-squared error of the constrained integrand against
/// a batch on the given tape. Gradients of the result cover the
/// scale-factor path.
pub fn mse_on_tape<'t, T: Real>(
    model: &ConstrainedModel<T>,
    params: &[Var<'t, T>],
    tape: &'t Tape<T>,
    batch: &[(Vec<T>, T)],
) -> crate::Result<Var<'t, T>> {
    if batch.is_empty() {
        return Err(crate::Error::EmptyBatch);
    }
    let scale = model.scale_with(params, tape)?;
    let full = full_mask(model.net().input_dim());
    let mut acc: Option<Var<'t, T>> = None;
    for (x, y) in batch {
        let f = model.net().eval_with(params, x, full, tape).mixed();
        let f = match scale {
            Some(s) => s * f,
            None => f,
        };
        // residual (y - f) as a unary of f
        let r = f.chain(*y - f.value(), -T::one());
        let sq = r * r;
        acc = Some(match acc {
            Some(a) => a + sq,
            None => sq,
        });
    }
    Ok(acc
        .expect("nonempty batch")
        .mul_real(T::one() / T::of(batch.len() as f64)))
}

/// Mean-squared error of the model's integrand on a batch, with exact
/// parameter gradients (averaged over the batch, including the
/// scale-factor path).
pub fn mse_loss<T: Real>(
    model: &ConstrainedModel<T>,
    batch: &[(Vec<T>, T)],
) -> crate::Result<(T, Vec<T>)> {
    let tape = Tape::new();
    let pvars: Vec<_> = model.net().params().iter().map(|&p| tape.leaf(p)).collect();
    let loss = mse_on_tape(model, &pvars, &tape, batch)?;
    let adj = tape.backward(loss);
    Ok((
        loss.value(),
        pvars.iter().map(|&v| adj.wrt(v)).collect(),
    ))
}

/// Fit a constrained model to data by MSE on f. Deterministic for a
/// given (seed, config, data). History rows carry the constraint
/// residual and the minimum of f over a fixed probe set at every
/// logged step.
pub fn train<T: Real>(
    model: &mut ConstrainedModel<T>,
    data: &Dataset<T>,
    cfg: &TrainConfig<T>,
) -> crate::Result<TrainHistory<T>> {
    let frame = model.clone();
    let mut params = model.net().params().to_vec();
    let probe_points = probe_grid(frame.domain(), 64);

    let history = optimise(
        &mut params,
        cfg,
        |tape, pvars, rng, _step| {
            let batch = data.sample_batch(rng, cfg.batch_size);
            mse_on_tape(&frame, pvars, tape, &batch)
        },
        |params| {
            let mut m = frame.clone();
            m.net_mut().set_params(params).expect("same architecture");
            let residual = m.constraint_residual().expect("scale checked by loss");
            let s = m.scale_factor().expect("scale checked by loss");
            let min_f = probe_points
                .iter()
                .map(|x| s * m.net().integrand(x))
                .fold(T::infinity(), T::min);
            (residual, min_f)
        },
    )?;
    model.net_mut().set_params(&params)?;
    Ok(history)
}

/// Fixed low-discrepancy probe points inside a box.
pub fn probe_grid<T: Real>(domain: &Domain<T>, count: usize) -> Vec<Vec<T>> {
    const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    (0..count)
        .map(|i| {
            (0..domain.dim())
                .map(|d| {
                    let (a, b) = domain.interval(d);
                    a + (b - a) * crate::oracles::halton::<T>(i + 1, PRIMES[d % PRIMES.len()])
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integral::{Constraint, ConstraintKind};
    use crate::network::{ArchSpec, LayerKind, LayerSpec, Network};

    fn bump_model() -> ConstrainedModel<f64> {
        let net = Network::init(
            &ArchSpec {
                input_dim: 1,
                hidden: vec![8],
                positive: true,
            },
            1,
        )
        .unwrap();
        let domain = Domain::new(vec![-2.0], vec![2.0]).unwrap();
        ConstrainedModel::new(net, Constraint::none(domain)).unwrap()
    }

    fn bump_target() -> Dataset<f64> {
        let domain = Domain::new(vec![-2.0], vec![2.0]).unwrap();
        Dataset::from_fn(|x: &[f64]| 0.8 * (-x[0] * x[0]).exp(), domain)
    }

    #[test]
    fn empty_batch_is_an_error() {
        let model = bump_model();
        assert!(matches!(
            mse_loss(&model, &[]),
            Err(crate::Error::EmptyBatch)
        ));
    }

    #[test]
    fn zero_residual_means_zero_loss_and_gradient() {
        let model = bump_model();
        let batch: Vec<(Vec<f64>, f64)> = (0..10)
            .map(|i| {
                let x = vec![-1.8 + 0.4 * i as f64];
                let y = model.integrand(&x).unwrap();
                (x, y)
            })
            .collect();
        let (loss, grads) = mse_loss(&model, &batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn flat_zero_model_against_constant_target() {
        // f == 0 (zero weights), y = 2 => loss = 4
        let layers = vec![LayerSpec {
            kind: LayerKind::MonotoneAffine,
            in_dim: 1,
            out_dim: 1,
        }];
        let net = Network::from_layers(layers, vec![0.0, 0.7], true).unwrap();
        let domain = Domain::new(vec![0.0], vec![1.0]).unwrap();
        let model = ConstrainedModel::new(net, Constraint::none(domain)).unwrap();
        let (loss, _) = mse_loss(&model, &[(vec![0.5], 2.0)]).unwrap();
        assert_eq!(loss, 4.0);
    }

    #[test]
    fn loss_gradient_matches_fd() {
        let net = Network::init(
            &ArchSpec {
                input_dim: 2,
                hidden: vec![5],
                positive: true,
            },
            3,
        )
        .unwrap();
        let domain = Domain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let model = ConstrainedModel::new(net, Constraint::equality(1.5, domain)).unwrap();
        let batch = vec![
            (vec![0.3, -0.4], 0.2),
            (vec![-0.7, 0.9], 0.1),
            (vec![0.1, 0.2], 0.5),
        ];
        let (_, grads) = mse_loss(&model, &batch).unwrap();

        let eval = |m: &ConstrainedModel<f64>| -> f64 {
            batch
                .iter()
                .map(|(x, y)| {
                    let r = y - m.integrand(x).unwrap();
                    r * r
                })
                .sum::<f64>()
                / batch.len() as f64
        };
        for i in 0..grads.len() {
            let mut plus = model.clone();
            plus.net_mut().params_mut()[i] += 1e-6;
            let mut minus = model.clone();
            minus.net_mut().params_mut()[i] -= 1e-6;
            let fd = (eval(&plus) - eval(&minus)) / 2e-6;
            assert!(
                (grads[i] - fd).abs() <= 1e-4 * fd.abs().max(1e-3),
                "param {i}: {} vs {fd}",
                grads[i]
            );
        }
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut model = bump_model();
        let before = model.net().params().to_vec();
        let cfg = TrainConfig {
            steps: 20,
            batch_size: 16,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        train(&mut model, &bump_target(), &cfg).unwrap();
        assert_eq!(model.net().params(), &before[..]);
    }

    #[test]
    fn descent_on_a_bump() {
        let mut model = bump_model();
        let cfg = TrainConfig {
            steps: 2000,
            batch_size: 64,
            learning_rate: 5e-3,
            ..TrainConfig::default()
        };
        let history = train(&mut model, &bump_target(), &cfg).unwrap();
        let first = history.rows.first().unwrap().loss;
        let last = history.final_loss();
        assert!(
            last < 0.2 * first,
            "no descent: {first} -> {last}"
        );
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut model = bump_model();
            let cfg = TrainConfig {
                steps: 50,
                batch_size: 8,
                ..TrainConfig::default()
            };
            let h = train(&mut model, &bump_target(), &cfg).unwrap();
            (
                h.rows.iter().map(|r| r.loss.to_bits()).collect::<Vec<_>>(),
                model.net().params().to_vec(),
            )
        };
        let (h1, p1) = run();
        let (h2, p2) = run();
        assert_eq!(h1, h2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn constraint_and_positivity_hold_at_every_logged_step() {
        let net = Network::init(
            &ArchSpec {
                input_dim: 1,
                hidden: vec![8],
                positive: true,
            },
            5,
        )
        .unwrap();
        let domain = Domain::new(vec![-2.0], vec![2.0]).unwrap();
        let mut model =
            ConstrainedModel::new(net, Constraint::equality(1.0, domain)).unwrap();
        let cfg = TrainConfig {
            steps: 400,
            batch_size: 32,
            learning_rate: 1e-2,
            log_every: 1,
            ..TrainConfig::default()
        };
        let history = train(&mut model, &bump_target(), &cfg).unwrap();
        assert_eq!(history.rows.len(), 401);
        for row in &history.rows {
            assert!(row.constraint_residual <= 1e-9, "step {}", row.step);
            assert!(row.min_f_probe >= -1e-12, "step {}", row.step);
        }
    }

    #[test]
    fn inequality_respected_during_training() {
        let net = Network::init(
            &ArchSpec {
                input_dim: 1,
                hidden: vec![6],
                positive: true,
            },
            9,
        )
        .unwrap();
        let domain = Domain::new(vec![-2.0], vec![2.0]).unwrap();
        let mut model =
            ConstrainedModel::new(net, Constraint::inequality(0.5, domain)).unwrap();
        let cfg = TrainConfig {
            steps: 200,
            batch_size: 32,
            learning_rate: 1e-2,
            log_every: 10,
            ..TrainConfig::default()
        };
        let history = train(&mut model, &bump_target(), &cfg).unwrap();
        for row in &history.rows {
            assert!(row.constraint_residual <= 1e-9 * 0.5);
        }
        assert!(model.constrained_integral().unwrap() <= 0.5 * (1.0 + 1e-9));
    }

    #[test]
    fn csv_has_the_documented_columns() {
        let history = TrainHistory {
            rows: vec![LogRow {
                step: 0,
                loss: 0.5,
                constraint_residual: 1e-12,
                min_f_probe: 0.25,
            }],
        };
        let mut out = Vec::new();
        history.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,loss,constraint_residual,min_f_probe"
        );
        assert_eq!(lines.next().unwrap(), "0,0.5,0.000000000001,0.25");
    }

    #[test]
    fn fixed_dataset_smaller_than_batch_is_used_whole() {
        let points = vec![(vec![0.1], 1.0), (vec![0.2], 2.0)];
        let data = Dataset::Fixed(points.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = data.sample_batch(&mut rng, 10);
        assert_eq!(batch.len(), 2);
        assert_eq!(batch, points);
    }

    #[test]
    fn non_finite_loss_aborts_with_diagnostics() {
        let mut params = vec![2.0f64];
        let cfg = TrainConfig {
            steps: 10,
            ..TrainConfig::default()
        };
        let r = optimise(
            &mut params,
            &cfg,
            |tape, pvars, _rng, step| {
                // inject a NaN loss partway through the run
                Ok(if step < 3 {
                    pvars[0] * pvars[0]
                } else {
                    tape.leaf(f64::NAN)
                })
            },
            |_| (0.0, 0.0),
        );
        match r {
            Err(crate::Error::NonFiniteLoss { step, param_norm }) => {
                assert_eq!(step, 3);
                assert!(param_norm.is_finite());
            }
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }

    #[test]
    fn residual_is_kind_aware() {
        let net = Network::init(
            &ArchSpec {
                input_dim: 1,
                hidden: vec![4],
                positive: true,
            },
            2,
        )
        .unwrap();
        let domain = Domain::new(vec![0.0], vec![1.0]).unwrap();
        let m = ConstrainedModel::new(net, Constraint::none(domain)).unwrap();
        assert_eq!(m.constraint().kind, ConstraintKind::None);
        assert_eq!(m.constraint_residual().unwrap(), 0.0);
    }
}
