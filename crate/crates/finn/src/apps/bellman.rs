//! Soft Bellman values over a continuous action space.
//!
//! With `f(s, a) = e^{beta Q(s,a)}` represented by a state-conditioned
//! monotone network (monotone in the action only — a hypernetwork
//! generates the action net's parameters from the state), the soft
//! value `V(s) = (1/beta) log int e^{beta Q(s,a)} da` is analytic: the
//! integral is an inclusion-exclusion evaluation of the generated
//! antiderivative over the action box. Positivity keeps the log
//! defined; no integral constraint is applied. As beta grows the soft
//! value approaches `max_a Q(s, a)`.
//!
//! The environment here is a one-step MDP with a known reward, so
//! quadrature of `e^{beta r}` gives an exact reference for V.

use crate::integral::{box_integral, Domain};
use crate::multidual::AdScalar;
use crate::network::{ArchSpec, HyperNetwork, Network};
use crate::oracles::quad_integral;
use crate::training::{optimise, TrainConfig, TrainHistory};
use rand::Rng;
use serde::Serialize;

/// One-step continuous-action MDP: 1-D state in [-1, 1], reward peaks
/// where the action hits a state-dependent goal.
#[derive(Debug, Clone, Copy)]
pub struct ToyMdp {
    pub action_low: f64,
    pub action_high: f64,
}

impl Default for ToyMdp {
    fn default() -> Self {
        ToyMdp {
            action_low: -1.0,
            action_high: 1.0,
        }
    }
}

impl ToyMdp {
    pub fn goal(&self, s: f64) -> f64 {
        0.5 * (std::f64::consts::PI * s).sin()
    }

    /// `r(s, a) = -(a - g(s))^2`; episodes are one step, so Q = r.
    pub fn reward(&self, s: f64, a: f64) -> f64 {
        let d = a - self.goal(s);
        -d * d
    }

    pub fn action_domain(&self) -> Domain<f64> {
        Domain::new(vec![self.action_low], vec![self.action_high]).expect("valid box")
    }
}

/// Trained soft-value representation.
pub struct SoftValueModel {
    pub hypernet: HyperNetwork<f64>,
    pub beta: f64,
    pub action_domain: Domain<f64>,
}

const LOG_FLOOR: f64 = 1e-300;

/// `(1/beta) log` of the action-box integral of the network's
/// integrand, evaluated analytically from the antiderivative.
pub fn log_integral_value(net: &Network<f64>, domain: &Domain<f64>, beta: f64) -> crate::Result<f64> {
    let integral = box_integral(net, domain);
    if integral <= LOG_FLOOR {
        return Err(crate::Error::VanishingActionIntegral(integral));
    }
    Ok(integral.ln() / beta)
}

impl SoftValueModel {
    pub fn f(&self, s: f64, a: f64) -> f64 {
        self.hypernet.apply(&[s]).integrand(&[a])
    }

    /// `Q(s, a) = (1/beta) log f(s, a)`.
    pub fn q(&self, s: f64, a: f64) -> f64 {
        self.f(s, a).max(LOG_FLOOR).ln() / self.beta
    }

    /// `V(s)` from the analytic action integral.
    pub fn value(&self, s: f64) -> crate::Result<f64> {
        log_integral_value(&self.hypernet.apply(&[s]), &self.action_domain, self.beta)
    }

    /// `max_a Q(s, a)` over a uniform action grid.
    pub fn grid_max_q(&self, s: f64, grid: usize) -> f64 {
        let net = self.hypernet.apply(&[s]);
        let (a, b) = self.action_domain.interval(0);
        (0..grid)
            .map(|i| {
                let action = a + (b - a) * (i as f64 + 0.5) / grid as f64;
                net.integrand(&[action]).max(LOG_FLOOR).ln() / self.beta
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BellmanRow {
    pub state: f64,
    pub v_model: f64,
    /// Reference: `(1/beta) log` of quadrature of the model's own f.
    pub v_quadrature: f64,
    pub max_grid_q: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BellmanReport {
    pub beta: f64,
    pub rows: Vec<BellmanRow>,
    /// Worst relative gap between the analytic V and quadrature.
    pub max_rel_gap: f64,
    /// Mean `|V - max_a Q|`: the soft-max overshoot, shrinking in beta.
    pub mean_lse_gap: f64,
    pub final_loss: f64,
}

/// Compare the analytic soft value against quadrature of the model's
/// own integrand and the grid max of Q, over a set of probe states.
pub fn evaluate(model: &SoftValueModel, states: &[f64], final_loss: f64) -> crate::Result<BellmanReport> {
    let mut rows = Vec::new();
    let mut max_rel_gap: f64 = 0.0;
    let mut lse_acc = 0.0;
    for &s in states {
        let v_model = model.value(s)?;
        let net = model.hypernet.apply(&[s]);
        let quad = quad_integral(
            &|a: &[f64]| net.integrand(a),
            &model.action_domain,
            1e-9,
        )?
        .value;
        let v_quadrature = quad.max(LOG_FLOOR).ln() / model.beta;
        let max_grid_q = model.grid_max_q(s, 256);
        max_rel_gap = max_rel_gap
            .max((v_model - v_quadrature).abs() / v_quadrature.abs().max(1e-9));
        lse_acc += (v_model - max_grid_q).abs();
        rows.push(BellmanRow {
            state: s,
            v_model,
            v_quadrature,
            max_grid_q,
        });
    }
    Ok(BellmanReport {
        beta: model.beta,
        mean_lse_gap: lse_acc / states.len() as f64,
        max_rel_gap,
        rows,
        final_loss,
    })
}

/// Fit `f(s, a) = e^{beta r(s, a)}` with the hypernetwork and report
/// the value comparisons. No integral constraint; positivity comes
/// from the generated monotone action net.
pub fn soft_bellman_demo(
    mdp: &ToyMdp,
    beta: f64,
    cond_hidden: &[usize],
    target_hidden: &[usize],
    cfg: &TrainConfig<f64>,
) -> crate::Result<(SoftValueModel, TrainHistory<f64>, BellmanReport)> {
    let target_arch = ArchSpec {
        input_dim: 1,
        hidden: target_hidden.to_vec(),
        positive: true,
    };
    let mut hypernet = HyperNetwork::init(1, cond_hidden, &target_arch, cfg.seed)?;
    let mut params = hypernet.params().to_vec();
    let frame = hypernet.clone();
    let probe_frame = hypernet.clone();
    let mdp_c = *mdp;
    let (a_lo, a_hi) = (mdp.action_low, mdp.action_high);

    let history = optimise(
        &mut params,
        cfg,
        move |tape, pvars, rng, _step| {
            let mut acc = None;
            for _ in 0..cfg.batch_size {
                let s: f64 = rng.gen_range(-1.0..1.0);
                let a: f64 = rng.gen_range(a_lo..a_hi);
                let y = (beta * mdp_c.reward(s, a)).exp();
                let generated = frame.generate(pvars, &[s], tape);
                let f = frame.target().eval_with(&generated, &[a], 1, tape).mixed();
                let r = f.chain(y - f.value(), -1.0);
                let sq = r * r;
                acc = Some(match acc {
                    Some(t) => t + sq,
                    None => sq,
                });
            }
            Ok(acc
                .expect("nonempty batch")
                .mul_real(1.0 / cfg.batch_size as f64))
        },
        |params| {
            let mut h = probe_frame.clone();
            h.params_mut().copy_from_slice(params);
            // positivity probe over a small state/action grid
            let min_f = (0..8)
                .flat_map(|i| (0..8).map(move |j| (i, j)))
                .map(|(i, j)| {
                    let s = -1.0 + 2.0 * (i as f64 + 0.5) / 8.0;
                    let a = a_lo + (a_hi - a_lo) * (j as f64 + 0.5) / 8.0;
                    h.apply(&[s]).integrand(&[a])
                })
                .fold(f64::INFINITY, f64::min);
            (0.0, min_f)
        },
    )?;
    hypernet.params_mut().copy_from_slice(&params);

    let model = SoftValueModel {
        hypernet,
        beta,
        action_domain: mdp.action_domain(),
    };
    let states: Vec<f64> = (0..9).map(|i| -1.0 + 0.25 * i as f64).collect();
    let report = evaluate(&model, &states, history.final_loss())?;
    Ok((model, history, report))
}

/// The closed-form check: constant `Q = c` over a box of volume v has
/// `V = c + (1/beta) log v`. A single positive-affine layer realises
/// `f = e^{beta c}` exactly.
pub fn constant_q_value(c: f64, beta: f64, domain: &Domain<f64>) -> crate::Result<(f64, f64)> {
    use crate::network::{LayerKind, LayerSpec};
    let layers = vec![LayerSpec {
        kind: LayerKind::MonotoneAffine,
        in_dim: 1,
        out_dim: 1,
    }];
    let net = Network::from_layers(layers, vec![(beta * c).exp(), 0.0], true)?;
    let analytic = c + domain.volume().ln() / beta;
    let computed = log_integral_value(&net, domain, beta)?;
    Ok((analytic, computed))
}
