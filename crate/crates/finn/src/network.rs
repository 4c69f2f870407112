//! MLPs whose output is read as an antiderivative.
//!
//! A [`Network`] is a scalar-output MLP `F(x)`; the learned function
//! is its full mixed partial `f = d^n F / dx_1 .. dx_n`, obtained by
//! running the same forward pass in [`MultiDual`] arithmetic. The
//! monotone variant takes the absolute value of every weight (never
//! the bias) and activates with `sigma_n = I_{n-1}`, which makes every
//! mixed partial of every order nonnegative; the plain variant (tanh
//! hidden units) represents signed integrands.
//!
//! The forward pass is generic over [`AdScalar`], so the exact same
//! code yields plain values, mixed partials, and tape-recorded values
//! whose parameter gradients come from one reverse sweep.

use crate::activation::{tanh_derivs, IterErfTable};
use crate::multidual::{full_mask, AdScalar, Mask, MultiDual, MAX_VARS};
use crate::scalar::Real;
use crate::tape::Tape;
use arrayvec::ArrayVec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// `sigma_n(|W| x + b)` — all derivative orders nonnegative.
    MonotoneSigma,
    /// `|W| x + b` — positive-weighted affine, used as output layer.
    MonotoneAffine,
    /// `tanh(W x + b)` — unconstrained hidden layer.
    PlainTanh,
    /// `W x + b` — unconstrained output layer.
    PlainAffine,
}

impl LayerKind {
    pub fn is_monotone(self) -> bool {
        matches!(self, LayerKind::MonotoneSigma | LayerKind::MonotoneAffine)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// Shorthand description of the standard architecture: hidden layers
/// of the given widths, scalar output layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub positive: bool,
}

impl ArchSpec {
    pub fn layers(&self) -> Vec<LayerSpec> {
        let (hidden_kind, out_kind) = if self.positive {
            (LayerKind::MonotoneSigma, LayerKind::MonotoneAffine)
        } else {
            (LayerKind::PlainTanh, LayerKind::PlainAffine)
        };
        let mut dims = vec![self.input_dim];
        dims.extend_from_slice(&self.hidden);
        dims.push(1);
        (0..dims.len() - 1)
            .map(|i| LayerSpec {
                kind: if i + 2 == dims.len() { out_kind } else { hidden_kind },
                in_dim: dims[i],
                out_dim: dims[i + 1],
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    weights: usize,
    biases: usize,
}

/// Scalar-output MLP storing raw (signed) parameters; monotone layers
/// apply `|.|` on every forward pass so optimisation stays
/// unconstrained.
#[derive(Debug, Clone)]
pub struct Network<T> {
    layers: Vec<LayerSpec>,
    params: Vec<T>,
    offsets: Vec<LayerOffsets>,
    input_dim: usize,
    positive: bool,
    table: Arc<IterErfTable<T>>,
}

impl<T: Real> Network<T> {
    /// Deterministic initialisation: all parameters uniform in
    /// `[-r, r]` with `r = 1/sqrt(in_dim)` per layer.
    pub fn init(arch: &ArchSpec, seed: u64) -> crate::Result<Self> {
        let layers = arch.layers();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for layer in &layers {
            let r = 1.0 / (layer.in_dim as f64).sqrt();
            for _ in 0..layer.in_dim * layer.out_dim + layer.out_dim {
                params.push(T::of(rng.gen_range(-r..r)));
            }
        }
        Self::from_layers(layers, params, arch.positive)
    }

    /// Assemble from an explicit layer chain and flat parameters
    /// (per layer: row-major weights, then biases).
    pub fn from_layers(
        layers: Vec<LayerSpec>,
        params: Vec<T>,
        positive: bool,
    ) -> crate::Result<Self> {
        if layers.is_empty() {
            return Err(crate::Error::InvalidConfig("no layers".into()));
        }
        let input_dim = layers[0].in_dim;
        if input_dim == 0 || input_dim > MAX_VARS {
            return Err(crate::Error::TooManyVariables(input_dim));
        }
        let mut expected = layers[0].in_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim != expected || layer.out_dim == 0 {
                return Err(crate::Error::LayerChainMismatch {
                    index: i,
                    expected,
                    got: layer.in_dim,
                });
            }
            if positive && !layer.kind.is_monotone() {
                return Err(crate::Error::InvalidConfig(format!(
                    "layer {i}: positivity requires monotone layers"
                )));
            }
            expected = layer.out_dim;
        }
        if expected != 1 {
            return Err(crate::Error::NonScalarOutput(expected));
        }
        let mut offsets = Vec::with_capacity(layers.len());
        let mut at = 0;
        for layer in &layers {
            offsets.push(LayerOffsets {
                weights: at,
                biases: at + layer.in_dim * layer.out_dim,
            });
            at += layer.in_dim * layer.out_dim + layer.out_dim;
        }
        if params.len() != at {
            return Err(crate::Error::ParamCountMismatch {
                expected: at,
                got: params.len(),
            });
        }
        let table = Arc::new(IterErfTable::build(input_dim.saturating_sub(1)));
        Ok(Network {
            layers,
            params,
            offsets,
            input_dim,
            positive,
            table,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn is_positive(&self) -> bool {
        self.positive
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[T]) -> crate::Result<()> {
        if params.len() != self.params.len() {
            return Err(crate::Error::ParamCountMismatch {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Activation order n and its derivative table (`sigma_n` with
    /// n = input dimension, at every monotone layer).
    pub fn activation_table(&self) -> &IterErfTable<T> {
        &self.table
    }

    /// Run the forward pass in multidual arithmetic over the input
    /// dims in `tracked`, with externally supplied parameter scalars.
    /// The output's coefficient at the full (compacted) mask is the
    /// mixed partial of F over exactly the tracked dims.
    ///
    /// # Panics
    ///
    /// Panics on input/parameter shape mismatches.
    pub fn eval_with<S: AdScalar<Real = T>>(
        &self,
        params: &[S],
        x: &[T],
        tracked: Mask,
        ctx: S::Ctx,
    ) -> MultiDual<S> {
        assert_eq!(x.len(), self.input_dim, "input dimension mismatch");
        assert_eq!(params.len(), self.params.len(), "parameter count mismatch");
        assert!(
            tracked < (1 << self.input_dim),
            "tracked subset outside input dims"
        );
        let nvars = tracked.count_ones() as usize;
        let ncoeff = 1usize << nvars;

        // compacted variable index per input dim
        let mut var_of = [usize::MAX; MAX_VARS];
        let mut v = 0;
        for (i, slot) in var_of.iter_mut().enumerate().take(self.input_dim) {
            if tracked & (1 << i) != 0 {
                *slot = v;
                v += 1;
            }
        }

        let mut act_buf: Vec<S> = Vec::with_capacity(nvars + 2);
        let mut values: Vec<MultiDual<S>> = Vec::new();
        let mut next: Vec<MultiDual<S>> = Vec::new();

        for (l, layer) in self.layers.iter().enumerate() {
            let off = self.offsets[l];
            next.clear();
            for j in 0..layer.out_dim {
                let mut pre: Option<MultiDual<S>> = None;
                if l == 0 {
                    // inputs are seeded constants: the pre-activation has
                    // value sum |w| x + b, singleton coefficients |w|,
                    // and no higher mixed terms
                    let mut c0 = params[off.biases + j];
                    let mut singles: ArrayVec<S, MAX_VARS> = ArrayVec::new();
                    for i in 0..layer.in_dim {
                        let w = params[off.weights + j * layer.in_dim + i];
                        let w_eff = if layer.kind.is_monotone() { w.abs_subgrad() } else { w };
                        c0 = c0 + w_eff.chain(w_eff.value() * x[i], x[i]);
                        if var_of[i] != usize::MAX {
                            singles.push(w_eff);
                        }
                    }
                    let mut coeffs: ArrayVec<S, { crate::multidual::MAX_COEFFS }> =
                        ArrayVec::new();
                    coeffs.push(c0);
                    for mask in 1..ncoeff {
                        if mask.is_power_of_two() {
                            coeffs.push(singles[mask.trailing_zeros() as usize]);
                        } else {
                            coeffs.push(c0.zero_like());
                        }
                    }
                    pre = Some(MultiDual::from_coeffs(&coeffs));
                } else {
                    for (i, input) in values.iter().enumerate() {
                        let w = params[off.weights + j * layer.in_dim + i];
                        let w_eff = if layer.kind.is_monotone() { w.abs_subgrad() } else { w };
                        let term = input.scale(w_eff);
                        pre = Some(match pre {
                            Some(acc) => acc + term,
                            None => term,
                        });
                    }
                    pre = pre.map(|acc| acc.add_scalar(params[off.biases + j]));
                }
                let pre = pre.expect("layer has inputs");
                next.push(self.activate(layer.kind, pre, nvars, ctx, &mut act_buf));
            }
            std::mem::swap(&mut values, &mut next);
        }
        values.pop().expect("scalar output")
    }

    fn activate<S: AdScalar<Real = T>>(
        &self,
        kind: LayerKind,
        pre: MultiDual<S>,
        nvars: usize,
        _ctx: S::Ctx,
        buf: &mut Vec<S>,
    ) -> MultiDual<S> {
        let ladder: Vec<T> = match kind {
            LayerKind::MonotoneAffine | LayerKind::PlainAffine => return pre,
            LayerKind::MonotoneSigma => {
                let z = pre.value();
                let n = self.input_dim as isize;
                // one order beyond the tracked count: the chain rule on
                // the tape needs the derivative of each ladder entry
                (0..=(nvars + 1) as isize)
                    .map(|k| self.table.eval(n - 1 - k, z))
                    .collect()
            }
            LayerKind::PlainTanh => tanh_derivs(pre.value(), nvars + 1),
        };
        let anchor = pre.extract(0);
        buf.clear();
        for k in 0..=nvars {
            buf.push(anchor.chain(ladder[k], ladder[k + 1]));
        }
        pre.apply_unary(buf)
    }

    /// `F(x)`: plain forward value.
    pub fn antiderivative(&self, x: &[T]) -> T {
        self.eval_with::<T>(&self.params, x, 0, ()).value()
    }

    /// `f(x)`: the mixed partial of F over every input dim.
    pub fn integrand(&self, x: &[T]) -> T {
        self.eval_with::<T>(&self.params, x, full_mask(self.input_dim), ())
            .mixed()
    }

    /// Mixed partial of F over exactly the dims in `subset`
    /// (empty set gives F itself, the full set gives `integrand`).
    pub fn partial(&self, x: &[T], subset: Mask) -> T {
        self.eval_with::<T>(&self.params, x, subset, ()).mixed()
    }

    /// Value and exact parameter gradient of the mixed partial over
    /// `subset`, via one tape recording and reverse sweep. Gradients
    /// flow through the `|.|` weight transform with subgradient +1
    /// at zero.
    pub fn value_and_grad(&self, x: &[T], subset: Mask) -> (T, Vec<T>) {
        let tape = Tape::new();
        let pvars: Vec<_> = self.params.iter().map(|&p| tape.leaf(p)).collect();
        let out = self.eval_with(&pvars, x, subset, &tape).mixed();
        let adj = tape.backward(out);
        (out.value(), pvars.iter().map(|&v| adj.wrt(v)).collect())
    }
}

/// State-conditioned generator for monotone networks: a plain MLP maps
/// a state to the full parameter vector of the target architecture.
/// The generated parameters pass through the target's own `|W|`
/// transform, so the generated integrand stays nonnegative in the
/// target inputs for every state.
#[derive(Debug, Clone)]
pub struct HyperNetwork<T> {
    state_dim: usize,
    cond_layers: Vec<LayerSpec>,
    cond_offsets: Vec<LayerOffsets>,
    cond_params: Vec<T>,
    target: Network<T>,
}

impl<T: Real> HyperNetwork<T> {
    pub fn init(
        state_dim: usize,
        cond_hidden: &[usize],
        target_arch: &ArchSpec,
        seed: u64,
    ) -> crate::Result<Self> {
        if !target_arch.positive {
            return Err(crate::Error::InvalidConfig(
                "hypernetwork target must be a monotone architecture".into(),
            ));
        }
        if state_dim == 0 {
            return Err(crate::Error::InvalidConfig("state dim must be positive".into()));
        }
        let target = Network::init(target_arch, seed ^ 0x5eed)?;
        let mut dims = vec![state_dim];
        dims.extend_from_slice(cond_hidden);
        dims.push(target.param_count());
        let mut cond_layers = Vec::new();
        for i in 0..dims.len() - 1 {
            cond_layers.push(LayerSpec {
                kind: if i + 2 == dims.len() {
                    LayerKind::PlainAffine
                } else {
                    LayerKind::PlainTanh
                },
                in_dim: dims[i],
                out_dim: dims[i + 1],
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cond_params = Vec::new();
        let mut cond_offsets = Vec::new();
        let mut at = 0;
        for (i, layer) in cond_layers.iter().enumerate() {
            let r = 1.0 / (layer.in_dim as f64).sqrt();
            // output layer starts near zero so generated networks begin
            // close to uniform over states
            let scale = if i + 1 == cond_layers.len() { 0.01 } else { 1.0 };
            cond_offsets.push(LayerOffsets {
                weights: at,
                biases: at + layer.in_dim * layer.out_dim,
            });
            for _ in 0..layer.in_dim * layer.out_dim + layer.out_dim {
                cond_params.push(T::of(scale * rng.gen_range(-r..r)));
            }
            at += layer.in_dim * layer.out_dim + layer.out_dim;
        }
        Ok(HyperNetwork {
            state_dim,
            cond_layers,
            cond_offsets,
            cond_params,
            target,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn param_count(&self) -> usize {
        self.cond_params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.cond_params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.cond_params
    }

    /// The target architecture the generator fills in (placeholder
    /// parameters; evaluate through [`Network::eval_with`] with
    /// generated ones).
    pub fn target(&self) -> &Network<T> {
        &self.target
    }

    /// Run the conditioning MLP on `state`, producing the target's
    /// flat parameter vector as scalars of the same kind as
    /// `cond_params` (plain or tape-recorded).
    pub fn generate<S: AdScalar<Real = T>>(
        &self,
        cond_params: &[S],
        state: &[T],
        ctx: S::Ctx,
    ) -> Vec<S> {
        assert_eq!(state.len(), self.state_dim, "state dimension mismatch");
        assert_eq!(cond_params.len(), self.cond_params.len());
        let mut values: Vec<S> = state
            .iter()
            .map(|&s| S::constant(ctx, s))
            .collect();
        let mut next = Vec::new();
        for (l, layer) in self.cond_layers.iter().enumerate() {
            let off = self.cond_offsets[l];
            next.clear();
            for j in 0..layer.out_dim {
                let mut acc = cond_params[off.biases + j];
                for (i, &input) in values.iter().enumerate() {
                    acc = acc + cond_params[off.weights + j * layer.in_dim + i] * input;
                }
                if layer.kind == LayerKind::PlainTanh {
                    let d = tanh_derivs(acc.value(), 1);
                    acc = acc.chain(d[0], d[1]);
                }
                next.push(acc);
            }
            std::mem::swap(&mut values, &mut next);
        }
        values
    }

    /// Materialise the generated network for a state.
    pub fn apply(&self, state: &[T]) -> Network<T> {
        let params = self.generate::<T>(&self.cond_params, state, ());
        let mut net = self.target.clone();
        net.set_params(&params).expect("generator output length");
        net
    }
}
