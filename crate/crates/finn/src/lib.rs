//! Networks that parametrise their own antiderivative.
//!
//! Instead of learning a function f directly, a [`network::Network`]
//! parametrises the n-fold indefinite integral F and recovers
//! `f = d^n F / dx_1 .. dx_n` by exact mixed-partial differentiation
//! ([`multidual`]). That makes definite integrals of f analytic (a
//! signed sum over box vertices, [`integral`]), lets integral
//! equality/inequality constraints hold exactly at every training step
//! (rescaling, [`integral::ConstrainedModel`]), and supports a
//! positivity-preserving architecture (absolute-value weights plus the
//! iterated-erf activation family, [`activation`]).
//!
//! Core math is generic over the float width via [`scalar::Real`];
//! concrete `f64`/`f32` aliases live at the crate root. The demo
//! applications and their file formats sit in [`apps`].

// `Real::erf` may collide with a future std method of the same name
#![allow(unstable_name_collisions)]

pub mod activation;
pub mod apps;
pub mod error;
pub mod integral;
pub mod multidual;
pub mod network;
pub mod oracles;
pub mod scalar;
pub mod tape;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Real;

pub type MultiDual64 = multidual::MultiDual<f64>;
pub type MultiDual32 = multidual::MultiDual<f32>;
pub type Network64 = network::Network<f64>;
pub type Network32 = network::Network<f32>;
pub type HyperNetwork64 = network::HyperNetwork<f64>;
pub type Domain64 = integral::Domain<f64>;
pub type Domain32 = integral::Domain<f32>;
pub type ConstrainedModel64 = integral::ConstrainedModel<f64>;
pub type ConstrainedModel32 = integral::ConstrainedModel<f32>;
pub type IterErfTable64 = activation::IterErfTable<f64>;
pub type IterErfTable32 = activation::IterErfTable<f32>;
pub type TrainConfig64 = training::TrainConfig<f64>;
