//! Latent-strategy spatial choice modeling for on-the-way retail.
//!
//! Consumers buying convenience goods en route to a destination trade off an
//! outlet's direct distance against the detour it forces, the local
//! competition and agglomeration around it, and its quality. This crate
//! implements a latent two-strategy random-utility model of that choice,
//! together with everything needed to exercise it end to end:
//!
//! - [`spatial`]: trip-geometry features (detour fraction, awareness point,
//!   local competition, agglomeration index) and a Moran's-I diagnostic;
//! - [`choice`]: strategy and outlet choice probabilities;
//! - [`estimation`]: maximum-likelihood fitting of the latent model and its
//!   benchmark family (single strategy, gravity, extended gravity, mixed
//!   logit), with analytic gradients, multistart BFGS and standard errors;
//! - [`analysis`]: strategy-engagement tables, segmentation F-tests and
//!   between-outlet substitutability matrices;
//! - [`scenario`]: duopolistic grid-city simulation and equilibrium search;
//! - [`io`]: tab-delimited market/trip/coefficient files and synthetic-data
//!   generation.
//!
//! The `examples/` directory holds one runnable example per capability; the
//! thin `onway` binary exposes the same operations as subcommands.

pub mod analysis;
pub mod choice;
pub mod cli;
pub mod demo;
pub mod error;
pub mod estimation;
pub mod io;
pub mod scenario;
pub mod spatial;

pub use error::{Error, Result};
