//! Link-level simulator for distributed RIS-assisted MIMO communication
//! over double-scattering fading.
//!
//! The crate wires an end-to-end learned transceiver (encoder, per-RIS
//! phase controllers, decoder) through a correlated Rician channel model
//! with finite scatterers, and evaluates symbol error rates by Monte
//! Carlo alongside an analytic pairwise-error baseline. On top of the
//! clean link it implements a universal adversarial perturbation attack
//! against the trained model and an adversarial-training defense, plus a
//! Doppler mobility model for a moving decoder.
//!
//! Modules:
//! - [`numerics`]: complex matrices, Hermitian eigen/square-root, least
//!   squares, Q-function, Bessel J0, reproducible RNG streams.
//! - [`channel`]: array responses, spatial correlation, double-scattering
//!   Rician links, topology tables, Doppler evolution, cascade assembly.
//! - [`autonet`]: tensor tape, layers, Adam, checkpoints.
//! - [`system`]: the end-to-end model, dataset generation, training.
//! - [`attack`]: universal perturbation synthesis (bisection FGM with
//!   channel-aware projection) and its first-order diagnostics.
//! - [`defense`]: adversarial training and robustness reporting.
//! - [`eval`]: experiment configs, analytic and Monte-Carlo SER, result
//!   emission, and the pipeline runner behind the CLI.

pub mod autonet;
pub mod numerics;
