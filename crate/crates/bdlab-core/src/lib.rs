//! Imperceptible sample-specific backdoor attack pipeline.
//!
//! The crate covers the full attack and evaluation loop: visible feature
//! injection, denoising-autoencoder trigger generation, dataset poisoning
//! with an auditable manifest, victim training, attack metrics (ASR/CDA,
//! stealth, exclusivity, transferability) and four defense harnesses
//! (fine-pruning, trigger reverse-engineering, perturbation entropy,
//! saliency overlap).
//!
//! All numeric code is generic over the [`Scalar`] element type; the
//! concrete aliases below fix the shipped pipeline to `f32`.

pub mod dae;
pub mod dataset;
pub mod error;
pub mod image;
pub mod inject;
pub mod metrics;
pub mod nn;
pub mod poison;
pub mod scalar;
pub mod synth;
pub mod victim;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Element type used by the shipped pipeline and CLI.
pub type Real = f32;

/// Stealth triple at the default element type.
pub type StealthScore = metrics::StealthScore<Real>;
