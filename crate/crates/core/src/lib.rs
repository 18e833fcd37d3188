//! Generative channel estimation with layered hallucination mitigation.
//!
//! The pipeline runs from an imbalanced synthetic channel dataset, through
//! GAN rebalancing and attention-enhanced conditional diffusion experts, to
//! gated expert selection, post-generation validation and NMSE evaluation.

pub mod channel;
pub mod diffusion;
pub mod eval;
pub mod gan;
pub mod moe;
pub mod nn;
pub mod rng;
pub mod validate;
