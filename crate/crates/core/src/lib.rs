//! Gaussian Shading: a distribution-preserving watermark for diffusion-model
//! latents.
//!
//! A k-bit payload is tiled across a `c x h x w` latent, encrypted with a
//! ChaCha20 keystream and embedded by drawing each latent element from the
//! standard-normal cell selected by its encrypted bits. Because the encrypted
//! bits are uniform, every element is still exactly N(0, 1).
//!
//! * [`codec`]: embedding and extraction.
//! * [`stats`]: detection thresholds, tracing over a user registry, t-statistics.
//! * [`channel`]: latent-space degradation models for robustness simulation.
//! * [`gof`]: Kolmogorov-Smirnov and chi-square goodness-of-fit tests.
//! * [`sweep`], [`distcheck`]: Monte Carlo harnesses behind the CLI.

pub mod channel;
pub mod cipher;
pub mod codec;
pub mod config;
pub mod distcheck;
pub mod error;
pub mod gof;
pub mod key;
pub mod latent;
pub mod normal;
pub mod special;
pub mod stats;
pub mod sweep;

pub use channel::ChannelSpec;
pub use codec::{
    derandomize, diffuse_payload, randomize, recover_integers, reduce_payload, rejection_sample_reference,
    sample_latent, Codec, DiffusedWatermark, RandomizedStream, UniformDraw, WatermarkPayload,
};
pub use config::CapacityConfig;
pub use error::{Error, Result};
pub use key::{KeyMaterial, KeyRecord};
pub use latent::LatentTensor;
pub use stats::{DetectionPolicy, MatchReport, UserRegistry};
