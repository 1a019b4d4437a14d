//! Multimodal VAE with mutual supervision between two modality encoders.
//!
//! Each modality's encoder doubles as the conditional prior for the other,
//! so information is combined implicitly through the KL structure of a
//! semi-supervised bound rather than by an explicit posterior fusion. The
//! crate covers the full pipeline: probability primitives, the model
//! container, the bidirectional and pseudo-prior training bounds, dataset
//! construction with observation masking, a reproducible trainer, and the
//! evaluation suite (coherence, latent probes, Wasserstein relatedness,
//! CCA).
//!
//! See the `examples/` directory for one runnable example per capability.

pub mod data;
pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod figures;
pub mod linalg;
pub mod model;
pub mod mnist_svhn;
pub mod objective;
pub mod tape;
pub mod training;

pub use error::MemeError;
