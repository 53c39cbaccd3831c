//! Parallel decoding for block-wise masked diffusion language models.
//!
//! - [`aup`] scores speed/accuracy curves.
//! - [`sequence`] holds tokens, trajectories and distillation records.
//! - [`denoiser`] defines the model interface and several implementations.
//! - [`engine`] runs multi-block decoding with cache bookkeeping.
//! - [`harness`] runs corpora, sweeps, ablations and pipelines.

pub mod aup;
pub mod denoiser;
pub mod engine;
pub mod harness;
pub mod seed;
pub mod sequence;

// Compiles and runs the guide's code blocks as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/aup.md")]
    mod aup {}
    #[doc = include_str!("../../../book/src/distillation.md")]
    mod distillation {}
    #[doc = include_str!("../../../book/src/decoding.md")]
    mod decoding {}
    #[doc = include_str!("../../../book/src/denoisers.md")]
    mod denoisers {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
