//! Zero-shot object recognition over a two-level class hierarchy.
//!
//! Images are described by pyramid histograms of oriented gradients
//! ([`phog`]), quantized into visual words by a random-forest codebook whose
//! splits can exploit both coarse and fine labels ([`forest`]), and
//! summarized as topic mixtures by probabilistic latent semantic analysis
//! ([`plsa`]). Each seen class gets a signature set of topics; an unseen
//! class inherits the union of the sets of two seen siblings
//! ([`zeroshot`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod forest;
pub mod phog;
pub mod plsa;
pub mod seeds;
pub mod zeroshot;

pub use error::{Error, Result};
pub use zeroshot::taxonomy;
