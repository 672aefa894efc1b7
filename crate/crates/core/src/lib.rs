//! Two-speaker separation conditioned on speaker inventories and on
//! first-pass estimated speech.
//!
//! The pipeline embeds the mixture and every enrolled profile, picks the two
//! best-correlated profiles, aligns them to the mixture with attention, and
//! estimates two spectral masks. Refinement iterations feed the masked
//! mixture back in place of the profiles.

pub mod cli;
pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod evaluate;
pub mod metrics;
pub mod nnet;
pub mod selection;
pub mod separation;
pub mod signal;
pub mod ssues;
pub mod train;

pub use error::{Error, Result};
