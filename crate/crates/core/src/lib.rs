//! Weak-value amplification of the time-development operator in neutral B
//! meson decays: exact two-state dynamics, postselected lifetimes, a
//! detector-level observable model, pseudo-experiment generation and
//! maximum-likelihood extraction of the mixing phase.

pub mod density;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod lifetime;
pub mod linalg;
pub mod params;
pub mod postselect;
pub mod pseudoexp;
pub mod quad;
pub mod sum;

#[cfg(test)]
mod testing;

pub use error::{Error, Result};
pub use params::{Complex, FlavorState, MesonParams, MixingParams, Postselection};
