//! Rashomon importance distributions.
//!
//! Variable importance is computed for every near-optimal sparse decision
//! tree on every bootstrap replicate of a dataset, and the resulting values
//! are pooled into one weighted distribution per variable. A closed-form
//! counterpart for least-squares linear models lives in [`linear`].

pub mod bits;
pub mod dataset;
pub mod dgp;
pub mod error;
pub mod importance;
pub mod linear;
pub mod rashomon;
pub mod rid;
pub mod rng;
pub mod stability;
pub mod tree;

pub use error::{Result, RidError};
pub use rng::{split_rng, Seed, SplitMix64};
