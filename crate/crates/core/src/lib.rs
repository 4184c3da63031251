//! Score precomputation for score-based diffusion training.
//!
//! The pipeline solves the log-density Fokker-Planck equation on the pixel
//! lattice of a single grayscale image, extracts a central-difference score,
//! embeds that score into the image through the probability-flow ODE, and
//! trains a small dense score network with a sliced score-matching loss.
//!
//! The crate is `no_std` with `alloc`; file formats, configuration and the
//! command line live in the `scorefp` companion crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod banded;
pub mod error;
pub mod fields;
pub mod fp_solver;
pub mod kde;
pub mod metrics;
pub mod score_net;
pub mod transport;

pub use error::{Error, Result};
pub use fields::{
    flatten_index, normalize_image, unflatten_index, FieldSeries, ImageField, LogDensityField,
    ScoreField, SdeSpec, TimeGrid,
};
