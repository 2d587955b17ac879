//! Numerical core of the synthetic-to-real transfer laboratory.
//!
//! Everything in this crate is a pure function of explicit inputs and seeds:
//! the procedural paired-dataset generator, the residual student network with
//! its ordered transfer-unit partition, the SGD trainer and the log-x curve
//! fit. File formats, run registries and the command line live in the
//! `synthgap` crate.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature; `std` only enables runtime SIMD detection in the GEMM backend.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analysis;
pub mod data;
pub mod error;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
