//! Numerical core for hierarchical text-embedding experiments on a toy
//! language-grounded detector.
//!
//! Everything here is `no_std` + `alloc`: the reverse-mode engine in
//! [`diff`], the exterior-angle objectives in [`geometry`], the
//! three-component disentangler in [`disentangle`], the rule-based caption
//! generator in [`synth`], the detector losses and AP evaluation in
//! [`grounder`], and the training loop in [`train`]. File formats, the CLI and
//! anything touching the filesystem live in the `hierground` crate.

#![no_std]

extern crate alloc;

pub mod bbox;
pub mod diff;
pub mod disentangle;
pub mod error;
pub mod geometry;
pub mod params;
pub mod gradsuite;
pub mod grounder;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
