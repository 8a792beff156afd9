//! Direction-of-arrival estimation for single-RF-chain phased arrays via
//! agile beam switching.
//!
//! A receiver that exposes only the combined array output cannot run
//! element-domain methods like MUSIC. Instead, it rapidly cycles its analog
//! beam across `B` steering angles while one block of samples arrives; the
//! per-beam received powers form a length-`B` power profile whose shape
//! encodes the source angle. This crate simulates that acquisition chain and
//! provides two estimators operating on the profile:
//!
//! - a correlation baseline matching the profile against theoretical beam
//!   patterns by cosine similarity ([`correlation`]), and
//! - a gated-MLP regressor trained on a calibration scan expanded with
//!   Rician multipath augmentation ([`mlp`], [`train`], [`augment`]).
//!
//! The [`train`] module reproduces error-vs-beams-vs-SNR comparison tables
//! between the two, and [`cli`] wires everything to files and a small
//! command-line tool. Every randomized stage takes an explicit seed, and
//! repeated runs produce byte-identical artifacts.
//!
//! See the crate `examples/` directory for one runnable walkthrough per
//! capability: beam patterns, calibration scans, augmentation, correlation
//! estimation, and training/evaluation.

pub mod array;
pub mod augment;
pub mod cli;
pub mod config;
pub mod correlation;
pub mod error;
pub mod matrix;
pub mod mlp;
pub mod seeding;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
