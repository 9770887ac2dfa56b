//! Touch localization on ultrasonic guided-wave touch surfaces.
//!
//! The pipeline runs from a deterministic waveform simulator ([`sigsim`])
//! through feature extraction ([`dsp`]) into small fully connected networks
//! ([`neural`]) whose outputs are decoded into touch positions or keypad keys
//! ([`locmodel`]). [`evalkit`] holds the metrics and experiment drivers,
//! [`store`] the on-disk formats, and [`cli`] the command-line frontend.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dsp;
pub mod error;
pub mod evalkit;
pub mod locmodel;
pub mod neural;
pub mod rng;
pub mod sigsim;
pub mod store;

pub use error::{Error, Result};

/// A 2-D position on the plate in centimetres, `[x, y]`.
pub type Point = [f64; 2];
