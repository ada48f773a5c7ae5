//! Sequence-VAE toolkit for two-vehicle driving encounters.
//!
//! The crate trains a bi-directional GRU encoder with a cross-coupled
//! two-branch GRU decoder (and a single-branch baseline) on encounter data,
//! generates new encounters by sweeping latent codes, and scores models with
//! a decode/re-encode disentanglement scan and traffic-rationality profiles.
//!
//! Everything is built on [`numerics`], a small reverse-mode autodiff over
//! dense `f64` tensors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod recurrent;

pub use error::{Error, Result};
pub use numerics::{ParamStore, Tape, Tensor, Var};
