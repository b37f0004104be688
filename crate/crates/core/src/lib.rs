//! Multimodal time-series forecasting: text prompts aligned with series patches
//! at token, feature and decision level.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense `f64` tensors with a reverse-mode tape and a
//!   finite-difference gradient oracle.
//! - [`data`]: CSV ingestion, scaling, chronological splits and windowing.
//! - [`textgen`]: per-variable prompts and the text encoders that turn them
//!   into token embeddings.
//! - [`model`]: patch embedding, token-level graph alignment, feature-level
//!   cross-attention and decision-level gated fusion.
//! - [`training`]: loss, Adam, early-stopped training and evaluation.
//! - [`config`], [`checkpoint`], [`cli`]: experiment plumbing behind the
//!   `ficots` binary.

pub mod checkpoint;
pub mod cli;
pub mod codec;
pub mod config;
pub mod data;
pub mod model;
pub mod numerics;
pub mod synthetic;
pub mod textgen;
pub mod training;
