//! Core pipeline for predicting whether the next tutor turn in a peer-tutoring
//! dialogue will contain a hedge.
//!
//! The crate is organized as a chain of pure, seeded stages:
//!
//! 1. [`corpus`] — annotated dialogue data model, validation, instance
//!    extraction, and a seeded synthetic-corpus generator with planted signal.
//! 2. [`encoding`] — fixed-width numeric turn vectors (embedding, strategy
//!    flags, dialogue acts, nonverbal behaviors, rapport, context) grouped by
//!    named feature groups for masking and attribution.
//! 3. [`resample`] — SMOTE oversampling of the minority (hedge) class.
//! 4. [`models`] — from-scratch classifiers under one contract: gradient
//!    boosted trees, MLP, LSTM, attention LSTM, and a stratified dummy.
//! 5. [`eval`] — stratified k-fold cross-validation with confidence intervals.
//! 6. [`explain`] — exact group-level and sampled per-feature Shapley values
//!    with valence summaries.
//! 7. [`ablation`] — retrain-with-group-removed grids.
//!
//! Everything here is `no_std + alloc`: no IO, no clocks, no global state.
//! All randomness flows from explicit seeds, so every stage is bit-for-bit
//! reproducible. File formats and the command-line driver live in the
//! companion `hedgecast-cli` crate.

#![no_std]

#[macro_use]
extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod ablation;
pub mod corpus;
pub mod encoding;
pub mod eval;
pub mod explain;
pub mod math;
pub mod models;
pub mod resample;
