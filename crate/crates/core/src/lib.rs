//! Sequential-choice modeling for ordered bundles.
//!
//! A consumer works through an ordered bundle (a playlist, a season of games)
//! one item at a time and at every decision either replays the current item,
//! plays the next one or skips it. This crate provides the consumption state
//! machine, data ingestion and feature construction, Markov and zero-order
//! baselines, from-scratch neural sequence models (MLP, LSTM, decoder-only and
//! bidirectional Transformers), attention-weight analysis, evaluation metrics
//! and synthetic generators with exact oracle hit rates.

pub mod attention;
pub mod baselines;
pub mod dataio;
pub mod domain;
pub mod error;
pub mod evalkit;
pub mod neuralkit;
pub mod predict;
pub mod seqmodels;
pub mod synthgen;

pub use domain::{ConsumptionState, Event, Outcome, Playlist, Session, Track, DEFAULT_CAP};
pub use error::{Error, Result};
