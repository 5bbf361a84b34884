// Copyright 2026 The coscat Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs are valid individually but the physics has no steady state
    /// (e.g. heating outweighs cooling).
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("index {index} out of range for {len} modes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("conditioning event has zero probability")]
    ZeroProbability,

    #[error("integration failed at t = {time:e} s: {reason}")]
    IntegrationFailure { time: f64, reason: String },

    #[error("no convergence within {max_time:e} s")]
    NonConvergence { max_time: f64 },
}
