//! Simulation and learning toolkit for time-varying pure lossy Gaussian channels.
//!
//! The pipeline: [`eta_process`] draws a sequence of transmissivities for one
//! of five channel classes, [`gaussian_channel`] maps each use to the Choi-state
//! covariance and its `sigma_11` feature, [`dataset`] assembles labelled series,
//! and [`nn`] / [`forest`] learn to classify, regress and forecast them.
//! [`experiments`] reproduces the full study and [`cli`] binds it to a binary.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eta_process;
pub mod experiments;
pub mod forest;
pub mod gaussian_channel;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};
