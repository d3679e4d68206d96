//! Simulation and deterministic limit theory for N-urn linear systems.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fluct;
pub mod hydro;
pub mod model;
pub mod moments;
pub mod numeric;
pub mod sim;

pub use error::{Error, Result};
pub mod verify;
