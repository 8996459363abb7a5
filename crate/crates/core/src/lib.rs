//! Certification of causal nonseparability.
//!
//! [`hilbert`] provides labeled operators on tensor products with the link
//! product; [`process`], [`instruments`] and [`dpovm`] build and validate
//! process matrices, local devices and the distributed POVMs they induce;
//! [`sdp`] computes white-noise robustness against causally separable cones
//! with a built-in interior-point solver and returns checkable witnesses;
//! [`catalog`] holds the reference scenarios.

pub mod error;
pub mod family;
pub mod hilbert;
pub mod catalog;
pub mod dpovm;
pub mod instruments;
pub mod process;
pub mod sdp;

pub use error::{Error, Result, ValidationReport};
pub use family::{Certifiable, OperatorFamily, OutcomeKey};
