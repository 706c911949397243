//! Conservative signal-flow architectures for optimization.
//!
//! A problem is written as a collection of cost terms ("elements") coupled by
//! linear constraints. Every primal/dual variable pair `(a, b)` is mixed into a
//! transformed pair `(c, d)`; the constraints become an orthonormal
//! interconnection `d = G c + s` and each cost term becomes a nonexpansive map
//! `c = m(d)`. Running the loop, synchronously or through randomly triggered
//! sample-and-hold registers, until `d = G m(d) + s` solves the problem.
//!
//! Module map:
//!
//! * [`algebra`] – variable pairs, 2×2 pair transforms and block bookkeeping.
//! * [`interconnect`] – Cayley construction of `G`, source absorption.
//! * [`elements`] – reflected proximal maps for every supported cost term.
//! * [`engine`] – synchronous/asynchronous iteration and readout.
//! * [`monitor`] – traces, residuals and norm-reduction certificates.
//! * [`problems`] – builders for the example systems and their reference oracles.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod elements;
pub mod engine;
mod error;
pub mod interconnect;
pub mod monitor;
pub mod problems;

pub use error::{Error, Result};
