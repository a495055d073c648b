//! Fixed-time convergent, safety-constrained QP control synthesis.
//!
//! - [`qp`]: dense convex QP solver and exhaustive oracle
//! - [`fxts`]: settling-time bounds and the scalar comparison oracle
//! - [`constraints`]: systems, set functions and QP rows
//! - [`controller`]: per-state QP assembly and solve
//! - [`simulator`]: closed-loop Euler runs over phase schedules
//! - [`scenarios`]: cruise control, two-robot and synthetic test systems

// `!(a < b)` is used on purpose so that NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraints;
pub mod controller;
pub mod fxts;
pub mod qp;
pub mod scenarios;
pub mod simulator;
