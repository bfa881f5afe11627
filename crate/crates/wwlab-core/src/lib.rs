#![cfg_attr(not(feature = "std"), no_std)]
//! Numerical laboratory for uniform Wiener-Wintner averages on finite
//! measure-preserving systems.
//!
//! The crate is `no_std` with `alloc`. Floating point transcendental
//! functions come from `libm` in every configuration, so results do not
//! depend on which platform math library is linked.
//!
//! Modules:
//!
//! * [`finite_dynamics`]: finite systems, observables, integrals,
//!   conditional expectations and Gowers-Host-Kra seminorms.
//! * [`trig_sup`]: certified brackets for suprema of trigonometric and
//!   polyphase sums.
//! * [`ww_core`]: the uniform averages `W_N^k`, their weak, off-diagonal
//!   and alternative-schedule variants.
//! * [`recurrence`]: multiple recurrence averages, the uniform maximum
//!   `M_N^k`, return-times averages and the intermediate function `F`.
//! * [`box_lattice`]: exact level counts for families of lattice boxes.
//! * [`analysis`]: decay fits, dominance search, the named inequality
//!   registry and Hilbert-transform diagnostics.
//!
//! The `parallel` feature evaluates independent work items on the rayon
//! pool. Items are collected in index order and reduced sequentially, so
//! the output is bit-identical for every thread count.

extern crate alloc;

pub mod analysis;
pub mod box_lattice;
mod error;
pub mod finite_dynamics;
pub mod math;
pub mod par;
pub mod recurrence;
pub mod sum;
pub mod trig_sup;
pub mod ww_core;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Default grid oversampling factor for supremum brackets.
pub const DEFAULT_OVERSAMPLE: usize = 16;

/// Default cost budget, in units of point-evaluations of a modulated sum.
pub const DEFAULT_BUDGET: u64 = 20_000_000_000;
