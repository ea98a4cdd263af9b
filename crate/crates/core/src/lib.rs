//! Mixed-criticality scheduling on identical multiprocessors.
//!
//! The crate has two halves:
//!
//! * offline analysis ([`analysis`]): carry-in aware workload bounds, the
//!   per-level worst-case response time fixed point and Audsley's optimal
//!   priority assignment for global static-priority scheduling;
//! * online behaviour ([`sim`]): an integer-time simulator of the global
//!   preemptive work-conserving static-priority scheduler with execution
//!   monitoring, task suspension, rem-job completion protocols and the
//!   synchronous re-enablement chain.
//!
//! [`verify`] turns the validity properties of those protocols into trace
//! checkers, and [`gen`] produces reproducible task sets and scenarios.
//!
//! Everything here is pure computation over owned values; the crate is
//! `no_std` and only needs `alloc`. File formats and the command line live
//! in the `mcsched` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod gen;
pub mod model;
pub mod sim;
pub mod verify;

pub use model::{Level, TaskId, Time};
