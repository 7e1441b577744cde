//! Flow-based routing and signal-free intersection coordination for
//! connected and automated vehicles.
//!
//! The crate is organised as a pipeline:
//!
//! 1. [`network`]: road graph, travel demands and the BPR latency.
//! 2. [`flow`]: system-optimal flow assignment (Frank-Wolfe).
//! 3. [`routes`]: route recovery, departure synchronisation and
//!    per-intersection boundary conditions.
//! 4. [`trajectory`]: closed-form energy-optimal cubic trajectories and the
//!    constraint resolution built from them.
//! 5. [`coordinator`]: FIFO planning at a single intersection and the
//!    flow-feedback loop.
//!
//! [`oracle`] is an independent direct-transcription solver used to certify
//! the closed forms, and [`pipeline`] strings the stages together.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coordinator;
pub mod error;
pub mod flow;
pub mod grid;
pub mod network;
pub mod oracle;
pub mod pipeline;
pub mod poly;
pub mod routes;
pub mod trajectory;

pub use error::{Error, Result};
