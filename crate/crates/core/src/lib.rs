//! Conservative bandits: policies that never let realized cumulative reward
//! fall below a fraction of a known default arm's, plus the environments,
//! metrics and auditing harness used to check them.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod env;
pub mod gate;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod policy;
pub mod rng;
