#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baseline;
pub mod enkf;
pub mod error;
pub mod harness;
pub mod ismf;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod observations;
pub mod solver;
pub mod verify;
