#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ranking;
pub mod progress;
pub mod geometry;
pub mod perturb;
pub mod sysid;
