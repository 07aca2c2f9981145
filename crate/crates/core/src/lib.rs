//! Person-following for a small camera drone: plant identification, PD
//! control, pose-based range estimation, identity matching, the mission
//! state machine and a deterministic simulator that closes the loop.
#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

pub mod control;
pub mod geometry;
pub mod identity;
pub mod mission;
pub mod range;
pub mod sim;
pub mod sysid;
