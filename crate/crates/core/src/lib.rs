//! Simulation and verification of knowledge-based protocols for vehicles
//! negotiating an intersection.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod adversary;
pub mod exchange;
pub mod kernel;
pub mod knowledge;
pub mod policy;
pub mod protocols;
pub mod topology;
pub mod verdict;
pub mod verify;
