//! Sensing-matrix construction and evaluation for slotted multi-user
//! cognitive radio networks.

pub mod alloc;
pub mod config;
pub mod energy;
pub mod experiments;
pub mod model;
pub mod sim;
pub mod table;
pub mod throughput;
