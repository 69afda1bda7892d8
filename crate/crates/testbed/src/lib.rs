//! Simulated whitebox testbed, netconf-lite transport, packet controller and
//! experiment harness around the `optislot-core` allocator.

pub mod agent;
pub mod cli;
pub mod client;
pub mod clock;
pub mod controller;
pub mod dataset;
pub mod feedback_db;
pub mod harness;
pub mod netconf;
pub mod seeds;
pub mod sim;
pub mod store;
