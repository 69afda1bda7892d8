//! Core logic for a packet-optical slot allocation testbed.
//!
//! Everything here is `no_std` (with `alloc`): frequency-slot arithmetic,
//! CMIS driver log analysis, the per-slot laser latency model and the
//! value-learning slot allocators. IO, sockets and clocks live in the
//! `optislot` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod allocator;
pub mod cmis;
pub mod laser;
pub mod slot;
pub mod time;
pub mod transceiver;
pub mod types;

pub use allocator::{Allocator, AllocatorConfig, ExplorationSchedule, QModel};
pub use laser::{LaserModel, LogNormalFit};
pub use slot::{FrequencySlot, SlotError, GRID_SPACING_GHZ, SLOT_COUNT};
pub use time::{SimTime, SyslogTimestamp};
pub use types::{ConnectivityRequest, FeedbackRecord, SlotStatistics, TransceiverId};
