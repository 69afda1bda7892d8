//! The 49-position, 100 GHz laser frequency grid.

use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of tunable laser positions.
pub const SLOT_COUNT: usize = 49;
/// Lowest grid frequency in GHz.
pub const FIRST_FREQUENCY_GHZ: u32 = 191_300;
/// Highest grid frequency in GHz.
pub const LAST_FREQUENCY_GHZ: u32 = 196_100;
/// Channel spacing in GHz.
pub const GRID_SPACING_GHZ: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SlotError {
    #[error("invalid frequency {0} GHz: not on the 100 GHz grid between 191300 and 196100 GHz")]
    InvalidFrequency(u32),
    #[error("invalid slot index {0}: must be below 49")]
    InvalidIndex(usize),
}

/// One laser position on the grid, identified by its 0-based index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FrequencySlot(u8);

impl FrequencySlot {
    pub const MIN: FrequencySlot = FrequencySlot(0);
    pub const MAX: FrequencySlot = FrequencySlot(SLOT_COUNT as u8 - 1);

    pub fn new(index: usize) -> Result<Self, SlotError> {
        if index < SLOT_COUNT {
            Ok(FrequencySlot(index as u8))
        } else {
            Err(SlotError::InvalidIndex(index))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn frequency_ghz(self) -> u32 {
        slot_to_frequency(self)
    }

    /// All slots in ascending frequency order.
    pub fn all() -> impl DoubleEndedIterator<Item = FrequencySlot> + ExactSizeIterator + Clone {
        (0..SLOT_COUNT as u8).map(FrequencySlot)
    }
}

impl TryFrom<usize> for FrequencySlot {
    type Error = SlotError;

    fn try_from(index: usize) -> Result<Self, SlotError> {
        FrequencySlot::new(index)
    }
}

impl From<FrequencySlot> for usize {
    fn from(slot: FrequencySlot) -> usize {
        slot.index()
    }
}

impl fmt::Display for FrequencySlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "slot {} ({} GHz)", self.0, self.frequency_ghz())
    }
}

pub fn slot_to_frequency(slot: FrequencySlot) -> u32 {
    FIRST_FREQUENCY_GHZ + GRID_SPACING_GHZ * slot.0 as u32
}

pub fn frequency_to_slot(frequency_ghz: u32) -> Result<FrequencySlot, SlotError> {
    if !(FIRST_FREQUENCY_GHZ..=LAST_FREQUENCY_GHZ).contains(&frequency_ghz)
        || !(frequency_ghz - FIRST_FREQUENCY_GHZ).is_multiple_of(GRID_SPACING_GHZ)
    {
        return Err(SlotError::InvalidFrequency(frequency_ghz));
    }
    Ok(FrequencySlot(
        ((frequency_ghz - FIRST_FREQUENCY_GHZ) / GRID_SPACING_GHZ) as u8,
    ))
}
