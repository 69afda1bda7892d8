use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::slot::{FrequencySlot, SLOT_COUNT};
use crate::types::TransceiverId;

/// One row of 49 action values per transceiver, zero until first updated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TabularQ {
    pub(crate) rows: BTreeMap<TransceiverId, Vec<f64>>,
}

impl TabularQ {
    pub fn new() -> Self {
        TabularQ::default()
    }

    /// Pre-register transceivers so they appear (as zeros) in saved documents.
    pub fn with_transceivers<'a>(ids: impl IntoIterator<Item = &'a TransceiverId>) -> Self {
        let rows = ids.into_iter().map(|id| (id.clone(), alloc::vec![0.0; SLOT_COUNT])).collect();
        TabularQ { rows }
    }

    pub fn values(&self, id: &TransceiverId) -> [f64; SLOT_COUNT] {
        let mut out = [0.0; SLOT_COUNT];
        if let Some(row) = self.rows.get(id) {
            out.copy_from_slice(row);
        }
        out
    }

    pub fn get(&self, id: &TransceiverId, slot: FrequencySlot) -> f64 {
        self.rows.get(id).map_or(0.0, |row| row[slot.index()])
    }

    /// `q <- q + alpha * (reward - q)` on the single taken cell.
    pub fn update(&mut self, id: &TransceiverId, slot: FrequencySlot, reward: f64, alpha: f64) {
        let row = self.rows.entry(id.clone()).or_insert_with(|| alloc::vec![0.0; SLOT_COUNT]);
        let q = &mut row[slot.index()];
        *q += alpha * (reward - *q);
    }

    pub fn transceivers(&self) -> impl Iterator<Item = &TransceiverId> {
        self.rows.keys()
    }
}
