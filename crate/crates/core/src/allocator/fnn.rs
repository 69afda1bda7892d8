use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::slot::{FrequencySlot, SLOT_COUNT};
use crate::types::TransceiverId;

pub const DEFAULT_HIDDEN: usize = 32;
pub const INIT_RANGE: f64 = 0.05;

/// A one-hidden-layer network mapping a one-hot transceiver to 49 action
/// values: `q = W2 relu(W1 x + b1) + b2`.
///
/// Transceivers outside the known list are fed an all-zero input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnnQ {
    pub transceivers: Vec<TransceiverId>,
    pub hidden: usize,
    /// `hidden x transceivers`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `49 x hidden`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl FnnQ {
    pub fn new(transceivers: Vec<TransceiverId>, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-INIT_RANGE..=INIT_RANGE)).collect()
        };
        let inputs = transceivers.len();
        let w1 = init(hidden * inputs);
        let b1 = init(hidden);
        let w2 = init(SLOT_COUNT * hidden);
        let b2 = init(SLOT_COUNT);
        FnnQ { transceivers, hidden, w1, b1, w2, b2 }
    }

    pub(crate) fn shape_ok(&self) -> bool {
        let n = self.transceivers.len();
        self.hidden > 0
            && self.w1.len() == self.hidden * n
            && self.b1.len() == self.hidden
            && self.w2.len() == SLOT_COUNT * self.hidden
            && self.b2.len() == SLOT_COUNT
    }

    pub(crate) fn weights(&self) -> impl Iterator<Item = &f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2)
    }

    fn input_index(&self, id: &TransceiverId) -> Option<usize> {
        self.transceivers.iter().position(|t| t == id)
    }

    /// Hidden pre-activations for a one-hot input.
    fn pre_activation(&self, input: Option<usize>) -> Vec<f64> {
        let n = self.transceivers.len();
        (0..self.hidden)
            .map(|j| self.b1[j] + input.map_or(0.0, |i| self.w1[j * n + i]))
            .collect()
    }

    fn output(&self, slot: usize, hidden: &[f64]) -> f64 {
        let row = &self.w2[slot * self.hidden..(slot + 1) * self.hidden];
        self.b2[slot] + row.iter().zip(hidden).map(|(w, h)| w * h).sum::<f64>()
    }

    pub fn values(&self, id: &TransceiverId) -> [f64; SLOT_COUNT] {
        let h: Vec<f64> = self.pre_activation(self.input_index(id)).into_iter().map(|z| z.max(0.0)).collect();
        core::array::from_fn(|k| self.output(k, &h))
    }

    /// One gradient step on `(q(id, slot) - target)^2 / 2`.
    pub fn update(&mut self, id: &TransceiverId, slot: FrequencySlot, target: f64, step: f64) {
        let input = self.input_index(id);
        let n = self.transceivers.len();
        let z = self.pre_activation(input);
        let h: Vec<f64> = z.iter().map(|z| z.max(0.0)).collect();
        let k = slot.index();
        let err = self.output(k, &h) - target;

        for j in 0..self.hidden {
            let w2 = self.w2[k * self.hidden + j];
            self.w2[k * self.hidden + j] -= step * err * h[j];
            if z[j] > 0.0 {
                let g = err * w2;
                self.b1[j] -= step * g;
                if let Some(i) = input {
                    self.w1[j * n + i] -= step * g;
                }
            }
        }
        self.b2[k] -= step * err;
    }
}
