//! Slot selection and value learning from configuration-time feedback.
//!
//! Every request is an independent decision with an immediate reward of
//! minus the measured configuration time, so the Q-learning update runs with
//! a discount of zero: per-transceiver action values over the 49 slots,
//! chosen epsilon-greedily on the sum of the two endpoints' values.

mod fnn;
mod schedule;
mod tabular;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fnn::{FnnQ, DEFAULT_HIDDEN};
pub use schedule::{epsilon_at, ExplorationSchedule};
pub use tabular::TabularQ;

use crate::slot::{FrequencySlot, SLOT_COUNT};
use crate::types::TransceiverId;

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_FNN_STEP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AllocError {
    #[error("invalid feedback: configuration time {0} s must be positive")]
    InvalidFeedback(f64),
    #[error("corrupt model document: {0}")]
    CorruptModel(String),
    #[error("invalid exploration schedule")]
    InvalidSchedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Tabular,
    Fnn,
}

impl core::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tabular" => Ok(Backend::Tabular),
            "fnn" => Ok(Backend::Fnn),
            other => Err(format!("unknown backend {other:?} (expected tabular or fnn)")),
        }
    }
}

/// Per-transceiver action values over the 49 slots.
#[derive(Debug, Clone, PartialEq)]
pub enum QModel {
    Tabular(TabularQ),
    Fnn(FnnQ),
}

impl QModel {
    pub fn backend(&self) -> Backend {
        match self {
            QModel::Tabular(_) => Backend::Tabular,
            QModel::Fnn(_) => Backend::Fnn,
        }
    }

    pub fn values(&self, id: &TransceiverId) -> [f64; SLOT_COUNT] {
        match self {
            QModel::Tabular(t) => t.values(id),
            QModel::Fnn(n) => n.values(id),
        }
    }

    /// Transceivers the model knows about, in its stored order.
    pub fn transceivers(&self) -> Vec<TransceiverId> {
        match self {
            QModel::Tabular(t) => t.transceivers().cloned().collect(),
            QModel::Fnn(n) => n.transceivers.clone(),
        }
    }
}

/// Epsilon-greedy choice of one slot for both endpoints.
///
/// Draws the exploration coin on every call; on exploitation returns the
/// lowest-index argmax of `q_ingress + q_egress`.
pub fn select_slot<R: Rng + ?Sized>(
    model: &QModel,
    ingress: &TransceiverId,
    egress: &TransceiverId,
    epsilon: f64,
    rng: &mut R,
) -> FrequencySlot {
    let explore = rng.random::<f64>() < epsilon;
    if explore {
        return FrequencySlot::new(rng.random_range(0..SLOT_COUNT)).expect("in range");
    }
    greedy_slot(&model.values(ingress), &model.values(egress))
}

pub fn greedy_slot(q_ingress: &[f64; SLOT_COUNT], q_egress: &[f64; SLOT_COUNT]) -> FrequencySlot {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for k in 0..SLOT_COUNT {
        let v = q_ingress[k] + q_egress[k];
        if v > best_value {
            best = k;
            best_value = v;
        }
    }
    FrequencySlot::new(best).expect("in range")
}

/// Learning rates for the two backends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocatorConfig {
    pub backend: Backend,
    /// Tabular learning rate.
    pub alpha: f64,
    /// Fnn gradient step size.
    pub fnn_step: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for AllocatorConfig {
    fn default() -> Self {
        AllocatorConfig {
            backend: Backend::Tabular,
            alpha: DEFAULT_ALPHA,
            fnn_step: DEFAULT_FNN_STEP,
            hidden: DEFAULT_HIDDEN,
            seed: 0,
        }
    }
}

/// Reward `-config_time_s` applied to the (transceiver, slot) cell.
pub fn update(
    model: &mut QModel,
    config: &AllocatorConfig,
    transceiver: &TransceiverId,
    slot: FrequencySlot,
    config_time_s: f64,
) -> Result<(), AllocError> {
    if !(config_time_s.is_finite() && config_time_s > 0.0) {
        return Err(AllocError::InvalidFeedback(config_time_s));
    }
    let reward = -config_time_s;
    match model {
        QModel::Tabular(t) => t.update(transceiver, slot, reward, config.alpha),
        QModel::Fnn(n) => n.update(transceiver, slot, reward, config.fnn_step),
    }
    Ok(())
}

/// A model together with its exploration schedule and random stream.
#[derive(Debug, Clone)]
pub struct Allocator {
    config: AllocatorConfig,
    model: QModel,
    schedule: ExplorationSchedule,
    rng: ChaCha8Rng,
}

impl Allocator {
    /// Fresh allocator. `transceivers` fixes the Fnn input layout and
    /// pre-registers zero rows for the tabular backend.
    pub fn new(config: AllocatorConfig, schedule: ExplorationSchedule, transceivers: &[TransceiverId]) -> Self {
        let model = match config.backend {
            Backend::Tabular => QModel::Tabular(TabularQ::with_transceivers(transceivers)),
            Backend::Fnn => QModel::Fnn(FnnQ::new(transceivers.to_vec(), config.hidden, config.seed)),
        };
        Allocator { config, model, schedule, rng: ChaCha8Rng::seed_from_u64(config.seed) }
    }

    pub fn config(&self) -> &AllocatorConfig {
        &self.config
    }

    pub fn model(&self) -> &QModel {
        &self.model
    }

    pub fn schedule(&self) -> &ExplorationSchedule {
        &self.schedule
    }

    pub fn episode(&self) -> u64 {
        self.schedule.episode
    }

    pub fn epsilon(&self) -> f64 {
        self.schedule.current_epsilon()
    }

    /// Select with the schedule's epsilon, or `epsilon_override` if given.
    pub fn select(&mut self, ingress: &TransceiverId, egress: &TransceiverId, epsilon_override: Option<f64>) -> FrequencySlot {
        let epsilon = epsilon_override.unwrap_or_else(|| self.epsilon());
        select_slot(&self.model, ingress, egress, epsilon, &mut self.rng)
    }

    pub fn observe(&mut self, transceiver: &TransceiverId, slot: FrequencySlot, config_time_s: f64) -> Result<(), AllocError> {
        update(&mut self.model, &self.config, transceiver, slot, config_time_s)
    }

    pub fn advance_episode(&mut self) {
        self.schedule.advance();
    }

    pub fn to_document(&self) -> ModelDocument {
        let (q, weights) = match &self.model {
            QModel::Tabular(t) => {
                let q = t.rows.iter().map(|(id, row)| (id.to_string(), row.clone())).collect();
                (Some(q), None)
            }
            QModel::Fnn(n) => (None, Some(n.clone())),
        };
        ModelDocument {
            backend: self.config.backend,
            alpha: self.config.alpha,
            fnn_step: self.config.fnn_step,
            hidden: self.config.hidden,
            gamma: 0.0,
            schedule: self.schedule,
            seed: self.config.seed,
            rng_word_pos: self.rng.get_word_pos().to_string(),
            q,
            weights,
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self, AllocError> {
        let corrupt = |msg: &str| AllocError::CorruptModel(msg.into());
        if doc.gamma != 0.0 {
            return Err(corrupt("gamma must be 0"));
        }
        doc.schedule.validate().map_err(|_| corrupt("invalid schedule"))?;
        if !(doc.alpha.is_finite() && doc.alpha > 0.0 && doc.fnn_step.is_finite() && doc.fnn_step > 0.0) {
            return Err(corrupt("learning rates must be positive"));
        }
        let word_pos: u128 = doc.rng_word_pos.parse().map_err(|_| corrupt("bad rng_word_pos"))?;
        let model = match (doc.backend, doc.q, doc.weights) {
            (Backend::Tabular, Some(q), None) => {
                let mut rows = BTreeMap::new();
                for (key, row) in q {
                    let id = TransceiverId::from_key(&key).map_err(|_| corrupt("bad transceiver key"))?;
                    if row.len() != SLOT_COUNT || !row.iter().all(|v| v.is_finite()) {
                        return Err(corrupt("q rows need 49 finite values"));
                    }
                    rows.insert(id, row);
                }
                QModel::Tabular(TabularQ { rows })
            }
            (Backend::Fnn, None, Some(net)) => {
                if !net.shape_ok() || net.hidden != doc.hidden || !net.weights().all(|w| w.is_finite()) {
                    return Err(corrupt("fnn weights have the wrong shape or non-finite values"));
                }
                QModel::Fnn(net)
            }
            _ => return Err(corrupt("backend does not match the stored values")),
        };
        let config = AllocatorConfig {
            backend: doc.backend,
            alpha: doc.alpha,
            fnn_step: doc.fnn_step,
            hidden: doc.hidden,
            seed: doc.seed,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(doc.seed);
        rng.set_word_pos(word_pos);
        Ok(Allocator { config, model, schedule: doc.schedule, rng })
    }

    pub fn save(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model documents serialise")
    }

    pub fn load(text: &str) -> Result<Self, AllocError> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| AllocError::CorruptModel(e.to_string()))?;
        Allocator::from_document(doc)
    }
}

/// Persisted form of an [`Allocator`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub backend: Backend,
    pub alpha: f64,
    pub fnn_step: f64,
    pub hidden: usize,
    pub gamma: f64,
    pub schedule: ExplorationSchedule,
    pub seed: u64,
    /// Position of the selection random stream, as a decimal string.
    pub rng_word_pos: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<BTreeMap<String, Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<FnnQ>,
}
