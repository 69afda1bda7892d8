//! Key-value state store standing in for the switch database.

use std::collections::HashMap;
use std::sync::mpsc::Sender;
use std::sync::{Mutex, RwLock};

pub const DESIRED_FREQ: &str = "desired_freq";
pub const APPLIED_FREQ: &str = "applied_freq";
pub const STATUS: &str = "status";

/// A committed `desired_freq` write, as seen by the port daemon.
#[derive(Debug)]
pub struct DesiredWrite<R> {
    pub seq: u64,
    pub frequency_ghz: u32,
    pub reply: R,
}

/// `(port, field) -> value` with per-key atomic writes. Each port may have
/// one subscriber that receives every `desired_freq` write exactly once, in
/// commit order.
#[derive(Debug)]
pub struct StateStore<R> {
    values: RwLock<HashMap<(String, String), String>>,
    watchers: Mutex<Watchers<R>>,
}

#[derive(Debug)]
struct Watchers<R> {
    seq: u64,
    ports: HashMap<String, Sender<DesiredWrite<R>>>,
}

impl<R> Default for StateStore<R> {
    fn default() -> Self {
        StateStore {
            values: RwLock::new(HashMap::new()),
            watchers: Mutex::new(Watchers { seq: 0, ports: HashMap::new() }),
        }
    }
}

impl<R> StateStore<R> {
    pub fn new() -> Self {
        StateStore::default()
    }

    pub fn get(&self, port: &str, field: &str) -> Option<String> {
        self.values.read().unwrap().get(&(port.to_string(), field.to_string())).cloned()
    }

    pub fn set(&self, port: &str, field: &str, value: impl Into<String>) {
        self.values.write().unwrap().insert((port.to_string(), field.to_string()), value.into());
    }

    pub fn subscribe(&self, port: &str, tx: Sender<DesiredWrite<R>>) {
        self.watchers.lock().unwrap().ports.insert(port.to_string(), tx);
    }

    pub fn unsubscribe_all(&self) {
        self.watchers.lock().unwrap().ports.clear();
    }

    pub fn has_port(&self, port: &str) -> bool {
        self.watchers.lock().unwrap().ports.contains_key(port)
    }

    /// Commit `desired_freq` and hand it to the port's daemon. Returns the
    /// commit sequence number, or `None` for a port without a daemon.
    pub fn write_desired(&self, port: &str, frequency_ghz: u32, reply: R) -> Option<u64> {
        let mut w = self.watchers.lock().unwrap();
        let tx = w.ports.get(port)?.clone();
        w.seq += 1;
        let seq = w.seq;
        self.set(port, DESIRED_FREQ, frequency_ghz.to_string());
        tx.send(DesiredWrite { seq, frequency_ghz, reply }).ok()?;
        Some(seq)
    }
}
