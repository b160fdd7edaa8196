//! Core value types shared by every other module: device and server
//! profiles, interaction records, the latency matrix, and the accuracy
//! newtype. All of them are immutable after validated construction and
//! safe to share across threads; round-to-round mutation happens by the
//! simulation producing new values.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Opaque identifier of a client IoT device.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceId(pub String);

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<&str> for DeviceId {
    fn from(s: &str) -> Self {
        DeviceId(s.to_owned())
    }
}

/// Opaque identifier of a federated server.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServerId(pub String);

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<&str> for ServerId {
    fn from(s: &str) -> Self {
        ServerId(s.to_owned())
    }
}

/// Monetary amount. Plain f64; the simulator never settles payments, it
/// only compares and aggregates them.
pub type Money = f64;

/// An accuracy expressed as a dimensionless fraction in `[0, 1]`.
///
/// The bootstrap interaction datasets store accuracies in percent
/// `[0, 100]` instead; the conversion factor 100 is applied exactly once
/// at the bootstrap boundary.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccuracyFraction(f64);

impl AccuracyFraction {
    pub const ZERO: AccuracyFraction = AccuracyFraction(0.0);
    pub const ONE: AccuracyFraction = AccuracyFraction(1.0);

    pub fn new(value: f64) -> Result<Self, ValidationError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(ValidationError::range("accuracy", value, 0.0, 1.0));
        }
        Ok(AccuracyFraction(value))
    }

    /// Clamp an arbitrary value into `[0, 1]`. NaN maps to 0.
    pub fn clamped(value: f64) -> Self {
        if value.is_nan() {
            AccuracyFraction(0.0)
        } else {
            AccuracyFraction(value.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Total order on the inner value; fractions are never NaN.
    pub fn total_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for AccuracyFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// One row of a federated server's interaction dataset: the categorical
/// description of a device that participated in a past round together
/// with the accuracy it achieved, in dataset units (percent, `[0, 100]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub provider: String,
    pub region: String,
    pub device_type: String,
    pub accuracy: f64,
}

impl InteractionRecord {
    pub fn new(
        provider: impl Into<String>,
        region: impl Into<String>,
        device_type: impl Into<String>,
        accuracy: f64,
    ) -> Result<Self, ValidationError> {
        if !(0.0..=100.0).contains(&accuracy) {
            return Err(ValidationError::range("accuracy", accuracy, 0.0, 100.0));
        }
        Ok(InteractionRecord {
            provider: provider.into(),
            region: region.into(),
            device_type: device_type.into(),
            accuracy,
        })
    }
}

/// A client IoT device profile. Capacities are what the hardware has;
/// promised amounts are what the device pledges to the training task and
/// what it gets paid for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub device_id: DeviceId,
    pub provider: String,
    pub region: String,
    pub device_type: String,
    /// MIPS.
    pub cpu_capacity: f64,
    /// Megabytes.
    pub ram_capacity: f64,
    /// Mbps.
    pub bandwidth_capacity: f64,
    pub cpu_promised: f64,
    pub ram_promised: f64,
    pub bandwidth_promised: f64,
    /// Class labels present in the local shard.
    pub data_labels: BTreeSet<u8>,
    /// Local training image count.
    pub data_size: u32,
    /// Held-out test image count, used as the aggregation weight.
    pub test_data_size: u32,
    /// Dataset-type tags this device can train on.
    pub available_data_types: BTreeSet<String>,
    /// `(round, local accuracy)` pairs, oldest first.
    pub accuracy_history: Vec<(u32, AccuracyFraction)>,
}

impl DeviceProfile {
    /// Validate every profile invariant, consuming and returning the
    /// profile so construction sites read as `DeviceProfile { .. }.validated()?`.
    pub fn validated(self) -> Result<Self, ValidationError> {
        let pairs = [
            ("cpu_promised", self.cpu_promised, self.cpu_capacity),
            ("ram_promised", self.ram_promised, self.ram_capacity),
            (
                "bandwidth_promised",
                self.bandwidth_promised,
                self.bandwidth_capacity,
            ),
        ];
        for (field, promised, capacity) in pairs {
            if promised <= 0.0 {
                return Err(ValidationError::new(
                    field,
                    format!("must be positive, got {promised}"),
                ));
            }
            if promised > capacity {
                return Err(ValidationError::new(
                    field,
                    format!("exceeds capacity ({promised} > {capacity})"),
                ));
            }
        }
        if self.data_labels.is_empty() {
            return Err(ValidationError::new("data_labels", "must not be empty"));
        }
        if self.data_size == 0 {
            return Err(ValidationError::new("data_size", "must be positive"));
        }
        if self.test_data_size == 0 {
            return Err(ValidationError::new("test_data_size", "must be positive"));
        }
        Ok(self)
    }

    /// A device is a newcomer exactly while its accuracy history is empty.
    pub fn is_newcomer(&self) -> bool {
        self.accuracy_history.is_empty()
    }

    /// Most recent local accuracy, if the device has participated before.
    pub fn last_accuracy(&self) -> Option<AccuracyFraction> {
        self.accuracy_history.last().map(|&(_, acc)| acc)
    }
}

/// A federated server profile, including the mutable bookkeeping the
/// bootstrapping economy needs (interaction dataset, calls budget,
/// cumulative contribution count).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerProfile {
    pub server_id: ServerId,
    pub requested_data_type: String,
    /// Cohort size the server requests each round.
    pub capacity: usize,
    /// Money per MIPS.
    pub price_cpu: Money,
    /// Money per megabyte.
    pub price_ram: Money,
    /// Money per Mbps.
    pub price_band: Money,
    pub interaction_dataset: Vec<InteractionRecord>,
    /// Remaining bootstrap inquiries this server may issue.
    pub calls_budget: u64,
    /// Cumulative number of bootstrap contributions made so far.
    pub cumulative_contributions: u64,
}

impl ServerProfile {
    pub fn validated(self) -> Result<Self, ValidationError> {
        if self.capacity == 0 {
            return Err(ValidationError::new("capacity", "must be at least 1"));
        }
        for (field, price) in [
            ("price_cpu", self.price_cpu),
            ("price_ram", self.price_ram),
            ("price_band", self.price_band),
        ] {
            if price <= 0.0 {
                return Err(ValidationError::new(
                    field,
                    format!("must be positive, got {price}"),
                ));
            }
        }
        Ok(self)
    }
}

/// Raw link latencies between every server/device pair, plus the fixed
/// generation bounds used for min-max scaling. Scaling over the
/// configured bounds rather than the observed sample keeps it
/// deterministic and independent of population size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyMatrix {
    min_latency: f64,
    max_latency: f64,
    raw: BTreeMap<(ServerId, DeviceId), f64>,
}

impl LatencyMatrix {
    pub fn new(min_latency: f64, max_latency: f64) -> Result<Self, ValidationError> {
        if !(min_latency < max_latency) {
            return Err(ValidationError::new(
                "min_latency",
                format!("must be below max_latency ({min_latency} >= {max_latency})"),
            ));
        }
        Ok(LatencyMatrix {
            min_latency,
            max_latency,
            raw: BTreeMap::new(),
        })
    }

    pub fn insert(
        &mut self,
        server: ServerId,
        device: DeviceId,
        raw_seconds: f64,
    ) -> Result<(), ValidationError> {
        if !(self.min_latency..=self.max_latency).contains(&raw_seconds) {
            return Err(ValidationError::range(
                "latency",
                raw_seconds,
                self.min_latency,
                self.max_latency,
            ));
        }
        self.raw.insert((server, device), raw_seconds);
        Ok(())
    }

    pub fn raw_seconds(&self, server: &ServerId, device: &DeviceId) -> Option<f64> {
        self.raw.get(&(server.clone(), device.clone())).copied()
    }

    /// Min-max scaled latency in `[0, 1]` for a known link.
    pub fn scaled(&self, server: &ServerId, device: &DeviceId) -> Result<f64, ValidationError> {
        let raw = self.raw_seconds(server, device).ok_or_else(|| {
            ValidationError::new("latency", format!("no link recorded for {server}/{device}"))
        })?;
        scale_latency(raw, self.min_latency, self.max_latency)
    }
}

/// Min-max scale a raw latency into `[0, 1]`.
pub fn scale_latency(raw: f64, min: f64, max: f64) -> Result<f64, ValidationError> {
    if !(min < max) {
        return Err(ValidationError::new(
            "min_latency",
            format!("must be below max_latency ({min} >= {max})"),
        ));
    }
    if !(min..=max).contains(&raw) {
        return Err(ValidationError::range("latency", raw, min, max));
    }
    Ok((raw - min) / (max - min))
}

/// A named-field validation failure.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError {
    pub field: String,
    pub message: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ValidationError {
            field: field.into(),
            message: message.into(),
        }
    }

    fn range(field: &str, value: f64, lo: f64, hi: f64) -> Self {
        ValidationError::new(field, format!("{value} outside [{lo}, {hi}]"))
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ValidationError {}
