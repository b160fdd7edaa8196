//! Experiment configuration. Every field has a default so an experiment
//! runs with no configuration at all; the defaults mirror the reference
//! setup (100 initial devices, 10 arrivals and 15 rounds, two servers
//! requesting 10 clients each).

use serde::{Deserialize, Serialize};

use crate::domain::ValidationError;

/// The experiment arms that can run side by side on a shared population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Bilateral preference matching with bootstrap-scored newcomers.
    Fedmint,
    /// Uniformly random client selection.
    Vanilla,
    /// Matching arm with newcomer scores drawn uniformly at random
    /// instead of predicted — the bootstrap ablation.
    FedmintRandomBootstrap,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Fedmint, Arm::Vanilla, Arm::FedmintRandomBootstrap];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Fedmint => "fedmint",
            Arm::Vanilla => "vanilla",
            Arm::FedmintRandomBootstrap => "fedmint_random_bootstrap",
        }
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters of the accuracy proxy that stands in for local training:
/// a deterministic base driven by shard size and label diversity, a
/// small experience gain, and bounded uniform noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProxyParams {
    pub base: f64,
    pub data_weight: f64,
    pub label_weight: f64,
    pub experience_weight: f64,
    pub experience_cap: u32,
    pub noise: f64,
    pub floor: f64,
    pub ceiling: f64,
}

impl Default for ProxyParams {
    fn default() -> Self {
        ProxyParams {
            base: 0.35,
            data_weight: 0.40,
            label_weight: 0.05,
            experience_weight: 0.02,
            experience_cap: 5,
            noise: 0.03,
            floor: 0.05,
            ceiling: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub rounds: u32,
    pub repetitions: u32,
    pub arms: Vec<Arm>,

    pub initial_devices: u32,
    pub arrivals_per_round: u32,
    pub servers: u32,
    /// Cohort size each server requests per round (its capacity).
    pub clients_per_server: usize,

    /// MIPS.
    pub cpu_range: (f64, f64),
    /// Megabytes.
    pub ram_range: (f64, f64),
    /// Mbps.
    pub bandwidth_range: (f64, f64),
    /// Fraction of each capacity a device pledges.
    pub promised_fraction_range: (f64, f64),

    /// Number of label classes in the task.
    pub label_classes: u8,
    /// Labels held per device (non-IID skew), inclusive bounds.
    pub labels_per_device: (u8, u8),
    pub data_size_range: (u32, u32),
    /// Held-out fraction of the shard used as test data.
    pub test_split: f64,

    /// Dataset-type vocabulary servers request from.
    pub data_types: Vec<String>,
    /// How many types each device supports, inclusive bounds.
    pub types_per_device: (usize, usize),

    /// Raw link latency bounds, seconds.
    pub latency_range: (f64, f64),

    pub price_cpu_range: (f64, f64),
    pub price_ram_range: (f64, f64),
    pub price_band_range: (f64, f64),

    /// Tree stopping: minimum rows per node.
    pub min_instances: usize,
    /// Tree stopping: CV threshold, percent.
    pub cv_threshold: f64,
    pub initial_calls_budget: u64,
    /// Accuracy assumed when no history or prediction is available.
    pub default_prior: f64,
    /// Portion of its dataset a server uploads per inquiry.
    pub upload_fraction: f64,
    /// Folds for the per-round cross-validated MSE metric.
    pub kfold: usize,

    pub proxy: ProxyParams,

    /// Categorical feature vocabularies.
    pub providers: Vec<String>,
    pub regions: Vec<String>,
    pub device_types: Vec<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            rounds: 15,
            repetitions: 1,
            arms: Arm::ALL.to_vec(),
            initial_devices: 100,
            arrivals_per_round: 10,
            servers: 2,
            clients_per_server: 10,
            cpu_range: (300.0, 700.0),
            ram_range: (400.0, 900.0),
            bandwidth_range: (500.0, 900.0),
            promised_fraction_range: (0.5, 1.0),
            label_classes: 10,
            labels_per_device: (1, 4),
            data_size_range: (100, 450),
            test_split: 0.2,
            data_types: vec![
                "mnist".to_string(),
                "fashion_mnist".to_string(),
                "cifar10".to_string(),
            ],
            types_per_device: (2, 3),
            latency_range: (0.1, 5.0),
            price_cpu_range: (0.001, 0.003),
            price_ram_range: (0.001, 0.003),
            price_band_range: (0.001, 0.003),
            min_instances: 3,
            cv_threshold: 10.0,
            initial_calls_budget: 5,
            default_prior: 0.5,
            upload_fraction: 1.0,
            kfold: 10,
            proxy: ProxyParams::default(),
            providers: vec![
                "P1".to_string(),
                "P2".to_string(),
                "P3".to_string(),
                "P4".to_string(),
            ],
            regions: vec![
                "Asia".to_string(),
                "America".to_string(),
                "Africa".to_string(),
                "Europe".to_string(),
            ],
            device_types: vec![
                "Watch".to_string(),
                "Phone".to_string(),
                "Security".to_string(),
                "Lock".to_string(),
            ],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        fn positive(field: &str, value: u64) -> Result<(), ValidationError> {
            if value == 0 {
                return Err(ValidationError::new(field, "must be positive"));
            }
            Ok(())
        }
        fn ordered_f64(field: &str, range: (f64, f64)) -> Result<(), ValidationError> {
            if !(range.0 <= range.1) {
                return Err(ValidationError::new(
                    field,
                    format!("empty range ({} > {})", range.0, range.1),
                ));
            }
            Ok(())
        }

        positive("rounds", self.rounds.into())?;
        positive("repetitions", self.repetitions.into())?;
        positive("initial_devices", self.initial_devices.into())?;
        positive("servers", self.servers.into())?;
        positive("clients_per_server", self.clients_per_server as u64)?;
        if self.arms.is_empty() {
            return Err(ValidationError::new("arms", "must name at least one arm"));
        }

        ordered_f64("cpu_range", self.cpu_range)?;
        ordered_f64("ram_range", self.ram_range)?;
        ordered_f64("bandwidth_range", self.bandwidth_range)?;
        ordered_f64("promised_fraction_range", self.promised_fraction_range)?;
        ordered_f64("price_cpu_range", self.price_cpu_range)?;
        ordered_f64("price_ram_range", self.price_ram_range)?;
        ordered_f64("price_band_range", self.price_band_range)?;
        if self.cpu_range.0 <= 0.0 || self.ram_range.0 <= 0.0 || self.bandwidth_range.0 <= 0.0 {
            return Err(ValidationError::new(
                "cpu_range",
                "resource ranges must be positive",
            ));
        }
        if self.promised_fraction_range.0 <= 0.0 || self.promised_fraction_range.1 > 1.0 {
            return Err(ValidationError::new(
                "promised_fraction_range",
                "must lie in (0, 1]",
            ));
        }
        if self.price_cpu_range.0 <= 0.0
            || self.price_ram_range.0 <= 0.0
            || self.price_band_range.0 <= 0.0
        {
            return Err(ValidationError::new(
                "price_cpu_range",
                "price ranges must be positive",
            ));
        }

        if self.labels_per_device.0 < 1
            || self.labels_per_device.0 > self.labels_per_device.1
            || self.labels_per_device.1 > self.label_classes
        {
            return Err(ValidationError::new(
                "labels_per_device",
                format!(
                    "must satisfy 1 <= lo <= hi <= {} label classes",
                    self.label_classes
                ),
            ));
        }
        if self.data_size_range.0 == 0 || self.data_size_range.0 > self.data_size_range.1 {
            return Err(ValidationError::new("data_size_range", "empty or zero range"));
        }
        if !(self.test_split > 0.0 && self.test_split < 1.0) {
            return Err(ValidationError::new("test_split", "must lie in (0, 1)"));
        }

        if self.data_types.is_empty() {
            return Err(ValidationError::new("data_types", "must not be empty"));
        }
        if self.types_per_device.0 < 1
            || self.types_per_device.0 > self.types_per_device.1
            || self.types_per_device.1 > self.data_types.len()
        {
            return Err(ValidationError::new(
                "types_per_device",
                format!(
                    "must satisfy 1 <= lo <= hi <= {} data types",
                    self.data_types.len()
                ),
            ));
        }

        if !(self.latency_range.0 < self.latency_range.1) || self.latency_range.0 < 0.0 {
            return Err(ValidationError::new(
                "latency_range",
                "needs nonnegative min strictly below max",
            ));
        }

        positive("min_instances", self.min_instances as u64)?;
        if !(self.cv_threshold > 0.0) {
            return Err(ValidationError::new("cv_threshold", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.default_prior) {
            return Err(ValidationError::new("default_prior", "must lie in [0, 1]"));
        }
        if !(self.upload_fraction > 0.0 && self.upload_fraction <= 1.0) {
            return Err(ValidationError::new("upload_fraction", "must lie in (0, 1]"));
        }
        if self.kfold < 2 {
            return Err(ValidationError::new("kfold", "needs at least 2 folds"));
        }

        if self.providers.is_empty() || self.regions.is_empty() || self.device_types.is_empty() {
            return Err(ValidationError::new(
                "providers",
                "categorical vocabularies must not be empty",
            ));
        }

        let proxy = &self.proxy;
        if !(proxy.floor < proxy.ceiling) || proxy.floor < 0.0 || proxy.ceiling > 1.0 {
            return Err(ValidationError::new(
                "proxy.floor",
                "need 0 <= floor < ceiling <= 1",
            ));
        }
        if proxy.noise < 0.0 {
            return Err(ValidationError::new("proxy.noise", "must be nonnegative"));
        }
        Ok(())
    }
}
