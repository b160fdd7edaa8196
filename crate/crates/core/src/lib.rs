//! Federated-learning marketplace simulator: bilateral client selection
//! with reward economics, decision-tree accuracy bootstrapping for
//! newcomer devices, and a capacitated stable-matching engine, wrapped
//! in a deterministic multi-round experiment driver.
//!
//! The crate is organised bottom-up:
//!
//! - [`domain`] — identifiers, device/server profiles, validation.
//! - [`economics`] — per-round reward model (operational + traffic
//!   earnings scaled by an accuracy-alignment penalty).
//! - [`aggregation`] — test-size-weighted global accuracy.
//! - [`bootstrap`] — interaction datasets, the variance-reduction
//!   regression tree, k-fold validation, and the paid inquiry protocol
//!   that lets servers score devices they have never worked with.
//! - [`preferences`] — both sides' ranking rules.
//! - [`matching`] — capacitated device-proposing deferred acceptance
//!   with a stability checker and a small brute-force oracle.
//! - [`simulation`] — seeded populations, competing arms, metrics.
//!
//! Everything is deterministic given a configuration and seed; see
//! [`simulation::run_experiment`] for the entry point.

pub mod aggregation;
pub mod bootstrap;
pub mod domain;
pub mod economics;
pub mod matching;
pub mod preferences;
pub mod simulation;

pub use domain::{AccuracyFraction, DeviceId, DeviceProfile, ServerId, ServerProfile};
pub use simulation::{
    run_experiment, run_experiment_sequential, Arm, ExperimentConfig, ExperimentReport,
};
