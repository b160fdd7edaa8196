//! Dispersion statistics over interaction records: population standard
//! deviation, coefficient of variation, and the standard deviation
//! reduction achieved by splitting on a categorical attribute.

use std::collections::BTreeMap;

use crate::domain::InteractionRecord;

use super::BootstrapError;

/// Categorical attributes an interaction record can be split on, in
/// schema order (ties between attributes resolve to the earlier one).
pub const ATTRIBUTES: [Attribute; 3] = [Attribute::Provider, Attribute::Region, Attribute::DeviceType];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Attribute {
    Provider,
    Region,
    DeviceType,
}

impl Attribute {
    pub fn name(self) -> &'static str {
        match self {
            Attribute::Provider => "provider",
            Attribute::Region => "region",
            Attribute::DeviceType => "device_type",
        }
    }

    pub fn of(self, record: &InteractionRecord) -> &str {
        match self {
            Attribute::Provider => &record.provider,
            Attribute::Region => &record.region,
            Attribute::DeviceType => &record.device_type,
        }
    }
}

impl std::str::FromStr for Attribute {
    type Err = BootstrapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ATTRIBUTES
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| BootstrapError::UnknownAttribute(s.to_string()))
    }
}

pub fn sample_mean(values: &[f64]) -> Result<f64, BootstrapError> {
    if values.is_empty() {
        return Err(BootstrapError::EmptySample);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Population standard deviation (divides by n, not n - 1).
pub fn population_sd(values: &[f64]) -> Result<f64, BootstrapError> {
    let mean = sample_mean(values)?;
    let variance =
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    Ok(variance.sqrt())
}

/// Standard deviation as a percentage of the mean. A zero mean has no
/// defined CV unless the values are themselves all zero-spread.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64, BootstrapError> {
    let mean = sample_mean(values)?;
    let sd = population_sd(values)?;
    if sd == 0.0 {
        return Ok(0.0);
    }
    if mean == 0.0 {
        return Err(BootstrapError::ZeroMean);
    }
    Ok(sd / mean * 100.0)
}

fn accuracies(records: &[InteractionRecord]) -> Vec<f64> {
    records.iter().map(|r| r.accuracy).collect()
}

/// Frequency-weighted standard deviation of accuracy after partitioning
/// the records by `attribute`.
pub fn sd_after_split(
    records: &[InteractionRecord],
    attribute: Attribute,
) -> Result<f64, BootstrapError> {
    if records.is_empty() {
        return Err(BootstrapError::EmptyDataset);
    }
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for record in records {
        groups
            .entry(attribute.of(record))
            .or_default()
            .push(record.accuracy);
    }
    let total = records.len() as f64;
    let mut weighted = 0.0;
    for values in groups.values() {
        weighted += values.len() as f64 / total * population_sd(values)?;
    }
    Ok(weighted)
}

/// Standard deviation reduction: how much splitting on `attribute`
/// shrinks the accuracy spread. The build procedure splits on the
/// attribute with the largest reduction.
pub fn sdr(records: &[InteractionRecord], attribute: Attribute) -> Result<f64, BootstrapError> {
    let before = population_sd(&accuracies(records))?;
    Ok(before - sd_after_split(records, attribute)?)
}
