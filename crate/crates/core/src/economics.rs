//! Device earnings and the accuracy-gap-penalized total reward.
//!
//! A device earns for the compute it promises (operational) and for the
//! bandwidth it promises, discounted by link latency (traffic). The sum
//! is then penalized by the standard deviation between the device's
//! local accuracy and the server's global accuracy, so devices tracking
//! the global model closely keep more of their earnings.

use crate::domain::{AccuracyFraction, Money, ValidationError};

/// Itemized reward for one device in one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub operational: Money,
    pub traffic: Money,
    /// `1 - std{acc_device, acc_global}`, in `[0.5, 1]`.
    pub penalty_factor: f64,
    pub total: Money,
}

/// Earnings for promised CPU and RAM at the server's unit prices.
pub fn operational_earnings(
    cpu_promised: f64,
    ram_promised: f64,
    price_cpu: Money,
    price_ram: Money,
) -> Result<Money, ValidationError> {
    for (field, v) in [
        ("cpu_promised", cpu_promised),
        ("ram_promised", ram_promised),
        ("price_cpu", price_cpu),
        ("price_ram", price_ram),
    ] {
        if v < 0.0 {
            return Err(ValidationError::new(field, format!("must be nonnegative, got {v}")));
        }
    }
    Ok(cpu_promised * price_cpu + ram_promised * price_ram)
}

/// Bandwidth earnings discounted by the scaled link latency: at latency 1
/// the link is fully congested and traffic earnings vanish.
pub fn traffic_earnings(
    band_promised: f64,
    price_band: Money,
    scaled_latency: f64,
) -> Result<Money, ValidationError> {
    if band_promised < 0.0 || price_band < 0.0 {
        return Err(ValidationError::new(
            "band_promised",
            "bandwidth and price must be nonnegative",
        ));
    }
    if !(0.0..=1.0).contains(&scaled_latency) {
        return Err(ValidationError::new(
            "scaled_latency",
            format!("{scaled_latency} outside [0, 1]"),
        ));
    }
    Ok(band_promised * price_band * (1.0 - scaled_latency))
}

/// Population standard deviation of the two-element sample
/// `{acc_device, acc_global}`, i.e. `|acc_device - acc_global| / 2`.
/// Always in `[0, 0.5]` for fraction inputs.
pub fn accuracy_gap_std(acc_device: AccuracyFraction, acc_global: AccuracyFraction) -> f64 {
    (acc_device.value() - acc_global.value()).abs() / 2.0
}

/// Combine earnings with the accuracy-gap penalty.
pub fn total_reward(
    operational: Money,
    traffic: Money,
    acc_device: AccuracyFraction,
    acc_global: AccuracyFraction,
) -> Result<RewardBreakdown, ValidationError> {
    if operational < 0.0 || traffic < 0.0 {
        return Err(ValidationError::new(
            "earnings",
            "operational and traffic earnings must be nonnegative",
        ));
    }
    let penalty_factor = 1.0 - accuracy_gap_std(acc_device, acc_global);
    Ok(RewardBreakdown {
        operational,
        traffic,
        penalty_factor,
        total: (operational + traffic) * penalty_factor,
    })
}
