//! Per-server global model accuracy: the test-size-weighted mean of the
//! participating devices' local accuracies.

use crate::domain::{AccuracyFraction, DeviceId, ValidationError};

/// A round's participant accuracies and the resulting global accuracy
/// for one server.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortReport {
    pub participants: Vec<(DeviceId, AccuracyFraction, u32)>,
    pub global_accuracy: AccuracyFraction,
}

impl CohortReport {
    pub fn new(
        participants: Vec<(DeviceId, AccuracyFraction, u32)>,
    ) -> Result<Self, ValidationError> {
        let global_accuracy = global_accuracy(
            participants
                .iter()
                .map(|&(_, acc, test_size)| (acc, test_size)),
        )?;
        Ok(CohortReport {
            participants,
            global_accuracy,
        })
    }
}

/// A device's accuracy weighted by its test set size.
pub fn weighted_accuracy(acc: AccuracyFraction, test_size: u32) -> Result<f64, ValidationError> {
    if test_size == 0 {
        return Err(ValidationError::new("test_size", "must be positive"));
    }
    Ok(acc.value() * f64::from(test_size))
}

/// Test-size-weighted mean accuracy over a cohort.
pub fn global_accuracy(
    cohort: impl IntoIterator<Item = (AccuracyFraction, u32)>,
) -> Result<AccuracyFraction, ValidationError> {
    let mut weighted_sum = 0.0;
    let mut weight_sum = 0.0;
    for (acc, test_size) in cohort {
        weighted_sum += weighted_accuracy(acc, test_size)?;
        weight_sum += f64::from(test_size);
    }
    if weight_sum == 0.0 {
        return Err(ValidationError::new("cohort", "no participants"));
    }
    // Weighted mean of values in [0, 1]; clamp to absorb roundoff.
    Ok(AccuracyFraction::clamped(weighted_sum / weight_sum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn acc(v: f64) -> AccuracyFraction {
        AccuracyFraction::new(v).unwrap()
    }

    #[test]
    fn weighted_accuracy_examples() {
        assert_abs_diff_eq!(weighted_accuracy(acc(0.9), 100).unwrap(), 90.0, epsilon = 1e-9);
        assert_eq!(weighted_accuracy(acc(0.0), 37).unwrap(), 0.0);
        assert_abs_diff_eq!(weighted_accuracy(acc(1.0), 250).unwrap(), 250.0, epsilon = 1e-9);
        assert!(weighted_accuracy(acc(0.5), 0).is_err());
    }

    #[test]
    fn global_accuracy_examples() {
        let g = global_accuracy([(acc(0.9), 100), (acc(0.5), 300)]).unwrap();
        assert_abs_diff_eq!(g.value(), 0.6, epsilon = 1e-9);

        let single = global_accuracy([(acc(0.73), 42)]).unwrap();
        assert_abs_diff_eq!(single.value(), 0.73, epsilon = 1e-9);

        let uniform = global_accuracy([(acc(0.7), 100), (acc(0.7), 350)]).unwrap();
        assert_abs_diff_eq!(uniform.value(), 0.7, epsilon = 1e-9);

        assert!(global_accuracy([]).is_err());
    }

    #[test]
    fn cohort_report_holds_weighted_mean() {
        let report = CohortReport::new(vec![
            ("d001".into(), acc(0.9), 100),
            ("d002".into(), acc(0.5), 300),
        ])
        .unwrap();
        assert_abs_diff_eq!(report.global_accuracy.value(), 0.6, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn bounded_by_extremes(cohort in proptest::collection::vec((0.0f64..=1.0, 1u32..500), 1..12)) {
            let lo = cohort.iter().map(|&(a, _)| a).fold(f64::INFINITY, f64::min);
            let hi = cohort.iter().map(|&(a, _)| a).fold(f64::NEG_INFINITY, f64::max);
            let g = global_accuracy(cohort.iter().map(|&(a, n)| (acc(a), n))).unwrap().value();
            prop_assert!(g >= lo - 1e-12 && g <= hi + 1e-12);
        }

        #[test]
        fn weight_scale_invariant(
            cohort in proptest::collection::vec((0.0f64..=1.0, 1u32..100), 1..10),
            scale in 2u32..6,
        ) {
            let base = global_accuracy(cohort.iter().map(|&(a, n)| (acc(a), n))).unwrap().value();
            let scaled = global_accuracy(cohort.iter().map(|&(a, n)| (acc(a), n * scale)))
                .unwrap()
                .value();
            prop_assert!((base - scaled).abs() <= 1e-9);
        }

        #[test]
        fn permutation_invariant(cohort in proptest::collection::vec((0.0f64..=1.0, 1u32..500), 1..10)) {
            let forward = global_accuracy(cohort.iter().map(|&(a, n)| (acc(a), n))).unwrap().value();
            let backward = global_accuracy(cohort.iter().rev().map(|&(a, n)| (acc(a), n)))
                .unwrap()
                .value();
            prop_assert!((forward - backward).abs() <= 1e-9);
        }
    }
}
