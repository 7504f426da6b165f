use thiserror::Error;

/// Errors raised when a statistic or index is mathematically undefined for
/// its input.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("distribution is empty or has zero total weight")]
    EmptyDistribution,
    #[error("values and weights differ in length ({values} vs {weights})")]
    LengthMismatch { values: usize, weights: usize },
    #[error("weight at index {index} is negative or not finite: {weight}")]
    InvalidWeight { index: usize, weight: f64 },
    #[error("value at index {index} is not finite: {value}")]
    NonFiniteValue { index: usize, value: f64 },
    #[error("weighted mean is zero; index undefined")]
    ZeroMean,
    #[error("value {value} at index {index} is not positive; GE({alpha}) needs strictly positive values")]
    NonPositiveValue { index: usize, value: f64, alpha: u8 },
    #[error("quantile level {0} is outside (0, 1)")]
    QuantileOutOfRange(f64),
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("density grid needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("truncation maximum must be positive and finite, got {0}")]
    InvalidTruncation(f64),
    #[error("target population {target} must be positive and at most the total weight {total}")]
    InvalidTarget { target: f64, total: f64 },
    #[error("group index {group} at element {index} is out of range for {groups} groups")]
    InvalidGroup {
        index: usize,
        group: usize,
        groups: usize,
    },
}
