//! Fixtures shared by the benchmarks.

use mixmarket_core::RegularDistribution;

/// Named distributions covering each closed-form family and the numerically
/// inverted truncated normal.
pub fn fixtures() -> Vec<(&'static str, RegularDistribution)> {
    vec![
        (
            "uniform_0_1",
            RegularDistribution::uniform(0.0, 1.0).unwrap(),
        ),
        (
            "uniform_1_2",
            RegularDistribution::uniform(1.0, 2.0).unwrap(),
        ),
        ("power_2", RegularDistribution::power(2.0).unwrap()),
        (
            "truncated_normal",
            RegularDistribution::truncated_normal(0.5, 0.2, 0.0, 1.0).unwrap(),
        ),
    ]
}
