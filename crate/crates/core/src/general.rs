//! Public option of lower quality `θ ≤ 1` sold at a subsidised price `ρ`,
//! and the complement timing in which buyers try the public option first.
//!
//! With a quality gap and a public price the optimal mechanism is still a
//! posted price, but its cutoff maximises
//!
//! ```text
//! (1 − F(v))·[v(1 − θ·m(v)) + ρ·m(v)],    m(v) = min{k/F(v), 1}
//! ```
//!
//! over the whole support. The objective has a kink where `F(v) = k`, so it is
//! maximised by a grid scan followed by golden-section refinement rather than
//! by a first-order condition.

use crate::distributions::RegularDistribution;
use crate::error::{check_capacity, domain, Error, Result};
use crate::numeric::{bisect, golden_section_max};
use crate::solver::MarketParams;
use crate::welfare::{partial_mean, QUADRATURE_TOLERANCE};

/// Grid size of the coarse scan in [`solve_general`].
pub const GENERAL_GRID: usize = 10_001;

/// Objective gap under which two refined optima count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Whether the public option is congested at the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `F(v*) > k`: the public option rations.
    Rationed,
    /// `F(v*) ≤ k`: everyone relying on the public option is served.
    Slack,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralSolution {
    pub cutoff: f64,
    pub price: f64,
    pub regime: Regime,
    pub objective_value: f64,
    /// Set when a second local optimum comes within [`TIE_TOLERANCE`] of the
    /// best one, or when the inner problem is degenerate (`1 − θ·m = 0`).
    pub near_tie: bool,
}

/// Service probability `min{k/F(v), 1}`, equal to 1 when `F(v) = 0`.
pub fn service_prob(dist: &RegularDistribution, k: f64, v: f64) -> f64 {
    let f = dist.cdf(v);
    if f <= k {
        1.0
    } else {
        k / f
    }
}

pub(crate) fn objective(dist: &RegularDistribution, params: &MarketParams, v: f64) -> f64 {
    let m = service_prob(dist, params.capacity, v);
    dist.sf(v) * (v * (1.0 - params.quality_ratio * m) + params.public_price * m)
}

/// Posted price that implements cutoff `v`.
pub fn price_at(dist: &RegularDistribution, params: &MarketParams, v: f64) -> f64 {
    let m = service_prob(dist, params.capacity, v);
    v * (1.0 - params.quality_ratio * m) + params.public_price * m
}

/// Monopolist revenue from selling to types at or above `v`.
pub fn op_objective(dist: &RegularDistribution, params: &MarketParams, v: f64) -> Result<f64> {
    params.validate(dist)?;
    if !dist.contains(v) {
        return Err(domain("general objective", v, dist.v_lo(), dist.v_hi()));
    }
    Ok(objective(dist, params, v))
}

pub fn solve_general(dist: &RegularDistribution, params: &MarketParams) -> Result<GeneralSolution> {
    params.validate(dist)?;
    dist.ensure_regular()?;
    let lo = dist.v_lo();
    let step = dist.width() / (GENERAL_GRID - 1) as f64;
    let grid: Vec<f64> = (0..GENERAL_GRID)
        .map(|i| {
            if i + 1 == GENERAL_GRID {
                dist.v_hi()
            } else {
                lo + step * i as f64
            }
        })
        .collect();
    let values: Vec<f64> = grid.iter().map(|&v| objective(dist, params, v)).collect();

    let best_grid = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let near = 1e-6 * best_grid.abs().max(1.0);
    let last = values.len() - 1;
    let mut candidates = Vec::new();
    for i in 0..=last {
        let left = if i == 0 {
            f64::NEG_INFINITY
        } else {
            values[i - 1]
        };
        let right = if i == last {
            f64::NEG_INFINITY
        } else {
            values[i + 1]
        };
        // first point of a plateau only
        if values[i] > left && values[i] >= right && values[i] >= best_grid - near {
            candidates.push(i);
        }
    }
    if candidates.is_empty() {
        let i = values.iter().position(|&x| x == best_grid).unwrap_or(0);
        candidates.push(i);
    }

    let x_tol = 1e-12 * dist.width();
    let mut refined: Vec<(f64, f64)> = candidates
        .iter()
        .map(|&i| {
            let a = grid[i.saturating_sub(1)];
            let b = grid[(i + 1).min(last)];
            let (x, fx) = golden_section_max(|v| objective(dist, params, v), a, b, x_tol);
            if fx >= values[i] {
                (x, fx)
            } else {
                (grid[i], values[i])
            }
        })
        .collect();
    refined.sort_by(|a, b| a.0.total_cmp(&b.0));

    let best_value = refined
        .iter()
        .map(|r| r.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let (cutoff, objective_value) = *refined
        .iter()
        .find(|r| r.1 >= best_value - TIE_TOLERANCE)
        .expect("at least one refined candidate");
    let distinct_ties = refined
        .iter()
        .filter(|r| r.1 >= best_value - TIE_TOLERANCE && (r.0 - cutoff).abs() > 2.0 * step)
        .count();

    let m = service_prob(dist, params.capacity, cutoff);
    let degenerate = (1.0 - params.quality_ratio * m).abs() <= f64::EPSILON;
    let regime = if dist.cdf(cutoff) > params.capacity {
        Regime::Rationed
    } else {
        Regime::Slack
    };
    Ok(GeneralSolution {
        cutoff,
        price: price_at(dist, params, cutoff),
        regime,
        objective_value,
        near_tie: distinct_ties > 0 || degenerate,
    })
}

/// Cutoff in the limit `k, θ → 1` with `ρ` bounded away from zero:
/// `min{v : (1 − θ)φ(v) + ρ ≥ 0}`.
pub fn bertrand_limit_cutoff(
    dist: &RegularDistribution,
    quality_ratio: f64,
    public_price: f64,
) -> Result<f64> {
    if !(quality_ratio > 0.0 && quality_ratio <= 1.0) || !(public_price >= 0.0) {
        return Err(Error::Parameter(format!(
            "quality ratio {quality_ratio} must lie in (0, 1] and public price {public_price} be non-negative"
        )));
    }
    if quality_ratio == 1.0 {
        if public_price == 0.0 {
            return Err(Error::Parameter(
                "equal quality with a free public option has no price-competition limit".into(),
            ));
        }
        return Ok(dist.v_lo());
    }
    let expr = |v: f64| (1.0 - quality_ratio) * dist.phi(v) + public_price;
    if expr(dist.v_lo()) >= 0.0 {
        return Ok(dist.v_lo());
    }
    bisect(expr, dist.v_lo(), dist.v_hi(), 1e-12 * dist.width())
}

/// Outcome when buyers queue at the public option first and top up at the
/// monopolist. The monopolist then faces every type with probability `1 − k`
/// and posts the standard monopoly price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplementOutcome {
    pub capacity: f64,
    pub price: f64,
    pub producer_surplus: f64,
    pub aggregate_consumer_surplus: f64,
}

impl ComplementOutcome {
    /// `k·v` below `v^M`, `v − (1 − k)v^M` from `v^M` up.
    pub fn surplus(&self, v: f64) -> f64 {
        if v < self.price {
            self.capacity * v
        } else {
            v - (1.0 - self.capacity) * self.price
        }
    }
}

pub fn complement_outcome(dist: &RegularDistribution, k: f64) -> Result<ComplementOutcome> {
    check_capacity(k)?;
    dist.ensure_regular()?;
    let price = dist.standard_monopoly_price();
    let tol = 0.5 * QUADRATURE_TOLERANCE;
    let low = k * partial_mean(dist, dist.v_lo(), price, tol)?;
    let high = partial_mean(dist, price, dist.v_hi(), tol)? - (1.0 - k) * price * dist.sf(price);
    Ok(ComplementOutcome {
        capacity: k,
        price,
        producer_surplus: (1.0 - k) * price * dist.sf(price),
        aggregate_consumer_surplus: low + high,
    })
}
