//! Consumer and producer welfare at the optimal mechanism, and how each
//! moves with the public option's capacity.
//!
//! Derivatives in `k` come from the implicit function theorem applied to
//! `r(ϑ(k), k) = 0`:
//!
//! ```text
//! ∂r/∂v = k(G′F − Gf)/F² − φ′F − φf,      ∂r/∂k = G/F
//! ϑ′ = −(G/F) / (∂r/∂v)
//! π′ = (ϑ′/G)·(φf + G′(1 − π))
//! p′ = ϑ′(1 − π) − ϑπ′
//! P′ = −ϑ(1 − F(ϑ))/F(ϑ)                   (envelope theorem)
//! ```
//!
//! all evaluated at `ϑ(k)`.

use rayon::prelude::*;

use crate::distributions::RegularDistribution;
use crate::error::{check_capacity, domain, Error, Result};
use crate::numeric::{bisect, integrate};
use crate::solver::{solve_mechanism, MechanismSolution};

/// Absolute tolerance of the surplus quadratures.
pub const QUADRATURE_TOLERANCE: f64 = 1e-9;

/// Slack allowed in strict-monotonicity assertions on solver output.
pub const MONOTONE_SLACK: f64 = 1e-10;

const DEGENERATE_SLOPE: f64 = 1e-14;

/// Surplus of a type-`v` buyer under a solved mechanism.
pub fn surplus_at(mech: &MechanismSolution, v: f64) -> f64 {
    if v >= mech.cutoff {
        v - mech.price
    } else {
        mech.rationing_prob * v
    }
}

/// `U(v, k)`: `π·v` below the cutoff, `v − p` from the cutoff up.
pub fn consumer_surplus(dist: &RegularDistribution, k: f64, v: f64) -> Result<f64> {
    if !dist.contains(v) {
        return Err(domain("consumer surplus", v, dist.v_lo(), dist.v_hi()));
    }
    let mech = solve_mechanism(dist, k)?;
    Ok(surplus_at(&mech, v))
}

/// `∫_a^b v dF(v)`, integrated by parts as `a·S(a) − b·S(b) + ∫_a^b S` so
/// the integrand stays smooth even where the density is not.
pub(crate) fn partial_mean(dist: &RegularDistribution, a: f64, b: f64, tol: f64) -> Result<f64> {
    let tail = integrate(|v| dist.sf(v), a, b, tol)?;
    Ok(a * dist.sf(a) - b * dist.sf(b) + tail)
}

/// `∫ U(v, k) dF` for a solved mechanism, split at the cutoff.
pub fn aggregate_surplus_of(dist: &RegularDistribution, mech: &MechanismSolution) -> Result<f64> {
    let tol = 0.5 * QUADRATURE_TOLERANCE;
    let low = partial_mean(dist, dist.v_lo(), mech.cutoff, tol)?;
    let high =
        partial_mean(dist, mech.cutoff, dist.v_hi(), tol)? - mech.price * dist.sf(mech.cutoff);
    Ok(mech.rationing_prob * low + high)
}

pub fn aggregate_consumer_surplus(dist: &RegularDistribution, k: f64) -> Result<f64> {
    let mech = solve_mechanism(dist, k)?;
    aggregate_surplus_of(dist, &mech)
}

/// Welfare at one capacity, with `U(·, k)` sampled on a type grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WelfareReport {
    pub k: f64,
    pub cutoff: f64,
    pub price: f64,
    pub rationing_prob: f64,
    pub consumer_surplus_fn: Vec<(f64, f64)>,
    pub aggregate_consumer_surplus: f64,
    pub producer_surplus: f64,
    pub total_surplus: f64,
}

pub fn welfare_report(
    dist: &RegularDistribution,
    k: f64,
    type_grid: usize,
) -> Result<WelfareReport> {
    if type_grid < 2 {
        return Err(Error::Parameter(format!(
            "type grid needs at least 2 points, got {type_grid}"
        )));
    }
    let mech = solve_mechanism(dist, k)?;
    let aggregate = aggregate_surplus_of(dist, &mech)?;
    let step = dist.width() / (type_grid - 1) as f64;
    let consumer_surplus_fn = (0..type_grid)
        .map(|i| {
            let v = if i + 1 == type_grid {
                dist.v_hi()
            } else {
                dist.v_lo() + step * i as f64
            };
            (v, surplus_at(&mech, v))
        })
        .collect();
    Ok(WelfareReport {
        k,
        cutoff: mech.cutoff,
        price: mech.price,
        rationing_prob: mech.rationing_prob,
        consumer_surplus_fn,
        aggregate_consumer_surplus: aggregate,
        producer_surplus: mech.producer_surplus,
        total_surplus: aggregate + mech.producer_surplus,
    })
}

/// Capacity derivatives of the equilibrium quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivities {
    pub cutoff: f64,
    pub rationing_prob: f64,
    pub price: f64,
    pub producer_surplus: f64,
}

/// Evaluates every capacity derivative at a solved mechanism.
pub fn sensitivities_at(
    dist: &RegularDistribution,
    mech: &MechanismSolution,
) -> Result<Sensitivities> {
    let k = mech.capacity;
    let v = mech.cutoff;
    let f_cdf = mech.induced_demand;
    let density = dist.pdf(v);
    let g = dist.g(v);
    let g_prime = dist.g_prime(v);
    let phi = dist.phi(v);
    let phi_prime = dist.phi_slope(v);
    let pi = mech.rationing_prob;

    let dr_dv =
        k * (g_prime * f_cdf - g * density) / (f_cdf * f_cdf) - phi_prime * f_cdf - phi * density;
    if dr_dv.abs() < DEGENERATE_SLOPE || !dr_dv.is_finite() {
        return Err(Error::DegenerateSlope {
            slope: dr_dv,
            at: v,
        });
    }
    let cutoff = -(g / f_cdf) / dr_dv;
    let rationing_prob = cutoff / g * (phi * density + g_prime * (1.0 - pi));
    let price = cutoff * (1.0 - pi) - v * rationing_prob;
    let producer_surplus = -v * dist.sf(v) / f_cdf;
    Ok(Sensitivities {
        cutoff,
        rationing_prob,
        price,
        producer_surplus,
    })
}

pub fn sensitivities(dist: &RegularDistribution, k: f64) -> Result<Sensitivities> {
    let mech = solve_mechanism(dist, k)?;
    sensitivities_at(dist, &mech)
}

/// `ϑ′(k)`.
pub fn cutoff_sensitivity(dist: &RegularDistribution, k: f64) -> Result<f64> {
    sensitivities(dist, k).map(|s| s.cutoff)
}

/// `π′(k)`.
pub fn rationing_sensitivity(dist: &RegularDistribution, k: f64) -> Result<f64> {
    sensitivities(dist, k).map(|s| s.rationing_prob)
}

/// `p′(k)`.
pub fn price_sensitivity(dist: &RegularDistribution, k: f64) -> Result<f64> {
    sensitivities(dist, k).map(|s| s.price)
}

/// `P′(k)`.
pub fn producer_surplus_sensitivity(dist: &RegularDistribution, k: f64) -> Result<f64> {
    sensitivities(dist, k).map(|s| s.producer_surplus)
}

pub(crate) fn lhs(dist: &RegularDistribution, v: f64) -> f64 {
    v * dist.hazard_rate(v) + v * dist.g_prime(v) / dist.g(v)
}

/// `v f/(1 − F) + v G′/G`: capacity expansion weakly lowers the price at
/// the capacity whose cutoff is `v` iff this is at least 2.
pub fn condition_lhs(dist: &RegularDistribution, v: f64) -> Result<f64> {
    let v_m = dist.standard_monopoly_price();
    if !(v > v_m && v < dist.v_hi()) {
        return Err(Error::Domain {
            what: "price condition",
            value: v,
            domain: format!("({v_m}, {})", dist.v_hi()),
        });
    }
    Ok(lhs(dist, v))
}

/// Where the price condition fails on `(v^M, v̄)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub holds_everywhere: bool,
    pub lhs_samples: Vec<(f64, f64)>,
    /// Open intervals on which the condition's left side is below 2.
    pub failing_intervals: Vec<(f64, f64)>,
    /// Crossing point of the left side through 2, reported when `v^M = v_lo`
    /// and there is exactly one crossing.
    pub threshold_root: Option<f64>,
}

const BOUNDARY_TOLERANCE: f64 = 1e-9;

/// Samples the condition on `grid_size` interior points of `(v^M, v̄)` and
/// bisects each crossing of 2.
pub fn check_condition(dist: &RegularDistribution, grid_size: usize) -> Result<ConditionReport> {
    if grid_size < 1001 {
        return Err(Error::Parameter(format!(
            "condition grid needs at least 1001 points, got {grid_size}"
        )));
    }
    let v_m = dist.standard_monopoly_price();
    let hi = dist.v_hi();
    let step = (hi - v_m) / (grid_size + 1) as f64;
    let lhs_samples: Vec<(f64, f64)> = (1..=grid_size)
        .map(|i| {
            let v = v_m + step * i as f64;
            (v, lhs(dist, v))
        })
        .collect();

    let gap = |v: f64| lhs(dist, v) - 2.0;
    let mut failing_intervals = Vec::new();
    let mut crossings = Vec::new();
    let mut open: Option<f64> = if lhs_samples[0].1 < 2.0 {
        Some(v_m)
    } else {
        None
    };
    for w in lhs_samples.windows(2) {
        let (a, fa) = w[0];
        let (b, fb) = w[1];
        let failing_a = fa < 2.0;
        let failing_b = fb < 2.0;
        if failing_a == failing_b {
            continue;
        }
        let root = bisect(gap, a, b, BOUNDARY_TOLERANCE)?;
        crossings.push(root);
        if failing_b {
            open = Some(root);
        } else if let Some(start) = open.take() {
            failing_intervals.push((start, root));
        }
    }
    if let Some(start) = open {
        failing_intervals.push((start, hi));
    }
    let at_lower_end = (v_m - dist.v_lo()).abs() <= 1e-10;
    let threshold_root = if at_lower_end && crossings.len() == 1 {
        Some(crossings[0])
    } else {
        None
    };
    Ok(ConditionReport {
        holds_everywhere: failing_intervals.is_empty(),
        lhs_samples,
        failing_intervals,
        threshold_root,
    })
}

/// Shortcut for increasing-hazard distributions whose monopoly price is the
/// lowest value: high-value buyers always gain from expansion iff
/// `f(v_lo)·v_lo ≥ 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HazardCriterion {
    pub applicable: bool,
    pub price_decreasing: bool,
}

pub fn hazard_criterion(dist: &RegularDistribution) -> HazardCriterion {
    let at_lower_end = (dist.standard_monopoly_price() - dist.v_lo()).abs() <= 1e-10;
    let n = 1001;
    let step = dist.width() / n as f64;
    let hazards: Vec<f64> = (0..n)
        .map(|i| dist.hazard_rate(dist.v_lo() + step * i as f64))
        .collect();
    let increasing = hazards
        .windows(2)
        .all(|w| w[1] >= w[0] - 1e-12 * w[0].abs());
    HazardCriterion {
        applicable: at_lower_end && increasing,
        price_decreasing: dist.pdf(dist.v_lo()) * dist.v_lo() >= 2.0,
    }
}

/// Gain of a type-`v` buyer from the monopolist's presence relative to a
/// public-option-only market, `U(v, k) − k·v`.
pub fn entry_gain(dist: &RegularDistribution, k: f64, v: f64) -> Result<f64> {
    Ok(consumer_surplus(dist, k, v)? - k * v)
}

/// One capacity of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub k: f64,
    pub cutoff: f64,
    pub rationing_prob: f64,
    pub price: f64,
    pub producer_surplus: f64,
    pub consumer_surplus: f64,
    pub total_surplus: f64,
    pub cutoff_slope: f64,
    pub rationing_slope: f64,
    pub price_slope: f64,
    pub producer_surplus_slope: f64,
    pub foc_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn column(&self, pick: impl Fn(&SweepRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(pick).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn sweep_point(dist: &RegularDistribution, k: f64) -> Result<SweepRow> {
    let mech = solve_mechanism(dist, k)?;
    let cs = aggregate_surplus_of(dist, &mech)?;
    let s = sensitivities_at(dist, &mech)?;
    Ok(SweepRow {
        k,
        cutoff: mech.cutoff,
        rationing_prob: mech.rationing_prob,
        price: mech.price,
        producer_surplus: mech.producer_surplus,
        consumer_surplus: cs,
        total_surplus: cs + mech.producer_surplus,
        cutoff_slope: s.cutoff,
        rationing_slope: s.rationing_prob,
        price_slope: s.price,
        producer_surplus_slope: s.producer_surplus,
        foc_residual: mech.foc_residual,
    })
}

/// Solves every capacity of a strictly increasing grid inside `(0, 1)`.
///
/// Points are evaluated in parallel; rows come back in grid order and the
/// first failing capacity (in grid order) is reported.
pub fn sweep(dist: &RegularDistribution, k_grid: &[f64]) -> Result<SweepResult> {
    dist.ensure_regular()?;
    for &k in k_grid {
        check_capacity(k)?;
    }
    if k_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parameter(
            "capacity grid must be strictly increasing".into(),
        ));
    }
    let results: Vec<Result<SweepRow>> = k_grid.par_iter().map(|&k| sweep_point(dist, k)).collect();
    let mut rows = Vec::with_capacity(results.len());
    for (k, r) in k_grid.iter().zip(results) {
        rows.push(r.map_err(|e| Error::SweepPoint {
            k: *k,
            source: Box::new(e),
        })?);
    }
    Ok(SweepResult { rows })
}

/// `n` evenly spaced capacities from `k_min` to `k_max` inclusive.
pub fn capacity_grid(k_min: f64, k_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![k_min],
        _ => (0..n)
            .map(|i| k_min + (k_max - k_min) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}
