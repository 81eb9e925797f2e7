//! Revenue-optimal mechanism against a free public option of capacity `k`.
//!
//! The optimum is a posted price: types at or above the cutoff `ϑ` buy from
//! the monopolist at `ϑ(1 − k/F(ϑ))`, everyone else queues at the public
//! option and is served with probability `k/F(ϑ)`. The cutoff is the unique
//! zero of
//!
//! ```text
//! r(v, k) = (k/F(v))·G(v) − φ(v)·F(v)
//! ```
//!
//! on `(max{v^M, F⁻¹(k)}, v̄)`, where `r` is positive at the left end and
//! equals `−v̄(1 − k)` at the right end.

use crate::distributions::RegularDistribution;
use crate::error::{check_capacity, Error, Result};
use crate::numeric::bisect;

/// Relative bracket width at which cutoff bisection stops.
pub const CUTOFF_TOLERANCE: f64 = 1e-12;

/// Which supplier a buyer turns to first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Timing {
    /// Monopolist first, public option as fallback.
    #[default]
    Substitute,
    /// Public option first, monopolist tops up unmet demand.
    Complement,
}

impl Timing {
    pub fn as_str(&self) -> &'static str {
        match self {
            Timing::Substitute => "substitute",
            Timing::Complement => "complement",
        }
    }
}

/// Public option parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    pub capacity: f64,
    /// Public good quality relative to the monopolist's.
    pub quality_ratio: f64,
    pub public_price: f64,
    pub timing: Timing,
}

impl MarketParams {
    /// Baseline market: equal quality, free public option, substitute timing.
    pub fn baseline(capacity: f64) -> Self {
        MarketParams {
            capacity,
            quality_ratio: 1.0,
            public_price: 0.0,
            timing: Timing::Substitute,
        }
    }

    pub fn with_public_option(capacity: f64, quality_ratio: f64, public_price: f64) -> Self {
        MarketParams {
            capacity,
            quality_ratio,
            public_price,
            timing: Timing::Substitute,
        }
    }

    pub fn is_baseline(&self) -> bool {
        self.quality_ratio == 1.0 && self.public_price == 0.0
    }

    /// Checks `0 < k < 1`, `0 < θ ≤ 1`, `ρ ≥ 0` and `ρ ≤ θ·v_lo`.
    pub fn validate(&self, dist: &RegularDistribution) -> Result<()> {
        check_capacity(self.capacity)?;
        if !(self.quality_ratio > 0.0 && self.quality_ratio <= 1.0) {
            return Err(Error::Parameter(format!(
                "quality ratio {} must lie in (0, 1]",
                self.quality_ratio
            )));
        }
        if !(self.public_price >= 0.0 && self.public_price.is_finite()) {
            return Err(Error::Parameter(format!(
                "public price {} must be non-negative",
                self.public_price
            )));
        }
        let ceiling = self.quality_ratio * dist.v_lo();
        if self.public_price > ceiling {
            return Err(Error::Parameter(format!(
                "public price {} exceeds quality_ratio * v_lo = {ceiling}; \
                 the model assumes no type is priced out of the public option",
                self.public_price
            )));
        }
        Ok(())
    }
}

/// The optimal posted-price mechanism at one capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanismSolution {
    pub capacity: f64,
    pub cutoff: f64,
    pub price: f64,
    pub rationing_prob: f64,
    /// Mass of buyers relying on the public option, `F(ϑ)`.
    pub induced_demand: f64,
    pub producer_surplus: f64,
    pub foc_residual: f64,
}

impl MechanismSolution {
    /// Allocation rule: the cutoff type buys.
    pub fn allocation(&self, v: f64) -> f64 {
        if v >= self.cutoff {
            1.0
        } else {
            0.0
        }
    }

    pub fn transfer(&self, v: f64) -> f64 {
        if v >= self.cutoff {
            self.price
        } else {
            0.0
        }
    }
}

fn check_cutoff_domain(dist: &RegularDistribution, k: f64, v: f64) -> Result<f64> {
    let lower = dist.quantile(k);
    if v > lower && v <= dist.v_hi() {
        Ok(lower)
    } else {
        Err(Error::Domain {
            what: "cutoff",
            value: v,
            domain: format!("({lower}, {}]", dist.v_hi()),
        })
    }
}

pub(crate) fn residual(dist: &RegularDistribution, k: f64, v: f64) -> f64 {
    let f = dist.cdf(v);
    k / f * dist.g(v) - dist.phi(v) * f
}

/// `r(v, k) = (k/F(v))·G(v) − φ(v)F(v)`, the first-order condition residual.
pub fn foc_residual(dist: &RegularDistribution, k: f64, v: f64) -> Result<f64> {
    check_capacity(k)?;
    if !dist.contains(v) || dist.cdf(v) <= 0.0 {
        return Err(Error::Domain {
            what: "FOC residual",
            value: v,
            domain: format!("({}, {}] with F(v) > 0", dist.v_lo(), dist.v_hi()),
        });
    }
    Ok(residual(dist, k, v))
}

/// Left end of the cutoff bracket, `max{v^M, F⁻¹(k)}`.
pub fn cutoff_lower_bound(dist: &RegularDistribution, k: f64) -> f64 {
    dist.standard_monopoly_price().max(dist.quantile(k))
}

pub fn solve_cutoff(dist: &RegularDistribution, k: f64) -> Result<f64> {
    solve_cutoff_with_tolerance(dist, k, CUTOFF_TOLERANCE)
}

/// Bisects `r(·, k)` on `[max{v^M, F⁻¹(k)}, v̄]` until the bracket is no
/// wider than `rel_tol·(v̄ − v̲)`.
pub fn solve_cutoff_with_tolerance(
    dist: &RegularDistribution,
    k: f64,
    rel_tol: f64,
) -> Result<f64> {
    check_capacity(k)?;
    dist.ensure_regular()?;
    let width = dist.width();
    let mut lo = cutoff_lower_bound(dist, k);
    let hi = dist.v_hi();
    let mut r_lo = residual(dist, k, lo);
    // r is analytically positive here; round-off can land it on zero
    let mut nudges = 0;
    while !(r_lo > 0.0) && nudges < 1000 {
        lo += 1e-13 * width;
        r_lo = residual(dist, k, lo);
        nudges += 1;
    }
    let r_hi = residual(dist, k, hi);
    if !(r_lo > 0.0 && r_hi < 0.0) {
        return Err(Error::Convergence(format!(
            "cutoff bracket [{lo}, {hi}] lacks the sign change: r = {r_lo}, {r_hi}"
        )));
    }
    bisect(|v| residual(dist, k, v), lo, hi, rel_tol * width)
}

/// Assembles the optimal mechanism from a cutoff.
pub fn mechanism_at_cutoff(dist: &RegularDistribution, k: f64, cutoff: f64) -> MechanismSolution {
    let induced_demand = dist.cdf(cutoff);
    let rationing_prob = k / induced_demand;
    let price = cutoff * (1.0 - rationing_prob);
    MechanismSolution {
        capacity: k,
        cutoff,
        price,
        rationing_prob,
        induced_demand,
        producer_surplus: price * dist.sf(cutoff),
        foc_residual: residual(dist, k, cutoff),
    }
}

pub fn solve_mechanism(dist: &RegularDistribution, k: f64) -> Result<MechanismSolution> {
    let cutoff = solve_cutoff(dist, k)?;
    Ok(mechanism_at_cutoff(dist, k, cutoff))
}

/// The `k → 0` limit: a standard monopoly posting `v^M`.
pub fn monopoly_only(dist: &RegularDistribution) -> MechanismSolution {
    let price = dist.standard_monopoly_price();
    MechanismSolution {
        capacity: 0.0,
        cutoff: price,
        price,
        rationing_prob: 0.0,
        induced_demand: dist.cdf(price),
        producer_surplus: price * dist.sf(price),
        foc_residual: 0.0,
    }
}

/// The `k → 1` limit: the monopolist is priced out and the public option
/// serves everyone.
pub fn full_capacity_limit(dist: &RegularDistribution) -> MechanismSolution {
    MechanismSolution {
        capacity: 1.0,
        cutoff: dist.v_hi(),
        price: 0.0,
        rationing_prob: 1.0,
        induced_demand: 1.0,
        producer_surplus: 0.0,
        foc_residual: 0.0,
    }
}

/// `R(v) = (1 − k/F(v))·v(1 − F(v))` on `(F⁻¹(k), v̄]`.
pub fn revenue_at_cutoff(dist: &RegularDistribution, k: f64, v: f64) -> Result<f64> {
    check_capacity(k)?;
    check_cutoff_domain(dist, k, v)?;
    Ok((1.0 - k / dist.cdf(v)) * v * dist.sf(v))
}

/// `C(v) = (k/F(v))·v(1 − F(v))`: revenue lost to the public option.
pub fn effective_cost(dist: &RegularDistribution, k: f64, v: f64) -> Result<f64> {
    check_capacity(k)?;
    check_cutoff_domain(dist, k, v)?;
    Ok(k / dist.cdf(v) * v * dist.sf(v))
}

/// `C′(v) = −(k/F(v)²)·G(v)·f(v)`.
pub fn effective_cost_slope(dist: &RegularDistribution, k: f64, v: f64) -> Result<f64> {
    check_capacity(k)?;
    check_cutoff_domain(dist, k, v)?;
    let f = dist.cdf(v);
    Ok(-k / (f * f) * dist.g(v) * dist.pdf(v))
}
