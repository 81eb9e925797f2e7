//! Brute-force cross-checks that share no code path with the analytic
//! solver: grid search over cutoffs and posted prices, direct IC/IR
//! verification from the payoff definition, randomised two-cutoff
//! mechanisms, and a finite-population market simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::distributions::RegularDistribution;
use crate::error::{check_capacity, Error, Result};
use crate::general::service_prob;
use crate::numeric::{bisect, CompensatedSum};
use crate::solver::{MarketParams, MechanismSolution};

/// Deterministic random stream addressed by `(seed, index)`.
///
/// Index `i` owns a fixed window of the ChaCha8 keystream, so any subset of
/// indices can be drawn in any order or on any thread with identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterStream {
    seed: u64,
}

impl CounterStream {
    /// 32-bit keystream words reserved per index (two `f64` draws).
    const WORDS_PER_INDEX: u128 = 4;

    pub fn new(seed: u64) -> Self {
        CounterStream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator positioned at the start of `index`'s window; draws past two
    /// `f64` values run into the next index's window.
    pub fn at(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(index as u128 * Self::WORDS_PER_INDEX);
        rng
    }

    /// The two uniforms in `[0, 1)` belonging to `index`.
    pub fn pair(&self, index: u64) -> (f64, f64) {
        let mut rng = self.at(index);
        (rng.random(), rng.random())
    }

    /// Fills `out[j]` with the pair of index `start + j`.
    pub fn fill_pairs(&self, start: u64, out: &mut [(f64, f64)]) {
        let mut rng = self.at(start);
        for slot in out.iter_mut() {
            *slot = (rng.random(), rng.random());
        }
    }
}

/// Argmax of `(1 − k/F(v))·v(1 − F(v))` over `n_points` evenly spaced
/// cutoffs in `(F⁻¹(k), v̄]`.
pub fn grid_argmax_revenue(dist: &RegularDistribution, k: f64, n_points: usize) -> Result<f64> {
    check_capacity(k)?;
    if n_points < 1001 {
        return Err(Error::Parameter(format!(
            "revenue grid needs at least 1001 points, got {n_points}"
        )));
    }
    let lo = dist.quantile(k);
    let step = (dist.v_hi() - lo) / n_points as f64;
    let mut best = (dist.v_hi(), f64::NEG_INFINITY);
    for i in 1..=n_points {
        let v = if i == n_points {
            dist.v_hi()
        } else {
            lo + step * i as f64
        };
        let f = dist.cdf(v);
        let revenue = (1.0 - k / f) * v * dist.sf(v);
        if revenue > best.1 {
            best = (v, revenue);
        }
    }
    Ok(best.0)
}

/// Largest incentive and participation violations on a type grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcReport {
    pub max_ic_violation: f64,
    pub max_ir_violation: f64,
    /// `(true type, report)` attaining the IC violation.
    pub worst_pair: (f64, f64),
}

/// Checks truthful reporting and participation for a cutoff mechanism
/// directly from the payoff
/// `U(v̂, v) = [x(v̂) + (1 − x(v̂))·min{1, k/q}]·v − t(v̂)`, with the
/// induced demand `q` fixed at the mechanism's truthful value.
pub fn verify_ic_ir(
    dist: &RegularDistribution,
    k: f64,
    mech: &MechanismSolution,
    n_types: usize,
) -> Result<IcReport> {
    check_capacity(k)?;
    if n_types < 101 {
        return Err(Error::Parameter(format!(
            "type grid needs at least 101 points, got {n_types}"
        )));
    }
    let q = dist.cdf(mech.cutoff);
    let public = if q <= k { 1.0 } else { k / q };
    let mut types: Vec<f64> = (0..n_types)
        .map(|i| dist.v_lo() + dist.width() * i as f64 / (n_types - 1) as f64)
        .collect();
    types.push(mech.cutoff);
    types.sort_by(f64::total_cmp);

    let payoff = |report: f64, v: f64| {
        let x = mech.allocation(report);
        (x + (1.0 - x) * public) * v - mech.transfer(report)
    };
    let mut report = IcReport {
        max_ic_violation: 0.0,
        max_ir_violation: 0.0,
        worst_pair: (types[0], types[0]),
    };
    for &v in &types {
        let truthful = payoff(v, v);
        let ir_gap = v * public - truthful;
        if ir_gap > report.max_ir_violation {
            report.max_ir_violation = ir_gap;
        }
        for &r in &types {
            let gap = payoff(r, v) - truthful;
            if gap > report.max_ic_violation {
                report.max_ic_violation = gap;
                report.worst_pair = (v, r);
            }
        }
    }
    Ok(report)
}

/// Revenue curve of posted prices with buyers best-responding.
#[derive(Debug, Clone, PartialEq)]
pub struct PostedPriceScan {
    pub best_price: f64,
    pub best_revenue: f64,
    pub price_curve: Vec<(f64, f64)>,
}

/// Equilibrium buyer cutoff at posted price `p`: the type indifferent
/// between paying `p` and queueing, `c(1 − min{1, k/F(c)}) = p`.
pub fn buyer_cutoff(dist: &RegularDistribution, k: f64, price: f64) -> Result<f64> {
    check_capacity(k)?;
    let ceiling = dist.v_hi() * (1.0 - k);
    if price <= 0.0 {
        return Ok(dist.v_lo());
    }
    if price >= ceiling {
        return Ok(dist.v_hi());
    }
    let indifference = |c: f64| c * (1.0 - service_prob(dist, k, c)) - price;
    bisect(
        indifference,
        dist.quantile(k),
        dist.v_hi(),
        1e-14 * dist.width(),
    )
}

/// Scans `n_prices` prices on `[0, v̄(1 − k)]`; above that range nobody buys.
pub fn posted_price_best_response(
    dist: &RegularDistribution,
    k: f64,
    n_prices: usize,
) -> Result<PostedPriceScan> {
    check_capacity(k)?;
    if n_prices < 1001 {
        return Err(Error::Parameter(format!(
            "price grid needs at least 1001 points, got {n_prices}"
        )));
    }
    let ceiling = dist.v_hi() * (1.0 - k);
    let mut price_curve = Vec::with_capacity(n_prices);
    for i in 0..n_prices {
        let p = ceiling * i as f64 / (n_prices - 1) as f64;
        let c = buyer_cutoff(dist, k, p)?;
        price_curve.push((p, p * dist.sf(c)));
    }
    let (best_price, best_revenue) = price_curve.iter().cloned().fold(
        (0.0, f64::NEG_INFINITY),
        |a, b| if b.1 > a.1 { b } else { a },
    );
    Ok(PostedPriceScan {
        best_price,
        best_revenue,
        price_curve,
    })
}

/// Revenue of the randomised mechanism `α·1[v ≥ v1] + (1 − α)·1[v ≥ v2]`
/// whose induced demand is `q`, so `α = (F(v2) − q)/(F(v2) − F(v1))`.
/// With `v1 = v2` this is the step mechanism at that cutoff.
pub fn two_step_revenue(
    dist: &RegularDistribution,
    params: &MarketParams,
    q: f64,
    v1: f64,
    v2: f64,
) -> f64 {
    let m = if q <= params.capacity {
        1.0
    } else {
        params.capacity / q
    };
    let scale = 1.0 - params.quality_ratio * m;
    let tail = |v: f64| v * dist.sf(v);
    let virtual_mass = if v1 == v2 {
        tail(v1)
    } else {
        let (f1, f2) = (dist.cdf(v1), dist.cdf(v2));
        let alpha = (f2 - q) / (f2 - f1);
        tail(v2) + alpha * (tail(v1) - tail(v2))
    };
    scale * virtual_mass + params.public_price * m * (1.0 - q)
}

/// Draws `n_trials` two-cutoff mechanisms straddling the optimal cutoff with
/// matched induced demand and returns the largest revenue excess over the
/// optimal step mechanism.
pub fn two_step_dominance_check(
    dist: &RegularDistribution,
    k: f64,
    n_trials: usize,
    seed: u64,
) -> Result<f64> {
    if n_trials < 100 {
        return Err(Error::Parameter(format!(
            "need at least 100 trials, got {n_trials}"
        )));
    }
    let cutoff = crate::solver::solve_cutoff(dist, k)?;
    let params = MarketParams::baseline(k);
    let q = dist.cdf(cutoff);
    let step = two_step_revenue(dist, &params, q, cutoff, cutoff);
    let stream = CounterStream::new(seed);
    let mut max_excess = f64::NEG_INFINITY;
    for t in 0..n_trials as u64 {
        let (a, b) = stream.pair(t);
        let v1 = dist.v_lo() + a * (cutoff - dist.v_lo());
        let v2 = dist.v_hi() - b * (dist.v_hi() - cutoff);
        if !(v1 < cutoff && v2 > cutoff) {
            continue;
        }
        let excess = two_step_revenue(dist, &params, q, v1, v2) - step;
        max_excess = max_excess.max(excess);
    }
    Ok(max_excess)
}

/// Aggregates of one simulated market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationResult {
    pub n_buyers: usize,
    pub seed: u64,
    pub price: f64,
    /// Share of buyers relying on the public option.
    pub realized_demand_share: f64,
    /// Lottery probability `min{1, k/q}` implied by the realized demand.
    pub service_prob: f64,
    /// Fraction of public-option applicants who won the lottery.
    pub realized_rationing_prob: f64,
    /// Revenue per buyer.
    pub realized_revenue: f64,
    pub mean_consumer_surplus: f64,
    pub std_error_cs: f64,
    pub std_error_revenue: f64,
    pub std_error_rationing: f64,
}

const SIM_CHUNK: usize = 8192;

fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().cloned().collect::<CompensatedSum>().value() / n;
    let var = xs
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .collect::<CompensatedSum>()
        .value()
        / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Simulates `n_buyers` buyers facing posted `price` and a public option of
/// capacity `k`.
///
/// Values are drawn by inverse transform from the `(seed, buyer)` stream.
/// Buyers are admitted to the monopolist in decreasing order of value while
/// the next one still prefers paying `price` to queueing, given the demand
/// share that results once they leave the queue. That process only grows the
/// buyer set and stops at the finite-population equilibrium. Everyone else
/// enters the rationing lottery with the buyer's second draw.
pub fn simulate_market(
    dist: &RegularDistribution,
    k: f64,
    price: f64,
    n_buyers: usize,
    seed: u64,
) -> Result<SimulationResult> {
    check_capacity(k)?;
    if n_buyers < 1000 {
        return Err(Error::Parameter(format!(
            "simulation needs at least 1000 buyers, got {n_buyers}"
        )));
    }
    let stream = CounterStream::new(seed);
    let mut draws = vec![(0.0, 0.0); n_buyers];
    draws
        .par_chunks_mut(SIM_CHUNK)
        .enumerate()
        .for_each(|(c, chunk)| stream.fill_pairs((c * SIM_CHUNK) as u64, chunk));
    let values: Vec<f64> = draws.par_iter().map(|&(u, _)| dist.quantile(u)).collect();

    let mut order: Vec<u32> = (0..n_buyers as u32).collect();
    // total order: value descending, index ascending
    order.par_sort_unstable_by(|&a, &b| {
        values[b as usize]
            .total_cmp(&values[a as usize])
            .then(a.cmp(&b))
    });

    let n = n_buyers as f64;
    let serve = |buyers: usize| {
        let queue = (n_buyers - buyers) as f64 / n;
        if queue <= k {
            1.0
        } else {
            k / queue
        }
    };
    let mut buyers = 0usize;
    let mut steps = 0usize;
    while buyers < n_buyers {
        let v = values[order[buyers] as usize];
        if v * (1.0 - serve(buyers + 1)) >= price {
            buyers += 1;
        } else {
            break;
        }
        steps += 1;
        if steps > n_buyers {
            return Err(Error::Convergence("buyer set failed to stabilise".into()));
        }
    }

    let mut buys = vec![false; n_buyers];
    for &i in &order[..buyers] {
        buys[i as usize] = true;
    }
    let service = serve(buyers);
    let applicants = n_buyers - buyers;

    let mut payments = Vec::with_capacity(n_buyers);
    let mut surplus = Vec::with_capacity(n_buyers);
    let mut winners = 0usize;
    for i in 0..n_buyers {
        let v = values[i];
        if buys[i] {
            payments.push(price);
            surplus.push(v - price);
        } else {
            payments.push(0.0);
            let won = draws[i].1 < service;
            winners += won as usize;
            surplus.push(if won { v } else { 0.0 });
        }
    }
    let (revenue, se_revenue) = mean_and_std_error(&payments);
    let (mean_cs, se_cs) = mean_and_std_error(&surplus);

    let demand_share = applicants as f64 / n;
    let (rationing, se_rationing) = if applicants == 0 {
        (1.0, 0.0)
    } else {
        let p = winners as f64 / applicants as f64;
        let lottery_var = p * (1.0 - p) / applicants as f64;
        // delta-method term for sampling noise in the demand share
        let demand_var = if demand_share > k {
            let slope = k / (demand_share * demand_share);
            slope * slope * demand_share * (1.0 - demand_share) / n
        } else {
            0.0
        };
        (p, (lottery_var + demand_var).sqrt())
    };

    Ok(SimulationResult {
        n_buyers,
        seed,
        price,
        realized_demand_share: demand_share,
        service_prob: service,
        realized_rationing_prob: rationing,
        realized_revenue: revenue,
        mean_consumer_surplus: mean_cs,
        std_error_cs: se_cs,
        std_error_revenue: se_revenue,
        std_error_rationing: se_rationing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_cutoff, solve_mechanism};

    fn u01() -> RegularDistribution {
        RegularDistribution::uniform(0.0, 1.0).unwrap()
    }

    fn u12() -> RegularDistribution {
        RegularDistribution::uniform(1.0, 2.0).unwrap()
    }

    #[test]
    fn counter_stream_is_index_addressable() {
        let s = CounterStream::new(7);
        let mut block = vec![(0.0, 0.0); 20];
        s.fill_pairs(5, &mut block);
        for (j, pair) in block.iter().enumerate() {
            assert_eq!(*pair, s.pair(5 + j as u64));
        }
        assert_ne!(s.pair(0), CounterStream::new(8).pair(0));
        let (a, b) = s.pair(3);
        assert!((0.0..1.0).contains(&a) && (0.0..1.0).contains(&b));
    }

    #[test]
    fn grid_argmax_examples() {
        let step = |lo: f64, hi: f64| (hi - lo) / 10_001.0;
        let v = grid_argmax_revenue(&u01(), 0.5, 10_001).unwrap();
        assert!((v - 0.75).abs() <= step(0.5, 1.0));
        let v = grid_argmax_revenue(&u01(), 0.9, 10_001).unwrap();
        assert!((v - 0.95).abs() <= step(0.9, 1.0));
        let v = grid_argmax_revenue(&u12(), 0.5, 10_001).unwrap();
        assert!((v - solve_cutoff(&u12(), 0.5).unwrap()).abs() <= step(1.5, 2.0));
        assert!(grid_argmax_revenue(&u01(), 0.5, 1000).is_err());
    }

    #[test]
    fn optimal_mechanism_is_ic_and_ir() {
        let d = u01();
        let m = solve_mechanism(&d, 0.5).unwrap();
        let r = verify_ic_ir(&d, 0.5, &m, 501).unwrap();
        assert!(r.max_ic_violation <= 1e-12);
        assert!(r.max_ir_violation <= 1e-12);
    }

    #[test]
    fn price_perturbation_breaks_ic_just_above_cutoff() {
        let d = u01();
        let mut m = solve_mechanism(&d, 0.5).unwrap();
        m.price += 0.05;
        let r = verify_ic_ir(&d, 0.5, &m, 501).unwrap();
        assert!(r.max_ic_violation > 0.0);
        let (v, report) = r.worst_pair;
        assert!(v >= m.cutoff && report < m.cutoff);
    }

    #[test]
    fn cutoff_type_is_indifferent() {
        let d = u12();
        let m = solve_mechanism(&d, 0.4).unwrap();
        let buy = m.cutoff - m.price;
        let queue = m.rationing_prob * m.cutoff;
        assert!((buy - queue).abs() <= 1e-12);
    }

    #[test]
    fn posted_price_examples() {
        let d = u01();
        let scan = posted_price_best_response(&d, 0.5, 1001).unwrap();
        let step = 0.5 / 1000.0;
        assert!((scan.best_price - 0.25).abs() <= step);
        assert_eq!(scan.price_curve[0], (0.0, 0.0));

        let d = u12();
        let scan = posted_price_best_response(&d, 0.01, 1001).unwrap();
        let step = 2.0 * 0.99 / 1000.0;
        let p = solve_mechanism(&d, 0.01).unwrap().price;
        assert!((scan.best_price - p).abs() <= step);
        assert!((scan.best_price - 1.10).abs() < 0.01);
    }

    #[test]
    fn buyer_cutoff_inverts_the_optimal_price() {
        for d in [u01(), u12()] {
            let m = solve_mechanism(&d, 0.3).unwrap();
            assert!((buyer_cutoff(&d, 0.3, m.price).unwrap() - m.cutoff).abs() < 1e-10);
        }
    }

    #[test]
    fn two_step_examples() {
        let d = u01();
        assert!(two_step_dominance_check(&d, 0.5, 1000, 1).unwrap() <= 0.0);
        assert!(two_step_dominance_check(&u12(), 0.3, 1000, 2).unwrap() <= 0.0);
        let cutoff = solve_cutoff(&d, 0.5).unwrap();
        let q = d.cdf(cutoff);
        let params = MarketParams::baseline(0.5);
        let step = two_step_revenue(&d, &params, q, cutoff, cutoff);
        assert!((step - 0.0625).abs() < 1e-11);
        assert_eq!(two_step_revenue(&d, &params, q, cutoff, cutoff) - step, 0.0);
    }

    #[test]
    fn simulation_matches_analytic_values() {
        let d = u01();
        let m = solve_mechanism(&d, 0.5).unwrap();
        let sim = simulate_market(&d, 0.5, m.price, 200_000, 11).unwrap();
        assert!((sim.mean_consumer_surplus - 0.34375).abs() < 3.0 * sim.std_error_cs);
        assert!((sim.realized_rationing_prob - 2.0 / 3.0).abs() < 3.0 * sim.std_error_rationing);
        assert!((sim.realized_revenue - 0.0625).abs() < 3.0 * sim.std_error_revenue);
        assert!(sim.std_error_cs > 0.0);
    }

    #[test]
    fn nobody_buys_above_the_top_value() {
        let d = u01();
        let sim = simulate_market(&d, 0.4, 1.0, 50_000, 3).unwrap();
        assert_eq!(sim.realized_revenue, 0.0);
        assert_eq!(sim.realized_demand_share, 1.0);
        assert_eq!(sim.service_prob, 0.4);
        assert!((sim.realized_rationing_prob - 0.4).abs() < 3.0 * sim.std_error_rationing);
    }

    #[test]
    fn simulation_is_deterministic_per_seed() {
        let d = u12();
        let a = simulate_market(&d, 0.3, 0.8, 20_000, 5).unwrap();
        let b = simulate_market(&d, 0.3, 0.8, 20_000, 5).unwrap();
        assert_eq!(a, b);
        let c = simulate_market(&d, 0.3, 0.8, 20_000, 6).unwrap();
        assert_ne!(a, c);
        assert!(simulate_market(&d, 0.3, 0.8, 999, 5).is_err());
    }
}
