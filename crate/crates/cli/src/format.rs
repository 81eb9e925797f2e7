use std::io::{self, Write};

use mixmarket_core::oracle::SimulationResult;
use mixmarket_core::SweepRow;

pub const SWEEP_HEADER: &str = "k,cutoff,rationing_prob,price,producer_surplus,consumer_surplus,\
total_surplus,theta_prime,pi_prime,p_prime,P_prime,foc_residual";
pub const SURPLUS_HEADER: &str = "v,surplus_mixed,surplus_monopoly_only,surplus_public_only";
pub const SIMULATION_HEADER: &str =
    "seed,n_buyers,realized_demand_share,realized_rationing_prob,realized_revenue,mean_cs,stderr_cs";

/// CSV number: 17 significant digits in scientific notation.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Six significant digits with trailing zeros dropped, like C's `%g`.
pub fn short(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!(
            "{}e{sign}{:02}",
            trim_zeros(mantissa.to_string()),
            exp.abs()
        )
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_row(out: &mut dyn Write, values: &[f64]) -> io::Result<()> {
    let cells: Vec<String> = values.iter().map(|&v| num(v)).collect();
    out.write_all(cells.join(",").as_bytes())?;
    out.write_all(b"\n")
}

pub fn write_sweep(out: &mut dyn Write, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        write_row(
            out,
            &[
                r.k,
                r.cutoff,
                r.rationing_prob,
                r.price,
                r.producer_surplus,
                r.consumer_surplus,
                r.total_surplus,
                r.cutoff_slope,
                r.rationing_slope,
                r.price_slope,
                r.producer_surplus_slope,
                r.foc_residual,
            ],
        )?;
    }
    Ok(())
}

pub fn write_simulation(out: &mut dyn Write, results: &[SimulationResult]) -> io::Result<()> {
    writeln!(out, "{SIMULATION_HEADER}")?;
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.seed,
            r.n_buyers,
            num(r.realized_demand_share),
            num(r.realized_rationing_prob),
            num(r.realized_revenue),
            num(r.mean_consumer_surplus),
            num(r.std_error_cs)
        )?;
    }
    Ok(())
}
