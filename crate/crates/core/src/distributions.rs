//! Buyer value distributions on a compact support and the screening
//! quantities derived from them: virtual value, its slope, the standard
//! monopoly price, and the function `G(v) = φ(v)F(v) + ∫_v^v̄ φ dF`.
//!
//! Every family is evaluated in closed form except the truncated normal
//! quantile, which is inverted numerically. The tail integral
//! `∫_v^v̄ φ dF = v(1 − F(v))` lets `G` collapse to `v − F(1 − F)/f`, so no
//! quadrature appears on hot paths.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use statrs::function::erf::erfc;

use crate::error::{domain, Error, Result};
use crate::numeric::bisect;

/// Grid size used for the regularity check run at construction.
pub const DEFAULT_REGULARITY_GRID: usize = 10_001;

/// Parametric family of a value distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Uniform,
    /// Density proportional to `intercept + slope·v` on the support.
    LinearDensity {
        intercept: f64,
        slope: f64,
    },
    /// `F(v) = ((v − v_lo)/(v_hi − v_lo))^exponent`, `exponent ≥ 1`.
    Power {
        exponent: f64,
    },
    /// Exponential with the given rate, truncated to the support.
    TruncatedExponential {
        rate: f64,
    },
    /// Normal(mean, std_dev) truncated to the support.
    TruncatedNormal {
        mean: f64,
        std_dev: f64,
    },
    /// Continuous piecewise-linear density through `(v, height)` knots.
    /// Heights are renormalised to unit mass; the first and last knots must
    /// sit on the support endpoints.
    PiecewiseLinear {
        knots: Vec<(f64, f64)>,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Uniform => "uniform",
            Family::LinearDensity { .. } => "linear_density",
            Family::Power { .. } => "power",
            Family::TruncatedExponential { .. } => "truncated_exponential",
            Family::TruncatedNormal { .. } => "truncated_normal",
            Family::PiecewiseLinear { .. } => "piecewise_linear",
        }
    }
}

/// Outcome of a grid check of `φ′ > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub is_regular: bool,
    pub min_phi_slope: f64,
    pub failing_points: Vec<f64>,
    pub grid_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Uniform {
        width: f64,
    },
    Linear {
        intercept: f64,
        slope: f64,
        mass: f64,
    },
    Power {
        exponent: f64,
        width: f64,
    },
    TruncExp {
        rate: f64,
        width: f64,
        // expm1(−rate·width)
        em1_total: f64,
    },
    TruncNormal {
        mean: f64,
        std_dev: f64,
        a: f64,
        b: f64,
        mass: f64,
    },
    Piecewise {
        xs: Vec<f64>,
        ys: Vec<f64>,
        cum: Vec<f64>,
    },
}

/// A value distribution `F` on `[v_lo, v_hi]` with positive differentiable
/// density.
///
/// Regularity (strictly increasing virtual value) is checked on a grid when
/// the distribution is built. Non-regular distributions can still be
/// constructed and queried, but the solver entry points refuse them.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularDistribution {
    v_lo: f64,
    v_hi: f64,
    family: Family,
    shape: Shape,
    monopoly_price: f64,
    regularity: RegularityReport,
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

impl RegularDistribution {
    pub fn new(family: Family, v_lo: f64, v_hi: f64) -> Result<Self> {
        if !(v_lo.is_finite() && v_hi.is_finite()) || v_lo < 0.0 || v_hi <= v_lo {
            return Err(Error::Parameter(format!(
                "support [{v_lo}, {v_hi}] must satisfy 0 <= v_lo < v_hi"
            )));
        }
        let width = v_hi - v_lo;
        let shape = match &family {
            Family::Uniform => Shape::Uniform { width },
            Family::LinearDensity { intercept, slope } => {
                let (a, b) = (*intercept, *slope);
                if !(a.is_finite() && b.is_finite()) || a + b * v_lo <= 0.0 || a + b * v_hi <= 0.0 {
                    return Err(Error::Parameter(format!(
                        "linear density {a} + {b}·v must be positive on [{v_lo}, {v_hi}]"
                    )));
                }
                let mass = width * (a + 0.5 * b * (v_lo + v_hi));
                Shape::Linear {
                    intercept: a,
                    slope: b,
                    mass,
                }
            }
            Family::Power { exponent } => {
                if !(exponent.is_finite() && *exponent >= 1.0) {
                    return Err(Error::Parameter(format!(
                        "power exponent {exponent} must be >= 1"
                    )));
                }
                Shape::Power {
                    exponent: *exponent,
                    width,
                }
            }
            Family::TruncatedExponential { rate } => {
                if !rate.is_finite() || *rate == 0.0 {
                    return Err(Error::Parameter(format!(
                        "exponential rate {rate} must be finite and non-zero"
                    )));
                }
                Shape::TruncExp {
                    rate: *rate,
                    width,
                    em1_total: (-rate * width).exp_m1(),
                }
            }
            Family::TruncatedNormal { mean, std_dev } => {
                if !(mean.is_finite() && std_dev.is_finite()) || *std_dev <= 0.0 {
                    return Err(Error::Parameter(format!(
                        "normal parameters mean {mean}, std_dev {std_dev} invalid"
                    )));
                }
                let a = (v_lo - mean) / std_dev;
                let b = (v_hi - mean) / std_dev;
                let mass = if a > 0.0 {
                    std_normal_sf(a) - std_normal_sf(b)
                } else {
                    std_normal_cdf(b) - std_normal_cdf(a)
                };
                if !(mass > 0.0) {
                    return Err(Error::Parameter(format!(
                        "normal({mean}, {std_dev}) has no mass on [{v_lo}, {v_hi}]"
                    )));
                }
                Shape::TruncNormal {
                    mean: *mean,
                    std_dev: *std_dev,
                    a,
                    b,
                    mass,
                }
            }
            Family::PiecewiseLinear { knots } => piecewise_shape(knots, v_lo, v_hi)?,
        };
        let mut dist = RegularDistribution {
            v_lo,
            v_hi,
            family,
            shape,
            monopoly_price: v_lo,
            regularity: RegularityReport {
                is_regular: false,
                min_phi_slope: f64::NAN,
                failing_points: Vec::new(),
                grid_size: 0,
            },
        };
        dist.monopoly_price = dist.compute_monopoly_price()?;
        dist.regularity = dist.check_regularity(DEFAULT_REGULARITY_GRID)?;
        Ok(dist)
    }

    pub fn uniform(v_lo: f64, v_hi: f64) -> Result<Self> {
        Self::new(Family::Uniform, v_lo, v_hi)
    }

    pub fn linear_density(intercept: f64, slope: f64, v_lo: f64, v_hi: f64) -> Result<Self> {
        Self::new(Family::LinearDensity { intercept, slope }, v_lo, v_hi)
    }

    /// Power family `F(v) = v^c` on the unit interval.
    pub fn power(exponent: f64) -> Result<Self> {
        Self::new(Family::Power { exponent }, 0.0, 1.0)
    }

    pub fn truncated_exponential(rate: f64, v_lo: f64, v_hi: f64) -> Result<Self> {
        Self::new(Family::TruncatedExponential { rate }, v_lo, v_hi)
    }

    pub fn truncated_normal(mean: f64, std_dev: f64, v_lo: f64, v_hi: f64) -> Result<Self> {
        Self::new(Family::TruncatedNormal { mean, std_dev }, v_lo, v_hi)
    }

    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Result<Self> {
        let (lo, hi) = match (knots.first(), knots.last()) {
            (Some(first), Some(last)) => (first.0, last.0),
            _ => return Err(Error::Parameter("piecewise density needs knots".into())),
        };
        Self::new(Family::PiecewiseLinear { knots }, lo, hi)
    }

    pub fn v_lo(&self) -> f64 {
        self.v_lo
    }

    pub fn v_hi(&self) -> f64 {
        self.v_hi
    }

    pub fn width(&self) -> f64 {
        self.v_hi - self.v_lo
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.v_lo && v <= self.v_hi
    }

    /// Regularity report computed at construction.
    pub fn regularity(&self) -> &RegularityReport {
        &self.regularity
    }

    pub fn is_regular(&self) -> bool {
        self.regularity.is_regular
    }

    /// Rejects distributions that failed the construction-time check.
    pub fn ensure_regular(&self) -> Result<()> {
        if self.regularity.is_regular {
            Ok(())
        } else {
            Err(Error::NotRegular {
                min_slope: self.regularity.min_phi_slope,
                failing: self.regularity.failing_points.len(),
            })
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        if v <= self.v_lo {
            return 0.0;
        }
        if v >= self.v_hi {
            return 1.0;
        }
        match &self.shape {
            Shape::Uniform { width } => (v - self.v_lo) / width,
            Shape::Linear {
                intercept,
                slope,
                mass,
            } => (v - self.v_lo) * (intercept + 0.5 * slope * (v + self.v_lo)) / mass,
            Shape::Power { exponent, width } => ((v - self.v_lo) / width).powf(*exponent),
            Shape::TruncExp {
                rate, em1_total, ..
            } => (-rate * (v - self.v_lo)).exp_m1() / em1_total,
            Shape::TruncNormal {
                mean,
                std_dev,
                a,
                mass,
                ..
            } => {
                let z = (v - mean) / std_dev;
                if *a > 0.0 {
                    (std_normal_sf(*a) - std_normal_sf(z)) / mass
                } else {
                    (std_normal_cdf(z) - std_normal_cdf(*a)) / mass
                }
            }
            Shape::Piecewise { xs, ys, cum } => {
                let j = segment(xs, v);
                let t = v - xs[j];
                let s = (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j]);
                cum[j] + t * (ys[j] + 0.5 * s * t)
            }
        }
    }

    /// Survival function `1 − F(v)`, evaluated without cancellation where
    /// the family allows it.
    pub fn sf(&self, v: f64) -> f64 {
        if v <= self.v_lo {
            return 1.0;
        }
        if v >= self.v_hi {
            return 0.0;
        }
        match &self.shape {
            Shape::Uniform { width } => (self.v_hi - v) / width,
            Shape::Linear {
                intercept,
                slope,
                mass,
            } => (self.v_hi - v) * (intercept + 0.5 * slope * (v + self.v_hi)) / mass,
            Shape::Power { exponent, width } => {
                let x = (v - self.v_lo) / width;
                -(exponent * x.ln()).exp_m1()
            }
            Shape::TruncExp {
                rate,
                width,
                em1_total,
            } => {
                let x = v - self.v_lo;
                (-rate * x).exp() * (-rate * (width - x)).exp_m1() / em1_total
            }
            Shape::TruncNormal {
                mean,
                std_dev,
                b,
                mass,
                ..
            } => {
                let z = (v - mean) / std_dev;
                if z > 0.0 {
                    (std_normal_sf(z) - std_normal_sf(*b)) / mass
                } else {
                    (std_normal_cdf(*b) - std_normal_cdf(z)) / mass
                }
            }
            Shape::Piecewise { .. } => 1.0 - self.cdf(v),
        }
    }

    /// Density; zero outside the support.
    pub fn pdf(&self, v: f64) -> f64 {
        if !self.contains(v) {
            return 0.0;
        }
        match &self.shape {
            Shape::Uniform { width } => 1.0 / width,
            Shape::Linear {
                intercept,
                slope,
                mass,
            } => (intercept + slope * v) / mass,
            Shape::Power { exponent, width } => {
                let x = (v - self.v_lo) / width;
                exponent * x.powf(exponent - 1.0) / width
            }
            Shape::TruncExp {
                rate, em1_total, ..
            } => -rate * (-rate * (v - self.v_lo)).exp() / em1_total,
            Shape::TruncNormal {
                mean,
                std_dev,
                mass,
                ..
            } => std_normal_pdf((v - mean) / std_dev) / (std_dev * mass),
            Shape::Piecewise { xs, ys, .. } => {
                let j = segment(xs, v);
                let s = (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j]);
                ys[j] + s * (v - xs[j])
            }
        }
    }

    /// Derivative of the density (right derivative at piecewise knots).
    pub fn pdf_derivative(&self, v: f64) -> f64 {
        if !self.contains(v) {
            return 0.0;
        }
        match &self.shape {
            Shape::Uniform { .. } => 0.0,
            Shape::Linear { slope, mass, .. } => slope / mass,
            Shape::Power { exponent, width } => {
                if *exponent == 1.0 {
                    0.0
                } else {
                    let x = (v - self.v_lo) / width;
                    exponent * (exponent - 1.0) * x.powf(exponent - 2.0) / (width * width)
                }
            }
            Shape::TruncExp { rate, .. } => -rate * self.pdf(v),
            Shape::TruncNormal { mean, std_dev, .. } => {
                let z = (v - mean) / std_dev;
                -z / std_dev * self.pdf(v)
            }
            Shape::Piecewise { xs, ys, .. } => {
                let j = segment(xs, v);
                (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j])
            }
        }
    }

    /// Inverse CDF; `u` is clamped to `[0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return self.v_lo;
        }
        if u >= 1.0 {
            return self.v_hi;
        }
        let v = match &self.shape {
            Shape::Uniform { width } => self.v_lo + u * width,
            Shape::Linear {
                intercept,
                slope,
                mass,
            } => {
                let c = u * mass;
                let base = intercept + slope * self.v_lo;
                self.v_lo + 2.0 * c / (base + (base * base + 2.0 * slope * c).sqrt())
            }
            Shape::Power { exponent, width } => self.v_lo + width * u.powf(1.0 / exponent),
            Shape::TruncExp {
                rate, em1_total, ..
            } => self.v_lo - (u * em1_total).ln_1p() / rate,
            Shape::TruncNormal { .. } => {
                let tol = 1e-15 * self.width();
                bisect(|v| self.cdf(v) - u, self.v_lo, self.v_hi, tol).unwrap_or(self.v_lo)
            }
            Shape::Piecewise { xs, ys, cum } => {
                let j = cum.partition_point(|&c| c <= u).clamp(1, xs.len() - 1) - 1;
                let c = u - cum[j];
                let s = (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j]);
                xs[j] + 2.0 * c / (ys[j] + (ys[j] * ys[j] + 2.0 * s * c).max(0.0).sqrt())
            }
        };
        v.clamp(self.v_lo, self.v_hi)
    }

    /// Hazard rate `f/(1 − F)`; infinite at `v_hi`.
    pub fn hazard_rate(&self, v: f64) -> f64 {
        let s = self.sf(v);
        if s <= 0.0 {
            f64::INFINITY
        } else {
            self.pdf(v) / s
        }
    }

    fn check_support(&self, what: &'static str, v: f64) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(domain(what, v, self.v_lo, self.v_hi))
        }
    }

    /// `φ(v) = v − (1 − F(v))/f(v)`, with `φ(v_hi) = v_hi`.
    pub fn virtual_value(&self, v: f64) -> Result<f64> {
        self.check_support("virtual value", v)?;
        Ok(self.phi(v))
    }

    /// `φ′(v) = 2 + (1 − F) f′/f²`.
    pub fn virtual_value_slope(&self, v: f64) -> Result<f64> {
        self.check_support("virtual value slope", v)?;
        Ok(self.phi_slope(v))
    }

    /// `G(v) = φ(v)F(v) + v(1 − F(v))`.
    pub fn g_function(&self, v: f64) -> Result<f64> {
        self.check_support("G", v)?;
        Ok(self.g(v))
    }

    /// `G′(v) = φ′(v)F(v)`.
    pub fn g_slope(&self, v: f64) -> Result<f64> {
        self.check_support("G slope", v)?;
        Ok(self.g_prime(v))
    }

    /// Standard monopoly price `v^M = min{v : φ(v) ≥ 0}`.
    pub fn standard_monopoly_price(&self) -> f64 {
        self.monopoly_price
    }

    pub(crate) fn phi(&self, v: f64) -> f64 {
        if v >= self.v_hi {
            return self.v_hi;
        }
        v - self.sf(v) / self.pdf(v)
    }

    pub(crate) fn phi_slope(&self, v: f64) -> f64 {
        if v >= self.v_hi {
            return 2.0;
        }
        let f = self.pdf(v);
        let df = self.pdf_derivative(v);
        if f == 0.0 && df >= 0.0 {
            // φ rises out of −∞ where the density vanishes
            return f64::INFINITY;
        }
        2.0 + self.sf(v) * df / (f * f)
    }

    pub(crate) fn g(&self, v: f64) -> f64 {
        if v <= self.v_lo {
            return self.v_lo;
        }
        if v >= self.v_hi {
            return self.v_hi;
        }
        v - self.cdf(v) * self.sf(v) / self.pdf(v)
    }

    pub(crate) fn g_prime(&self, v: f64) -> f64 {
        if v <= self.v_lo {
            return 0.0;
        }
        self.phi_slope(v) * self.cdf(v)
    }

    fn compute_monopoly_price(&self) -> Result<f64> {
        if self.phi(self.v_lo) >= 0.0 {
            return Ok(self.v_lo);
        }
        bisect(|v| self.phi(v), self.v_lo, self.v_hi, 1e-12)
    }

    /// Evaluates `φ′` on a uniform grid of `grid_size` points and reports
    /// every point where it is not strictly positive.
    pub fn check_regularity(&self, grid_size: usize) -> Result<RegularityReport> {
        if grid_size < 101 {
            return Err(Error::Parameter(format!(
                "regularity grid needs at least 101 points, got {grid_size}"
            )));
        }
        let step = self.width() / (grid_size - 1) as f64;
        let mut min_phi_slope = f64::INFINITY;
        let mut failing_points = Vec::new();
        for i in 0..grid_size {
            let v = if i + 1 == grid_size {
                self.v_hi
            } else {
                self.v_lo + step * i as f64
            };
            let slope = self.phi_slope(v);
            let slope = if slope.is_nan() {
                f64::NEG_INFINITY
            } else {
                slope
            };
            min_phi_slope = min_phi_slope.min(slope);
            if slope <= 0.0 {
                failing_points.push(v);
            }
        }
        Ok(RegularityReport {
            is_regular: min_phi_slope > 0.0,
            min_phi_slope,
            failing_points,
            grid_size,
        })
    }
}

fn segment(xs: &[f64], v: f64) -> usize {
    xs.partition_point(|&x| x <= v).clamp(1, xs.len() - 1) - 1
}

fn piecewise_shape(knots: &[(f64, f64)], v_lo: f64, v_hi: f64) -> Result<Shape> {
    if knots.len() < 2 {
        return Err(Error::Parameter(
            "piecewise density needs at least two knots".into(),
        ));
    }
    if knots[0].0 != v_lo || knots[knots.len() - 1].0 != v_hi {
        return Err(Error::Parameter(format!(
            "piecewise knots must span the support [{v_lo}, {v_hi}]"
        )));
    }
    for w in knots.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::Parameter(
                "piecewise knots must be strictly increasing".into(),
            ));
        }
    }
    if knots.iter().any(|&(_, y)| !(y > 0.0 && y.is_finite())) {
        return Err(Error::Parameter(
            "piecewise density heights must be positive".into(),
        ));
    }
    let area: f64 = knots
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum();
    let xs: Vec<f64> = knots.iter().map(|k| k.0).collect();
    let ys: Vec<f64> = knots.iter().map(|k| k.1 / area).collect();
    let mut cum = Vec::with_capacity(xs.len());
    cum.push(0.0);
    for j in 0..xs.len() - 1 {
        let prev = cum[j];
        cum.push(prev + 0.5 * (ys[j] + ys[j + 1]) * (xs[j + 1] - xs[j]));
    }
    Ok(Shape::Piecewise { xs, ys, cum })
}
