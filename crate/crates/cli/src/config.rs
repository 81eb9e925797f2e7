//! Line-oriented market configuration: one `key = value` per line, `#`
//! starts a comment.

use std::fmt::{self, Write as _};
use std::path::PathBuf;

use mixmarket_core::{Family, MarketParams, RegularDistribution, Timing};

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSpec {
    pub family: String,
    pub support: (f64, f64),
    pub params: Vec<f64>,
}

impl DistributionSpec {
    pub fn family(&self) -> Result<Family, String> {
        let p = &self.params;
        let want = |n: usize, names: &str| {
            if p.len() == n {
                Ok(())
            } else {
                Err(format!(
                    "{} expects {n} params ({names}), got {}",
                    self.family,
                    p.len()
                ))
            }
        };
        match self.family.as_str() {
            "uniform" => want(0, "none").map(|_| Family::Uniform),
            "linear_density" => want(2, "intercept slope").map(|_| Family::LinearDensity {
                intercept: p[0],
                slope: p[1],
            }),
            "power" => want(1, "exponent").map(|_| Family::Power { exponent: p[0] }),
            "truncated_exponential" => {
                want(1, "rate").map(|_| Family::TruncatedExponential { rate: p[0] })
            }
            "truncated_normal" => want(2, "mean std_dev").map(|_| Family::TruncatedNormal {
                mean: p[0],
                std_dev: p[1],
            }),
            "piecewise_linear" => {
                if p.len() < 4 || !p.len().is_multiple_of(2) {
                    return Err(format!(
                        "piecewise_linear expects knot pairs v h ..., got {} values",
                        p.len()
                    ));
                }
                Ok(Family::PiecewiseLinear {
                    knots: p.chunks(2).map(|c| (c[0], c[1])).collect(),
                })
            }
            other => Err(format!("unknown distribution family '{other}'")),
        }
    }

    /// Builds the distribution; regularity is recorded, not enforced.
    pub fn build(&self) -> Result<RegularDistribution, String> {
        RegularDistribution::new(self.family()?, self.support.0, self.support.1)
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketConfig {
    pub distribution: DistributionSpec,
    pub capacity: f64,
    pub quality_ratio: f64,
    pub public_price: f64,
    pub timing: Timing,
    pub k_min: Option<f64>,
    pub k_max: Option<f64>,
    pub k_steps: Option<usize>,
    pub type_grid: usize,
    pub seed: u64,
    pub buyers: usize,
    pub out_dir: Option<PathBuf>,
    /// Relative bracket width for the cutoff root.
    pub tolerance: f64,
    /// Grid used for the regularity and price-condition scans.
    pub grid_size: usize,
}

impl MarketConfig {
    pub fn params(&self) -> MarketParams {
        MarketParams {
            capacity: self.capacity,
            quality_ratio: self.quality_ratio,
            public_price: self.public_price,
            timing: self.timing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigErrorKind {
    Invalid,
    NotRegular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub kind: ConfigErrorKind,
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            kind: ConfigErrorKind::Invalid,
            line: Some(line),
            key: Some(key.to_string()),
            message: message.into(),
        }
    }

    fn keyed(key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            kind: ConfigErrorKind::Invalid,
            line: None,
            key: Some(key.to_string()),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "{key}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

const KEYS: &[&str] = &[
    "distribution",
    "support",
    "params",
    "capacity",
    "quality_ratio",
    "public_price",
    "timing",
    "k_min",
    "k_max",
    "k_steps",
    "type_grid",
    "seed",
    "buyers",
    "out_dir",
    "tolerance",
    "grid_size",
];

pub const DEFAULT_TYPE_GRID: usize = 101;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_BUYERS: usize = 1_000_000;
pub const DEFAULT_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_GRID_SIZE: usize = 10_001;

fn real(line: usize, key: &str, s: &str) -> Result<f64, ConfigError> {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(ConfigError::at(
            line,
            key,
            format!("'{s}' is not a finite real"),
        )),
    }
}

fn reals(line: usize, key: &str, s: &str) -> Result<Vec<f64>, ConfigError> {
    s.split_whitespace().map(|t| real(line, key, t)).collect()
}

fn count(line: usize, key: &str, s: &str) -> Result<usize, ConfigError> {
    s.parse::<usize>()
        .map_err(|_| ConfigError::at(line, key, format!("'{s}' is not a non-negative integer")))
}

#[derive(Default)]
struct Raw {
    distribution: Option<String>,
    support: Option<(f64, f64)>,
    params: Vec<f64>,
    capacity: Option<f64>,
    quality_ratio: Option<(usize, f64)>,
    public_price: Option<(usize, f64)>,
    timing: Option<Timing>,
    k_min: Option<f64>,
    k_max: Option<f64>,
    k_steps: Option<usize>,
    type_grid: Option<usize>,
    seed: Option<u64>,
    buyers: Option<usize>,
    out_dir: Option<PathBuf>,
    tolerance: Option<f64>,
    grid_size: Option<usize>,
    lines: Vec<(String, usize)>,
}

impl Raw {
    fn line_of(&self, key: &str) -> Option<usize> {
        self.lines.iter().find(|(k, _)| k == key).map(|&(_, l)| l)
    }

    fn cross_error(&self, key: &str, message: String) -> ConfigError {
        match self.line_of(key) {
            Some(line) => ConfigError::at(line, key, message),
            None => ConfigError::keyed(key, message),
        }
    }
}

fn parse_line(raw: &mut Raw, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
    match key {
        "distribution" => {
            if value.is_empty() || value.contains(char::is_whitespace) {
                return Err(ConfigError::at(line, key, "expected a single family name"));
            }
            raw.distribution = Some(value.to_string());
        }
        "support" => {
            let v = reals(line, key, value)?;
            if v.len() != 2 {
                return Err(ConfigError::at(line, key, "expected two reals: v_lo v_hi"));
            }
            if !(v[0] >= 0.0 && v[1] > v[0]) {
                return Err(ConfigError::at(line, key, "need 0 <= v_lo < v_hi"));
            }
            raw.support = Some((v[0], v[1]));
        }
        "params" => raw.params = reals(line, key, value)?,
        "capacity" => {
            let k = real(line, key, value)?;
            if !(k > 0.0 && k < 1.0) {
                return Err(ConfigError::at(
                    line,
                    key,
                    format!("{k} must lie in (0, 1)"),
                ));
            }
            raw.capacity = Some(k);
        }
        "quality_ratio" => {
            let t = real(line, key, value)?;
            if !(t > 0.0 && t <= 1.0) {
                return Err(ConfigError::at(
                    line,
                    key,
                    format!("{t} must lie in (0, 1]"),
                ));
            }
            raw.quality_ratio = Some((line, t));
        }
        "public_price" => {
            let r = real(line, key, value)?;
            if r < 0.0 {
                return Err(ConfigError::at(line, key, format!("{r} must be >= 0")));
            }
            raw.public_price = Some((line, r));
        }
        "timing" => {
            raw.timing = Some(match value {
                "substitute" => Timing::Substitute,
                "complement" => Timing::Complement,
                _ => {
                    return Err(ConfigError::at(
                        line,
                        key,
                        format!("'{value}' is not substitute or complement"),
                    ))
                }
            })
        }
        "k_min" | "k_max" => {
            let k = real(line, key, value)?;
            if !(k > 0.0 && k < 1.0) {
                return Err(ConfigError::at(
                    line,
                    key,
                    format!("{k} must lie in (0, 1)"),
                ));
            }
            if key == "k_min" {
                raw.k_min = Some(k);
            } else {
                raw.k_max = Some(k);
            }
        }
        "k_steps" => {
            let n = count(line, key, value)?;
            if n < 2 {
                return Err(ConfigError::at(line, key, "need at least 2 steps"));
            }
            raw.k_steps = Some(n);
        }
        "type_grid" => {
            let n = count(line, key, value)?;
            if n < 2 {
                return Err(ConfigError::at(line, key, "need at least 2 points"));
            }
            raw.type_grid = Some(n);
        }
        "seed" => {
            raw.seed = Some(value.parse::<u64>().map_err(|_| {
                ConfigError::at(line, key, format!("'{value}' is not an unsigned integer"))
            })?)
        }
        "buyers" => {
            let n = count(line, key, value)?;
            if n < 1000 {
                return Err(ConfigError::at(line, key, "need at least 1000 buyers"));
            }
            raw.buyers = Some(n);
        }
        "out_dir" => {
            if value.is_empty() {
                return Err(ConfigError::at(line, key, "empty path"));
            }
            raw.out_dir = Some(PathBuf::from(value));
        }
        "tolerance" => {
            let t = real(line, key, value)?;
            if !(t > 0.0 && t < 1e-3) {
                return Err(ConfigError::at(
                    line,
                    key,
                    format!("{t} must lie in (0, 1e-3)"),
                ));
            }
            raw.tolerance = Some(t);
        }
        "grid_size" => {
            let n = count(line, key, value)?;
            if n < 1001 {
                return Err(ConfigError::at(line, key, "need at least 1001 points"));
            }
            raw.grid_size = Some(n);
        }
        _ => unreachable!("key list checked by caller"),
    }
    Ok(())
}

/// Parses and validates a configuration. Line checks come first, then
/// cross-key constraints, then required keys, then regularity.
pub fn parse_config(text: &str) -> Result<MarketConfig, ConfigError> {
    let mut raw = Raw::default();
    for (idx, full) in text.lines().enumerate() {
        let line = idx + 1;
        let content = full.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError {
                kind: ConfigErrorKind::Invalid,
                line: Some(line),
                key: None,
                message: format!("expected 'key = value', got '{content}'"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError::at(line, key, "unknown key"));
        }
        if let Some(first) = raw.line_of(key) {
            return Err(ConfigError::at(
                line,
                key,
                format!("duplicate key, first set on line {first}"),
            ));
        }
        raw.lines.push((key.to_string(), line));
        parse_line(&mut raw, line, key, value)?;
    }

    if let (Some(lo), Some(hi)) = (raw.k_min, raw.k_max) {
        if lo >= hi {
            return Err(raw.cross_error("k_max", format!("k_max {hi} must exceed k_min {lo}")));
        }
    }
    let theta = raw.quality_ratio.map_or(1.0, |(_, t)| t);
    let rho = raw.public_price.map_or(0.0, |(_, r)| r);
    if let Some((lo, _)) = raw.support {
        if rho > theta * lo {
            return Err(raw.cross_error(
                "public_price",
                format!(
                    "public price {rho} exceeds quality_ratio * v_lo = {}; \
                     only public prices at or below that bound are modelled",
                    theta * lo
                ),
            ));
        }
    }

    for key in ["distribution", "support", "capacity"] {
        if raw.line_of(key).is_none() {
            return Err(ConfigError::keyed(key, "required key missing"));
        }
    }
    let distribution = DistributionSpec {
        family: raw.distribution.clone().unwrap_or_default(),
        support: raw.support.unwrap_or((0.0, 1.0)),
        params: raw.params.clone(),
    };
    let dist = distribution
        .build()
        .map_err(|m| raw.cross_error("distribution", m))?;

    let grid_size = raw.grid_size.unwrap_or(DEFAULT_GRID_SIZE);
    let regular = if grid_size == dist.regularity().grid_size {
        dist.is_regular()
    } else {
        dist.check_regularity(grid_size)
            .map(|r| r.is_regular)
            .unwrap_or(false)
    };
    if !regular {
        return Err(ConfigError {
            kind: ConfigErrorKind::NotRegular,
            line: raw.line_of("distribution"),
            key: Some("distribution".into()),
            message: format!(
                "{} on [{}, {}] is not regular: virtual value not strictly increasing",
                distribution.family, distribution.support.0, distribution.support.1
            ),
        });
    }

    Ok(MarketConfig {
        distribution,
        capacity: raw.capacity.unwrap_or_default(),
        quality_ratio: theta,
        public_price: rho,
        timing: raw.timing.unwrap_or_default(),
        k_min: raw.k_min,
        k_max: raw.k_max,
        k_steps: raw.k_steps,
        type_grid: raw.type_grid.unwrap_or(DEFAULT_TYPE_GRID),
        seed: raw.seed.unwrap_or(DEFAULT_SEED),
        buyers: raw.buyers.unwrap_or(DEFAULT_BUYERS),
        out_dir: raw.out_dir,
        tolerance: raw.tolerance.unwrap_or(DEFAULT_TOLERANCE),
        grid_size,
    })
}

/// Writes every field explicitly; `parse_config` reads it back unchanged.
pub fn serialize_config(config: &MarketConfig) -> String {
    let mut out = String::new();
    let d = &config.distribution;
    let _ = writeln!(out, "distribution = {}", d.family);
    let _ = writeln!(out, "support = {:?} {:?}", d.support.0, d.support.1);
    if !d.params.is_empty() {
        let params: Vec<String> = d.params.iter().map(|p| format!("{p:?}")).collect();
        let _ = writeln!(out, "params = {}", params.join(" "));
    }
    let _ = writeln!(out, "capacity = {:?}", config.capacity);
    let _ = writeln!(out, "quality_ratio = {:?}", config.quality_ratio);
    let _ = writeln!(out, "public_price = {:?}", config.public_price);
    let _ = writeln!(out, "timing = {}", config.timing.as_str());
    if let Some(k) = config.k_min {
        let _ = writeln!(out, "k_min = {k:?}");
    }
    if let Some(k) = config.k_max {
        let _ = writeln!(out, "k_max = {k:?}");
    }
    if let Some(n) = config.k_steps {
        let _ = writeln!(out, "k_steps = {n}");
    }
    let _ = writeln!(out, "type_grid = {}", config.type_grid);
    let _ = writeln!(out, "seed = {}", config.seed);
    let _ = writeln!(out, "buyers = {}", config.buyers);
    if let Some(dir) = &config.out_dir {
        let _ = writeln!(out, "out_dir = {}", dir.display());
    }
    let _ = writeln!(out, "tolerance = {:?}", config.tolerance);
    let _ = writeln!(out, "grid_size = {}", config.grid_size);
    out
}
