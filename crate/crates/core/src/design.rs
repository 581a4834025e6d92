//! Deterministic design sequences `x_1, x_2, ...` and their dispersion
//! summaries.
//!
//! A design is a pure function of the index `i` (1-based). Every generator is
//! therefore prefix-extendable: the first `n` values of a length-`m` draw
//! equal the length-`n` draw. The one stochastic generator, `gaussian-iid`,
//! keeps that property by drawing `x_i` from a counter-based stream keyed by
//! `(seed, i)`.

use std::collections::BTreeMap;
use std::fmt;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;
use crate::rng::{stream, CounterRng};

/// Generator catalog. Each variant carries its own parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesignKind {
    /// `x_i = slope * i`
    Linear { slope: f64 },
    /// `x_i = i^exponent`, exponent > 0
    Power { exponent: f64 },
    /// `x_i = (-1)^i * scale * i`; keeps the running mean bounded
    Alternating { scale: f64 },
    /// `x_i = ratio^i`; the last point dominates S_n
    Geometric { ratio: f64 },
    /// `x_i = amplitude * sin(i)`; S_n grows only linearly
    Bounded { amplitude: f64 },
    /// `x_i ~ N(0, sd^2)` drawn once per index
    GaussianIid { sd: f64 },
    /// `x_i = value`
    Constant { value: f64 },
}

impl DesignKind {
    pub fn name(&self) -> &'static str {
        match self {
            DesignKind::Linear { .. } => "linear",
            DesignKind::Power { .. } => "power",
            DesignKind::Alternating { .. } => "alternating",
            DesignKind::Geometric { .. } => "geometric",
            DesignKind::Bounded { .. } => "bounded",
            DesignKind::GaussianIid { .. } => "gaussian-iid",
            DesignKind::Constant { .. } => "constant",
        }
    }

    fn params(&self) -> BTreeMap<String, f64> {
        let (k, v) = match *self {
            DesignKind::Linear { slope } => ("slope", slope),
            DesignKind::Power { exponent } => ("exponent", exponent),
            DesignKind::Alternating { scale } => ("scale", scale),
            DesignKind::Geometric { ratio } => ("ratio", ratio),
            DesignKind::Bounded { amplitude } => ("amplitude", amplitude),
            DesignKind::GaussianIid { sd } => ("sd", sd),
            DesignKind::Constant { value } => ("value", value),
        };
        BTreeMap::from([(k.to_string(), v)])
    }

    /// Builds a kind from its name and a parameter map. Missing parameters
    /// take their defaults; unrecognised ones are rejected.
    pub fn from_parts(kind: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let (param, default): (&str, f64) = match kind {
            "linear" => ("slope", 1.0),
            "power" => ("exponent", 2.0),
            "alternating" => ("scale", 1.0),
            "geometric" => ("ratio", 2.0),
            "bounded" => ("amplitude", 1.0),
            "gaussian-iid" => ("sd", 1.0),
            "constant" => ("value", 0.0),
            other => {
                return Err(Error::Unknown {
                    what: "design kind",
                    name: other.to_string(),
                })
            }
        };
        if let Some(extra) = params.keys().find(|k| k.as_str() != param) {
            return Err(Error::InvalidParameter(format!(
                "design `{kind}` takes only `{param}`, got `{extra}`"
            )));
        }
        let v = params.get(param).copied().unwrap_or(default);
        let built = match kind {
            "linear" => DesignKind::Linear { slope: v },
            "power" => DesignKind::Power { exponent: v },
            "alternating" => DesignKind::Alternating { scale: v },
            "geometric" => DesignKind::Geometric { ratio: v },
            "bounded" => DesignKind::Bounded { amplitude: v },
            "gaussian-iid" => DesignKind::GaussianIid { sd: v },
            _ => DesignKind::Constant { value: v },
        };
        built.validate()?;
        Ok(built)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        match *self {
            DesignKind::Linear { slope: v }
            | DesignKind::Alternating { scale: v }
            | DesignKind::Bounded { amplitude: v }
            | DesignKind::Constant { value: v } => {
                if !v.is_finite() {
                    return bad("design parameter must be finite");
                }
            }
            DesignKind::Power { exponent } => {
                if !(exponent.is_finite() && exponent > 0.0) {
                    return bad("power exponent must be finite and > 0");
                }
            }
            DesignKind::Geometric { ratio } => {
                if !(ratio.is_finite() && ratio > 0.0) {
                    return bad("geometric ratio must be finite and > 0");
                }
            }
            DesignKind::GaussianIid { sd } => {
                if !(sd.is_finite() && sd >= 0.0) {
                    return bad("gaussian-iid sd must be finite and >= 0");
                }
            }
        }
        Ok(())
    }
}

/// A concrete design: a generator plus the seed used by `gaussian-iid`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDesign", into = "RawDesign")]
pub struct DesignSequence {
    pub kind: DesignKind,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDesign {
    kind: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    #[serde(default)]
    seed: u64,
}

impl TryFrom<RawDesign> for DesignSequence {
    type Error = Error;
    fn try_from(raw: RawDesign) -> Result<Self> {
        Ok(DesignSequence {
            kind: DesignKind::from_parts(&raw.kind, &raw.params)?,
            seed: raw.seed,
        })
    }
}

impl From<DesignSequence> for RawDesign {
    fn from(d: DesignSequence) -> Self {
        RawDesign {
            kind: d.kind.name().to_string(),
            params: d.kind.params(),
            seed: d.seed,
        }
    }
}

impl fmt::Display for DesignSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.name())?;
        for (k, v) in self.kind.params() {
            write!(f, " {k}={v}")?;
        }
        if matches!(self.kind, DesignKind::GaussianIid { .. }) {
            write!(f, " seed={}", self.seed)?;
        }
        Ok(())
    }
}

impl DesignSequence {
    pub fn new(kind: DesignKind) -> Self {
        Self { kind, seed: 0 }
    }

    pub fn with_seed(kind: DesignKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn linear(slope: f64) -> Self {
        Self::new(DesignKind::Linear { slope })
    }

    pub fn alternating(scale: f64) -> Self {
        Self::new(DesignKind::Alternating { scale })
    }

    pub fn gaussian_iid(sd: f64, seed: u64) -> Self {
        Self::with_seed(DesignKind::GaussianIid { sd }, seed)
    }

    /// The value at 1-based index `i`.
    pub fn value(&self, i: usize) -> f64 {
        let t = i as f64;
        match self.kind {
            DesignKind::Linear { slope } => slope * t,
            DesignKind::Power { exponent } => t.powf(exponent),
            DesignKind::Alternating { scale } => {
                if i % 2 == 0 {
                    scale * t
                } else {
                    -scale * t
                }
            }
            DesignKind::Geometric { ratio } => ratio.powf(t),
            DesignKind::Bounded { amplitude } => amplitude * t.sin(),
            DesignKind::GaussianIid { sd } => {
                let mut rng = CounterRng::new(self.seed, 0, stream::DESIGN, i as u64);
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            }
            DesignKind::Constant { value } => value,
        }
    }

    /// Variance of the generating law for `gaussian-iid`; `None` otherwise.
    pub fn generator_variance(&self) -> Option<f64> {
        match self.kind {
            DesignKind::GaussianIid { sd } => Some(sd * sd),
            _ => None,
        }
    }

    pub fn generate(&self, n: usize) -> Result<Vec<f64>> {
        generate_design(self, n)
    }
}

pub fn generate_design(design: &DesignSequence, n: usize) -> Result<Vec<f64>> {
    design.kind.validate()?;
    if n < 2 {
        return Err(Error::TooShort { got: n, min: 2 });
    }
    (1..=n)
        .map(|i| {
            let v = design.value(i);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite { index: i - 1 })
            }
        })
        .collect()
}

/// Dispersion summary of a design prefix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub n: usize,
    pub mean: f64,
    pub s_n: f64,
    pub max_dev: f64,
    pub s_star: f64,
}

impl DesignSummary {
    /// A summary specified directly by its dispersion, for evaluating
    /// conditions along paths that no catalog generator produces (e.g.
    /// `S_n = n log^2 n`). The mean is 0 and `max_dev = sqrt(S_n / n)`, the
    /// smallest spread compatible with `S_n`.
    pub fn synthetic(n: usize, s_n: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooShort { got: n, min: 2 });
        }
        if !(s_n.is_finite() && s_n >= 0.0) {
            return Err(Error::InvalidParameter("synthetic S_n must be finite and >= 0".into()));
        }
        Ok(Self {
            n,
            mean: 0.0,
            s_n,
            max_dev: (s_n / n as f64).sqrt(),
            s_star: s_n.max(n as f64),
        })
    }

    pub fn sqrt_s(&self) -> f64 {
        self.s_n.sqrt()
    }
}

pub fn summarize(x: &[f64]) -> Result<DesignSummary> {
    if x.len() < 2 {
        return Err(Error::TooShort { got: x.len(), min: 2 });
    }
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let n = x.len();
    if x.iter().all(|&v| v == x[0]) {
        return Ok(DesignSummary {
            n,
            mean: x[0],
            s_n: 0.0,
            max_dev: 0.0,
            s_star: n as f64,
        });
    }
    let mean = numeric::mean(x);
    let s_n = numeric::centered_ss(x, mean);
    if !s_n.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "dispersion overflows at n = {n}"
        )));
    }
    let max_dev = x.iter().map(|&v| (v - mean).abs()).fold(0.0, f64::max);
    Ok(DesignSummary {
        n,
        mean,
        s_n,
        max_dev,
        s_star: s_n.max(n as f64),
    })
}

pub(crate) fn check_grid(n_grid: &[usize], min: usize) -> Result<()> {
    if n_grid.is_empty()
        || n_grid[0] < min
        || n_grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::InvalidGrid { min });
    }
    Ok(())
}

/// One summary per grid point, each computed on the corresponding prefix.
pub fn summary_path(design: &DesignSequence, n_grid: &[usize]) -> Result<Vec<DesignSummary>> {
    check_grid(n_grid, 2)?;
    let x = generate_design(design, *n_grid.last().expect("grid is non-empty"))?;
    n_grid.iter().map(|&n| summarize(&x[..n])).collect()
}
